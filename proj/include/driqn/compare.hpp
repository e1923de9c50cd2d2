#pragma once

// Cross-run summary: per-agent/strategy/noise-level aggregation of the six
// metrics over seeds, plus a signed improvement row against the best of the
// other methods (positive metrics improve upward, negative ones downward).

#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "driqn/config.hpp"
#include "driqn/metrics.hpp"

namespace driqn {

struct RunSummary {
    std::string agent;
    std::string strategy;
    std::string noise_sig;
    std::uint64_t seed = 0;
    std::uint64_t eval_seed_base = 0;
    int eval_envs = 0;
    MetricsRecord metrics;
};

inline std::string noise_signature(const nlohmann::json& cfg) {
    std::string sig;
    for (const auto& n : cfg.at("noise")) {
        if (!sig.empty()) sig += "+";
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%.6g", n.at("intensity").get<double>());
        sig += n.at("kind").get<std::string>() + ":" + buf;
    }
    return sig;
}

inline RunSummary read_run_summary(const std::filesystem::path& dir) {
    std::ifstream f(dir / "config.json");
    if (!f) throw ConfigError("not a run directory (missing config.json): " + dir.string());
    nlohmann::json cfg;
    f >> cfg;

    RunSummary s;
    s.agent = cfg.at("agent").get<std::string>();
    s.strategy = cfg.at("strategy").get<std::string>();
    s.noise_sig = noise_signature(cfg);
    s.seed = cfg.at("seed").get<std::uint64_t>();
    s.eval_seed_base = cfg.at("eval_seed_base").get<std::uint64_t>();
    s.eval_envs = cfg.at("eval_envs").get<int>();

    const CsvTable t = read_csv((dir / "metrics.csv").string());
    if (t.rows.empty()) throw ConfigError("run has no completed evaluations: " + dir.string());
    s.metrics = metrics_from_csv_row(t, t.rows.back());
    return s;
}

namespace compare_detail {

struct Stat {
    double mean = 0.0;
    double stddev = 0.0;
    int n = 0;
};

inline Stat stat_of(const std::vector<double>& v) {
    Stat s;
    s.n = static_cast<int>(v.size());
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= s.n;
    if (s.n > 1) {
        double acc = 0.0;
        for (double x : v) acc += (x - s.mean) * (x - s.mean);
        s.stddev = std::sqrt(acc / (s.n - 1));
    }
    return s;
}

inline std::string cell(const Stat& s) {
    if (s.n == 0) return "--";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.3f +- %.3f", s.mean, s.stddev);
    return buf;
}

inline std::string pct_cell(std::optional<double> anchor, std::optional<double> other_best) {
    if (!anchor || !other_best || std::abs(*other_best) < 1e-12) return "--";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%+.2f%%", (*anchor - *other_best) / std::abs(*other_best) * 100.0);
    return buf;
}

}  // namespace compare_detail

// Builds the summary table document. Refuses runs evaluated on different
// seed sets (the comparison would be meaningless).
inline std::string compare_runs(const std::vector<std::filesystem::path>& dirs) {
    if (dirs.size() < 1) throw ConfigError("compare needs at least one run directory");
    std::vector<RunSummary> runs;
    for (const auto& d : dirs) runs.push_back(read_run_summary(d));
    for (const auto& r : runs)
        if (r.eval_seed_base != runs[0].eval_seed_base || r.eval_envs != runs[0].eval_envs)
            throw ConfigError("runs use mismatched evaluation seed sets; refusing to compare");

    // group by noise signature, then by (agent, strategy)
    std::map<std::string, std::map<std::string, std::vector<RunSummary>>> by_noise;
    for (const auto& r : runs)
        by_noise[r.noise_sig][r.agent + " | " + r.strategy].push_back(r);

    std::ostringstream out;
    out << "# Run comparison\n\n";
    out << "Evaluation: " << runs[0].eval_envs << " environments, seed base "
        << runs[0].eval_seed_base << ". Cells are mean +- std over seeds.\n";

    const char* metric_names[6] = {"SR", "CR", "TR", "FCR", "AT", "AE"};
    const bool metric_positive[6] = {true, false, false, true, false, false};

    for (const auto& [sig, groups] : by_noise) {
        out << "\n## Noise: " << sig << "\n\n";
        out << "| Method | Strategy |";
        for (const char* m : metric_names) out << " " << m << " |";
        out << "\n|---|---|---|---|---|---|---|---|\n";

        struct GroupStat {
            std::string key;
            compare_detail::Stat stats[6];
        };
        std::vector<GroupStat> gstats;
        for (const auto& [key, members] : groups) {
            GroupStat gs;
            gs.key = key;
            std::vector<double> cols[6];
            for (const auto& r : members) {
                cols[0].push_back(r.metrics.sr);
                cols[1].push_back(r.metrics.cr);
                cols[2].push_back(r.metrics.tr);
                cols[3].push_back(r.metrics.fcr);
                if (r.metrics.at) cols[4].push_back(*r.metrics.at);
                if (r.metrics.ae) cols[5].push_back(*r.metrics.ae);
            }
            for (int m = 0; m < 6; ++m) gs.stats[m] = compare_detail::stat_of(cols[m]);
            gstats.push_back(gs);
            out << "| " << gs.key.substr(0, gs.key.find(" | ")) << " | "
                << gs.key.substr(gs.key.find(" | ") + 3) << " |";
            for (int m = 0; m < 6; ++m) out << " " << compare_detail::cell(gs.stats[m]) << " |";
            out << "\n";
        }

        if (gstats.size() >= 2) {
            // anchor: the group with the best mean success rate
            size_t anchor = 0;
            for (size_t i = 1; i < gstats.size(); ++i)
                if (gstats[i].stats[0].mean > gstats[anchor].stats[0].mean) anchor = i;
            std::string anchor_label = gstats[anchor].key;
            if (auto pos = anchor_label.find(" | "); pos != std::string::npos)
                anchor_label.replace(pos, 3, " / ");
            out << "| Improvement (%) vs runner-up | " << anchor_label << " |";
            for (int m = 0; m < 6; ++m) {
                std::optional<double> a, best_other;
                if (gstats[anchor].stats[m].n > 0) a = gstats[anchor].stats[m].mean;
                for (size_t i = 0; i < gstats.size(); ++i) {
                    if (i == anchor || gstats[i].stats[m].n == 0) continue;
                    const double v = gstats[i].stats[m].mean;
                    if (!best_other)
                        best_other = v;
                    else
                        best_other = metric_positive[m] ? std::max(*best_other, v)
                                                        : std::min(*best_other, v);
                }
                out << " " << compare_detail::pct_cell(a, best_other) << " |";
            }
            out << "\n";
        }
    }
    return out.str();
}

}  // namespace driqn
