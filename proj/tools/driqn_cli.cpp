// Command-line front end: train / eval / compare / render.
// Exit codes: 0 success, 2 configuration error, 3 numerical fault.

#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "driqn/driqn.hpp"

namespace fs = std::filesystem;
using namespace driqn;

namespace {

void print_metrics(std::uint64_t step, const MetricsRecord& m) {
    std::cout << "step " << step << "  SR " << m.sr << "  CR " << m.cr << "  TR " << m.tr
              << "  FCR " << m.fcr << "  AT " << (m.at ? std::to_string(*m.at) : "--") << "  AE "
              << (m.ae ? std::to_string(*m.ae) : "--") << "\n";
}

int run_train(const std::string& config_path, std::int64_t seed, const std::string& agent,
              const std::string& strategy, std::string out_dir) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config_file(config_path);
    if (!agent.empty()) cfg.agent = agent_from_string(agent);
    if (!strategy.empty()) cfg.strategy = strategy_from_string(strategy);
    if (seed >= 0)
        cfg.seed = static_cast<std::uint64_t>(seed);
    else if (!cfg.seeds.empty())
        cfg.seed = cfg.seeds.front();
    if (out_dir.empty())
        out_dir = "runs/" + std::string(to_string(cfg.agent)) + "_" +
                  std::string(to_string(cfg.strategy)) + "_s" + std::to_string(cfg.seed);

    std::cout << "training " << to_string(cfg.agent) << " (" << to_string(cfg.strategy)
              << "), seed " << cfg.seed << ", " << cfg.total_steps << " steps -> " << out_dir
              << "\n";
    const TrainResult res = train(cfg, out_dir);
    std::cout << "run complete: " << res.steps << " steps, " << res.updates << " updates\n";
    print_metrics(res.steps, res.final_metrics);
    return 0;
}

int run_eval(const std::string& ckpt_path, const std::string& config_path,
             const std::string& agent, const std::string& strategy, const std::string& out_dir) {
    RunConfig cfg;
    std::unique_ptr<Policy> policy;
    IqnNet net;
    QNet qnet;
    std::uint64_t at_step = 0;

    if (!ckpt_path.empty()) {
        const Checkpoint c = load_checkpoint(ckpt_path);
        cfg = config_from_json(nlohmann::json::parse(c.config_json));
        if (!config_path.empty()) {
            // explicit config overrides the embedded one (e.g. other eval seeds)
            cfg = load_config_file(config_path);
        }
        cfg.agent = agent_from_string(c.agent);
        ensure_compatible(c, cfg.net_config(),
                          config_path.empty() ? c.config_hash : std::uint64_t{0});
        at_step = c.step;
        if (!strategy.empty()) cfg.strategy = strategy_from_string(strategy);
        if (c.net_kind == NetKind::Scalar) {
            Rng dummy(0);
            qnet = QNet::make(c.net_cfg, dummy);
            qnet.theta = c.theta;
            policy = std::make_unique<DqnPolicy>(qnet, cfg.ranges());
        } else {
            Rng dummy(0);
            net = IqnNet::make(c.net_cfg, dummy);
            net.theta = c.theta;
            policy = std::make_unique<IqnPolicy>(net, cfg.strategy, cfg.train.k_policy,
                                                 cfg.train.eta_min, cfg.ranges());
        }
    } else {
        if (agent.empty())
            throw ConfigError("eval needs --checkpoint, or --agent apf|bug with --config");
        if (!config_path.empty()) cfg = load_config_file(config_path);
        cfg.agent = agent_from_string(agent);
        if (!strategy.empty()) cfg.strategy = strategy_from_string(strategy);
        const PlannerParams planner{1.0, 0.5, cfg.world.d_sense, cfg.world.dt};
        if (cfg.agent == AgentKind::Apf)
            policy = std::make_unique<ApfPolicy>(planner);
        else if (cfg.agent == AgentKind::Bug)
            policy = std::make_unique<BugPolicy>(planner);
        else
            throw ConfigError("eval without a checkpoint supports only apf | bug");
    }

    const EvalResult res = evaluate(*policy, cfg);
    print_metrics(at_step, res.metrics);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        std::ofstream f(fs::path(out_dir) / "metrics.csv");
        f << kMetricsHeader << "\n" << metrics_csv_row(at_step, res.metrics, 0.0, 0.0) << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"distributionally robust quantile navigation runs"};
    app.require_subcommand(1);

    std::string config_path, agent, strategy, out_dir, ckpt_path, run_dir, out_file;
    std::int64_t seed = -1;
    std::vector<std::string> dirs, episodes;

    auto* t = app.add_subcommand("train", "train an agent (or evaluate a classical planner)");
    t->add_option("--config", config_path, "run configuration JSON");
    t->add_option("--seed", seed, "training seed (overrides the config)");
    t->add_option("--agent", agent, "apf | bug | dqn | iqn | driqn | driqn-w");
    t->add_option("--strategy", strategy, "greedy | adaptive");
    t->add_option("--out", out_dir, "run directory (default runs/<agent>_<strategy>_s<seed>)");

    auto* e = app.add_subcommand("eval", "evaluate a checkpoint or a classical planner");
    e->add_option("--checkpoint", ckpt_path, "checkpoint document");
    e->add_option("--config", config_path, "run configuration JSON (overrides embedded)");
    e->add_option("--agent", agent, "apf | bug (checkpoint-free evaluation)");
    e->add_option("--strategy", strategy, "greedy | adaptive (overrides embedded)");
    e->add_option("--out", out_dir, "directory for the metrics row");

    auto* c = app.add_subcommand("compare", "summarize completed runs into one table");
    c->add_option("dirs", dirs, "run directories")->required();
    c->add_option("--out", out_file, "output document (default stdout)");

    auto* r = app.add_subcommand("render", "render logged evaluation episodes to SVG");
    r->add_option("--run", run_dir, "run directory")->required();
    r->add_option("--episodes", episodes, "episode ids, e.g. 50000_3");

    CLI11_PARSE(app, argc, argv);

    try {
        if (t->parsed()) return run_train(config_path, seed, agent, strategy, out_dir);
        if (e->parsed()) return run_eval(ckpt_path, config_path, agent, strategy, out_dir);
        if (c->parsed()) {
            std::vector<fs::path> paths(dirs.begin(), dirs.end());
            const std::string doc = compare_runs(paths);
            if (out_file.empty()) {
                std::cout << doc;
            } else {
                std::ofstream f(out_file);
                f << doc;
                std::cout << "wrote " << out_file << "\n";
            }
            return 0;
        }
        if (r->parsed()) {
            const auto written = render_trajectories(run_dir, episodes, std::cerr);
            for (const auto& p : written) std::cout << "wrote " << p.string() << "\n";
            return 0;
        }
    } catch (const ConfigError& ex) {
        std::cerr << "configuration error: " << ex.what() << "\n";
        return 2;
    } catch (const NumericalFault& ex) {
        std::cerr << "numerical fault: " << ex.what() << "\n";
        return 3;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
    return 0;
}
