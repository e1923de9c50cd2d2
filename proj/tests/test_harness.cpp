#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "driqn/driqn.hpp"

using namespace driqn;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

// Small, fast configuration for harness-level tests.
RunConfig tiny_cfg(AgentKind agent, std::uint64_t seed) {
    RunConfig c;
    c.agent = agent;
    c.seed = seed;
    c.total_steps = 1200;
    c.eval_interval = 400;
    c.eval_envs = 4;
    c.eval_seed_base = 555000;
    c.world.beams = 16;
    c.hidden = 16;
    c.n_cos = 8;
    c.traj_log = "all";
    c.train.min_fill = 100;
    c.train.batch_size = 16;
    c.train.update_every = 2;
    c.train.k_policy = 8;
    c.train.target_sync = 100;
    c.train.lr_head_start = 1e-3;
    c.train.lr_head_end = 1e-3;
    c.train.lr_rest_start = 1e-3;
    c.train.lr_rest_end = 1e-3;
    return c;
}

struct StraightPolicy : Policy {
    int act(const Observation&, Rng&) override {
        return ActionCommand::from_values(2, 1).index;  // full ahead, no turn
    }
};

struct DriftPolicy : Policy {
    int act(const Observation&, Rng&) override {
        return ActionCommand::from_values(0, 1).index;  // decelerate; never moves
    }
};

}  // namespace

TEST_CASE("evaluation bookkeeping") {
    RunConfig cfg = tiny_cfg(AgentKind::Iqn, 1);
    cfg.eval_envs = 12;

    SUBCASE("rates are outcome frequencies and sum to one") {
        StraightPolicy p;
        const EvalResult res = evaluate(p, cfg);
        int s = 0, c = 0, t = 0;
        double fcr = 0.0;
        for (const auto& ep : res.episodes) {
            if (ep.outcome == Outcome::GoalReached) ++s;
            if (ep.outcome == Outcome::Collision) ++c;
            if (ep.outcome == Outcome::Timeout) ++t;
            fcr += ep.cumulative_reward;
        }
        CHECK(res.metrics.sr == doctest::Approx(s / 12.0));
        CHECK(res.metrics.cr == doctest::Approx(c / 12.0));
        CHECK(res.metrics.tr == doctest::Approx(t / 12.0));
        CHECK(res.metrics.sr + res.metrics.cr + res.metrics.tr == doctest::Approx(1.0));
        CHECK(res.metrics.fcr == doctest::Approx(fcr / 12.0));
    }
    SUBCASE("no successes reports time and energy as absent") {
        DriftPolicy p;
        const EvalResult res = evaluate(p, cfg);
        CHECK(res.metrics.sr == 0.0);
        CHECK(!res.metrics.at.has_value());
        CHECK(!res.metrics.ae.has_value());
        CHECK(metrics_csv_row(7, res.metrics, 0.0, 0.0).find(",,") != std::string::npos);
    }
    SUBCASE("evaluation is deterministic given the seed set") {
        StraightPolicy p1, p2;
        const EvalResult a = evaluate(p1, cfg);
        const EvalResult b = evaluate(p2, cfg);
        REQUIRE(a.episodes.size() == b.episodes.size());
        for (size_t i = 0; i < a.episodes.size(); ++i) {
            CHECK(a.episodes[i].cumulative_reward == b.episodes[i].cumulative_reward);
            CHECK(a.episodes[i].steps == b.episodes[i].steps);
        }
    }
}

TEST_CASE("identical config and seed give byte-identical logs") {
    const RunConfig cfg = tiny_cfg(AgentKind::Driqn, 3);
    const fs::path d1 = "hrun_det_a", d2 = "hrun_det_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    train(cfg, d1);
    train(cfg, d2);
    CHECK(slurp(d1 / "metrics.csv") == slurp(d2 / "metrics.csv"));
    CHECK(slurp(d1 / "dro_log.csv") == slurp(d2 / "dro_log.csv"));
    CHECK(slurp(d1 / "episodes.csv") == slurp(d2 / "episodes.csv"));

    // episode log sanity: every episode carries one valid subgroup id
    const CsvTable eps = read_csv((d1 / "episodes.csv").string());
    REQUIRE(eps.rows.size() >= 2);
    const int sg_col = eps.column("subgroup_id");
    for (const auto& row : eps.rows) {
        const int sg = std::stoi(row[sg_col]);
        CHECK(sg >= 0);
        CHECK(sg < static_cast<int>(cfg.noise.size()));
    }
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("one-subgroup robust agent and the plain quantile agent log identically") {
    RunConfig a = tiny_cfg(AgentKind::Iqn, 4);
    a.noise = {{NoiseKind::Gaussian, 0.4, 0}};
    RunConfig b = a;
    b.agent = AgentKind::Driqn;
    const fs::path d1 = "hrun_eq_iqn", d2 = "hrun_eq_driqn";
    fs::remove_all(d1);
    fs::remove_all(d2);
    train(a, d1);
    train(b, d2);
    CHECK(slurp(d1 / "metrics.csv") == slurp(d2 / "metrics.csv"));
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("evaluation never advances the training streams") {
    RunConfig often = tiny_cfg(AgentKind::Iqn, 5);
    often.eval_interval = 200;  // six interleaved evaluations
    RunConfig rare = often;
    rare.eval_interval = 1u << 30;  // only the final one
    const fs::path d1 = "hrun_iso_a", d2 = "hrun_iso_b";
    fs::remove_all(d1);
    fs::remove_all(d2);
    train(often, d1);
    train(rare, d2);
    const auto c1 = load_checkpoint((d1 / "ckpt_1200.bin").string());
    const auto c2 = load_checkpoint((d2 / "ckpt_1200.bin").string());
    CHECK(c1.theta == c2.theta);  // bitwise: evals did not perturb training
    CHECK(c1.rng_states == c2.rng_states);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("logged rewards replay to the logged final cumulative reward") {
    const RunConfig cfg = tiny_cfg(AgentKind::Iqn, 6);
    const fs::path dir = "hrun_replay";
    fs::remove_all(dir);
    train(cfg, dir);

    const CsvTable metrics = read_csv((dir / "metrics.csv").string());
    const auto& last = metrics.rows.back();
    const std::uint64_t step = std::stoull(last[metrics.column("step")]);
    const double logged_fcr = std::stod(last[metrics.column("FCR")]);

    double fcr_sum = 0.0;
    for (int e = 0; e < cfg.eval_envs; ++e) {
        const CsvTable traj =
            read_csv((dir / "traj" / (std::to_string(step) + "_" + std::to_string(e) + ".csv"))
                         .string());
        const int rc = traj.column("reward");
        double ep = 0.0;
        for (const auto& row : traj.rows) ep += std::stod(row[rc]);
        fcr_sum += ep;
    }
    CHECK(std::abs(fcr_sum / cfg.eval_envs - logged_fcr) <= 1e-9);
    fs::remove_all(dir);
}

TEST_CASE("checkpoints restore a policy that reproduces the logged metrics") {
    const RunConfig cfg = tiny_cfg(AgentKind::Driqn, 7);
    const fs::path dir = "hrun_ckpt";
    fs::remove_all(dir);
    const TrainResult res = train(cfg, dir);

    const Checkpoint c = load_checkpoint((dir / "ckpt_1200.bin").string());
    ensure_compatible(c, cfg.net_config(), config_hash(cfg));
    const RunConfig embedded = config_from_json(nlohmann::json::parse(c.config_json));
    CHECK(embedded.total_steps == cfg.total_steps);

    Rng dummy(0);
    IqnNet net = IqnNet::make(c.net_cfg, dummy);
    net.theta = c.theta;
    IqnPolicy policy(net, cfg.strategy, cfg.train.k_policy, cfg.train.eta_min, cfg.ranges());
    const EvalResult replay = evaluate(policy, cfg);
    CHECK(replay.metrics.sr == res.final_metrics.sr);
    CHECK(replay.metrics.fcr == res.final_metrics.fcr);
    fs::remove_all(dir);
}

TEST_CASE("classical planners produce a single evaluation row") {
    RunConfig cfg = tiny_cfg(AgentKind::Apf, 8);
    const fs::path dir = "hrun_apf";
    fs::remove_all(dir);
    train(cfg, dir);
    const CsvTable metrics = read_csv((dir / "metrics.csv").string());
    REQUIRE(metrics.rows.size() == 1);
    CHECK(metrics.rows[0][metrics.column("step")] == "0");
    const MetricsRecord m = metrics_from_csv_row(metrics, metrics.rows[0]);
    CHECK(m.sr + m.cr + m.tr == doctest::Approx(1.0));
    fs::remove_all(dir);
}

TEST_CASE("run comparison") {
    SUBCASE("improvement percentages follow the signed-change convention") {
        // fabricate two completed runs with known final metrics
        const fs::path base = "hcmp";
        fs::remove_all(base);
        auto fake_run = [&](const std::string& name, const std::string& agent, double sr,
                            double cr) {
            RunConfig c = tiny_cfg(AgentKind::Iqn, 1);
            c.agent = agent_from_string(agent);
            const fs::path dir = base / name;
            fs::create_directories(dir);
            std::ofstream cf(dir / "config.json");
            cf << config_to_json(c).dump(2);
            std::ofstream mf(dir / "metrics.csv");
            MetricsRecord m;
            m.sr = sr;
            m.cr = cr;
            m.tr = 1.0 - sr - cr;
            m.fcr = -10.0;
            m.at = 100.0;
            m.ae = 200.0;
            mf << kMetricsHeader << "\n" << metrics_csv_row(1200, m, 0.0, 0.0) << "\n";
            return dir;
        };
        const auto r1 = fake_run("a", "iqn", 0.37, 0.57);
        const auto r2 = fake_run("b", "driqn", 0.42, 0.50);
        const std::string doc = compare_runs({r1, r2});
        CHECK(doc.find("+13.51%") != std::string::npos);  // 0.37 -> 0.42
        CHECK(doc.find("-12.28%") != std::string::npos);  // 0.57 -> 0.50
        fs::remove_all(base);
    }
    SUBCASE("single run has no improvement row") {
        const fs::path dir = "hcmp_single";
        fs::remove_all(dir);
        RunConfig cfg = tiny_cfg(AgentKind::Apf, 9);
        train(cfg, dir);
        const std::string doc = compare_runs({dir});
        CHECK(doc.find("Improvement") == std::string::npos);
        CHECK(doc.find("apf") != std::string::npos);
        fs::remove_all(dir);
    }
    SUBCASE("mismatched evaluation seed sets are refused") {
        const fs::path d1 = "hcmp_m1", d2 = "hcmp_m2";
        fs::remove_all(d1);
        fs::remove_all(d2);
        RunConfig a = tiny_cfg(AgentKind::Apf, 10);
        RunConfig b = a;
        b.eval_seed_base = 777000;
        train(a, d1);
        train(b, d2);
        CHECK_THROWS_AS(compare_runs({d1, d2}), ConfigError);
        fs::remove_all(d1);
        fs::remove_all(d2);
    }
}

TEST_CASE("trajectory rendering") {
    RunConfig cfg = tiny_cfg(AgentKind::Apf, 11);
    const fs::path dir = "hrun_render";
    fs::remove_all(dir);
    train(cfg, dir);

    SUBCASE("rendered obstacles match the map document exactly") {
        std::ostringstream warn;
        const auto paths = render_trajectories(dir, {"0_0"}, warn);
        REQUIRE(paths.size() == 1);
        const std::string svg = slurp(paths[0]);

        nlohmann::json mj;
        std::ifstream mf(dir / "maps" / "env_0.json");
        mf >> mj;
        const WorldMap map = map_from_json(mj);

        std::regex circle_re(
            "<circle class=\"obstacle\" cx=\"([^\"]+)\" cy=\"([^\"]+)\" r=\"([^\"]+)\"");
        auto begin = std::sregex_iterator(svg.begin(), svg.end(), circle_re);
        std::vector<std::array<double, 3>> circles;
        for (auto it = begin; it != std::sregex_iterator(); ++it)
            circles.push_back({std::stod((*it)[1]), std::stod((*it)[2]), std::stod((*it)[3])});
        REQUIRE(circles.size() == map.obstacles.size());
        for (size_t i = 0; i < circles.size(); ++i) {
            CHECK(circles[i][0] == doctest::Approx(map.obstacles[i].center.x).epsilon(1e-6));
            CHECK(circles[i][1] == doctest::Approx(map.obstacles[i].center.y).epsilon(1e-6));
            CHECK(circles[i][2] == doctest::Approx(map.obstacles[i].radius).epsilon(1e-6));
        }
        CHECK(svg.find("<polyline class=\"path outcome-") != std::string::npos);
    }
    SUBCASE("missing episodes are skipped with a warning") {
        std::ostringstream warn;
        const auto paths = render_trajectories(dir, {"0_0", "99999_7"}, warn);
        CHECK(paths.size() == 1);
        CHECK(warn.str().find("skipping missing episode") != std::string::npos);
    }
    SUBCASE("an empty episode list yields a legend-only document") {
        std::ostringstream warn;
        const auto paths = render_trajectories(dir, {}, warn);
        REQUIRE(paths.size() == 1);
        const std::string svg = slurp(paths[0]);
        CHECK(svg.find("legend") != std::string::npos);
        CHECK(svg.find("polyline") == std::string::npos);
    }
    fs::remove_all(dir);
}

TEST_CASE("config document round trip and hashing") {
    RunConfig c = tiny_cfg(AgentKind::DriqnW, 12);
    c.strategy = StrategyKind::Adaptive;
    c.train.lambda_weighted_rest = true;
    const nlohmann::json j = config_to_json(c);
    const RunConfig back = config_from_json(j);
    CHECK(back.agent == c.agent);
    CHECK(back.strategy == c.strategy);
    CHECK(back.total_steps == c.total_steps);
    CHECK(back.hidden == c.hidden);
    CHECK(back.train.lambda_weighted_rest == true);
    CHECK(config_hash(back) == config_hash(c));

    RunConfig other = c;
    other.train.gamma = 0.5;
    CHECK(config_hash(other) != config_hash(c));

    SUBCASE("invalid documents are rejected") {
        nlohmann::json bad = j;
        bad["agent"] = "warp-drive";
        CHECK_THROWS_AS(config_from_json(bad), ConfigError);
        bad = j;
        bad["noise"] = nlohmann::json::array();
        CHECK_THROWS_AS(config_from_json(bad), ConfigError);
        bad = j;
        bad["noise"][0]["intensity"] = 2.5;
        CHECK_THROWS_AS(config_from_json(bad), ConfigError);
        bad = j;
        bad["traj_log"] = "sometimes";
        CHECK_THROWS_AS(config_from_json(bad), ConfigError);
    }
}

TEST_CASE("diverging training halts with a numerical fault") {
    RunConfig cfg = tiny_cfg(AgentKind::Driqn, 13);
    cfg.total_steps = 4000;
    cfg.train.optimizer = "sgd";      // unnormalized steps diverge fast
    cfg.train.grad_clip = 0.0;        // disabled
    cfg.train.lr_head_start = 1e18;   // guaranteed blow-up
    cfg.train.lr_head_end = 1e18;
    cfg.train.lr_rest_start = 1e18;
    cfg.train.lr_rest_end = 1e18;
    const fs::path dir = "hrun_nan";
    fs::remove_all(dir);
    CHECK_THROWS_AS(train(cfg, dir), NumericalFault);
    fs::remove_all(dir);
}
