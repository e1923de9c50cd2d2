#pragma once

// Run configuration: schema-validated JSON document with named profiles.
// The resolved document is written into every run directory and hashed into
// checkpoints.

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "driqn/common.hpp"
#include "driqn/noise.hpp"
#include "driqn/qnet.hpp"
#include "driqn/world.hpp"

#include "json.hpp"

namespace driqn {

enum class AgentKind { Apf, Bug, Dqn, Iqn, Driqn, DriqnW };
enum class StrategyKind { Greedy, Adaptive };

inline const char* to_string(AgentKind a) {
    switch (a) {
        case AgentKind::Apf: return "apf";
        case AgentKind::Bug: return "bug";
        case AgentKind::Dqn: return "dqn";
        case AgentKind::Iqn: return "iqn";
        case AgentKind::Driqn: return "driqn";
        case AgentKind::DriqnW: return "driqn-w";
    }
    return "?";
}

inline AgentKind agent_from_string(const std::string& s) {
    if (s == "apf") return AgentKind::Apf;
    if (s == "bug") return AgentKind::Bug;
    if (s == "dqn") return AgentKind::Dqn;
    if (s == "iqn") return AgentKind::Iqn;
    if (s == "driqn") return AgentKind::Driqn;
    if (s == "driqn-w") return AgentKind::DriqnW;
    throw ConfigError("unknown agent: " + s);
}

inline const char* to_string(StrategyKind s) {
    return s == StrategyKind::Greedy ? "greedy" : "adaptive";
}

inline StrategyKind strategy_from_string(const std::string& s) {
    if (s == "greedy") return StrategyKind::Greedy;
    if (s == "adaptive") return StrategyKind::Adaptive;
    throw ConfigError("unknown strategy: " + s);
}

// Defaults are the desk profile; apply_profile("paper") restores the
// full-scale declared constants.
struct TrainParams {
    double gamma = 0.95;
    int n_tau = 8;
    int n_tau_prime = 8;
    double kappa = 1.0;
    int k_policy = 32;
    int target_sync = 100;         // gradient updates between hard target copies
    double reward_scale = 0.2;     // TD-side value normalization; env rewards stay raw
    double reward_baseline = -1.0; // subtracted from raw rewards before scaling
    std::string optimizer = "adam";  // adam | sgd (plain additive updates)
    double eps_start = 1.0;
    double eps_end = 0.1;
    double eps_frac = 0.3;   // fraction of total steps the anneal spans
    int batch_size = 32;
    int capacity = 100000;
    int min_fill = 1000;
    int update_every = 4;    // environment steps per gradient update
    int action_hold = 1;     // rollout steps each selected action persists
    double lr_head_start = 3e-4;
    double lr_head_end = 3e-5;
    double lr_rest_start = 3e-4;
    double lr_rest_end = 3e-5;
    double shrink_cap = 1.0;
    bool lambda_weighted_rest = false;
    double grad_clip = 1.0;
    double qp_tol = 1e-12;
    int qp_max_iter = 2000;
    double eta_min = 0.25;
};

struct RunConfig {
    std::string profile = "desk";
    AgentKind agent = AgentKind::Driqn;
    StrategyKind strategy = StrategyKind::Greedy;
    std::uint64_t seed = 1;
    std::vector<std::uint64_t> seeds{1, 2, 3};
    std::uint64_t total_steps = 50000;
    std::uint64_t eval_interval = 5000;
    int eval_envs = 15;
    std::uint64_t eval_seed_base = 900000;
    bool desk_scale = true;
    bool randomize_layout = true;
    std::string traj_log = "final";  // all | final | none
    NoiseCatalog noise{{NoiseKind::Gaussian, 0.6, 0}, {NoiseKind::Poisson, 0.6, 1}};
    WorldConfig world;
    NoiseParams noise_params;
    int hidden = 128;
    int n_cos = 64;
    TrainParams train;

    RunConfig() {
        // desk-profile episode geometry (the paper profile restores the
        // full-scale constants)
        world.t_max = 400;
        world.start_goal_min = 8.0;
        world.start_goal_max = 20.0;
    }

    NetConfig net_config() const {
        return NetConfig{kEncodedExtra + world.beams, hidden, n_cos, ActionCommand::count};
    }
    ComponentRanges ranges() const { return ComponentRanges::from_world(world); }
    bool learned_agent() const { return agent != AgentKind::Apf && agent != AgentKind::Bug; }
};

inline void apply_profile(RunConfig& c, const std::string& profile) {
    if (profile == "desk") {
        c.desk_scale = true;
        c.total_steps = 50000;
        c.eval_interval = 5000;
        c.seeds = {1, 2, 3};
        c.world.t_max = 400;
        c.world.start_goal_min = 8.0;
        c.world.start_goal_max = 20.0;
        c.train = TrainParams{};
    } else if (profile == "paper") {
        c.desk_scale = false;
        c.total_steps = 1500000;
        c.eval_interval = 10000;
        c.seeds = {1, 2, 3, 4, 5, 6, 7, 8, 9};
        c.world.t_max = 1000;
        c.world.start_goal_min = 15.0;
        c.world.start_goal_max = 35.0;
        c.train.gamma = 0.99;
        c.train.target_sync = 1000;
        c.train.update_every = 1;
        c.train.eps_end = 0.05;
        c.train.eps_frac = 0.2;
        c.train.lr_head_start = 1e-4;
        c.train.lr_head_end = 1e-6;
        c.train.lr_rest_start = 1e-4;
        c.train.lr_rest_end = 1e-6;
    } else {
        throw ConfigError("unknown profile: " + profile);
    }
    c.profile = profile;
}

namespace config_detail {

template <typename T>
void read(const nlohmann::json& j, const char* key, T& into) {
    if (j.contains(key)) into = j.at(key).get<T>();
}

}  // namespace config_detail

inline RunConfig config_from_json(const nlohmann::json& j) {
    using config_detail::read;
    RunConfig c;
    if (j.contains("profile")) apply_profile(c, j.at("profile").get<std::string>());

    if (j.contains("agent")) c.agent = agent_from_string(j.at("agent").get<std::string>());
    if (j.contains("strategy"))
        c.strategy = strategy_from_string(j.at("strategy").get<std::string>());
    read(j, "seed", c.seed);
    read(j, "seeds", c.seeds);
    read(j, "total_steps", c.total_steps);
    read(j, "eval_interval", c.eval_interval);
    read(j, "eval_envs", c.eval_envs);
    read(j, "eval_seed_base", c.eval_seed_base);
    read(j, "desk_scale", c.desk_scale);
    read(j, "randomize_layout", c.randomize_layout);
    read(j, "traj_log", c.traj_log);
    read(j, "hidden", c.hidden);
    read(j, "n_cos", c.n_cos);

    if (j.contains("noise")) {
        c.noise.clear();
        int id = 0;
        for (const auto& n : j.at("noise")) {
            NoiseSpec spec;
            spec.kind = noise_kind_from_string(n.at("kind").get<std::string>());
            spec.intensity = n.value("intensity", 0.0);
            spec.subgroup_id = id++;
            c.noise.push_back(spec);
        }
    }
    if (j.contains("world")) {
        const auto& w = j.at("world");
        read(w, "dt", c.world.dt);
        read(w, "v_max", c.world.v_max);
        read(w, "vessel_radius", c.world.vessel_radius);
        read(w, "goal_radius", c.world.goal_radius);
        read(w, "d_sense", c.world.d_sense);
        read(w, "beams", c.world.beams);
        read(w, "bound", c.world.bound);
        read(w, "t_max", c.world.t_max);
        read(w, "flow_max", c.world.flow_max);
        read(w, "start_goal_min", c.world.start_goal_min);
        read(w, "start_goal_max", c.world.start_goal_max);
    }
    if (j.contains("noise_params")) {
        const auto& n = j.at("noise_params");
        read(n, "sigma0", c.noise_params.sigma0);
        read(n, "shot0", c.noise_params.shot0);
        read(n, "pepper0", c.noise_params.pepper0);
    }
    if (j.contains("train")) {
        const auto& t = j.at("train");
        read(t, "gamma", c.train.gamma);
        read(t, "n_tau", c.train.n_tau);
        read(t, "n_tau_prime", c.train.n_tau_prime);
        read(t, "kappa", c.train.kappa);
        read(t, "k_policy", c.train.k_policy);
        read(t, "target_sync", c.train.target_sync);
        read(t, "reward_scale", c.train.reward_scale);
        read(t, "reward_baseline", c.train.reward_baseline);
        read(t, "optimizer", c.train.optimizer);
        read(t, "eps_start", c.train.eps_start);
        read(t, "eps_end", c.train.eps_end);
        read(t, "eps_frac", c.train.eps_frac);
        read(t, "batch_size", c.train.batch_size);
        read(t, "capacity", c.train.capacity);
        read(t, "min_fill", c.train.min_fill);
        read(t, "update_every", c.train.update_every);
        read(t, "action_hold", c.train.action_hold);
        read(t, "lr_head_start", c.train.lr_head_start);
        read(t, "lr_head_end", c.train.lr_head_end);
        read(t, "lr_rest_start", c.train.lr_rest_start);
        read(t, "lr_rest_end", c.train.lr_rest_end);
        read(t, "shrink_cap", c.train.shrink_cap);
        read(t, "lambda_weighted_rest", c.train.lambda_weighted_rest);
        read(t, "grad_clip", c.train.grad_clip);
        read(t, "qp_tol", c.train.qp_tol);
        read(t, "qp_max_iter", c.train.qp_max_iter);
        read(t, "eta_min", c.train.eta_min);
    }

    // validation
    if (c.noise.empty()) throw ConfigError("noise catalog must not be empty");
    for (const auto& n : c.noise)
        if (n.intensity < 0.0 || n.intensity > 1.0)
            throw ConfigError("noise intensity must lie in [0, 1]");
    if (c.eval_envs < 1) throw ConfigError("eval_envs must be >= 1");
    if (c.total_steps < 1) throw ConfigError("total_steps must be >= 1");
    if (c.train.batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (c.traj_log != "all" && c.traj_log != "final" && c.traj_log != "none")
        throw ConfigError("traj_log must be all | final | none");
    if (c.train.eps_frac <= 0.0) throw ConfigError("eps_frac must be positive");
    if (c.train.optimizer != "adam" && c.train.optimizer != "sgd")
        throw ConfigError("optimizer must be adam | sgd");
    return c;
}

inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["profile"] = c.profile;
    j["agent"] = to_string(c.agent);
    j["strategy"] = to_string(c.strategy);
    j["seed"] = c.seed;
    j["seeds"] = c.seeds;
    j["total_steps"] = c.total_steps;
    j["eval_interval"] = c.eval_interval;
    j["eval_envs"] = c.eval_envs;
    j["eval_seed_base"] = c.eval_seed_base;
    j["desk_scale"] = c.desk_scale;
    j["randomize_layout"] = c.randomize_layout;
    j["traj_log"] = c.traj_log;
    j["hidden"] = c.hidden;
    j["n_cos"] = c.n_cos;
    j["noise"] = nlohmann::json::array();
    for (const auto& n : c.noise)
        j["noise"].push_back({{"kind", to_string(n.kind)}, {"intensity", n.intensity}});
    j["world"] = {{"dt", c.world.dt},
                  {"v_max", c.world.v_max},
                  {"vessel_radius", c.world.vessel_radius},
                  {"goal_radius", c.world.goal_radius},
                  {"d_sense", c.world.d_sense},
                  {"beams", c.world.beams},
                  {"bound", c.world.bound},
                  {"t_max", c.world.t_max},
                  {"flow_max", c.world.flow_max},
                  {"start_goal_min", c.world.start_goal_min},
                  {"start_goal_max", c.world.start_goal_max}};
    j["noise_params"] = {{"sigma0", c.noise_params.sigma0},
                         {"shot0", c.noise_params.shot0},
                         {"pepper0", c.noise_params.pepper0}};
    j["train"] = {{"gamma", c.train.gamma},
                  {"n_tau", c.train.n_tau},
                  {"n_tau_prime", c.train.n_tau_prime},
                  {"kappa", c.train.kappa},
                  {"k_policy", c.train.k_policy},
                  {"target_sync", c.train.target_sync},
                  {"reward_scale", c.train.reward_scale},
                  {"reward_baseline", c.train.reward_baseline},
                  {"optimizer", c.train.optimizer},
                  {"eps_start", c.train.eps_start},
                  {"eps_end", c.train.eps_end},
                  {"eps_frac", c.train.eps_frac},
                  {"batch_size", c.train.batch_size},
                  {"capacity", c.train.capacity},
                  {"min_fill", c.train.min_fill},
                  {"update_every", c.train.update_every},
                  {"action_hold", c.train.action_hold},
                  {"lr_head_start", c.train.lr_head_start},
                  {"lr_head_end", c.train.lr_head_end},
                  {"lr_rest_start", c.train.lr_rest_start},
                  {"lr_rest_end", c.train.lr_rest_end},
                  {"shrink_cap", c.train.shrink_cap},
                  {"lambda_weighted_rest", c.train.lambda_weighted_rest},
                  {"grad_clip", c.train.grad_clip},
                  {"qp_tol", c.train.qp_tol},
                  {"qp_max_iter", c.train.qp_max_iter},
                  {"eta_min", c.train.eta_min}};
    return j;
}

inline RunConfig load_config_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config parse error: ") + e.what());
    }
    return config_from_json(j);
}

// FNV-1a over the canonical (key-sorted) serialization.
inline std::uint64_t config_hash(const RunConfig& c) {
    const std::string s = config_to_json(c).dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char b : s) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace driqn
