#pragma once

// Training loop, evaluation protocol and run-directory bookkeeping: episode
// rollouts with per-episode noise assignment, subgroup replay, the
// substituted robust update for the DRO agents, periodic evaluation on the
// frozen seed set, metric/diagnostic CSV logs and checkpoints.

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "driqn/baselines.hpp"
#include "driqn/config.hpp"
#include "driqn/distrl.hpp"
#include "driqn/dro.hpp"
#include "driqn/metrics.hpp"
#include "driqn/noise.hpp"
#include "driqn/optim.hpp"
#include "driqn/qnet.hpp"
#include "driqn/replay.hpp"
#include "driqn/world.hpp"

namespace driqn {

inline constexpr double kEnergyScale = 100.0;

// ---- Policies (exploration-free action sources used by evaluation) ----

class Policy {
public:
    virtual ~Policy() = default;
    virtual void episode_reset() {}
    virtual int act(const Observation& obs, Rng& rng) = 0;
};

class IqnPolicy : public Policy {
public:
    IqnPolicy(const IqnNet& net, StrategyKind strategy, int k, double eta_min,
              const ComponentRanges& ranges)
        : net_(net), strategy_(strategy), k_(k), eta_min_(eta_min), ranges_(ranges) {}

    int act(const Observation& obs, Rng& rng) override {
        encode_observation(obs, ranges_, enc_);
        DistortionSpec spec;
        if (strategy_ == StrategyKind::Adaptive)
            spec = {DistortionKind::CVaR, adaptive_eta(obs, eta_min_)};
        return select_action(net_, enc_, k_, spec, rng);
    }

private:
    const IqnNet& net_;
    StrategyKind strategy_;
    int k_;
    double eta_min_;
    ComponentRanges ranges_;
    std::vector<double> enc_;
};

class DqnPolicy : public Policy {
public:
    DqnPolicy(const QNet& net, const ComponentRanges& ranges) : net_(net), ranges_(ranges) {}
    int act(const Observation& obs, Rng&) override {
        encode_observation(obs, ranges_, enc_);
        return select_action_dqn(net_, enc_);
    }

private:
    const QNet& net_;
    ComponentRanges ranges_;
    std::vector<double> enc_;
};

class ApfPolicy : public Policy {
public:
    explicit ApfPolicy(const PlannerParams& p) : params_(p) {}
    int act(const Observation& obs, Rng&) override { return apf_action(obs, params_).index; }

private:
    PlannerParams params_;
};

class BugPolicy : public Policy {
public:
    explicit BugPolicy(const PlannerParams& p) : params_(p) {}
    void episode_reset() override { state_ = BugState{}; }
    int act(const Observation& obs, Rng&) override {
        auto [cmd, next] = bug_action(obs, state_, params_);
        state_ = next;
        return cmd.index;
    }

private:
    PlannerParams params_;
    BugState state_;
};

// ---- Evaluation on the frozen seed set ----

struct EvalEpisode {
    std::uint64_t seed = 0;
    int subgroup_id = 0;
    Outcome outcome = Outcome::Running;
    double cumulative_reward = 0.0;
    double energy = 0.0;  // sum of (a^2 + w^2) dt
    int steps = 0;
    std::vector<TrajectoryRow> rows;
};

struct EvalResult {
    MetricsRecord metrics;
    std::vector<EvalEpisode> episodes;
};

// Runs the pre-randomized evaluation environments with exploration disabled.
// All randomness derives from the eval seeds, never from training streams.
inline EvalResult evaluate(Policy& policy, const RunConfig& cfg) {
    EvalResult result;
    const ComponentRanges ranges = cfg.ranges();
    int success = 0, collision = 0, timeout = 0;
    double fcr_sum = 0.0, at_sum = 0.0, ae_sum = 0.0;

    for (int e = 0; e < cfg.eval_envs; ++e) {
        EvalEpisode ep;
        ep.seed = cfg.eval_seed_base + static_cast<std::uint64_t>(e);
        auto [state, map] = reset(ep.seed, cfg.randomize_layout, cfg.world);
        Rng noise_rng(ep.seed, 101), policy_rng(ep.seed, 102);
        const NoiseSpec spec = assign_subgroup(noise_rng, cfg.noise);
        ep.subgroup_id = spec.subgroup_id;
        policy.episode_reset();

        ep.rows.push_back({0.0, state.position.x, state.position.y, state.heading, state.speed,
                           0.0, Outcome::Running});
        for (;;) {
            const Observation obs =
                perturb(sense(state, map, cfg.world), spec, ranges, cfg.noise_params, noise_rng);
            const auto cmd = ActionCommand::from_index(policy.act(obs, policy_rng));
            const StepResult r = step(state, cmd, map, cfg.world);
            state = r.next_state;
            ep.cumulative_reward += r.reward;
            ep.energy += (cmd.accel() * cmd.accel() + cmd.turn_rate() * cmd.turn_rate()) *
                         cfg.world.dt;
            ++ep.steps;
            ep.rows.push_back({ep.steps * cfg.world.dt, state.position.x, state.position.y,
                               state.heading, state.speed, r.reward, r.outcome});
            if (r.outcome != Outcome::Running) {
                ep.outcome = r.outcome;
                break;
            }
        }

        fcr_sum += ep.cumulative_reward;
        if (ep.outcome == Outcome::GoalReached) {
            ++success;
            at_sum += ep.steps * cfg.world.dt;
            ae_sum += ep.energy;
        } else if (ep.outcome == Outcome::Collision) {
            ++collision;
        } else {
            ++timeout;
        }
        result.episodes.push_back(std::move(ep));
    }

    const double n = cfg.eval_envs;
    result.metrics.sr = success / n;
    result.metrics.cr = collision / n;
    result.metrics.tr = timeout / n;
    result.metrics.fcr = fcr_sum / n;
    if (success > 0) {
        result.metrics.at = at_sum / success;
        result.metrics.ae = ae_sum / success * kEnergyScale;
    }
    return result;
}

// ---- Training ----

struct TrainResult {
    std::filesystem::path dir;
    MetricsRecord final_metrics;
    std::uint64_t steps = 0;
    std::uint64_t updates = 0;
};

namespace harness_detail {

inline double lerp_schedule(double start, double end, double frac) {
    return start + (end - start) * clamp(frac, 0.0, 1.0);
}

inline double lambda_entropy(const std::vector<double>& lambda) {
    double h = 0.0;
    for (double l : lambda)
        if (l > 0.0) h -= l * std::log(l);
    return h;
}

inline void write_eval_artifacts(const std::filesystem::path& dir, std::uint64_t step,
                                 const EvalResult& eval) {
    std::filesystem::create_directories(dir / "traj");
    for (size_t e = 0; e < eval.episodes.size(); ++e) {
        std::ofstream f(dir / "traj" /
                        (std::to_string(step) + "_" + std::to_string(e) + ".csv"));
        write_trajectory_csv(f, eval.episodes[e].rows);
    }
}

}  // namespace harness_detail

// Trains (or, for the classical planners, just evaluates) one seed and fills
// a run directory: config.json, metrics.csv, dro_log.csv, maps/, traj/ and
// checkpoints. Deterministic given (config, seed).
inline TrainResult train(RunConfig cfg, const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::uint64_t seed = cfg.seed;
    const nlohmann::json resolved = config_to_json(cfg);
    {
        std::ofstream f(out_dir / "config.json");
        f << resolved.dump(2) << "\n";
    }
    const std::uint64_t cfg_hash = config_hash(cfg);
    const ComponentRanges ranges = cfg.ranges();

    // Evaluation maps are fixed per run; export them once.
    fs::create_directories(out_dir / "maps");
    for (int e = 0; e < cfg.eval_envs; ++e) {
        auto [s, m] = reset(cfg.eval_seed_base + e, cfg.randomize_layout, cfg.world);
        std::ofstream f(out_dir / "maps" / ("env_" + std::to_string(e) + ".json"));
        f << map_to_json(m).dump(2) << "\n";
    }

    std::ofstream metrics_csv(out_dir / "metrics.csv");
    metrics_csv << kMetricsHeader << "\n";

    TrainResult result;
    result.dir = out_dir;

    const PlannerParams planner{1.0, 0.5, cfg.world.d_sense, cfg.world.dt};

    if (!cfg.learned_agent()) {
        std::unique_ptr<Policy> policy;
        if (cfg.agent == AgentKind::Apf)
            policy = std::make_unique<ApfPolicy>(planner);
        else
            policy = std::make_unique<BugPolicy>(planner);
        const EvalResult eval = evaluate(*policy, cfg);
        metrics_csv << metrics_csv_row(0, eval.metrics, 0.0, 0.0) << "\n";
        if (cfg.traj_log != "none") harness_detail::write_eval_artifacts(out_dir, 0, eval);
        result.final_metrics = eval.metrics;
        return result;
    }

    // Learned agents.
    const NetConfig net_cfg = cfg.net_config();
    Rng init_rng(seed, 5);
    IqnNet net, target;
    QNet qnet, qtarget;
    const bool is_dqn = cfg.agent == AgentKind::Dqn;
    if (is_dqn) {
        qnet = QNet::make(net_cfg, init_rng);
        qtarget = qnet;
    } else {
        net = IqnNet::make(net_cfg, init_rng);
        target = net;
    }
    const bool is_dro = cfg.agent == AgentKind::Driqn || cfg.agent == AgentKind::DriqnW;
    const SubstitutionMode mode = cfg.agent == AgentKind::DriqnW ? SubstitutionMode::WholeNetwork
                                                                 : SubstitutionMode::LastLayer;

    Rng layout_rng(seed, 1), noise_rng(seed, 2), policy_rng(seed, 3), train_rng(seed, 4);

    const bool use_adam = cfg.train.optimizer == "adam";
    AdamState adam;
    adam.init(is_dqn ? qnet.dim : net.dim);

    SubgroupBuffer buffer(static_cast<int>(cfg.noise.size()), cfg.train.capacity);
    const Hyper hp{cfg.train.gamma, cfg.train.n_tau, cfg.train.n_tau_prime, cfg.train.kappa,
                   cfg.train.k_policy};

    const int catalog_j = static_cast<int>(cfg.noise.size());
    std::ofstream dro_csv;
    if (is_dro) {
        dro_csv.open(out_dir / "dro_log.csv");
        dro_csv << "step,converged,delta_norm";
        for (int j = 0; j < catalog_j; ++j) dro_csv << ",f_" << j;
        for (int j = 0; j < catalog_j; ++j) dro_csv << ",lambda_" << j;
        dro_csv << "\n";
    }

    std::ofstream episodes_csv(out_dir / "episodes.csv");
    episodes_csv << "episode,start_step,layout_seed,subgroup_id,steps,outcome,return\n";

    // window aggregates between metric rows
    double win_entropy = 0.0, win_grad_norm = 0.0;
    std::uint64_t win_updates = 0;

    std::vector<double> grad;
    std::vector<EncodedTransition> enc_storage;
    std::vector<double> enc_cur, enc_next;

    auto encode_batch = [&](const std::vector<const Transition*>& batch, size_t base)
        -> std::vector<const EncodedTransition*> {
        std::vector<const EncodedTransition*> ptrs(batch.size());
        for (size_t i = 0; i < batch.size(); ++i) {
            EncodedTransition& et = enc_storage[base + i];
            encode_observation(batch[i]->obs, ranges, et.x);
            encode_observation(batch[i]->next_obs, ranges, et.x_next);
            et.action = batch[i]->action;
            et.reward = (batch[i]->reward - cfg.train.reward_baseline) * cfg.train.reward_scale;
            et.done = batch[i]->done;
            ptrs[i] = &et;
        }
        return ptrs;
    };

    auto dump_fault = [&](std::uint64_t step, const std::string& what,
                          const std::vector<double>& f, const std::vector<double>& lambda,
                          double gnorm) {
        if (fs::exists(out_dir / "fault.json")) return;  // keep the first, most detailed dump
        nlohmann::json j;
        j["step"] = step;
        j["what"] = what;
        j["f"] = f;
        j["lambda"] = lambda;
        j["grad_norm"] = gnorm;
        std::ofstream out(out_dir / "fault.json");
        out << j.dump(2) << "\n";
    };

    auto save_ckpt = [&](std::uint64_t step) {
        Checkpoint c;
        c.config_hash = cfg_hash;
        c.step = step;
        c.agent = to_string(cfg.agent);
        c.net_kind = is_dqn ? NetKind::Scalar : NetKind::Iqn;
        c.net_cfg = net_cfg;
        c.head_offset = is_dqn ? qnet.head_offset() : net.head_offset();
        c.head_size = is_dqn ? qnet.head_size() : net.head_size();
        c.theta = is_dqn ? qnet.theta : net.theta;
        c.target_theta = is_dqn ? qtarget.theta : target.theta;
        c.rng_states = {{"layout", layout_rng.serialize()},
                        {"noise", noise_rng.serialize()},
                        {"policy", policy_rng.serialize()},
                        {"train", train_rng.serialize()}};
        c.config_json = resolved.dump();
        if (use_adam) {
            c.opt_t = adam.t;
            c.opt_m = adam.m;
            c.opt_v = adam.v;
        }
        save_checkpoint((out_dir / ("ckpt_" + std::to_string(step) + ".bin")).string(), c);
    };

    auto run_eval = [&](std::uint64_t step) {
        std::unique_ptr<Policy> policy;
        if (is_dqn)
            policy = std::make_unique<DqnPolicy>(qnet, ranges);
        else
            policy = std::make_unique<IqnPolicy>(net, cfg.strategy, cfg.train.k_policy,
                                                 cfg.train.eta_min, ranges);
        const EvalResult eval = evaluate(*policy, cfg);
        const double mean_entropy = win_updates ? win_entropy / win_updates : 0.0;
        const double mean_gnorm = win_updates ? win_grad_norm / win_updates : 0.0;
        metrics_csv << metrics_csv_row(step, eval.metrics, mean_entropy, mean_gnorm) << "\n";
        metrics_csv.flush();
        win_entropy = win_grad_norm = 0.0;
        win_updates = 0;
        if (cfg.traj_log == "all" || (cfg.traj_log == "final" && step == cfg.total_steps))
            harness_detail::write_eval_artifacts(out_dir, step, eval);
        save_ckpt(step);
        result.final_metrics = eval.metrics;
    };

    auto do_update = [&](std::uint64_t step) {
        const double frac = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
        const double lr_h =
            harness_detail::lerp_schedule(cfg.train.lr_head_start, cfg.train.lr_head_end, frac);
        const double lr_r =
            harness_detail::lerp_schedule(cfg.train.lr_rest_start, cfg.train.lr_rest_end, frac);
        const size_t c = static_cast<size_t>(cfg.train.batch_size);
        double loss = 0.0;

        if (is_dqn) {
            if (buffer.total_size() < static_cast<size_t>(cfg.train.min_fill)) return;
            const auto batch = buffer.sample_pooled(c, train_rng);
            enc_storage.resize(c);
            const auto ptrs = encode_batch(batch, 0);
            loss = dqn_batch_grad(qnet, qtarget, ptrs, cfg.train.gamma, grad);
            clip_norm_inplace(grad, cfg.train.grad_clip);
            if (use_adam)
                adam.step(qnet.theta, grad, qnet.head_offset(), qnet.head_size(), lr_h, lr_r);
            else
                apply_sgd(qnet.theta, grad, qnet.head_offset(), qnet.head_size(), lr_h, lr_r);
            win_grad_norm += norm2(grad);
        } else if (!is_dro) {
            if (buffer.total_size() < static_cast<size_t>(cfg.train.min_fill)) return;
            const auto batch = buffer.sample_pooled(c, train_rng);
            enc_storage.resize(c);
            const auto ptrs = encode_batch(batch, 0);
            loss = iqn_batch_grad(net, target, ptrs, hp, train_rng, grad);
            clip_norm_inplace(grad, cfg.train.grad_clip);
            if (use_adam)
                adam.step(net.theta, grad, net.head_offset(), net.head_size(), lr_h, lr_r);
            else
                apply_sgd(net.theta, grad, net.head_offset(), net.head_size(), lr_h, lr_r);
            win_grad_norm += norm2(grad);
        } else {
            const auto sampled =
                buffer.sample_per_subgroup(c, static_cast<size_t>(cfg.train.min_fill), train_rng);
            if (sampled.empty()) return;
            enc_storage.resize(sampled.size() * c);
            std::vector<SubgroupBatch> batches(sampled.size());
            for (size_t j = 0; j < sampled.size(); ++j) {
                batches[j].subgroup_id = sampled[j].first;
                batches[j].transitions = encode_batch(sampled[j].second, j * c);
            }
            const SubgroupGradients sg =
                subgroup_stats(batches, net, target, hp, mode, train_rng, cfg.train.grad_clip);
            for (double fj : sg.f) loss = std::max(loss, fj);
            const DualQpResult qp = solve_dual_qp(sg, cfg.train.qp_tol, cfg.train.qp_max_iter);
            const std::vector<double> delta = descent_direction(sg, qp.lambda);
            const std::vector<double>& g_rest = cfg.train.lambda_weighted_rest
                                                    ? sg.weighted_full_grad(qp.lambda)
                                                    : sg.mean_full_grad;
            if (!std::isfinite(loss) || !all_finite(qp.lambda)) {
                dump_fault(step, "non-finite loss or weights", sg.f, qp.lambda,
                           norm2(sg.mean_full_grad));
                throw NumericalFault("non-finite loss at step " + std::to_string(step));
            }
            if (use_adam) {
                // The substituted direction replaces the gradient that feeds
                // the optimizer on its slice; the other layers keep the mean
                // gradient.
                const std::vector<double> capped = capped_direction(
                    delta, g_rest, net.head_offset(), net.head_size(), mode, cfg.train.shrink_cap);
                std::vector<double> pseudo;
                if (mode == SubstitutionMode::WholeNetwork) {
                    pseudo.resize(net.dim);
                    for (size_t i = 0; i < net.dim; ++i) pseudo[i] = -capped[i];
                    adam.step(net.theta, pseudo, net.head_offset(), net.head_size(), lr_h, lr_h);
                } else {
                    pseudo = g_rest;
                    for (size_t i = 0; i < net.head_size(); ++i)
                        pseudo[net.head_offset() + i] = -capped[i];
                    adam.step(net.theta, pseudo, net.head_offset(), net.head_size(), lr_h, lr_r);
                }
            } else {
                substitute_and_update(net.theta, g_rest, delta, net.head_offset(),
                                      net.head_size(), mode, lr_h, lr_r, cfg.train.shrink_cap);
            }
            win_entropy += harness_detail::lambda_entropy(qp.lambda);
            win_grad_norm += norm2(sg.mean_full_grad);

            dro_csv << step << "," << (qp.converged ? 1 : 0) << "," << format_g17(norm2(delta));
            std::vector<std::string> f_cells(catalog_j), l_cells(catalog_j, "0");
            for (int j = 0; j < sg.j_count; ++j) {
                f_cells[sg.subgroup_ids[j]] = format_g17(sg.f[j]);
                l_cells[sg.subgroup_ids[j]] = format_g17(qp.lambda[j]);
            }
            for (const auto& cell : f_cells) dro_csv << "," << cell;
            for (const auto& cell : l_cells) dro_csv << "," << cell;
            dro_csv << "\n";
        }

        if (!std::isfinite(loss)) {
            dump_fault(step, "non-finite loss", {}, {}, norm2(grad));
            throw NumericalFault("non-finite loss at step " + std::to_string(step));
        }
        ++result.updates;
        ++win_updates;
        if (cfg.train.target_sync > 0 && result.updates % cfg.train.target_sync == 0) {
            if (is_dqn)
                sync_target(qnet, qtarget);
            else
                sync_target(net, target);
        }
    };

    const double eps_span = cfg.train.eps_frac * static_cast<double>(cfg.total_steps);
    auto epsilon_at = [&](std::uint64_t step) {
        return harness_detail::lerp_schedule(cfg.train.eps_start, cfg.train.eps_end,
                                             static_cast<double>(step) / eps_span);
    };

    std::uint64_t step_count = 0;
    std::uint64_t episode_index = 0;
    while (step_count < cfg.total_steps) {
        const std::uint64_t layout_seed = layout_rng.next_u64();
        auto [state, map] = reset(layout_seed, cfg.randomize_layout, cfg.world);
        const NoiseSpec spec = assign_subgroup(noise_rng, cfg.noise);
        const std::uint64_t episode_start = step_count;
        double episode_return = 0.0;
        Outcome episode_outcome = Outcome::Running;

        Observation obs =
            perturb(sense(state, map, cfg.world), spec, ranges, cfg.noise_params, noise_rng);
        bool episode_done = false;
        int action = ActionCommand::from_values(1, 1).index;
        std::uint64_t episode_step = 0;
        while (!episode_done && step_count < cfg.total_steps) {
            // Rollout actions persist for action_hold steps (one-step
            // transitions are pushed regardless); selection is epsilon-greedy.
            if (episode_step % static_cast<std::uint64_t>(std::max(1, cfg.train.action_hold)) == 0) {
                if (policy_rng.uniform() < epsilon_at(step_count)) {
                    action = static_cast<int>(policy_rng.uniform_int(ActionCommand::count));
                } else if (is_dqn) {
                    encode_observation(obs, ranges, enc_cur);
                    action = select_action_dqn(qnet, enc_cur);
                } else {
                    encode_observation(obs, ranges, enc_cur);
                    DistortionSpec dist;
                    if (cfg.strategy == StrategyKind::Adaptive)
                        dist = {DistortionKind::CVaR, adaptive_eta(obs, cfg.train.eta_min)};
                    action = select_action(net, enc_cur, cfg.train.k_policy, dist, policy_rng);
                }
            }
            ++episode_step;

            const StepResult r = step(state, ActionCommand::from_index(action), map, cfg.world);
            const Observation next_obs = perturb(sense(r.next_state, map, cfg.world), spec, ranges,
                                                 cfg.noise_params, noise_rng);
            episode_done = r.outcome != Outcome::Running;
            buffer.push(Transition{obs, action, r.reward, next_obs, episode_done,
                                   spec.subgroup_id});
            state = r.next_state;
            obs = next_obs;
            episode_return += r.reward;
            episode_outcome = r.outcome;
            ++step_count;

            if (step_count % static_cast<std::uint64_t>(cfg.train.update_every) == 0) {
                try {
                    do_update(step_count);
                } catch (const NumericalFault& e) {
                    dump_fault(step_count, e.what(), {}, {}, 0.0);
                    throw;
                }
            }
            if (step_count % cfg.eval_interval == 0 || step_count == cfg.total_steps)
                run_eval(step_count);
        }
        episodes_csv << episode_index++ << "," << episode_start << "," << layout_seed << ","
                     << spec.subgroup_id << "," << (step_count - episode_start) << ","
                     << to_string(episode_outcome) << "," << format_g17(episode_return) << "\n";
    }
    result.steps = step_count;
    return result;
}

}  // namespace driqn
