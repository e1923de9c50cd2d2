#pragma once

// Distributional losses, TD targets, distortion functions and action
// selection for the quantile network, plus the scalar DQN baseline loss.

#include <vector>

#include "driqn/common.hpp"
#include "driqn/qnet.hpp"
#include "driqn/rng.hpp"

namespace driqn {

enum class DistortionKind { Identity, CVaR };

struct DistortionSpec {
    DistortionKind kind = DistortionKind::Identity;
    double eta = 1.0;  // CVaR level in (0, 1]; eta = 1 is the identity
};

inline double distort(double tau, const DistortionSpec& spec) {
    return spec.kind == DistortionKind::CVaR ? spec.eta * tau : tau;
}

// Risk level from clearance: fully greedy (eta = 1) with no returns on any
// beam, down to eta_min when scraping an obstacle; linear in between.
inline double adaptive_eta(const Observation& obs, double eta_min = 0.25) {
    double min_lidar = 1.0;
    for (double r : obs.lidar) min_lidar = std::min(min_lidar, r);
    if (min_lidar >= 1.0) return 1.0;
    return eta_min + (1.0 - eta_min) * clamp(min_lidar, 0.0, 1.0);
}

// Pairwise sampled TD errors: entry (i, j) = r + gamma * z_next[j] * (1 - done) - z_cur[i].
struct TDErrorMatrix {
    int n = 0, n_prime = 0;
    std::vector<double> d;  // row-major n x n_prime
    double at(int i, int j) const { return d[static_cast<size_t>(i) * n_prime + j]; }
};

inline TDErrorMatrix td_error_matrix(double r, double gamma, const std::vector<double>& z_next,
                                     const std::vector<double>& z_cur, bool done = false) {
    TDErrorMatrix m;
    m.n = static_cast<int>(z_cur.size());
    m.n_prime = static_cast<int>(z_next.size());
    m.d.resize(static_cast<size_t>(m.n) * m.n_prime);
    const double keep = done ? 0.0 : 1.0;
    for (int i = 0; i < m.n; ++i)
        for (int j = 0; j < m.n_prime; ++j)
            m.d[static_cast<size_t>(i) * m.n_prime + j] = r + gamma * z_next[j] * keep - z_cur[i];
    return m;
}

inline double huber(double u, double kappa) {
    const double au = std::abs(u);
    return au <= kappa ? 0.5 * u * u : kappa * (au - 0.5 * kappa);
}

// Asymmetric Huber-smoothed pinball loss.
inline double huber_quantile(double u, double tau, double kappa) {
    const double w = std::abs(tau - (u < 0.0 ? 1.0 : 0.0));
    return w * huber(u, kappa) / kappa;
}

// d(huber_quantile)/du
inline double huber_quantile_grad(double u, double tau, double kappa) {
    const double w = std::abs(tau - (u < 0.0 ? 1.0 : 0.0));
    return w * clamp(u, -kappa, kappa) / kappa;
}

struct Hyper {
    double gamma = 0.99;
    int n_tau = 8;        // online fraction samples
    int n_tau_prime = 8;  // target fraction samples
    double kappa = 1.0;
    int k_policy = 32;    // fraction samples per action selection
};

// One transition with pre-encoded network inputs.
struct EncodedTransition {
    std::vector<double> x, x_next;
    int action = 0;
    double reward = 0.0;
    bool done = false;
};

// Value-level loss core: loss = (1/N') sum_i sum_j rho_{tau_i}(delta_ij) and,
// optionally, d(loss)/d(z_cur). The target values are treated as constants.
inline double iqn_loss_core(const std::vector<double>& z_cur, const std::vector<double>& taus,
                            double reward, double gamma, const std::vector<double>& z_next,
                            bool done, double kappa, std::vector<double>* dz_cur = nullptr) {
    const TDErrorMatrix m = td_error_matrix(reward, gamma, z_next, z_cur, done);
    if (dz_cur) dz_cur->assign(z_cur.size(), 0.0);
    double loss = 0.0;
    const double inv_np = 1.0 / static_cast<double>(m.n_prime);
    for (int i = 0; i < m.n; ++i) {
        for (int j = 0; j < m.n_prime; ++j) {
            const double u = m.at(i, j);
            loss += huber_quantile(u, taus[i], kappa);
            if (dz_cur) (*dz_cur)[i] -= huber_quantile_grad(u, taus[i], kappa) * inv_np;
        }
    }
    return loss * inv_np;
}

namespace detail {

// Greedy action of the target network at x_next: argmax over the mean of the
// target quantiles, ties to the lowest index.
inline int target_action(const IqnNet& target, const std::vector<double>& x_next,
                         const std::vector<double>& tau_primes, std::vector<double>& z_scratch) {
    iqn_forward(target, x_next, tau_primes, z_scratch);
    const int A = target.cfg.n_actions;
    const int Np = static_cast<int>(tau_primes.size());
    int best = 0;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < A; ++a) {
        double s = 0.0;
        for (int j = 0; j < Np; ++j) s += z_scratch[static_cast<size_t>(j) * A + a];
        if (s > best_mean) {
            best_mean = s;
            best = a;
        }
    }
    return best;
}

}  // namespace detail

// Loss and gradient of one transition; accumulates scale * d(loss)/d(theta)
// into grad. tau and tau' are drawn i.i.d. uniform from rng (always N + N'
// draws, so RNG streams advance uniformly across done/non-done transitions).
inline double iqn_loss_backward(const IqnNet& net, const IqnNet& target,
                                const EncodedTransition& tr, const Hyper& hp, Rng& rng,
                                std::vector<double>& grad, double scale) {
    const int A = net.cfg.n_actions;
    thread_local std::vector<double> taus, tau_primes, z_cur_all, z_next_all, z_cur, z_next, dz_cur, dz_all;
    thread_local IqnTrace trace;

    taus.resize(hp.n_tau);
    for (double& t : taus) t = rng.uniform();
    tau_primes.resize(hp.n_tau_prime);
    for (double& t : tau_primes) t = rng.uniform();

    z_next.assign(hp.n_tau_prime, 0.0);
    if (!tr.done) {
        const int a_star = detail::target_action(target, tr.x_next, tau_primes, z_next_all);
        for (int j = 0; j < hp.n_tau_prime; ++j)
            z_next[j] = z_next_all[static_cast<size_t>(j) * A + a_star];
    }

    iqn_forward(net, tr.x, taus, z_cur_all, &trace);
    z_cur.resize(hp.n_tau);
    for (int i = 0; i < hp.n_tau; ++i)
        z_cur[i] = z_cur_all[static_cast<size_t>(i) * A + tr.action];

    const double loss =
        iqn_loss_core(z_cur, taus, tr.reward, hp.gamma, z_next, tr.done, hp.kappa, &dz_cur);

    dz_all.assign(static_cast<size_t>(hp.n_tau) * A, 0.0);
    for (int i = 0; i < hp.n_tau; ++i)
        dz_all[static_cast<size_t>(i) * A + tr.action] = dz_cur[i] * scale;
    iqn_backward(net, trace, dz_all, grad);
    return loss;
}

// Content hash of a transition; batch losses key their fraction draws off it
// so that duplicate transitions contribute identical terms.
inline std::uint64_t hash_transition(const EncodedTransition& tr) {
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, size_t n) {
        const auto* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    mix(tr.x.data(), tr.x.size() * sizeof(double));
    mix(tr.x_next.data(), tr.x_next.size() * sizeof(double));
    mix(&tr.action, sizeof(tr.action));
    mix(&tr.reward, sizeof(tr.reward));
    mix(&tr.done, sizeof(tr.done));
    return h;
}

// Mean loss over a batch; grad receives the mean gradient (grad is resized
// and zeroed here). Consumes exactly one draw from rng: per-transition
// fraction samples come from sub-streams keyed on (that draw, transition
// content), which makes the batch mean invariant under duplication and
// reordering of transitions.
inline double iqn_batch_grad(const IqnNet& net, const IqnNet& target,
                             const std::vector<const EncodedTransition*>& batch,
                             const Hyper& hp, Rng& rng, std::vector<double>& grad) {
    net.check_finite();
    grad.assign(net.dim, 0.0);
    const std::uint64_t batch_seed = rng.next_u64();
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto* tr : batch) {
        Rng tr_rng(batch_seed, hash_transition(*tr));
        loss += iqn_loss_backward(net, target, *tr, hp, tr_rng, grad, scale);
    }
    return loss * scale;
}

// ---- Scalar DQN loss (Huber of the TD error, kappa = 1) ----

inline double dqn_loss_backward(const QNet& net, const QNet& target, const EncodedTransition& tr,
                                double gamma, std::vector<double>& grad, double scale) {
    thread_local std::vector<double> q, q_next, dq;
    thread_local QTrace trace;

    double target_value = tr.reward;
    if (!tr.done) {
        q_forward(target, tr.x_next, q_next);
        double best = q_next[0];
        for (double v : q_next) best = std::max(best, v);
        target_value += gamma * best;
    }
    q_forward(net, tr.x, q, &trace);
    const double delta = target_value - q[tr.action];
    const double loss = huber(delta, 1.0);

    dq.assign(net.cfg.n_actions, 0.0);
    dq[tr.action] = -clamp(delta, -1.0, 1.0) * scale;
    q_backward(net, trace, dq, grad);
    return loss;
}

inline double dqn_batch_grad(const QNet& net, const QNet& target,
                             const std::vector<const EncodedTransition*>& batch, double gamma,
                             std::vector<double>& grad) {
    net.check_finite();
    grad.assign(net.dim, 0.0);
    const double scale = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto* tr : batch) loss += dqn_loss_backward(net, target, *tr, gamma, grad, scale);
    return loss * scale;
}

// ---- Action selection ----

// K-sample distorted policy: draw tau ~ U[0,1], distort, average the quantile
// values per action and take the argmax, ties to the lowest index.
inline int select_action(const IqnNet& net, const std::vector<double>& x, int k,
                         const DistortionSpec& spec, Rng& rng) {
    thread_local std::vector<double> taus, z;
    taus.resize(k);
    for (double& t : taus) t = distort(rng.uniform(), spec);
    iqn_forward(net, x, taus, z);
    const int A = net.cfg.n_actions;
    int best = 0;
    double best_mean = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < A; ++a) {
        double s = 0.0;
        for (int t = 0; t < k; ++t) s += z[static_cast<size_t>(t) * A + a];
        if (s > best_mean) {
            best_mean = s;
            best = a;
        }
    }
    return best;
}

inline int select_action_dqn(const QNet& net, const std::vector<double>& x) {
    thread_local std::vector<double> q;
    q_forward(net, x, q);
    int best = 0;
    for (int a = 1; a < net.cfg.n_actions; ++a)
        if (q[a] > q[best]) best = a;
    return best;
}

// Hard copy of the online parameters into the target network.
template <typename Net>
inline void sync_target(const Net& net, Net& target) {
    target.theta = net.theta;
}

}  // namespace driqn
