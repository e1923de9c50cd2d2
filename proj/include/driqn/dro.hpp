#pragma once

// Worst-case-aware update machinery: per-subgroup loss/gradient aggregation,
// the dual quadratic program over the probability simplex, and substitution of
// the resulting descent direction into the network update.

#include <algorithm>
#include <numeric>
#include <vector>

#include "driqn/common.hpp"
#include "driqn/distrl.hpp"

namespace driqn {

enum class SubstitutionMode { LastLayer, WholeNetwork };

// Subgroup mean losses f in R^J and the gradient matrix G in R^{J x ds},
// where row j is the gradient of f_j restricted to the substitution slice.
// mean_full_grad is the uniform mean of the full-parameter subgroup gradients
// (what the non-substituted layers train on).
struct SubgroupGradients {
    int j_count = 0;
    size_t slice_dim = 0;
    std::vector<double> f;               // J
    std::vector<double> g;               // J x slice_dim, row-major
    std::vector<double> mean_full_grad;  // full parameter dimension
    std::vector<double> full_rows;       // J x full dimension (for weighted variants)
    std::vector<int> subgroup_ids;       // which catalog entries contributed

    const double* row(int j) const { return g.data() + static_cast<size_t>(j) * slice_dim; }

    std::vector<double> weighted_full_grad(const std::vector<double>& lambda) const {
        const size_t d = mean_full_grad.size();
        std::vector<double> out(d, 0.0);
        for (int j = 0; j < j_count; ++j)
            for (size_t i = 0; i < d; ++i)
                out[i] += lambda[j] * full_rows[static_cast<size_t>(j) * d + i];
        return out;
    }
};

struct SubgroupBatch {
    int subgroup_id = 0;
    std::vector<const EncodedTransition*> transitions;
};

// Mean loss and gradient per subgroup batch. Batches must be subgroup-pure and
// non-empty (callers drop inactive subgroups and shrink J before this point).
// grad_clip > 0 caps each per-subgroup full gradient at that L2 norm.
inline SubgroupGradients subgroup_stats(const std::vector<SubgroupBatch>& batches,
                                        const IqnNet& net, const IqnNet& target,
                                        const Hyper& hp, SubstitutionMode mode, Rng& rng,
                                        double grad_clip = 0.0) {
    if (batches.empty()) throw std::invalid_argument("subgroup_stats: no batches");
    SubgroupGradients sg;
    sg.j_count = static_cast<int>(batches.size());
    const size_t slice_off = mode == SubstitutionMode::LastLayer ? net.head_offset() : 0;
    sg.slice_dim = mode == SubstitutionMode::LastLayer ? net.head_size() : net.dim;
    sg.f.resize(sg.j_count);
    sg.g.resize(sg.j_count * sg.slice_dim);
    sg.mean_full_grad.assign(net.dim, 0.0);
    sg.full_rows.resize(static_cast<size_t>(sg.j_count) * net.dim);

    std::vector<double> grad;
    const double inv_j = 1.0 / static_cast<double>(sg.j_count);
    for (int j = 0; j < sg.j_count; ++j) {
        const auto& batch = batches[j];
        if (batch.transitions.empty())
            throw std::invalid_argument("subgroup_stats: empty subgroup batch");
        sg.subgroup_ids.push_back(batch.subgroup_id);
        sg.f[j] = iqn_batch_grad(net, target, batch.transitions, hp, rng, grad);
        clip_norm_inplace(grad, grad_clip);
        for (size_t i = 0; i < sg.slice_dim; ++i)
            sg.g[static_cast<size_t>(j) * sg.slice_dim + i] = grad[slice_off + i];
        for (size_t i = 0; i < net.dim; ++i) {
            sg.mean_full_grad[i] += grad[i] * inv_j;
            sg.full_rows[static_cast<size_t>(j) * net.dim + i] = grad[i];
        }
    }
    return sg;
}

// Euclidean projection onto the probability simplex (sort-and-threshold).
inline std::vector<double> project_simplex(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) throw std::invalid_argument("project_simplex: non-finite input");
    const int n = static_cast<int>(v.size());
    std::vector<double> u(v);
    std::sort(u.begin(), u.end(), std::greater<double>());
    double css = 0.0, theta = 0.0;
    for (int k = 0; k < n; ++k) {
        css += u[k];
        const double t = (css - 1.0) / (k + 1);
        if (u[k] - t > 0.0) theta = t;
    }
    std::vector<double> out(n);
    for (int i = 0; i < n; ++i) out[i] = std::max(0.0, v[i] - theta);
    return out;
}

struct DualQpResult {
    std::vector<double> lambda;
    double objective = 0.0;
    bool converged = false;
    int iterations = 0;
};

namespace detail {

inline double dual_objective(const std::vector<double>& q, const std::vector<double>& f,
                             const std::vector<double>& lam) {
    const int j = static_cast<int>(f.size());
    double quad = 0.0, lin = 0.0;
    for (int a = 0; a < j; ++a) {
        double qa = 0.0;
        for (int b = 0; b < j; ++b) qa += q[static_cast<size_t>(a) * j + b] * lam[b];
        quad += lam[a] * qa;
        lin += lam[a] * f[a];
    }
    return 0.5 * quad - lin;
}

}  // namespace detail

// Dual of the regularized min-max program: min over the simplex of
// (1/2) lambda' G G' lambda - lambda' f. Projected gradient from the uniform
// point with step 1/(||GG'||_F + eps); stops when the objective decrease
// drops below tol. Returns the best iterate with a convergence flag.
inline DualQpResult solve_dual_qp(const std::vector<double>& g_rows, const std::vector<double>& f,
                                  size_t slice_dim, double tol = 1e-12, int max_iter = 1000) {
    const int j = static_cast<int>(f.size());
    if (j <= 0) throw std::invalid_argument("solve_dual_qp: J must be >= 1");
    for (double x : f)
        if (!std::isfinite(x)) throw NumericalFault("solve_dual_qp: non-finite loss vector");
    for (double x : g_rows)
        if (!std::isfinite(x)) throw NumericalFault("solve_dual_qp: non-finite gradient matrix");

    DualQpResult res;
    if (j == 1) {
        res.lambda = {1.0};
        double q00 = 0.0;
        for (size_t i = 0; i < slice_dim; ++i) q00 += g_rows[i] * g_rows[i];
        res.objective = 0.5 * q00 - f[0];
        res.converged = true;
        return res;
    }

    // Q = G G^T
    std::vector<double> q(static_cast<size_t>(j) * j);
    for (int a = 0; a < j; ++a)
        for (int b = a; b < j; ++b) {
            double s = 0.0;
            const double* ra = g_rows.data() + static_cast<size_t>(a) * slice_dim;
            const double* rb = g_rows.data() + static_cast<size_t>(b) * slice_dim;
            for (size_t i = 0; i < slice_dim; ++i) s += ra[i] * rb[i];
            q[static_cast<size_t>(a) * j + b] = s;
            q[static_cast<size_t>(b) * j + a] = s;
        }

    double q_fro = 0.0;
    for (double x : q) q_fro += x * x;
    const double step = 1.0 / (std::sqrt(q_fro) + 1e-12);

    std::vector<double> lam(j, 1.0 / j), trial(j), grad_l(j);
    double obj = detail::dual_objective(q, f, lam);
    res.lambda = lam;
    res.objective = obj;
    for (int it = 0; it < max_iter; ++it) {
        for (int a = 0; a < j; ++a) {
            double s = -f[a];
            for (int b = 0; b < j; ++b) s += q[static_cast<size_t>(a) * j + b] * lam[b];
            grad_l[a] = s;
        }
        for (int a = 0; a < j; ++a) trial[a] = lam[a] - step * grad_l[a];
        lam = project_simplex(trial);
        const double next = detail::dual_objective(q, f, lam);
        res.iterations = it + 1;
        if (next < res.objective) {
            res.objective = next;
            res.lambda = lam;
        }
        if (obj - next < tol) {
            res.converged = true;
            break;
        }
        obj = next;
    }
    return res;
}

inline DualQpResult solve_dual_qp(const SubgroupGradients& sg, double tol = 1e-12,
                                  int max_iter = 1000) {
    return solve_dual_qp(sg.g, sg.f, sg.slice_dim, tol, max_iter);
}

// delta = -G^T lambda: the negated convex combination of subgroup gradients.
inline std::vector<double> descent_direction(const SubgroupGradients& sg,
                                             const std::vector<double>& lambda) {
    std::vector<double> delta(sg.slice_dim, 0.0);
    for (int j = 0; j < sg.j_count; ++j) {
        const double l = lambda[j];
        const double* row = sg.row(j);
        for (size_t i = 0; i < sg.slice_dim; ++i) delta[i] += row[i] * l;
    }
    for (double& d : delta) d = -d;
    return delta;
}

namespace detail {

inline double slice_norm(const std::vector<double>& v, size_t off, size_t len) {
    double s = 0.0;
    for (size_t i = off; i < off + len; ++i) s += v[i] * v[i];
    return std::sqrt(s);
}

}  // namespace detail

// delta rescaled so its norm never exceeds shrink_cap times the norm of the
// mean gradient restricted to the substitution slice (cap <= 0 disables).
inline std::vector<double> capped_direction(const std::vector<double>& delta,
                                            const std::vector<double>& g_all, size_t head_offset,
                                            size_t head_size, SubstitutionMode mode,
                                            double shrink_cap) {
    std::vector<double> out = delta;
    if (shrink_cap <= 0.0) return out;
    const size_t off = mode == SubstitutionMode::LastLayer ? head_offset : 0;
    const size_t len = mode == SubstitutionMode::LastLayer ? head_size : g_all.size();
    const double dn = norm2(out);
    const double gn = detail::slice_norm(g_all, off, len);
    if (dn > shrink_cap * gn && dn > 0.0) {
        const double s = shrink_cap * gn / dn;
        for (double& d : out) d *= s;
    }
    return out;
}

// Applies the substituted update. LastLayer: the output-layer slice moves
// along delta (rescaled so its norm never exceeds shrink_cap times the norm
// of the mean gradient on the same slice) while every other layer takes a
// plain descent step on the mean gradient. WholeNetwork: the entire
// parameter vector moves along delta.
inline void substitute_and_update(std::vector<double>& theta, const std::vector<double>& g_all,
                                  const std::vector<double>& delta, size_t head_offset,
                                  size_t head_size, SubstitutionMode mode, double lr_head,
                                  double lr_rest, double shrink_cap) {
    const size_t slice_off = mode == SubstitutionMode::LastLayer ? head_offset : 0;
    const size_t slice_len = mode == SubstitutionMode::LastLayer ? head_size : theta.size();
    if (delta.size() != slice_len)
        throw std::invalid_argument("substitute_and_update: direction/slice dimension mismatch");

    double scale = 1.0;
    if (shrink_cap > 0.0) {
        const double dn = norm2(delta);
        const double gn = detail::slice_norm(g_all, slice_off, slice_len);
        if (dn > shrink_cap * gn && dn > 0.0) scale = shrink_cap * gn / dn;
    }

    if (mode == SubstitutionMode::WholeNetwork) {
        if (scale == 1.0)
            for (size_t i = 0; i < theta.size(); ++i) theta[i] += lr_head * delta[i];
        else
            for (size_t i = 0; i < theta.size(); ++i) theta[i] += lr_head * (scale * delta[i]);
        return;
    }
    for (size_t i = 0; i < head_offset; ++i) theta[i] -= lr_rest * g_all[i];
    if (scale == 1.0)
        for (size_t i = 0; i < head_size; ++i) theta[head_offset + i] += lr_head * delta[i];
    else
        for (size_t i = 0; i < head_size; ++i) theta[head_offset + i] += lr_head * (scale * delta[i]);
    for (size_t i = head_offset + head_size; i < theta.size(); ++i) theta[i] -= lr_rest * g_all[i];
}

// Plain descent step with a separate learning rate on the output-layer slice.
inline void apply_sgd(std::vector<double>& theta, const std::vector<double>& g, size_t head_offset,
                      size_t head_size, double lr_head, double lr_rest) {
    for (size_t i = 0; i < head_offset; ++i) theta[i] -= lr_rest * g[i];
    for (size_t i = 0; i < head_size; ++i) theta[head_offset + i] -= lr_head * g[head_offset + i];
    for (size_t i = head_offset + head_size; i < theta.size(); ++i) theta[i] -= lr_rest * g[i];
}

}  // namespace driqn
