#pragma once

// Test-only oracles, independent of the solver implementations they check:
//  - exhaustive barycentric-grid minimization of the dual objective,
//  - exact face-enumeration QP solving for small J,
//  - simplex-constrained least-squares membership by support enumeration.

#include <cmath>
#include <limits>
#include <vector>

namespace oracle {

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

inline std::vector<double> gram(const std::vector<double>& g_rows, int j, size_t dim) {
    std::vector<double> q(static_cast<size_t>(j) * j, 0.0);
    for (int a = 0; a < j; ++a)
        for (int b = 0; b < j; ++b) {
            double s = 0.0;
            for (size_t i = 0; i < dim; ++i)
                s += g_rows[static_cast<size_t>(a) * dim + i] * g_rows[static_cast<size_t>(b) * dim + i];
            q[static_cast<size_t>(a) * j + b] = s;
        }
    return q;
}

namespace detail {

// Minimum of the dual objective along the grid line lam0 + t*d, t = 0..len
// (integer steps). The restriction is convex quadratic, so the grid minimum
// is attained at an endpoint or next to the vertex.
inline double line_min(const std::vector<double>& q, const std::vector<double>& f,
                       const std::vector<double>& lam0, const std::vector<double>& d, long len) {
    const int j = static_cast<int>(f.size());
    std::vector<double> qd(j, 0.0), qlam(j, 0.0);
    for (int a = 0; a < j; ++a)
        for (int b = 0; b < j; ++b) {
            qd[a] += q[static_cast<size_t>(a) * j + b] * d[b];
            qlam[a] += q[static_cast<size_t>(a) * j + b] * lam0[b];
        }
    double dqd = 0.0, b_lin = 0.0;
    for (int a = 0; a < j; ++a) {
        dqd += d[a] * qd[a];
        b_lin += d[a] * (qlam[a] - f[a]);
    }
    std::vector<long> candidates{0, len};
    if (dqd > 0.0) {
        const double t_star = -b_lin / dqd;
        const long lo = static_cast<long>(std::floor(t_star));
        candidates.push_back(std::min(std::max(lo, 0l), len));
        candidates.push_back(std::min(std::max(lo + 1, 0l), len));
    }
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> lam(j);
    for (long t : candidates) {
        for (int a = 0; a < j; ++a) lam[a] = lam0[a] + t * d[a];
        best = std::min(best, dual_objective(q, f, lam));
    }
    return best;
}

}  // namespace detail

// Exhaustive minimum of (1/2) lam' Q lam - f' lam over the barycentric grid
// with resolution steps per unit (grid step 1/steps), J in 1..4. Every grid
// point is covered: the innermost coordinate pair is scanned in closed form.
inline double grid_min_dual(const std::vector<double>& q, const std::vector<double>& f,
                            long steps) {
    const int j = static_cast<int>(f.size());
    const double h = 1.0 / static_cast<double>(steps);
    if (j == 1) return dual_objective(q, f, {1.0});
    double best = std::numeric_limits<double>::infinity();
    if (j == 2) {
        return detail::line_min(q, f, {1.0, 0.0}, {-h, h}, steps);
    }
    if (j == 3) {
        for (long i1 = 0; i1 <= steps; ++i1) {
            const std::vector<double> lam0{i1 * h, (steps - i1) * h, 0.0};
            best = std::min(best, detail::line_min(q, f, lam0, {0.0, -h, h}, steps - i1));
        }
        return best;
    }
    if (j == 4) {
        for (long i1 = 0; i1 <= steps; ++i1)
            for (long i2 = 0; i2 <= steps - i1; ++i2) {
                const std::vector<double> lam0{i1 * h, i2 * h, (steps - i1 - i2) * h, 0.0};
                best = std::min(best, detail::line_min(q, f, lam0, {0.0, 0.0, -h, h},
                                                       steps - i1 - i2));
            }
        return best;
    }
    return best;
}

// Plain brute-force enumeration (small J / coarse grids only); cross-checks
// the closed-form line scan above.
inline double grid_min_dual_bruteforce(const std::vector<double>& q, const std::vector<double>& f,
                                       long steps) {
    const int j = static_cast<int>(f.size());
    const double h = 1.0 / static_cast<double>(steps);
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> lam(j);
    if (j == 2) {
        for (long i = 0; i <= steps; ++i) {
            lam = {i * h, (steps - i) * h};
            best = std::min(best, dual_objective(q, f, lam));
        }
    } else if (j == 3) {
        for (long i1 = 0; i1 <= steps; ++i1)
            for (long i2 = 0; i2 <= steps - i1; ++i2) {
                lam = {i1 * h, i2 * h, (steps - i1 - i2) * h};
                best = std::min(best, dual_objective(q, f, lam));
            }
    }
    return best;
}

namespace detail {

// Gaussian elimination with partial pivoting; returns false when singular.
inline bool solve_linear(std::vector<double> a, std::vector<double> rhs, int n,
                         std::vector<double>& out) {
    for (int col = 0; col < n; ++col) {
        int pivot = col;
        for (int r = col + 1; r < n; ++r)
            if (std::abs(a[static_cast<size_t>(r) * n + col]) >
                std::abs(a[static_cast<size_t>(pivot) * n + col]))
                pivot = r;
        if (std::abs(a[static_cast<size_t>(pivot) * n + col]) < 1e-12) return false;
        if (pivot != col) {
            for (int c = 0; c < n; ++c)
                std::swap(a[static_cast<size_t>(pivot) * n + c], a[static_cast<size_t>(col) * n + c]);
            std::swap(rhs[pivot], rhs[col]);
        }
        for (int r = col + 1; r < n; ++r) {
            const double m = a[static_cast<size_t>(r) * n + col] / a[static_cast<size_t>(col) * n + col];
            for (int c = col; c < n; ++c)
                a[static_cast<size_t>(r) * n + c] -= m * a[static_cast<size_t>(col) * n + c];
            rhs[r] -= m * rhs[col];
        }
    }
    out.assign(n, 0.0);
    for (int r = n - 1; r >= 0; --r) {
        double s = rhs[r];
        for (int c = r + 1; c < n; ++c) s -= a[static_cast<size_t>(r) * n + c] * out[c];
        out[r] = s / a[static_cast<size_t>(r) * n + r];
    }
    return true;
}

}  // namespace detail

// Exact minimizer of (1/2) mu' Q mu - b' mu over the simplex by enumerating
// every face and solving the equality-constrained KKT system on it.
inline std::vector<double> face_enum_qp(const std::vector<double>& q, const std::vector<double>& b) {
    const int j = static_cast<int>(b.size());
    double best = std::numeric_limits<double>::infinity();
    std::vector<double> best_mu(j, 0.0);
    best_mu[0] = 1.0;
    for (unsigned mask = 1; mask < (1u << j); ++mask) {
        std::vector<int> support;
        for (int i = 0; i < j; ++i)
            if (mask & (1u << i)) support.push_back(i);
        const int s = static_cast<int>(support.size());
        // KKT: [Q_SS 1; 1' 0] [mu; nu] = [b_S; 1]
        const int n = s + 1;
        std::vector<double> a(static_cast<size_t>(n) * n, 0.0), rhs(n, 0.0), sol;
        for (int r = 0; r < s; ++r) {
            for (int c = 0; c < s; ++c)
                a[static_cast<size_t>(r) * n + c] =
                    q[static_cast<size_t>(support[r]) * j + support[c]];
            a[static_cast<size_t>(r) * n + s] = 1.0;
            rhs[r] = b[support[r]];
        }
        for (int c = 0; c < s; ++c) a[static_cast<size_t>(s) * n + c] = 1.0;
        rhs[s] = 1.0;
        if (!detail::solve_linear(a, rhs, n, sol)) continue;
        bool feasible = true;
        for (int r = 0; r < s; ++r)
            if (sol[r] < -1e-12) feasible = false;
        if (!feasible) continue;
        std::vector<double> mu(j, 0.0);
        for (int r = 0; r < s; ++r) mu[support[r]] = std::max(0.0, sol[r]);
        const double obj = 0.5 * [&] {
            double acc = 0.0;
            for (int x = 0; x < j; ++x)
                for (int y = 0; y < j; ++y) acc += mu[x] * q[static_cast<size_t>(x) * j + y] * mu[y];
            return acc;
        }() - [&] {
            double acc = 0.0;
            for (int x = 0; x < j; ++x) acc += b[x] * mu[x];
            return acc;
        }();
        if (obj < best) {
            best = obj;
            best_mu = mu;
        }
    }
    return best_mu;
}

// Least-squares membership: distance from y to { G' mu : mu in simplex }.
// Reduces to a simplex QP with Q = G G' and linear term G y.
inline double simplex_ls_residual(const std::vector<double>& g_rows, int j, size_t dim,
                                  const std::vector<double>& y) {
    const auto q = gram(g_rows, j, dim);
    std::vector<double> b(j, 0.0);
    for (int a = 0; a < j; ++a)
        for (size_t i = 0; i < dim; ++i) b[a] += g_rows[static_cast<size_t>(a) * dim + i] * y[i];
    const auto mu = face_enum_qp(q, b);
    double resid = 0.0;
    for (size_t i = 0; i < dim; ++i) {
        double v = -y[i];
        for (int a = 0; a < j; ++a) v += mu[a] * g_rows[static_cast<size_t>(a) * dim + i];
        resid += v * v;
    }
    return std::sqrt(resid);
}

}  // namespace oracle
