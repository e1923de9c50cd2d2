#pragma once

// Optimizer state for the training loop. The robust agents feed the update
// direction (mean gradient with the output-layer slice replaced by the
// negated substituted direction) through the same moment estimates a plain
// gradient would take, so the one-subgroup case stays bit-identical to
// ordinary training.

#include <cmath>
#include <cstdint>
#include <vector>

namespace driqn {

struct AdamState {
    std::vector<double> m, v;
    std::uint64_t t = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    void init(size_t dim) {
        m.assign(dim, 0.0);
        v.assign(dim, 0.0);
        t = 0;
    }

    // theta -= lr_i * mhat / (sqrt(vhat) + eps), with lr_head on the
    // output-layer slice and lr_rest elsewhere.
    void step(std::vector<double>& theta, const std::vector<double>& grad, size_t head_offset,
              size_t head_size, double lr_head, double lr_rest) {
        ++t;
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        for (size_t i = 0; i < theta.size(); ++i) {
            const double g = grad[i];
            m[i] = beta1 * m[i] + (1.0 - beta1) * g;
            v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            const double lr = (i >= head_offset && i < head_offset + head_size) ? lr_head : lr_rest;
            theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
        }
    }
};

}  // namespace driqn
