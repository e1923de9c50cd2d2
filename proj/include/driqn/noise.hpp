#pragma once

// Per-episode observation perturbation drawn from a fixed catalog of noise
// kinds; every transition of an episode carries the same subgroup identity.

#include <string>
#include <vector>

#include "driqn/common.hpp"
#include "driqn/rng.hpp"
#include "driqn/world.hpp"

namespace driqn {

enum class NoiseKind { None, Gaussian, Poisson, SaltPepper, Occlusion };

inline const char* to_string(NoiseKind k) {
    switch (k) {
        case NoiseKind::None: return "none";
        case NoiseKind::Gaussian: return "gaussian";
        case NoiseKind::Poisson: return "poisson";
        case NoiseKind::SaltPepper: return "saltpepper";
        case NoiseKind::Occlusion: return "occlusion";
    }
    return "?";
}

inline NoiseKind noise_kind_from_string(const std::string& s) {
    if (s == "none") return NoiseKind::None;
    if (s == "gaussian") return NoiseKind::Gaussian;
    if (s == "poisson") return NoiseKind::Poisson;
    if (s == "saltpepper") return NoiseKind::SaltPepper;
    if (s == "occlusion") return NoiseKind::Occlusion;
    throw ConfigError("unknown noise kind: " + s);
}

struct NoiseSpec {
    NoiseKind kind = NoiseKind::None;
    double intensity = 0.0;
    int subgroup_id = 0;
};

using NoiseCatalog = std::vector<NoiseSpec>;

// Calibration constants for the noise families.
struct NoiseParams {
    double sigma0 = 0.5;  // Gaussian: sigma = intensity * |R|/2 * sigma0
    double shot0 = 0.25;  // Poisson: scale s = intensity * shot0
    double pepper0 = 0.2; // SaltPepper: flip probability p = intensity * pepper0
};

// Per-component value ranges used for noise scaling and clamping. Ranges are
// stated by their half-width; the range LENGTH drives the noise scales (the
// lidar range [0,1] has length 1). goal_rel's range length is the bounds
// diagonal, so its half-width is diagonal/2.
struct ComponentRanges {
    double velocity_abs = 3.5;    // v_max + flow_max
    double goal_rel_abs = 35.355; // bounds diagonal / 2

    static ComponentRanges from_world(const WorldConfig& w) {
        return ComponentRanges{w.v_max + w.flow_max, w.bounds_diagonal() / 2.0};
    }
};

// Uniform draw over the catalog, fixed for the whole episode.
inline NoiseSpec assign_subgroup(Rng& episode_rng, const NoiseCatalog& catalog) {
    if (catalog.empty()) throw ConfigError("noise catalog is empty");
    return catalog[episode_rng.uniform_int(catalog.size())];
}

namespace detail {

// One scalar component with range [lo, hi].
inline double perturb_component(double v, double lo, double hi, const NoiseSpec& spec,
                                const NoiseParams& np, Rng& rng) {
    const double width = hi - lo;
    switch (spec.kind) {
        case NoiseKind::Gaussian: {
            const double sigma = spec.intensity * (width / 2.0) * np.sigma0;
            return clamp(v + rng.normal(0.0, sigma), lo, hi);
        }
        case NoiseKind::Poisson: {
            const double s = spec.intensity * np.shot0;
            const double u = (v - lo) / width;  // unit scale
            const double out = s * static_cast<double>(rng.poisson(u / s));
            return clamp(lo + out * width, lo, hi);
        }
        case NoiseKind::SaltPepper: {
            const double p = std::min(1.0, spec.intensity * np.pepper0);
            if (rng.uniform() < p) return rng.coin() ? hi : lo;
            return v;
        }
        default:
            return v;
    }
}

}  // namespace detail

// Applies the episode's noise to one observation. Component draw order is
// fixed (velocity, goal_rel, lidar) so streams replay deterministically.
// Occlusion blanks a contiguous LiDAR arc only; the other kinds act on every
// component independently. Zero intensity is the identity for every kind.
inline Observation perturb(const Observation& obs, const NoiseSpec& spec,
                           const ComponentRanges& ranges, const NoiseParams& np, Rng& rng) {
    if (spec.kind == NoiseKind::None || spec.intensity == 0.0) return obs;

    Observation out = obs;
    if (spec.kind == NoiseKind::Occlusion) {
        const int b = static_cast<int>(out.lidar.size());
        const int arc = static_cast<int>(std::ceil(spec.intensity * b / 2.0));
        const int start = static_cast<int>(rng.uniform_int(b));
        for (int i = 0; i < arc; ++i) out.lidar[(start + i) % b] = 1.0;
        return out;
    }

    const double va = ranges.velocity_abs, ga = ranges.goal_rel_abs;
    out.velocity.x = detail::perturb_component(out.velocity.x, -va, va, spec, np, rng);
    out.velocity.y = detail::perturb_component(out.velocity.y, -va, va, spec, np, rng);
    out.goal_rel.x = detail::perturb_component(out.goal_rel.x, -ga, ga, spec, np, rng);
    out.goal_rel.y = detail::perturb_component(out.goal_rel.y, -ga, ga, spec, np, rng);
    for (double& r : out.lidar) r = detail::perturb_component(r, 0.0, 1.0, spec, np, rng);
    return out;
}

}  // namespace driqn
