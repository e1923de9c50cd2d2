#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "driqn/noise.hpp"

using namespace driqn;

namespace {

const WorldConfig wcfg;
const ComponentRanges ranges = ComponentRanges::from_world(wcfg);
const NoiseParams np;

Observation mid_obs(int beams = 64) {
    Observation o;
    o.velocity = {0.4, -0.2};
    o.goal_rel = {10.0, -5.0};
    o.lidar.assign(beams, 0.5);
    return o;
}

bool same_obs(const Observation& a, const Observation& b) {
    if (!(a.velocity == b.velocity) || !(a.goal_rel == b.goal_rel)) return false;
    return a.lidar == b.lidar;
}

}  // namespace

TEST_CASE("subgroup assignment") {
    SUBCASE("singleton catalog always wins") {
        NoiseCatalog cat{{NoiseKind::Gaussian, 0.4, 0}};
        Rng rng(1);
        for (int i = 0; i < 20; ++i) CHECK(assign_subgroup(rng, cat).subgroup_id == 0);
    }
    SUBCASE("two-entry catalog is a fair draw") {
        NoiseCatalog cat{{NoiseKind::Gaussian, 0.6, 0}, {NoiseKind::Poisson, 0.6, 1}};
        Rng rng(2);
        int count0 = 0;
        const int n = 10000;
        for (int i = 0; i < n; ++i)
            if (assign_subgroup(rng, cat).subgroup_id == 0) ++count0;
        CHECK(std::abs(count0 / static_cast<double>(n) - 0.5) < 0.02);
    }
    SUBCASE("same episode seed, same assignment") {
        NoiseCatalog cat{{NoiseKind::Gaussian, 0.6, 0}, {NoiseKind::Poisson, 0.6, 1}};
        Rng a(77), b(77);
        for (int i = 0; i < 10; ++i)
            CHECK(assign_subgroup(a, cat).subgroup_id == assign_subgroup(b, cat).subgroup_id);
    }
    SUBCASE("empty catalog is a configuration error") {
        Rng rng(3);
        CHECK_THROWS_AS(assign_subgroup(rng, {}), ConfigError);
    }
}

TEST_CASE("perturb identity cases") {
    const auto obs = mid_obs();
    Rng rng(5);
    SUBCASE("kind none") {
        const auto out = perturb(obs, {NoiseKind::None, 0.6, 0}, ranges, np, rng);
        CHECK(same_obs(out, obs));
    }
    SUBCASE("zero intensity collapses every kind to the identity") {
        for (auto kind : {NoiseKind::Gaussian, NoiseKind::Poisson, NoiseKind::SaltPepper,
                          NoiseKind::Occlusion}) {
            const auto out = perturb(obs, {kind, 0.0, 0}, ranges, np, rng);
            CHECK(same_obs(out, obs));
        }
    }
}

TEST_CASE("salt and pepper at probability one pins every component to an extreme") {
    const auto obs = mid_obs();
    Rng rng(6);
    // intensity * pepper0 = 1 requires intensity 5; the op clamps p at 1.
    const auto out = perturb(obs, {NoiseKind::SaltPepper, 5.0, 0}, ranges, np, rng);
    for (double v : {out.velocity.x, out.velocity.y})
        CHECK((v == ranges.velocity_abs || v == -ranges.velocity_abs));
    for (double v : {out.goal_rel.x, out.goal_rel.y})
        CHECK((v == ranges.goal_rel_abs || v == -ranges.goal_rel_abs));
    for (double r : out.lidar) CHECK((r == 0.0 || r == 1.0));
}

TEST_CASE("gaussian noise moment check on a mid-range component") {
    const auto obs = mid_obs();
    const NoiseSpec spec{NoiseKind::Gaussian, 0.6, 0};
    Rng rng(7);
    const int n = 100000;
    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto out = perturb(obs, spec, ranges, np, rng);
        sum += out.lidar[0];
        sum_sq += out.lidar[0] * out.lidar[0];
    }
    const double mean = sum / n;
    const double stddev = std::sqrt(sum_sq / n - mean * mean);
    const double expect = 0.6 * 0.5 * 0.5;  // intensity * |R|/2 * sigma0 on [0,1]
    CHECK(std::abs(stddev - expect) / expect < 0.03);
}

TEST_CASE("shot noise preserves the mean on the unit scale") {
    const auto obs = mid_obs();
    const NoiseSpec spec{NoiseKind::Poisson, 0.6, 0};
    Rng rng(8);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        const auto out = perturb(obs, spec, ranges, np, rng);
        sum += out.lidar[0];
    }
    CHECK(std::abs(sum / n - 0.5) / 0.5 < 0.02);
}

TEST_CASE("occlusion blanks one contiguous arc and nothing else") {
    auto obs = mid_obs();
    obs.lidar.assign(64, 0.37);
    const NoiseSpec spec{NoiseKind::Occlusion, 0.6, 0};
    Rng rng(9);
    const auto out = perturb(obs, spec, ranges, np, rng);
    CHECK(out.velocity == obs.velocity);
    CHECK(out.goal_rel == obs.goal_rel);
    const int expected_arc = static_cast<int>(std::ceil(0.6 * 64 / 2.0));  // 20 beams
    int blanked = 0;
    for (double r : out.lidar) {
        CHECK((r == 1.0 || r == 0.37));
        if (r == 1.0) ++blanked;
    }
    CHECK(blanked == expected_arc);
    // contiguity modulo wrap-around: count 0.37 -> 1.0 edges
    int edges = 0;
    for (int k = 0; k < 64; ++k)
        if (out.lidar[k] != 1.0 && out.lidar[(k + 1) % 64] == 1.0) ++edges;
    CHECK(edges == 1);
}

TEST_CASE("perturbed observations stay within component ranges") {
    Rng rng(10);
    for (int trial = 0; trial < 200; ++trial) {
        Observation obs;
        obs.velocity = {rng.uniform(-3.5, 3.5), rng.uniform(-3.5, 3.5)};
        obs.goal_rel = {rng.uniform(-30.0, 30.0), rng.uniform(-30.0, 30.0)};
        obs.lidar.resize(64);
        for (double& r : obs.lidar) r = rng.uniform();
        const NoiseKind kinds[] = {NoiseKind::Gaussian, NoiseKind::Poisson, NoiseKind::SaltPepper,
                                   NoiseKind::Occlusion};
        const NoiseSpec spec{kinds[trial % 4], 0.2 * (1 + trial % 3), 0};
        const auto out = perturb(obs, spec, ranges, np, rng);
        CHECK(std::abs(out.velocity.x) <= ranges.velocity_abs);
        CHECK(std::abs(out.velocity.y) <= ranges.velocity_abs);
        CHECK(std::abs(out.goal_rel.x) <= ranges.goal_rel_abs);
        CHECK(std::abs(out.goal_rel.y) <= ranges.goal_rel_abs);
        for (double r : out.lidar) {
            CHECK(r >= 0.0);
            CHECK(r <= 1.0);
        }
    }
}

TEST_CASE("noise kind name round trip") {
    for (auto kind : {NoiseKind::None, NoiseKind::Gaussian, NoiseKind::Poisson,
                      NoiseKind::SaltPepper, NoiseKind::Occlusion})
        CHECK(noise_kind_from_string(to_string(kind)) == kind);
    CHECK_THROWS_AS(noise_kind_from_string("fog"), ConfigError);
}
