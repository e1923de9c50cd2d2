#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>

namespace driqn {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

// Deterministic random stream. All sampling goes through explicit methods on
// top of the raw engine so that draws are reproducible across standard
// libraries (std::normal_distribution et al. are implementation-defined).
class Rng {
public:
    Rng() : engine_(0x853C49E6748FEA9Bull) {}
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : engine_(splitmix64(splitmix64(seed) ^ splitmix64(0x5851F42D4C957F2Dull * (stream + 1)))) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Lemire multiply-shift; deterministic, no rejection.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(engine_()) * n) >> 64);
    }

    // Standard normal via Box-Muller; consumes exactly two uniforms.
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Poisson(lambda) by summing exponential interarrival times in log space;
    // stable for any lambda, cost ~lambda draws.
    std::uint64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        double acc = 0.0;
        std::uint64_t k = 0;
        for (;;) {
            acc += -std::log(1.0 - uniform());
            if (acc > lambda) return k;
            ++k;
        }
    }

    bool coin() { return (engine_() & 1ull) != 0; }

    std::string serialize() const {
        std::ostringstream os;
        os << engine_;
        return os.str();
    }

    void deserialize(const std::string& s) {
        std::istringstream is(s);
        is >> engine_;
    }

    bool operator==(const Rng& o) const { return engine_ == o.engine_; }

private:
    std::mt19937_64 engine_;
};

}  // namespace driqn
