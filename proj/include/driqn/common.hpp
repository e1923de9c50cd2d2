#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace driqn {

struct Vec2 {
    double x = 0.0;
    double y = 0.0;

    Vec2() = default;
    Vec2(double x_, double y_) : x(x_), y(y_) {}

    Vec2 operator+(const Vec2& o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(const Vec2& o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    Vec2& operator+=(const Vec2& o) { x += o.x; y += o.y; return *this; }

    double dot(const Vec2& o) const { return x * o.x + y * o.y; }
    double norm() const { return std::hypot(x, y); }
    double norm_sq() const { return x * x + y * y; }

    bool operator==(const Vec2& o) const = default;
};

inline Vec2 operator*(double s, const Vec2& v) { return v * s; }

// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * M_PI;
    a = std::fmod(a, two_pi);
    if (a <= -M_PI) a += two_pi;
    else if (a > M_PI) a -= two_pi;
    return a;
}

inline double clamp(double v, double lo, double hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

// Rotates v by angle (counterclockwise).
inline Vec2 rotate(const Vec2& v, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * v.x - s * v.y, s * v.x + c * v.y};
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline double norm2(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

// Rescales v in place so its L2 norm is at most cap (cap <= 0 disables).
inline void clip_norm_inplace(std::vector<double>& v, double cap) {
    if (cap <= 0.0) return;
    const double n = norm2(v);
    if (n > cap) {
        const double s = cap / n;
        for (double& x : v) x *= s;
    }
}

// Raised when a run configuration or input document is invalid (CLI exit 2).
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Raised when training or inference produced non-finite values (CLI exit 3).
struct NumericalFault : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace driqn
