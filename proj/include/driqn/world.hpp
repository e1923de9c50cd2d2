#pragma once

// 2-D marine environment: unicycle vessel advected by superposed Rankine
// vortices, circular obstacles, ray-cast LiDAR, shaped reward and episode
// lifecycle. Everything is a pure function of explicit inputs plus a
// caller-supplied RNG stream.

#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "driqn/common.hpp"
#include "driqn/rng.hpp"

#include "json.hpp"

namespace driqn {

struct WorldConfig {
    double dt = 0.1;             // s
    double v_max = 2.0;          // m/s
    double vessel_radius = 0.3;  // m
    double goal_radius = 0.5;    // m
    double d_sense = 10.0;       // m, LiDAR range
    int beams = 64;
    double bound = 50.0;         // square arena [0, bound]^2
    int t_max = 1000;            // steps before timeout
    double flow_max = 1.5;       // m/s, bound on vortex flow speed (layout sampling honors it)

    // Reward constants.
    double r_step = -1.0;
    double r_collision = -50.0;
    double r_goal = 100.0;
    double alpha = 1.0;  // progress shaping gain

    // Randomized layout limits.
    double obstacle_r_min = 1.5, obstacle_r_max = 3.0;
    double circulation_min = 8.0, circulation_max = 14.0;
    double core_r_min = 2.0, core_r_max = 4.0;
    double start_goal_min = 15.0, start_goal_max = 35.0;
    int n_obstacles = 6, n_vortices = 4;

    double bounds_diagonal() const { return std::sqrt(2.0) * bound; }
};

struct Obstacle {
    Vec2 center;
    double radius = 1.0;
};

struct Vortex {
    Vec2 center;
    double circulation = 0.0;  // m^2/s, positive = counterclockwise
    double core_radius = 1.0;  // m
};

struct WorldMap {
    double bound = 50.0;
    std::vector<Obstacle> obstacles;
    std::vector<Vortex> vortices;
    Vec2 goal;
    Vec2 start;

    double max_obstacle_radius() const {
        double r = 0.0;
        for (const auto& o : obstacles) r = std::max(r, o.radius);
        return r;
    }
};

struct VesselState {
    Vec2 position;
    double heading = 0.0;  // rad, wrapped to (-pi, pi]
    double speed = 0.0;    // m/s in [0, v_max]
    int step_count = 0;
};

struct Observation {
    Vec2 velocity;             // seafloor-relative, m/s
    Vec2 goal_rel;             // goal in vessel frame, m
    std::vector<double> lidar; // normalized ranges in [0, 1]
};

enum class Outcome { Running, Collision, GoalReached, Timeout };

inline const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::Running: return "Running";
        case Outcome::Collision: return "Collision";
        case Outcome::GoalReached: return "GoalReached";
        case Outcome::Timeout: return "Timeout";
    }
    return "?";
}

struct StepResult {
    VesselState next_state;
    double reward = 0.0;
    Outcome outcome = Outcome::Running;
};

// Discrete command: index <-> (accel, turn rate) bijection, index = 3*row(a) + col(w).
struct ActionCommand {
    int index = 4;  // (0.0, 0.0)

    static constexpr int count = 9;
    static constexpr double accels[3] = {-0.4, 0.0, 0.4};
    static constexpr double turn_rates[3] = {-0.52, 0.0, 0.52};

    double accel() const { return accels[index / 3]; }
    double turn_rate() const { return turn_rates[index % 3]; }

    static ActionCommand from_index(int i) {
        if (i < 0 || i >= count) throw std::out_of_range("action index out of range");
        return ActionCommand{i};
    }
    static ActionCommand from_values(int accel_row, int turn_col) {
        return from_index(3 * accel_row + turn_col);
    }
};

// Superposed Rankine vortices: solid-body rotation inside the core, 1/r decay
// outside, tangential direction (counterclockwise for positive circulation).
inline Vec2 flow_velocity(const WorldMap& map, const Vec2& p) {
    Vec2 v{0.0, 0.0};
    for (const auto& vt : map.vortices) {
        const Vec2 d = p - vt.center;
        const double r = d.norm();
        if (r <= 0.0) continue;  // core center contributes nothing
        double speed;
        if (r < vt.core_radius)
            speed = vt.circulation * r / (2.0 * M_PI * vt.core_radius * vt.core_radius);
        else
            speed = vt.circulation / (2.0 * M_PI * r);
        // Unit tangent, counterclockwise: (-dy, dx) / r.
        v += Vec2{-d.y / r, d.x / r} * speed;
    }
    return v;
}

inline double distance_to_goal(const WorldMap& map, const Vec2& p) {
    return (p - map.goal).norm();
}

// Reward assembly; kept separate so the exact constant arithmetic is testable.
inline double assemble_reward(const WorldConfig& cfg, double d_prev, double d_next, Outcome outcome) {
    double r = cfg.r_step + cfg.alpha * (d_prev - d_next);
    if (outcome == Outcome::Collision) r += cfg.r_collision;
    else if (outcome == Outcome::GoalReached) r += cfg.r_goal;
    return r;
}

// Forward-Euler step. Movement uses the pre-step speed/heading; collision is
// checked at the post-integration position only. Collision outranks
// GoalReached (map invariants keep the two nearly disjoint), Timeout applies
// only when neither fired.
inline StepResult step(const VesselState& state, const ActionCommand& cmd,
                       const WorldMap& map, const WorldConfig& cfg) {
    const double d_prev = distance_to_goal(map, state.position);

    VesselState next = state;
    next.speed = clamp(state.speed + cmd.accel() * cfg.dt, 0.0, cfg.v_max);
    next.heading = wrap_angle(state.heading + cmd.turn_rate() * cfg.dt);
    const Vec2 thrust{state.speed * std::cos(state.heading), state.speed * std::sin(state.heading)};
    const Vec2 drift = flow_velocity(map, state.position);
    next.position = state.position + (thrust + drift) * cfg.dt;
    next.position.x = clamp(next.position.x, 0.0, map.bound);
    next.position.y = clamp(next.position.y, 0.0, map.bound);
    next.step_count = state.step_count + 1;

    Outcome outcome = Outcome::Running;
    for (const auto& o : map.obstacles) {
        if ((next.position - o.center).norm() < o.radius + cfg.vessel_radius) {
            outcome = Outcome::Collision;
            break;
        }
    }
    if (outcome == Outcome::Running && distance_to_goal(map, next.position) < cfg.goal_radius)
        outcome = Outcome::GoalReached;
    if (outcome == Outcome::Running && next.step_count >= cfg.t_max)
        outcome = Outcome::Timeout;

    const double d_next = distance_to_goal(map, next.position);
    return StepResult{next, assemble_reward(cfg, d_prev, d_next, outcome), outcome};
}

// First intersection parameter t >= 0 of ray p + t*u with the circle, if any.
inline std::optional<double> ray_circle(const Vec2& p, const Vec2& u, const Vec2& center, double radius) {
    const Vec2 pc = center - p;
    const double b = u.dot(pc);
    const double disc = b * b - (pc.norm_sq() - radius * radius);
    if (disc < 0.0) return std::nullopt;
    const double s = std::sqrt(disc);
    const double t1 = b - s, t2 = b + s;
    if (t1 >= 0.0) return t1;
    if (t2 >= 0.0) return t2;  // origin inside the circle
    return std::nullopt;
}

// B beams at bearings heading + 2*pi*k/B; each reads the nearest ray-circle
// hit clamped to d_sense and normalized (1.0 = no return).
inline Observation sense(const VesselState& state, const WorldMap& map, const WorldConfig& cfg) {
    Observation obs;
    obs.velocity = Vec2{state.speed * std::cos(state.heading), state.speed * std::sin(state.heading)} +
                   flow_velocity(map, state.position);
    obs.goal_rel = rotate(map.goal - state.position, -state.heading);
    obs.lidar.resize(cfg.beams);
    for (int k = 0; k < cfg.beams; ++k) {
        const double bearing = state.heading + 2.0 * M_PI * k / cfg.beams;
        const Vec2 u{std::cos(bearing), std::sin(bearing)};
        double best = cfg.d_sense;
        for (const auto& o : map.obstacles) {
            if (auto t = ray_circle(state.position, u, o.center, o.radius))
                best = std::min(best, *t);
        }
        obs.lidar[k] = best / cfg.d_sense;
    }
    return obs;
}

// Fixed hand-authored map: 4 vortices, 6 obstacles, corner-to-corner task.
inline WorldMap canonical_map(const WorldConfig& cfg) {
    WorldMap m;
    m.bound = cfg.bound;
    m.obstacles = {
        {{15.0, 12.0}, 2.5}, {{30.0, 8.0}, 2.0},  {{25.0, 25.0}, 3.0},
        {{12.0, 30.0}, 2.0}, {{38.0, 30.0}, 2.5}, {{30.0, 42.0}, 2.0},
    };
    m.vortices = {
        {{10.0, 20.0}, 12.0, 3.0},
        {{35.0, 15.0}, -10.0, 2.5},
        {{20.0, 38.0}, 9.0, 2.5},
        {{42.0, 40.0}, -12.0, 3.0},
    };
    m.start = {5.0, 5.0};
    m.goal = {45.0, 45.0};
    return m;
}

namespace detail {
inline bool placement_ok(const WorldMap& m, const WorldConfig& cfg, const Vec2& p) {
    const double margin = cfg.goal_radius + m.max_obstacle_radius();
    for (const auto& o : m.obstacles)
        if ((p - o.center).norm() < margin) return false;
    return true;
}
}  // namespace detail

// Seeded, reproducible layout. With randomize_layout the obstacle/vortex/goal/
// start placements are drawn by rejection sampling under the map invariants;
// otherwise the canonical map is returned. Same seed, same result.
inline std::pair<VesselState, WorldMap> reset(std::uint64_t seed, bool randomize_layout,
                                              const WorldConfig& cfg) {
    WorldMap map;
    if (!randomize_layout) {
        map = canonical_map(cfg);
    } else {
        Rng rng(seed, /*stream=*/0xEC0ull);
        map.bound = cfg.bound;
        map.obstacles.resize(cfg.n_obstacles);
        for (auto& o : map.obstacles) {
            o.radius = rng.uniform(cfg.obstacle_r_min, cfg.obstacle_r_max);
            o.center = {rng.uniform(o.radius, cfg.bound - o.radius),
                        rng.uniform(o.radius, cfg.bound - o.radius)};
        }
        map.vortices.resize(cfg.n_vortices);
        for (auto& v : map.vortices) {
            v.core_radius = rng.uniform(cfg.core_r_min, cfg.core_r_max);
            v.circulation = rng.uniform(cfg.circulation_min, cfg.circulation_max) *
                            (rng.coin() ? 1.0 : -1.0);
            v.center = {rng.uniform(2.0, cfg.bound - 2.0), rng.uniform(2.0, cfg.bound - 2.0)};
        }
        const int max_attempts = 10000;
        bool placed = false;
        for (int attempt = 0; attempt < max_attempts && !placed; ++attempt) {
            map.start = {rng.uniform(2.0, cfg.bound - 2.0), rng.uniform(2.0, cfg.bound - 2.0)};
            map.goal = {rng.uniform(2.0, cfg.bound - 2.0), rng.uniform(2.0, cfg.bound - 2.0)};
            const double sep = (map.goal - map.start).norm();
            placed = sep >= cfg.start_goal_min && sep <= cfg.start_goal_max &&
                     detail::placement_ok(map, cfg, map.start) &&
                     detail::placement_ok(map, cfg, map.goal);
        }
        if (!placed)
            throw ConfigError("layout infeasible for seed " + std::to_string(seed) +
                              " after " + std::to_string(max_attempts) + " attempts");
    }

    VesselState state;
    state.position = map.start;
    const Vec2 to_goal = map.goal - map.start;
    state.heading = wrap_angle(std::atan2(to_goal.y, to_goal.x));
    state.speed = 0.0;
    state.step_count = 0;
    return {state, map};
}

// ---- Layout document (JSON) ----

inline nlohmann::json map_to_json(const WorldMap& m) {
    nlohmann::json j;
    j["bound"] = m.bound;
    j["obstacles"] = nlohmann::json::array();
    for (const auto& o : m.obstacles)
        j["obstacles"].push_back({{"center", {o.center.x, o.center.y}}, {"radius", o.radius}});
    j["vortices"] = nlohmann::json::array();
    for (const auto& v : m.vortices)
        j["vortices"].push_back({{"center", {v.center.x, v.center.y}},
                                 {"circulation", v.circulation},
                                 {"core_radius", v.core_radius}});
    j["goal"] = {m.goal.x, m.goal.y};
    j["start"] = {m.start.x, m.start.y};
    return j;
}

inline WorldMap map_from_json(const nlohmann::json& j) {
    WorldMap m;
    try {
        m.bound = j.at("bound").get<double>();
        for (const auto& o : j.at("obstacles"))
            m.obstacles.push_back({{o.at("center")[0], o.at("center")[1]}, o.at("radius")});
        for (const auto& v : j.at("vortices"))
            m.vortices.push_back({{v.at("center")[0], v.at("center")[1]},
                                  v.at("circulation"), v.at("core_radius")});
        m.goal = {j.at("goal")[0], j.at("goal")[1]};
        m.start = {j.at("start")[0], j.at("start")[1]};
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad world layout document: ") + e.what());
    }
    return m;
}

// ---- Trajectory rows (CSV) ----

struct TrajectoryRow {
    double t = 0.0;
    double x = 0.0, y = 0.0;
    double heading = 0.0, speed = 0.0;
    double reward = 0.0;
    Outcome outcome = Outcome::Running;
};

inline void write_trajectory_csv(std::ostream& os, const std::vector<TrajectoryRow>& rows) {
    os << "t,x,y,psi,v,reward,outcome\n";
    char buf[256];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%s\n",
                      r.t, r.x, r.y, r.heading, r.speed, r.reward, to_string(r.outcome));
        os << buf;
    }
}

}  // namespace driqn
