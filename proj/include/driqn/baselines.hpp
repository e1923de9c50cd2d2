#pragma once

// Classical observation-driven planners: artificial potential field and a
// Bug-style boundary follower. Both act on the same (possibly noisy)
// Observation the learned agents see.

#include <cmath>
#include <limits>

#include "driqn/common.hpp"
#include "driqn/world.hpp"

namespace driqn {

struct PlannerParams {
    double k_att = 1.0;
    double k_rep = 0.5;
    double d_sense = 10.0;
    double dt = 0.1;
    double repulse_range_frac = 0.5;   // r0 = frac * d_sense
    double bug_trigger_frac = 0.3;     // boundary-follow trigger, normalized
    double bug_follow_frac = 0.22;     // target side range, normalized
    double bug_front_frac = 0.3;       // throttle threshold straight ahead
    double bug_clear_frac = 0.5;       // "goal bearing clear" beam threshold
};

namespace planner_detail {

// Beam bearing in the vessel frame, wrapped to (-pi, pi].
inline double beam_bearing(int k, int beams) {
    return wrap_angle(2.0 * M_PI * k / beams);
}

// Discrete command from a desired heading change: turn rate minimizing the
// residual heading error, accelerate when roughly aligned.
inline ActionCommand steer(double heading_error, double dt) {
    int best_col = 0;
    double best = std::numeric_limits<double>::infinity();
    for (int c = 0; c < 3; ++c) {
        const double resid = std::abs(heading_error - ActionCommand::turn_rates[c] * dt);
        if (resid < best) {
            best = resid;
            best_col = c;
        }
    }
    const int accel_row = std::abs(heading_error) < M_PI / 6.0 ? 2 : 0;
    return ActionCommand::from_values(accel_row, best_col);
}

}  // namespace planner_detail

// Goal-attractive plus obstacle-repulsive force; beams closer than r0
// contribute repulsion weighted by (1/r - 1/r0)/r^2. All geometry in the
// vessel frame. A vanishing force keeps the heading and coasts.
inline ActionCommand apf_action(const Observation& obs, const PlannerParams& p = {}) {
    const int beams = static_cast<int>(obs.lidar.size());
    const double r0 = p.repulse_range_frac * p.d_sense;

    Vec2 force{0.0, 0.0};
    const double goal_dist = obs.goal_rel.norm();
    if (goal_dist > 1e-9) force += obs.goal_rel * (p.k_att / goal_dist);
    for (int k = 0; k < beams; ++k) {
        if (obs.lidar[k] >= 1.0) continue;
        const double r = std::max(obs.lidar[k] * p.d_sense, 1e-3);
        if (r >= r0) continue;
        const double bearing = planner_detail::beam_bearing(k, beams);
        const double mag = p.k_rep * (1.0 / r - 1.0 / r0) / (r * r);
        force += Vec2{std::cos(bearing), std::sin(bearing)} * -mag;
    }

    if (force.norm() < 1e-9) return ActionCommand::from_values(1, 1);  // maintain heading
    return planner_detail::steer(std::atan2(force.y, force.x), p.dt);
}

struct BugState {
    enum class Mode { MotionToGoal, BoundaryFollow };
    Mode mode = Mode::MotionToGoal;
    double hit_distance = std::numeric_limits<double>::infinity();
    int side = 1;  // +1: obstacle kept on the left, -1: on the right
};

namespace planner_detail {

inline bool goal_bearing_clear(const Observation& obs, double goal_bearing,
                               const PlannerParams& p) {
    const int beams = static_cast<int>(obs.lidar.size());
    for (int k = 0; k < beams; ++k) {
        if (std::abs(wrap_angle(beam_bearing(k, beams) - goal_bearing)) > M_PI / 8.0) continue;
        if (obs.lidar[k] < p.bug_clear_frac) return false;
    }
    return true;
}

// Nearest return among beams with bearings inside [lo, hi].
inline double sector_min(const Observation& obs, double lo, double hi) {
    const int beams = static_cast<int>(obs.lidar.size());
    double best = 1.0;
    for (int k = 0; k < beams; ++k) {
        const double b = beam_bearing(k, beams);
        if (b >= lo && b <= hi) best = std::min(best, obs.lidar[k]);
    }
    return best;
}

}  // namespace planner_detail

// Bug-style planner: head for the goal until an obstacle comes within the
// trigger range, then follow its boundary with bang-bang turn commands; leave
// the boundary when the goal bearing is clear and the goal is closer than it
// was at the hit point.
inline std::pair<ActionCommand, BugState> bug_action(const Observation& obs, BugState state,
                                                     const PlannerParams& p = {}) {
    const int beams = static_cast<int>(obs.lidar.size());
    double min_lidar = 1.0;
    int min_beam = 0;
    for (int k = 0; k < beams; ++k) {
        if (obs.lidar[k] < min_lidar) {
            min_lidar = obs.lidar[k];
            min_beam = k;
        }
    }
    const double goal_dist = obs.goal_rel.norm();
    const double goal_bearing = std::atan2(obs.goal_rel.y, obs.goal_rel.x);

    if (state.mode == BugState::Mode::MotionToGoal) {
        if (min_lidar < p.bug_trigger_frac) {
            state.mode = BugState::Mode::BoundaryFollow;
            state.hit_distance = goal_dist;
            state.side = planner_detail::beam_bearing(min_beam, beams) >= 0.0 ? 1 : -1;
        } else {
            return {planner_detail::steer(goal_bearing, p.dt), state};
        }
    }

    // BoundaryFollow
    if (goal_dist < state.hit_distance && planner_detail::goal_bearing_clear(obs, goal_bearing, p)) {
        state.mode = BugState::Mode::MotionToGoal;
        state.hit_distance = std::numeric_limits<double>::infinity();
        return {planner_detail::steer(goal_bearing, p.dt), state};
    }

    // Bang-bang wall keeping: turn away from the followed side when the front
    // or side sector closes in, curl back toward the wall otherwise.
    const double front = planner_detail::sector_min(obs, -M_PI / 8.0, M_PI / 8.0);
    const double side = state.side > 0
                            ? planner_detail::sector_min(obs, M_PI / 12.0, M_PI / 2.0)
                            : planner_detail::sector_min(obs, -M_PI / 2.0, -M_PI / 12.0);
    const int away = state.side > 0 ? 0 : 2;  // turn-rate column steering off the wall
    const int toward = state.side > 0 ? 2 : 0;
    int turn_col;
    if (front < p.bug_trigger_frac || side < p.bug_follow_frac)
        turn_col = away;
    else
        turn_col = toward;
    const int accel_row = front > p.bug_front_frac ? 2 : 0;
    return {ActionCommand::from_values(accel_row, turn_col), state};
}

}  // namespace driqn
