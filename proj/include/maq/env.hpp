#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "maq/common.hpp"

namespace maq {

struct EnvState {
    double hand_x = 0.0;
    double hand_y = 0.0;
    double grip = 0.0;
    double door_angle = 0.0;
    int step_index = 0;

    // Feature vector used by networks and metrics; step_index is bookkeeping.
    std::array<double, 4> features() const { return {hand_x, hand_y, grip, door_angle}; }
};

struct PrimitiveAction {
    double ax = 0.0;
    double ay = 0.0;
    double ag = 0.0;

    std::array<double, 3> components() const { return {ax, ay, ag}; }
};

enum class TrajectorySource { demo, agent, random };

inline const char* source_name(TrajectorySource s) {
    switch (s) {
        case TrajectorySource::demo: return "demo";
        case TrajectorySource::agent: return "agent";
        case TrajectorySource::random: return "random";
    }
    return "?";
}

inline TrajectorySource source_from_name(std::string_view s) {
    if (s == "demo") return TrajectorySource::demo;
    if (s == "agent") return TrajectorySource::agent;
    if (s == "random") return TrajectorySource::random;
    throw ParseError("unknown trajectory source: '" + std::string(s) + "'");
}

struct Trajectory {
    std::vector<EnvState> states;  // length L+1
    std::vector<PrimitiveAction> actions;
    std::vector<double> rewards;
    bool success = false;
    TrajectorySource source = TrajectorySource::agent;
    long seed = 0;

    std::size_t length() const { return actions.size(); }
    double total_reward() const {
        double s = 0.0;
        for (double r : rewards) s += r;
        return s;
    }
};

struct StepResult {
    EnvState next;
    double reward = 0.0;
    bool done = false;
    bool success = false;
};

// LatchDoor: reach the latch, close the grip, hold while the door swings open.
// All constants live here so sweeps can override them in one place.
struct LatchDoorEnv {
    double hand_speed = 0.05;
    double grip_speed = 0.1;
    double latch_x = 0.8;
    double latch_y = 0.5;
    double grasp_radius = 0.08;
    double grip_threshold = 0.6;
    double open_rate = 0.06;
    double relax_rate = 0.01;
    double goal_angle = 1.0;
    double door_max = 1.5;
    int horizon = 60;
    double reset_range = 0.2;

    EnvState reset(long seed) const {
        Rng rng(mix_seed(static_cast<std::uint64_t>(seed), 0xE5E7));
        EnvState s;
        s.hand_x = rng.uniform(0.0, reset_range);
        s.hand_y = rng.uniform(0.0, reset_range);
        s.grip = 0.0;
        s.door_angle = 0.0;
        s.step_index = 0;
        return s;
    }

    bool is_done(const EnvState& s) const { return s.door_angle >= goal_angle || s.step_index >= horizon; }

    StepResult step(const EnvState& state, const PrimitiveAction& action) const {
        if (is_done(state)) throw UsageError("step: episode already done");
        const double ax = std::clamp(action.ax, -1.0, 1.0);
        const double ay = std::clamp(action.ay, -1.0, 1.0);
        const double ag = std::clamp(action.ag, -1.0, 1.0);

        EnvState next;
        next.hand_x = std::clamp(state.hand_x + hand_speed * ax, 0.0, 1.0);
        next.hand_y = std::clamp(state.hand_y + hand_speed * ay, 0.0, 1.0);
        next.grip = std::clamp(state.grip + grip_speed * ag, 0.0, 1.0);
        const double dx = next.hand_x - latch_x;
        const double dy = next.hand_y - latch_y;
        const bool grasping = std::sqrt(dx * dx + dy * dy) <= grasp_radius && next.grip >= grip_threshold;
        next.door_angle = grasping ? std::min(state.door_angle + open_rate, door_max)
                                   : std::max(state.door_angle - relax_rate, 0.0);
        next.step_index = state.step_index + 1;

        StepResult res;
        res.reward = next.door_angle;
        res.success = next.door_angle >= goal_angle;
        res.done = res.success || next.step_index >= horizon;
        res.next = next;
        return res;
    }

    Trajectory scripted_demo(long seed) const;
    Trajectory random_rollout(long seed) const;
};

namespace detail {

inline double min_jerk(double s) {
    s = std::clamp(s, 0.0, 1.0);
    return s * s * s * (10.0 + s * (-15.0 + 6.0 * s));
}

// Eased 0..1 ramp for the grasp command: fast initial closure, gentle
// settle, like a precision grip.
inline double ease_out(double s) {
    s = std::clamp(s, 0.0, 1.0);
    const double r = 1.0 - s;
    return 1.0 - r * r * r;
}

inline Trajectory rollout_demo_attempt(const LatchDoorEnv& env, long seed, std::uint64_t attempt) {
    Rng rng(mix_seed(static_cast<std::uint64_t>(seed) + attempt * 0x9e3779b9ULL, 0xDE30));
    const long reset_seed = static_cast<long>(mix_seed(static_cast<std::uint64_t>(seed), attempt));
    EnvState s = env.reset(attempt == 0 ? seed : reset_seed);

    const double start_x = s.hand_x;
    const double start_y = s.hand_y;
    // Reach durations are right-skewed like human movement times: most
    // reaches sit near the brisk end of [16, 24] with a slow tail.
    const double u_dur = rng.uniform(0.0, 1.0);
    const int reach_steps = 16 + static_cast<int>(9.0 * u_dur * u_dur * u_dur);
    const int grasp_steps = 5;
    // Per-axis min-jerk durations: x is a brisk pull the hand saturates
    // against, y the longest glide whose residual at the moment the squeeze
    // takes hold (grip crosses the threshold one step after the eased ramp)
    // stays well inside the grasp radius; the leftover settles during the
    // hold.
    const int reach_steps_x = reach_steps - 5;
    const int engage_step = reach_steps + grasp_steps + 1;
    int reach_steps_y = engage_step;
    {
        const double dy = std::abs(env.latch_y - start_y);
        while (dy * (1.0 - min_jerk(static_cast<double>(engage_step) / (reach_steps_y + 1))) <= 0.06)
            ++reach_steps_y;
    }
    const double jitter_sigma = 0.02;

    Trajectory traj;
    traj.states.push_back(s);
    traj.seed = seed;
    traj.source = TrajectorySource::demo;

    int t = 0;
    while (!env.is_done(s)) {
        const double ux = min_jerk(static_cast<double>(t + 1) / reach_steps_x);
        const double uy = min_jerk(static_cast<double>(t + 1) / reach_steps_y);
        const double tx = start_x + (env.latch_x - start_x) * ux;
        const double ty = start_y + (env.latch_y - start_y) * uy;
        double grip_cmd;
        if (t < reach_steps) {
            grip_cmd = 0.0;
        } else if (t < reach_steps + grasp_steps) {
            grip_cmd = ease_out(static_cast<double>(t - reach_steps + 1) / grasp_steps);
        } else {
            grip_cmd = 1.0;  // keep squeezing; grip saturates at full closure
        }
        PrimitiveAction a;
        a.ax = std::clamp((tx - s.hand_x) / env.hand_speed + jitter_sigma * rng.normal(), -1.0, 1.0);
        a.ay = std::clamp((ty - s.hand_y) / env.hand_speed + jitter_sigma * rng.normal(), -1.0, 1.0);
        a.ag = std::clamp(grip_cmd + jitter_sigma * rng.normal(), -1.0, 1.0);

        StepResult r = env.step(s, a);
        traj.actions.push_back(a);
        traj.rewards.push_back(r.reward);
        traj.states.push_back(r.next);
        s = r.next;
        ++t;
    }
    traj.success = s.door_angle >= env.goal_angle;
    return traj;
}

}  // namespace detail

inline Trajectory LatchDoorEnv::scripted_demo(long seed) const {
    for (std::uint64_t attempt = 0; attempt < 10; ++attempt) {
        Trajectory traj = detail::rollout_demo_attempt(*this, seed, attempt);
        if (traj.success) return traj;
    }
    throw TrainError("scripted_demo: seed " + std::to_string(seed) + " failed to succeed after 10 attempts");
}

inline Trajectory LatchDoorEnv::random_rollout(long seed) const {
    Rng rng(mix_seed(static_cast<std::uint64_t>(seed), 0xAD01));
    EnvState s = reset(seed);
    Trajectory traj;
    traj.states.push_back(s);
    traj.seed = seed;
    traj.source = TrajectorySource::random;
    while (!is_done(s)) {
        PrimitiveAction a{rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0)};
        StepResult r = step(s, a);
        traj.actions.push_back(a);
        traj.rewards.push_back(r.reward);
        traj.states.push_back(r.next);
        s = r.next;
    }
    traj.success = s.door_angle >= goal_angle;
    return traj;
}

}  // namespace maq
