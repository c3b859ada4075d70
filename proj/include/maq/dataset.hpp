#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "maq/common.hpp"
#include "maq/env.hpp"

namespace maq {

inline constexpr int kStateDim = 4;
inline constexpr int kActionDim = 3;

// One sliding-window training pair: the state where a macro began and the
// H consecutive actions that followed it.
struct MacroSample {
    Eigen::Vector4d state;
    Eigen::VectorXd macro;  // 3*H flattened (ax, ay, ag per step)
    int source_trajectory = 0;
    int start_step = 0;
};

struct DataSplit {
    std::vector<Trajectory> train;
    std::vector<Trajectory> test;
    long split_seed = 0;
};

struct NormStats {
    Eigen::Vector4d state_mean = Eigen::Vector4d::Zero();
    Eigen::Vector4d state_std = Eigen::Vector4d::Ones();
    Eigen::Vector3d action_mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d action_std = Eigen::Vector3d::Ones();

    Eigen::Vector4d normalize_state(const EnvState& s) const {
        Eigen::Vector4d x(s.hand_x, s.hand_y, s.grip, s.door_angle);
        return (x - state_mean).cwiseQuotient(state_std);
    }

    Eigen::Vector3d normalize_action(const PrimitiveAction& a) const {
        Eigen::Vector3d x(a.ax, a.ay, a.ag);
        return (x - action_mean).cwiseQuotient(action_std);
    }

    Eigen::VectorXd normalize_macro(const Eigen::VectorXd& macro) const {
        Eigen::VectorXd out(macro.size());
        for (Eigen::Index i = 0; i < macro.size(); ++i)
            out[i] = (macro[i] - action_mean[i % kActionDim]) / action_std[i % kActionDim];
        return out;
    }

    // Inverse of normalize_macro followed by the action-range clip.
    Eigen::VectorXd denormalize_macro(const Eigen::VectorXd& normalized) const {
        Eigen::VectorXd out(normalized.size());
        for (Eigen::Index i = 0; i < normalized.size(); ++i) {
            const double v = normalized[i] * action_std[i % kActionDim] + action_mean[i % kActionDim];
            out[i] = std::clamp(v, -1.0, 1.0);
        }
        return out;
    }
};

inline std::vector<MacroSample> extract_macros(const Trajectory& traj, int horizon_h, int trajectory_index = 0) {
    if (horizon_h < 1) throw ConfigError("extract_macros: H must be >= 1");
    std::vector<MacroSample> samples;
    const int len = static_cast<int>(traj.length());
    if (horizon_h > len) return samples;  // too short, by contract: empty
    samples.reserve(len - horizon_h + 1);
    for (int t = 0; t + horizon_h <= len; ++t) {
        MacroSample s;
        const auto f = traj.states[t].features();
        s.state = Eigen::Vector4d(f[0], f[1], f[2], f[3]);
        s.macro.resize(kActionDim * horizon_h);
        for (int i = 0; i < horizon_h; ++i) {
            const PrimitiveAction& a = traj.actions[t + i];
            s.macro[kActionDim * i + 0] = a.ax;
            s.macro[kActionDim * i + 1] = a.ay;
            s.macro[kActionDim * i + 2] = a.ag;
        }
        s.source_trajectory = trajectory_index;
        s.start_step = t;
        samples.push_back(std::move(s));
    }
    return samples;
}

inline std::vector<MacroSample> extract_macros(const std::vector<Trajectory>& trajs, int horizon_h) {
    std::vector<MacroSample> all;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        auto part = extract_macros(trajs[i], horizon_h, static_cast<int>(i));
        all.insert(all.end(), part.begin(), part.end());
    }
    return all;
}

// Seeded shuffle, then a 9:1 train/test cut (train = floor(0.9*N)).
inline DataSplit split_dataset(const std::vector<Trajectory>& demos, long seed) {
    if (demos.size() < 2) throw ConfigError("split: need at least 2 trajectories");
    std::vector<std::size_t> order(demos.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(mix_seed(static_cast<std::uint64_t>(seed), 0x5B1D));
    for (std::size_t i = order.size() - 1; i > 0; --i) {
        const std::size_t j = rng.uniform_int(i + 1);
        std::swap(order[i], order[j]);
    }
    const std::size_t train_count = static_cast<std::size_t>(std::floor(0.9 * static_cast<double>(demos.size())));
    DataSplit split;
    split.split_seed = seed;
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < train_count ? split.train : split.test).push_back(demos[order[i]]);
    return split;
}

// Population mean/std per dimension over every timestep of the training set.
inline NormStats compute_norm_stats(const std::vector<Trajectory>& train) {
    if (train.empty()) throw ConfigError("compute_norm_stats: empty training set");
    NormStats stats;
    Eigen::Vector4d s_sum = Eigen::Vector4d::Zero(), s_sq = Eigen::Vector4d::Zero();
    Eigen::Vector3d a_sum = Eigen::Vector3d::Zero(), a_sq = Eigen::Vector3d::Zero();
    std::size_t s_n = 0, a_n = 0;
    for (const Trajectory& traj : train) {
        for (const EnvState& st : traj.states) {
            const auto f = st.features();
            for (int d = 0; d < kStateDim; ++d) {
                s_sum[d] += f[d];
                s_sq[d] += f[d] * f[d];
            }
            ++s_n;
        }
        for (const PrimitiveAction& a : traj.actions) {
            const auto c = a.components();
            for (int d = 0; d < kActionDim; ++d) {
                a_sum[d] += c[d];
                a_sq[d] += c[d] * c[d];
            }
            ++a_n;
        }
    }
    if (s_n == 0 || a_n == 0) throw ConfigError("compute_norm_stats: trajectories carry no data");
    for (int d = 0; d < kStateDim; ++d) {
        stats.state_mean[d] = s_sum[d] / static_cast<double>(s_n);
        const double var = std::max(0.0, s_sq[d] / static_cast<double>(s_n) - stats.state_mean[d] * stats.state_mean[d]);
        stats.state_std[d] = std::max(std::sqrt(var), 1e-6);
    }
    for (int d = 0; d < kActionDim; ++d) {
        stats.action_mean[d] = a_sum[d] / static_cast<double>(a_n);
        const double var = std::max(0.0, a_sq[d] / static_cast<double>(a_n) - stats.action_mean[d] * stats.action_mean[d]);
        stats.action_std[d] = std::max(std::sqrt(var), 1e-6);
    }
    return stats;
}

// ---- MAQTRAJ v1 container ----------------------------------------------
//
//   MAQTRAJ v1 state_dim=4 action_dim=3 trajectories=<N>
//   traj length=<L> seed=<seed> source=<tag> success=<0|1>
//   <4 state reals> <3 action reals> <reward> <done 0|1>      (L records)
//   <4 state reals>                                           (terminal state)
//
// Reals carry 17 significant digits so load(save(x)) == x bit for bit.

namespace detail {

inline std::string kv(const std::string& key, const std::string& value) { return key + "=" + value; }

inline std::string_view expect_kv(std::string_view token, std::string_view key, const std::string& where) {
    if (token.size() < key.size() + 1 || token.substr(0, key.size()) != key || token[key.size()] != '=')
        throw ParseError(where + ": expected '" + std::string(key) + "=...', got '" + std::string(token) + "'");
    return token.substr(key.size() + 1);
}

}  // namespace detail

inline void save_dataset(const std::vector<Trajectory>& demos, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("save_dataset: cannot open '" + path.string() + "' for writing");
    out << "MAQTRAJ v1 state_dim=" << kStateDim << " action_dim=" << kActionDim << " trajectories=" << demos.size()
        << "\n";
    for (const Trajectory& traj : demos) {
        const std::size_t len = traj.length();
        if (traj.states.size() != len + 1 || traj.rewards.size() != len)
            throw UsageError("save_dataset: inconsistent trajectory lengths");
        out << "traj length=" << len << " seed=" << traj.seed << " source=" << source_name(traj.source)
            << " success=" << (traj.success ? 1 : 0) << "\n";
        for (std::size_t t = 0; t < len; ++t) {
            const auto f = traj.states[t].features();
            const auto a = traj.actions[t].components();
            out << fmt_real(f[0]) << ' ' << fmt_real(f[1]) << ' ' << fmt_real(f[2]) << ' ' << fmt_real(f[3]) << ' '
                << fmt_real(a[0]) << ' ' << fmt_real(a[1]) << ' ' << fmt_real(a[2]) << ' ' << fmt_real(traj.rewards[t])
                << ' ' << (t + 1 == len ? 1 : 0) << "\n";
        }
        const auto f = traj.states[len].features();
        out << fmt_real(f[0]) << ' ' << fmt_real(f[1]) << ' ' << fmt_real(f[2]) << ' ' << fmt_real(f[3]) << "\n";
    }
    if (!out) throw ConfigError("save_dataset: write failed for '" + path.string() + "'");
}

inline std::vector<Trajectory> load_dataset(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ParseError("load_dataset: cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError("load_dataset: missing header in '" + path.string() + "'");
    auto head = split_ws(line);
    if (head.size() != 5 || head[0] != "MAQTRAJ")
        throw ParseError("load_dataset: missing header in '" + path.string() + "'");
    if (head[1] != "v1") throw ParseError("load_dataset: unsupported version '" + std::string(head[1]) + "'");
    if (parse_int(detail::expect_kv(head[2], "state_dim", "header")) != kStateDim ||
        parse_int(detail::expect_kv(head[3], "action_dim", "header")) != kActionDim)
        throw ParseError("load_dataset: dimension mismatch in header");
    const long count = parse_int(detail::expect_kv(head[4], "trajectories", "header"));

    auto parse_state = [](const std::vector<std::string>& tok, std::size_t off, int step_index) {
        EnvState s;
        s.hand_x = parse_real(tok[off + 0]);
        s.hand_y = parse_real(tok[off + 1]);
        s.grip = parse_real(tok[off + 2]);
        s.door_angle = parse_real(tok[off + 3]);
        s.step_index = step_index;
        return s;
    };

    std::vector<Trajectory> demos;
    for (long i = 0; i < count; ++i) {
        const std::string where = "trajectory " + std::to_string(i);
        if (!std::getline(in, line)) throw ParseError("load_dataset: truncated file at " + where + " header");
        auto tok = split_ws(line);
        if (tok.size() != 5 || tok[0] != "traj")
            throw ParseError("load_dataset: malformed block header at " + where);
        const long len = parse_int(detail::expect_kv(tok[1], "length", where));
        Trajectory traj;
        traj.seed = parse_int(detail::expect_kv(tok[2], "seed", where));
        traj.source = source_from_name(detail::expect_kv(tok[3], "source", where));
        traj.success = parse_int(detail::expect_kv(tok[4], "success", where)) != 0;
        for (long t = 0; t < len; ++t) {
            const std::string rec = where + " step " + std::to_string(t);
            if (!std::getline(in, line)) throw ParseError("load_dataset: truncated file at " + rec);
            auto r = split_ws(line);
            if (r.size() != static_cast<std::size_t>(kStateDim + kActionDim + 2))
                throw ParseError("load_dataset: malformed record at " + rec);
            traj.states.push_back(parse_state(r, 0, static_cast<int>(t)));
            traj.actions.push_back({parse_real(r[4]), parse_real(r[5]), parse_real(r[6])});
            traj.rewards.push_back(parse_real(r[7]));
            const long done = parse_int(r[8]);
            if (done != (t + 1 == len ? 1 : 0))
                throw ParseError("load_dataset: inconsistent done flag at " + rec);
        }
        if (!std::getline(in, line)) throw ParseError("load_dataset: truncated file at " + where + " terminal state");
        auto r = split_ws(line);
        if (r.size() != static_cast<std::size_t>(kStateDim))
            throw ParseError("load_dataset: malformed terminal state at " + where);
        traj.states.push_back(parse_state(r, 0, static_cast<int>(len)));
        demos.push_back(std::move(traj));
    }
    return demos;
}

}  // namespace maq
