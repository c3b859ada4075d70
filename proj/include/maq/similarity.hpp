#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "maq/common.hpp"
#include "maq/dataset.hpp"
#include "maq/env.hpp"

namespace maq {

// One trajectory reduced to an ordered list of z-normalized feature vectors.
struct FeatureSequence {
    std::vector<Eigen::VectorXd> points;

    std::size_t size() const { return points.size(); }
    int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
};

enum class Feature { state, action };

inline FeatureSequence feature_sequence(const Trajectory& traj, Feature feature, const NormStats& stats) {
    FeatureSequence seq;
    if (feature == Feature::state) {
        seq.points.reserve(traj.states.size());
        for (const EnvState& s : traj.states) seq.points.emplace_back(stats.normalize_state(s));
    } else {
        seq.points.reserve(traj.actions.size());
        for (const PrimitiveAction& a : traj.actions) seq.points.emplace_back(stats.normalize_action(a));
    }
    return seq;
}

inline std::vector<FeatureSequence> feature_sequences(const std::vector<Trajectory>& trajs, Feature feature,
                                                      const NormStats& stats) {
    std::vector<FeatureSequence> out;
    out.reserve(trajs.size());
    for (const Trajectory& t : trajs) out.push_back(feature_sequence(t, feature, stats));
    return out;
}

// Classic DTW: minimal accumulated Euclidean cost over monotone alignments
// with moves {(i-1,j), (i,j-1), (i-1,j-1)}, endpoints aligned.
inline double dtw(const FeatureSequence& a, const FeatureSequence& b) {
    if (a.points.empty() || b.points.empty()) throw UsageError("dtw: empty sequence");
    if (a.dim() != b.dim()) throw UsageError("dtw: dimension mismatch");
    const std::size_t n = a.size(), m = b.size();
    const double inf = std::numeric_limits<double>::infinity();

    std::vector<double> prev(m + 1, inf), curr(m + 1, inf);
    prev[0] = 0.0;
    for (std::size_t i = 1; i <= n; ++i) {
        curr[0] = inf;
        for (std::size_t j = 1; j <= m; ++j) {
            const double cost = (a.points[i - 1] - b.points[j - 1]).norm();
            curr[j] = cost + std::min({prev[j], curr[j - 1], prev[j - 1]});
        }
        std::swap(prev, curr);
    }
    return prev[m];
}

// Mean DTW over all ordered (human, agent) pairs.
inline double cross_set_dtw(const std::vector<FeatureSequence>& human, const std::vector<FeatureSequence>& agent) {
    if (human.empty() || agent.empty()) throw UsageError("cross_set_dtw: empty trajectory set");
    double sum = 0.0;
    for (const FeatureSequence& h : human)
        for (const FeatureSequence& g : agent) sum += dtw(h, g);
    return sum / (static_cast<double>(human.size()) * static_cast<double>(agent.size()));
}

// Exact 1-Wasserstein between uniform empirical distributions on p and q
// (possibly unequal sizes), Euclidean ground cost. Solved as a min-cost flow
// on the complete bipartite graph with integer unit supplies m per p-node and
// n per q-node (successive shortest augmenting paths with potentials).
inline double wasserstein(const std::vector<Eigen::VectorXd>& p, const std::vector<Eigen::VectorXd>& q) {
    if (p.empty() || q.empty()) throw UsageError("wasserstein: empty sample set");
    const int n = static_cast<int>(p.size());
    const int m = static_cast<int>(q.size());
    for (const auto& v : p)
        if (v.size() != p.front().size()) throw UsageError("wasserstein: dimension mismatch");
    for (const auto& v : q)
        if (v.size() != p.front().size()) throw UsageError("wasserstein: dimension mismatch");

    Eigen::MatrixXd cost(n, m);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) cost(i, j) = (p[static_cast<std::size_t>(i)] - q[static_cast<std::size_t>(j)]).norm();

    // Node layout: 0..n-1 p-side, n..n+m-1 q-side, S=n+m, T=n+m+1.
    const int S = n + m, T = n + m + 1, V = n + m + 2;
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<long> supply_left(static_cast<std::size_t>(n), m);   // S→i residual
    std::vector<long> demand_left(static_cast<std::size_t>(m), n);   // j→T residual
    Eigen::MatrixXd flow = Eigen::MatrixXd::Zero(n, m);
    std::vector<double> potential(static_cast<std::size_t>(V), 0.0);
    long remaining = static_cast<long>(n) * m;

    std::vector<double> dist(static_cast<std::size_t>(V));
    std::vector<int> parent(static_cast<std::size_t>(V));
    std::vector<char> done(static_cast<std::size_t>(V));

    while (remaining > 0) {
        std::fill(dist.begin(), dist.end(), inf);
        std::fill(parent.begin(), parent.end(), -1);
        std::fill(done.begin(), done.end(), 0);
        dist[static_cast<std::size_t>(S)] = 0.0;

        // Dense Dijkstra over reduced costs.
        for (int iter = 0; iter < V; ++iter) {
            int u = -1;
            double best = inf;
            for (int v = 0; v < V; ++v)
                if (!done[static_cast<std::size_t>(v)] && dist[static_cast<std::size_t>(v)] < best) {
                    best = dist[static_cast<std::size_t>(v)];
                    u = v;
                }
            if (u < 0) break;
            done[static_cast<std::size_t>(u)] = 1;
            const double du = dist[static_cast<std::size_t>(u)];

            auto relax = [&](int v, double edge_cost) {
                const double reduced = std::max(0.0, edge_cost + potential[static_cast<std::size_t>(u)] -
                                                          potential[static_cast<std::size_t>(v)]);
                if (du + reduced < dist[static_cast<std::size_t>(v)]) {
                    dist[static_cast<std::size_t>(v)] = du + reduced;
                    parent[static_cast<std::size_t>(v)] = u;
                }
            };

            if (u == S) {
                for (int i = 0; i < n; ++i)
                    if (supply_left[static_cast<std::size_t>(i)] > 0) relax(i, 0.0);
            } else if (u < n) {
                for (int j = 0; j < m; ++j) relax(n + j, cost(u, j));
            } else if (u < n + m) {
                const int j = u - n;
                if (demand_left[static_cast<std::size_t>(j)] > 0) relax(T, 0.0);
                for (int i = 0; i < n; ++i)
                    if (flow(i, j) > 0.0) relax(i, -cost(i, j));
            }
        }
        if (parent[static_cast<std::size_t>(T)] < 0) throw TrainError("wasserstein: transport network disconnected");

        long push = remaining;
        for (int v = T; v != S; v = parent[static_cast<std::size_t>(v)]) {
            const int u = parent[static_cast<std::size_t>(v)];
            if (u == S) push = std::min(push, supply_left[static_cast<std::size_t>(v)]);
            else if (v == T) push = std::min(push, demand_left[static_cast<std::size_t>(u - n)]);
            else if (v < n) push = std::min(push, static_cast<long>(flow(v, u - n)));  // residual back edge
        }
        for (int v = T; v != S; v = parent[static_cast<std::size_t>(v)]) {
            const int u = parent[static_cast<std::size_t>(v)];
            if (u == S) supply_left[static_cast<std::size_t>(v)] -= push;
            else if (v == T) demand_left[static_cast<std::size_t>(u - n)] -= push;
            else if (u < n) flow(u, v - n) += static_cast<double>(push);
            else flow(v, u - n) -= static_cast<double>(push);
        }
        for (int v = 0; v < V; ++v)
            if (dist[static_cast<std::size_t>(v)] < inf) potential[static_cast<std::size_t>(v)] += dist[static_cast<std::size_t>(v)];
        remaining -= push;
    }

    double total = 0.0;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) total += flow(i, j) * cost(i, j);
    return total / (static_cast<double>(n) * static_cast<double>(m));
}

namespace detail {

// Pool every timestep vector of every sequence; cap per side with a seeded
// uniform subsample (partial Fisher-Yates) so reruns are bit-identical.
inline std::vector<Eigen::VectorXd> pooled_samples(const std::vector<FeatureSequence>& set, std::size_t cap,
                                                   std::uint64_t seed_tag) {
    std::vector<Eigen::VectorXd> pool;
    for (const FeatureSequence& s : set) pool.insert(pool.end(), s.points.begin(), s.points.end());
    if (pool.size() <= cap) return pool;
    Rng rng(mix_seed(seed_tag, 0x5A3B));
    for (std::size_t i = 0; i < cap; ++i) {
        const std::size_t j = i + rng.uniform_int(pool.size() - i);
        std::swap(pool[i], pool[j]);
    }
    pool.resize(cap);
    return pool;
}

}  // namespace detail

inline constexpr std::size_t kWassersteinCap = 200;

inline double cross_set_wd(const std::vector<FeatureSequence>& human, const std::vector<FeatureSequence>& agent,
                           std::size_t cap = kWassersteinCap) {
    if (human.empty() || agent.empty()) throw UsageError("cross_set_wd: empty trajectory set");
    return wasserstein(detail::pooled_samples(human, cap, 0xD1CE), detail::pooled_samples(agent, cap, 0xD1CF));
}

// 1 means human-equivalent, 0 random-equivalent; may leave [0,1].
inline double normalize_score(double agent, double human, double random) {
    if (random == human) throw UsageError("normalize_score: random and human references coincide");
    return 1.0 - (agent - human) / (random - human);
}

struct MetricQuad {
    double dtw_s = 0.0;
    double dtw_a = 0.0;
    double wd_s = 0.0;
    double wd_a = 0.0;
};

struct SimilarityReport {
    MetricQuad raw;
    MetricQuad human_ref;
    MetricQuad random_ref;
    MetricQuad normalized;
    double success_rate = 0.0;
    std::string agent;
    long seed = 0;
};

inline SimilarityReport build_report(const std::vector<Trajectory>& agent_trajs,
                                     const std::vector<Trajectory>& test_humans,
                                     const std::vector<Trajectory>& random_trajs, const NormStats& stats,
                                     double success_rate, const std::string& agent_tag, long seed) {
    if (agent_trajs.empty() || random_trajs.empty()) throw UsageError("build_report: empty trajectory set");
    if (test_humans.size() < 2) throw UsageError("build_report: need at least 2 test trajectories for the human reference");

    SimilarityReport report;
    report.success_rate = success_rate;
    report.agent = agent_tag;
    report.seed = seed;

    for (const Feature feature : {Feature::state, Feature::action}) {
        const auto humans = feature_sequences(test_humans, feature, stats);
        const auto agents = feature_sequences(agent_trajs, feature, stats);
        const auto randoms = feature_sequences(random_trajs, feature, stats);

        double loo_dtw = 0.0, loo_wd = 0.0;
        for (std::size_t i = 0; i < humans.size(); ++i) {
            std::vector<FeatureSequence> rest;
            for (std::size_t j = 0; j < humans.size(); ++j)
                if (j != i) rest.push_back(humans[j]);
            loo_dtw += cross_set_dtw({humans[i]}, rest);
            loo_wd += cross_set_wd({humans[i]}, rest);
        }
        loo_dtw /= static_cast<double>(humans.size());
        loo_wd /= static_cast<double>(humans.size());

        const double raw_dtw = cross_set_dtw(humans, agents);
        const double raw_wd = cross_set_wd(humans, agents);
        const double rnd_dtw = cross_set_dtw(humans, randoms);
        const double rnd_wd = cross_set_wd(humans, randoms);

        auto fill = [&](double MetricQuad::*dtw_field, double MetricQuad::*wd_field) {
            report.raw.*dtw_field = raw_dtw;
            report.raw.*wd_field = raw_wd;
            report.human_ref.*dtw_field = loo_dtw;
            report.human_ref.*wd_field = loo_wd;
            report.random_ref.*dtw_field = rnd_dtw;
            report.random_ref.*wd_field = rnd_wd;
            report.normalized.*dtw_field = normalize_score(raw_dtw, loo_dtw, rnd_dtw);
            report.normalized.*wd_field = normalize_score(raw_wd, loo_wd, rnd_wd);
        };
        if (feature == Feature::state) fill(&MetricQuad::dtw_s, &MetricQuad::wd_s);
        else fill(&MetricQuad::dtw_a, &MetricQuad::wd_a);
    }
    return report;
}

inline constexpr const char* kReportCsvHeader =
    "agent,seed,dtw_s_raw,dtw_a_raw,wd_s_raw,wd_a_raw,dtw_s_norm,dtw_a_norm,wd_s_norm,wd_a_norm,success";

inline std::string report_csv_row(const SimilarityReport& r) {
    std::string row = r.agent + ',' + std::to_string(r.seed);
    for (const double v : {r.raw.dtw_s, r.raw.dtw_a, r.raw.wd_s, r.raw.wd_a, r.normalized.dtw_s, r.normalized.dtw_a,
                           r.normalized.wd_s, r.normalized.wd_a, r.success_rate})
        row += ',' + fmt_real(v);
    return row;
}

inline void report_json(std::ostream& os, const SimilarityReport& r) {
    auto quad = [&](const char* name, const MetricQuad& q, bool last = false) {
        os << "  \"" << name << "\": {\"dtw_s\": " << fmt_real(q.dtw_s) << ", \"dtw_a\": " << fmt_real(q.dtw_a)
           << ", \"wd_s\": " << fmt_real(q.wd_s) << ", \"wd_a\": " << fmt_real(q.wd_a) << "}" << (last ? "\n" : ",\n");
    };
    os << "{\n";
    os << "  \"agent\": \"" << r.agent << "\",\n";
    os << "  \"seed\": " << r.seed << ",\n";
    os << "  \"success_rate\": " << fmt_real(r.success_rate) << ",\n";
    quad("raw", r.raw);
    quad("human_ref", r.human_ref);
    quad("random_ref", r.random_ref);
    quad("normalized", r.normalized, true);
    os << "}\n";
}

}  // namespace maq
