#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <sstream>
#include <vector>

#include "maq/similarity.hpp"

using namespace maq;

namespace {

FeatureSequence seq_1d(std::initializer_list<double> values) {
    FeatureSequence s;
    for (double v : values) {
        Eigen::VectorXd p(1);
        p << v;
        s.points.push_back(p);
    }
    return s;
}

FeatureSequence random_seq(Rng& rng, int len, int dim) {
    FeatureSequence s;
    for (int i = 0; i < len; ++i) {
        Eigen::VectorXd p(dim);
        for (int d = 0; d < dim; ++d) p[d] = rng.uniform(-2.0, 2.0);
        s.points.push_back(p);
    }
    return s;
}

// Independent oracle: minimum over every monotone alignment path, enumerated
// recursively from the (0,0) corner.
double dtw_by_enumeration(const FeatureSequence& a, const FeatureSequence& b) {
    const std::size_t n = a.size(), m = b.size();
    std::function<double(std::size_t, std::size_t)> rec = [&](std::size_t i, std::size_t j) -> double {
        const double cost = (a.points[i] - b.points[j]).norm();
        if (i + 1 == n && j + 1 == m) return cost;
        double best = std::numeric_limits<double>::infinity();
        if (i + 1 < n) best = std::min(best, rec(i + 1, j));
        if (j + 1 < m) best = std::min(best, rec(i, j + 1));
        if (i + 1 < n && j + 1 < m) best = std::min(best, rec(i + 1, j + 1));
        return cost + best;
    };
    return rec(0, 0);
}

std::vector<Eigen::VectorXd> random_points(Rng& rng, int count, int dim) {
    std::vector<Eigen::VectorXd> out;
    for (int i = 0; i < count; ++i) {
        Eigen::VectorXd p(dim);
        for (int d = 0; d < dim; ++d) p[d] = rng.uniform(-1.0, 1.0);
        out.push_back(p);
    }
    return out;
}

// Independent oracle for equal-size supports: minimum mean cost over all
// perfect matchings.
double wd_by_matching(const std::vector<Eigen::VectorXd>& p, const std::vector<Eigen::VectorXd>& q) {
    const std::size_t n = p.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) total += (p[i] - q[perm[i]]).norm();
        best = std::min(best, total);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best / static_cast<double>(n);
}

}  // namespace

TEST(Dtw, PinnedSmallCases) {
    EXPECT_EQ(dtw(seq_1d({1, 2, 3}), seq_1d({1, 2, 3})), 0.0);
    EXPECT_EQ(dtw(seq_1d({0}), seq_1d({2})), 2.0);
    EXPECT_EQ(dtw(seq_1d({1, 2, 3}), seq_1d({1, 2, 2, 3})), 0.0);
}

TEST(Dtw, MatchesExhaustiveEnumeration) {
    for (const long seed : {1L, 10L, 100L}) {
        Rng rng(mix_seed(static_cast<std::uint64_t>(seed), 0xD7));
        for (int trial = 0; trial < 100; ++trial) {
            const int dim = 1 + static_cast<int>(rng.uniform_int(2));
            const FeatureSequence a = random_seq(rng, 1 + static_cast<int>(rng.uniform_int(6)), dim);
            const FeatureSequence b = random_seq(rng, 1 + static_cast<int>(rng.uniform_int(6)), dim);
            EXPECT_NEAR(dtw(a, b), dtw_by_enumeration(a, b), 1e-9);
        }
    }
}

TEST(Dtw, SymmetricAndZeroOnSelf) {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        const FeatureSequence a = random_seq(rng, 2 + static_cast<int>(rng.uniform_int(8)), 3);
        const FeatureSequence b = random_seq(rng, 2 + static_cast<int>(rng.uniform_int(8)), 3);
        EXPECT_EQ(dtw(a, a), 0.0);
        EXPECT_EQ(dtw(a, b), dtw(b, a));
    }
}

TEST(Dtw, RejectsEmptyAndMismatched) {
    EXPECT_THROW(dtw(FeatureSequence{}, seq_1d({1})), UsageError);
    EXPECT_THROW(dtw(seq_1d({1}), FeatureSequence{}), UsageError);
    Rng rng(8);
    EXPECT_THROW(dtw(random_seq(rng, 3, 2), random_seq(rng, 3, 3)), UsageError);
}

TEST(CrossSetDtw, AveragesOrderedPairs) {
    const FeatureSequence a = seq_1d({0, 1});
    const FeatureSequence b = seq_1d({0, 2});
    const FeatureSequence c = seq_1d({5, 5});
    EXPECT_EQ(cross_set_dtw({a}, {a}), 0.0);

    const double mean = cross_set_dtw({a}, {b, c});
    EXPECT_NEAR(mean, (dtw(a, b) + dtw(a, c)) / 2.0, 1e-12);

    const double forward = cross_set_dtw({a, b}, {b, c});
    const double permuted = cross_set_dtw({b, a}, {c, b});
    EXPECT_NEAR(forward, permuted, 1e-12);
    EXPECT_THROW(cross_set_dtw({}, {a}), UsageError);
}

TEST(Wasserstein, PinnedSmallCases) {
    Eigen::VectorXd zero(1), one(1);
    zero << 0.0;
    one << 1.0;
    EXPECT_EQ(wasserstein({zero}, {one}), 1.0);
    EXPECT_EQ(wasserstein({zero, one}, {zero, one}), 0.0);

    Rng rng(9);
    const auto p = random_points(rng, 6, 3);
    EXPECT_EQ(wasserstein(p, p), 0.0);
}

TEST(Wasserstein, MatchesPerfectMatchingOracle) {
    Rng rng(10);
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 2 + static_cast<int>(rng.uniform_int(7));  // up to 8
        const int dim = 1 + static_cast<int>(rng.uniform_int(3));
        const auto p = random_points(rng, n, dim);
        const auto q = random_points(rng, n, dim);
        EXPECT_NEAR(wasserstein(p, q), wd_by_matching(p, q), 1e-9);
    }
}

TEST(Wasserstein, UnequalSupportsHandCase) {
    // Uniform on {0,1} vs uniform on {0,1,2}: optimal plan moves 1/6 of mass
    // from 0 to 1 and 1/3 from 1 to 2.
    Eigen::VectorXd x0(1), x1(1), x2(1);
    x0 << 0.0;
    x1 << 1.0;
    x2 << 2.0;
    EXPECT_NEAR(wasserstein({x0, x1}, {x0, x1, x2}), 0.5, 1e-9);
}

TEST(Wasserstein, MetricPropertiesOnRandomTriples) {
    Rng rng(11);
    for (int trial = 0; trial < 25; ++trial) {
        const int dim = 2;
        const auto a = random_points(rng, 3 + static_cast<int>(rng.uniform_int(6)), dim);
        const auto b = random_points(rng, 3 + static_cast<int>(rng.uniform_int(6)), dim);
        const auto c = random_points(rng, 3 + static_cast<int>(rng.uniform_int(6)), dim);
        const double ab = wasserstein(a, b), ba = wasserstein(b, a);
        const double bc = wasserstein(b, c), ac = wasserstein(a, c);
        EXPECT_GE(ab, 0.0);
        EXPECT_NEAR(ab, ba, 1e-9);
        EXPECT_LE(ac, ab + bc + 1e-9);
    }
}

TEST(Wasserstein, RejectsBadInput) {
    Rng rng(12);
    const auto p = random_points(rng, 3, 2);
    EXPECT_THROW(wasserstein({}, p), UsageError);
    EXPECT_THROW(wasserstein(p, {}), UsageError);
    EXPECT_THROW(wasserstein(p, random_points(rng, 3, 3)), UsageError);
}

TEST(NormalizeScore, ReproducesPaperDoorValue) {
    EXPECT_NEAR(normalize_score(266.994, 193.165, 643.789), 0.836, 0.005);
}

TEST(NormalizeScore, EndpointsAndAffineInvariance) {
    EXPECT_EQ(normalize_score(5.0, 5.0, 9.0), 1.0);
    EXPECT_EQ(normalize_score(9.0, 5.0, 9.0), 0.0);
    EXPECT_THROW(normalize_score(1.0, 2.0, 2.0), UsageError);

    Rng rng(13);
    for (int trial = 0; trial < 50; ++trial) {
        const double h = rng.uniform(0.0, 10.0);
        const double r = h + rng.uniform(0.5, 10.0);
        const double a = rng.uniform(0.0, 15.0);
        const double c = rng.uniform(0.1, 5.0);
        const double d = rng.uniform(-10.0, 10.0);
        EXPECT_NEAR(normalize_score(c * a + d, c * h + d, c * r + d), normalize_score(a, h, r), 1e-10);
    }
}

namespace {

struct ReportFixture {
    LatchDoorEnv env;
    std::vector<Trajectory> test_humans;
    std::vector<Trajectory> randoms;
    NormStats stats;

    ReportFixture() {
        std::vector<Trajectory> demos;
        for (long s = 1; s <= 25; ++s) demos.push_back(env.scripted_demo(s));
        const DataSplit split = split_dataset(demos, 1);
        test_humans = split.test;
        stats = compute_norm_stats(split.train);
        for (long s = 1; s <= 25; ++s) randoms.push_back(env.random_rollout(900000 + s));
    }
};

const ReportFixture& fixture() {
    static const ReportFixture f;
    return f;
}

}  // namespace

TEST(BuildReport, SelfEvaluationScoresNearOne) {
    const auto& f = fixture();
    const SimilarityReport r = build_report(f.test_humans, f.test_humans, f.randoms, f.stats, 1.0, "self", 1);
    // Raw includes zero-cost self-pairs, so normalized lands slightly above 1.
    EXPECT_GT(r.normalized.dtw_s, 0.8);
    EXPECT_LT(r.normalized.dtw_s, 1.6);
    EXPECT_GT(r.normalized.dtw_a, 0.8);
    EXPECT_GT(r.normalized.wd_s, 0.8);
    EXPECT_GT(r.normalized.wd_a, 0.8);
    EXPECT_EQ(r.agent, "self");
    EXPECT_EQ(r.success_rate, 1.0);
}

TEST(BuildReport, RandomAgentScoresNearZero) {
    const auto& f = fixture();
    std::vector<Trajectory> other_randoms;
    for (long s = 1; s <= 20; ++s) other_randoms.push_back(f.env.random_rollout(700000 + s));
    const SimilarityReport r = build_report(other_randoms, f.test_humans, f.randoms, f.stats, 0.0, "random", 1);
    EXPECT_LT(std::abs(r.normalized.dtw_s), 0.35);
    EXPECT_LT(std::abs(r.normalized.dtw_a), 0.35);
    EXPECT_LT(std::abs(r.normalized.wd_s), 0.35);
    EXPECT_LT(std::abs(r.normalized.wd_a), 0.35);
}

TEST(BuildReport, DemoAgentBeatsRandomAgent) {
    const auto& f = fixture();
    std::vector<Trajectory> demo_like;
    for (long s = 40; s <= 49; ++s) demo_like.push_back(f.env.scripted_demo(s));
    std::vector<Trajectory> other_randoms;
    for (long s = 1; s <= 10; ++s) other_randoms.push_back(f.env.random_rollout(700000 + s));

    const SimilarityReport d = build_report(demo_like, f.test_humans, f.randoms, f.stats, 1.0, "demo", 1);
    const SimilarityReport r = build_report(other_randoms, f.test_humans, f.randoms, f.stats, 0.0, "random", 1);
    EXPECT_GT(d.normalized.dtw_s, r.normalized.dtw_s);
    EXPECT_GT(d.normalized.dtw_a, r.normalized.dtw_a);
    EXPECT_GT(d.normalized.wd_s, r.normalized.wd_s);
    EXPECT_GT(d.normalized.wd_a, r.normalized.wd_a);
}

TEST(BuildReport, DeterministicAndValidatesInput) {
    const auto& f = fixture();
    std::vector<Trajectory> agent;
    for (long s = 60; s <= 64; ++s) agent.push_back(f.env.random_rollout(s));

    const SimilarityReport a = build_report(agent, f.test_humans, f.randoms, f.stats, 0.2, "tag", 7);
    const SimilarityReport b = build_report(agent, f.test_humans, f.randoms, f.stats, 0.2, "tag", 7);
    EXPECT_EQ(a.raw.dtw_s, b.raw.dtw_s);
    EXPECT_EQ(a.raw.wd_a, b.raw.wd_a);
    EXPECT_EQ(a.normalized.dtw_a, b.normalized.dtw_a);
    EXPECT_EQ(a.normalized.wd_s, b.normalized.wd_s);

    EXPECT_THROW(build_report({}, f.test_humans, f.randoms, f.stats, 0.0, "x", 1), UsageError);
    EXPECT_THROW(build_report(agent, {f.test_humans[0]}, f.randoms, f.stats, 0.0, "x", 1), UsageError);
    EXPECT_THROW(build_report(agent, f.test_humans, {}, f.stats, 0.0, "x", 1), UsageError);
}

TEST(BuildReport, CsvAndJsonCarryTheReport) {
    const auto& f = fixture();
    std::vector<Trajectory> agent;
    for (long s = 60; s <= 62; ++s) agent.push_back(f.env.random_rollout(s));
    const SimilarityReport r = build_report(agent, f.test_humans, f.randoms, f.stats, 0.25, "probe", 3);

    const std::string row = report_csv_row(r);
    EXPECT_EQ(row.rfind("probe,3,", 0), 0u);
    EXPECT_EQ(std::count(row.begin(), row.end(), ','), 10);
    EXPECT_NE(row.find(fmt_real(r.normalized.wd_a)), std::string::npos);

    std::ostringstream os;
    report_json(os, r);
    const std::string json = os.str();
    EXPECT_NE(json.find("\"agent\": \"probe\""), std::string::npos);
    EXPECT_NE(json.find("\"human_ref\""), std::string::npos);
    EXPECT_NE(json.find(fmt_real(r.raw.dtw_s)), std::string::npos);
}

TEST(PooledSamples, CapsDeterministically) {
    Rng rng(14);
    std::vector<FeatureSequence> set;
    for (int i = 0; i < 5; ++i) set.push_back(random_seq(rng, 60, 2));

    const auto a = detail::pooled_samples(set, 200, 0xD1CE);
    const auto b = detail::pooled_samples(set, 200, 0xD1CE);
    ASSERT_EQ(a.size(), 200u);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ((a[i] - b[i]).norm(), 0.0);

    const auto small = detail::pooled_samples(set, 1000, 0xD1CE);
    EXPECT_EQ(small.size(), 300u);  // under the cap: untouched pool
}
