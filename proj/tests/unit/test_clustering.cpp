#include <gtest/gtest.h>

#include <random>

#include "../support.hpp"

using namespace mcdiar;
using testing_support::perturbed;
using testing_support::random_unit;
using testing_support::same_partition;

namespace {

Matrix rows_of(const std::vector<std::vector<double>>& v) { return Matrix::from_rows(v); }

// n items in groups of `g`, each item near one of `k` random centres
struct Instance {
    Matrix emb;
    std::vector<int> groups;
    std::vector<int> truth;
};

Instance clustered_instance(std::mt19937_64& rng, std::size_t n, int k, std::size_t D, double spread) {
    std::vector<std::vector<double>> centres;
    for (int c = 0; c < k; ++c) centres.push_back(random_unit(rng, D));
    Instance inst;
    inst.emb = Matrix(n, D);
    std::uniform_int_distribution<int> pick(0, k - 1);
    for (std::size_t i = 0; i < n; ++i) {
        const int c = pick(rng);
        inst.truth.push_back(c);
        const auto v = perturbed(rng, centres[static_cast<std::size_t>(c)], spread);
        for (std::size_t d = 0; d < D; ++d) inst.emb(i, d) = v[d];
    }
    return inst;
}

}  // namespace

TEST(CosineDistance, Examples) {
    const auto d = cosine_distance_matrix(rows_of({{1, 0}, {1, 0}, {0, 1}, {-1, 0}}));
    EXPECT_EQ(d(0, 1), 0.0);
    EXPECT_NEAR(d(0, 2), 1.0, 1e-12);
    EXPECT_NEAR(d(0, 3), 2.0, 1e-12);
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_EQ(d(i, i), 0.0);
        for (std::size_t j = 0; j < 4; ++j) EXPECT_EQ(d(i, j), d(j, i));
    }
}

TEST(ConstrainedAhc, IdenticalPairMerges) {
    const auto a = constrained_ahc(cosine_distance_matrix(rows_of({{1, 0}, {1, 0}})), ConstraintSet(2), 0.5, 10.0);
    EXPECT_EQ(a.k, 1);
}

TEST(ConstrainedAhc, PenaltyBlocksMerge) {
    ConstraintSet cs(2);
    cs.add(0, 1);
    const auto a = constrained_ahc(cosine_distance_matrix(rows_of({{1, 0}, {1, 0}})), cs, 0.5, 10.0);
    EXPECT_EQ(a.k, 2);
    EXPECT_EQ(a.violations, 0u);
}

TEST(ConstrainedAhc, RecoversWellSeparatedGroups) {
    // three tight pairs 120 degrees apart in the plane
    const double e = 0.05, c = -0.5, s = std::sqrt(3.0) / 2.0;
    const auto emb = rows_of({{1, 0, e}, {1, 0, -e}, {c, s, e}, {c, s, -e}, {c, -s, e}, {c, -s, -e}});
    Matrix unit(6, 3);
    for (std::size_t i = 0; i < 6; ++i) {
        const auto v = unit_normalized(emb.row(i));
        for (std::size_t d = 0; d < 3; ++d) unit(i, d) = v[d];
    }
    const auto dist = cosine_distance_matrix(unit);
    const auto a = constrained_ahc(dist, ConstraintSet(6), 0.5, 2.0);
    EXPECT_EQ(a.k, 3);
    // the unique partition with all intra distances < 0.5 and inter > 0.5
    const std::vector<int> expected{0, 0, 1, 1, 2, 2};
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 6; ++j) {
            if (expected[i] == expected[j]) EXPECT_LT(dist(i, j), 0.1);
            else EXPECT_GT(dist(i, j), 1.0);
        }
    EXPECT_TRUE(same_partition(a.labels, expected));
}

TEST(ConstrainedAhc, MonotoneInThreshold) {
    std::mt19937_64 rng(31);
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = clustered_instance(rng, 15, 4, 6, 0.4);
        std::vector<int> groups;
        for (int i = 0; i < 15; ++i) groups.push_back(i / 3);
        const auto cs = ConstraintSet::from_groups(groups);
        const auto dist = cosine_distance_matrix(inst.emb);
        int prev = 1 << 30;
        for (double thr = 0.0; thr <= 2.0; thr += 0.1) {
            const int k = constrained_ahc(dist, cs, thr, 2.0).k;
            EXPECT_LE(k, prev);
            prev = k;
        }
    }
}

TEST(ConstrainedAhc, ZeroPenaltyEqualsPlain) {
    std::mt19937_64 rng(32);
    for (int trial = 0; trial < 50; ++trial) {
        const auto inst = clustered_instance(rng, 12, 3, 5, 0.3);
        const auto dist = cosine_distance_matrix(inst.emb);
        EXPECT_EQ(constrained_ahc(dist, ConstraintSet(12), 0.6, 0.0), plain_ahc(dist, ConstraintSet(12), 0.6));
    }
}

TEST(EstimateNumSpeakers, Examples) {
    EXPECT_EQ(estimate_num_speakers(6, 4), 4);
    EXPECT_EQ(estimate_num_speakers(2, 4), 2);
    EXPECT_EQ(estimate_num_speakers(1, 1), 1);
}

TEST(CopKmeans, NaturalClusters) {
    const auto emb = rows_of({{1, 0}, {1, 0}, {-1, 0}, {-1, 0}});
    const auto init = make_assignment({0, 1, 2, 3}, ConstraintSet(4));
    const auto a = cop_kmeans(emb, ConstraintSet(4), 2, init);
    EXPECT_TRUE(same_partition(a.labels, {0, 0, 1, 1}));
}

TEST(CopKmeans, SplitsConstrainedPairAgainstOracle) {
    const auto emb = rows_of({{1, 0}, {0.99, 0.141067}, {-1, 0}, {-0.99, -0.141067}});
    Matrix unit(4, 2);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto v = unit_normalized(emb.row(i));
        unit(i, 0) = v[0];
        unit(i, 1) = v[1];
    }
    ConstraintSet cs(4);
    cs.add(0, 1);
    const auto init = constrained_ahc(cosine_distance_matrix(unit), cs, 0.6, 2.0);
    const auto a = cop_kmeans(unit, cs, 2, init);
    EXPECT_EQ(a.violations, 0u);
    EXPECT_NE(a.labels[0], a.labels[1]);
    const auto oracle = testing_support::brute_force_partition(unit, {{0, 1}}, 2);
    ASSERT_TRUE(oracle.feasible);
    EXPECT_TRUE(same_partition(a.labels, oracle.labels));
}

TEST(CopKmeans, SingleClusterWithConstraintIsInfeasible) {
    ConstraintSet cs(2);
    cs.add(0, 1);
    const auto emb = rows_of({{1, 0}, {0, 1}});
    EXPECT_THROW(cop_kmeans(emb, cs, 1, make_assignment({0, 0}, cs)), Infeasible);
    const auto plain = plain_kmeans(emb, cs, 1, make_assignment({0, 0}, cs));
    EXPECT_EQ(plain.k, 1);
    EXPECT_EQ(plain.violations, 1u);
}

TEST(CopKmeans, EmptyConstraintsEqualPlain) {
    std::mt19937_64 rng(33);
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = clustered_instance(rng, 14, 3, 5, 0.5);
        const ConstraintSet none(14);
        const auto init = constrained_ahc(cosine_distance_matrix(inst.emb), none, 0.6, 0.0);
        const int k = std::min(3, init.k);
        EXPECT_EQ(cop_kmeans(inst.emb, none, k, init, 100, 7), plain_kmeans(inst.emb, none, k, init, 100, 7));
    }
}

TEST(CopKmeans, NeverViolatesOnSuccess) {
    std::mt19937_64 rng(34);
    std::size_t infeasible = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int k = 2 + trial % 3;
        const auto inst = clustered_instance(rng, 12, k, 4, 0.6);
        std::vector<int> groups;
        std::uniform_int_distribution<int> gsize(1, k);
        for (int g = 0; groups.size() < 12; ++g)
            for (int m = gsize(rng); m > 0 && groups.size() < 12; --m) groups.push_back(g);
        const auto cs = ConstraintSet::from_groups(groups);
        const auto init = constrained_ahc(cosine_distance_matrix(inst.emb), cs, 0.6, 2.0);
        try {
            const auto a = cop_kmeans(inst.emb, cs, k, init, 100, static_cast<std::uint64_t>(trial));
            EXPECT_EQ(count_violations(a.labels, cs), 0u);
            EXPECT_EQ(a.violations, 0u);
            EXPECT_LE(a.k, k);
        } catch (const Infeasible&) {
            ++infeasible;
        }
    }
    EXPECT_EQ(infeasible, 0u);
}

TEST(CopKmeans, ObjectiveBoundedByOracle) {
    std::mt19937_64 rng(35);
    int matched_separated = 0, separated = 0;
    for (int trial = 0; trial < 150; ++trial) {
        const int k = 2 + trial % 2;
        const std::size_t n = 5 + static_cast<std::size_t>(trial % 4);
        const bool well_separated = trial % 2 == 0;
        // well separated: orthogonal-ish centres, tiny spread (ratio far above 4)
        const auto inst = clustered_instance(rng, n, k, 6, well_separated ? 0.02 : 0.5);
        std::vector<std::pair<int, int>> links;
        std::vector<int> groups;
        for (std::size_t i = 0; i < n; ++i) groups.push_back(static_cast<int>(i) / 2);
        const auto cs = ConstraintSet::from_groups(groups);
        for (const auto& [a, b] : cs.pairs()) links.emplace_back(static_cast<int>(a), static_cast<int>(b));
        const auto oracle = testing_support::brute_force_partition(inst.emb, links, k);
        if (!oracle.feasible) continue;
        const auto init = constrained_ahc(cosine_distance_matrix(inst.emb), cs, 0.6, 2.0);
        ClusterAssignment a;
        try {
            a = cop_kmeans(inst.emb, cs, k, init);
        } catch (const Infeasible&) {
            ADD_FAILURE() << "infeasible on feasible instance " << trial;
            continue;
        }
        if (a.k < k) continue;  // fewer clusters than the oracle enumerates
        const double got = testing_support::spherical_cost(inst.emb, a.labels, k);
        EXPECT_GE(got, oracle.cost - 1e-9);
        // separation check on the actual data: min inter-centre distance vs max spread
        if (well_separated && std::set<int>(inst.truth.begin(), inst.truth.end()).size() == static_cast<std::size_t>(k)) {
            bool truth_feasible = true;
            for (auto [x, y] : links)
                if (inst.truth[static_cast<std::size_t>(x)] == inst.truth[static_cast<std::size_t>(y)]) truth_feasible = false;
            if (!truth_feasible) continue;
            ++separated;
            if (std::abs(got - oracle.cost) < 1e-9) ++matched_separated;
            EXPECT_NEAR(got, oracle.cost, 1e-9) << trial;
        }
    }
    EXPECT_GT(separated, 10);
    EXPECT_EQ(matched_separated, separated);
}

TEST(CopKmeans, Deterministic) {
    std::mt19937_64 rng(36);
    const auto inst = clustered_instance(rng, 20, 4, 8, 0.5);
    std::vector<int> groups;
    for (int i = 0; i < 20; ++i) groups.push_back(i / 4);
    const auto cs = ConstraintSet::from_groups(groups);
    const auto init = constrained_ahc(cosine_distance_matrix(inst.emb), cs, 0.6, 2.0);
    EXPECT_EQ(cop_kmeans(inst.emb, cs, 4, init, 100, 5), cop_kmeans(inst.emb, cs, 4, init, 100, 5));
}

TEST(CopKmeans, PermutationEquivariant) {
    std::mt19937_64 rng(37);
    for (int trial = 0; trial < 100; ++trial) {
        const auto inst = clustered_instance(rng, 16, 4, 8, 0.3);
        std::vector<int> groups;
        for (int i = 0; i < 16; ++i) groups.push_back(i / 4);
        const auto cs = ConstraintSet::from_groups(groups);
        std::vector<std::size_t> perm(16);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix pe(16, inst.emb.cols());
        for (std::size_t i = 0; i < 16; ++i)
            for (std::size_t d = 0; d < pe.cols(); ++d) pe(i, d) = inst.emb(perm[i], d);
        const auto pcs = cs.permuted(perm);

        const auto a = cop_kmeans(inst.emb, cs, 4, constrained_ahc(cosine_distance_matrix(inst.emb), cs, 0.6, 2.0));
        const auto b = cop_kmeans(pe, pcs, 4, constrained_ahc(cosine_distance_matrix(pe), pcs, 0.6, 2.0));
        std::vector<int> back(16);
        for (std::size_t i = 0; i < 16; ++i) back[perm[i]] = b.labels[i];
        EXPECT_TRUE(same_partition(a.labels, back)) << trial;
    }
}

TEST(ClusterSession, FarApartStreamsInOneSegment) {
    std::vector<LocalStream> streams(4);
    for (int j = 0; j < 4; ++j) {
        streams[static_cast<std::size_t>(j)].local_speaker = j;
        streams[static_cast<std::size_t>(j)].embedding.assign(4, 0.0);
        streams[static_cast<std::size_t>(j)].embedding[static_cast<std::size_t>(j)] = 1.0;
    }
    const auto sc = cluster_session(streams, 4);
    EXPECT_EQ(sc.k, 4);
    EXPECT_EQ(std::set<int>(sc.assignment.labels.begin(), sc.assignment.labels.end()).size(), 4u);
}

TEST(ClusterSession, CrossSegmentPairsAgainstOracle) {
    std::vector<LocalStream> streams(4);
    const std::vector<std::vector<double>> e{{1, 0.05, 0}, {0, 1, 0.05}, {0.05, 0, 1}, {1, 0, 0.05}};
    // segment 0: speakers X, Y; segment 1: speakers Y', X'
    const std::vector<std::vector<double>> raw{{1, 0.1, 0}, {0, 1, 0.1}, {0.1, 1, 0}, {1, 0, 0.1}};
    Matrix unit(4, 3);
    for (std::size_t i = 0; i < 4; ++i) {
        streams[i].segment_index = static_cast<int>(i / 2);
        streams[i].local_speaker = static_cast<int>(i % 2);
        streams[i].embedding = unit_normalized(raw[i]);
        for (std::size_t d = 0; d < 3; ++d) unit(i, d) = streams[i].embedding[d];
    }
    const auto sc = cluster_session(streams, 4);
    EXPECT_EQ(sc.k, 2);
    const auto oracle = testing_support::brute_force_partition(unit, {{0, 1}, {2, 3}}, 2);
    EXPECT_TRUE(same_partition(sc.assignment.labels, oracle.labels));
    EXPECT_TRUE(same_partition(sc.assignment.labels, {0, 1, 1, 0}));
}

TEST(ClusterSession, IdenticalEmbeddingsOnePerSegment) {
    std::vector<LocalStream> streams(5);
    for (std::size_t i = 0; i < 5; ++i) {
        streams[i].segment_index = static_cast<int>(i);
        streams[i].embedding = {0.6, 0.8};
    }
    const auto sc = cluster_session(streams, 4);
    EXPECT_EQ(sc.k, 1);
}

TEST(ClusterSession, MethodsReportViolations) {
    // two segments whose two streams look alike: unconstrained methods merge them
    std::vector<LocalStream> streams(4);
    for (std::size_t i = 0; i < 4; ++i) {
        streams[i].segment_index = static_cast<int>(i / 2);
        streams[i].embedding = unit_normalized(std::vector<double>{1.0, 0.01 * static_cast<double>(i)});
    }
    ClusteringParams p;
    p.method = ClusteringMethod::ahc;
    EXPECT_GT(cluster_session(streams, 4, p).assignment.violating_segments, 0u);
    p.method = ClusteringMethod::cop_kmeans;
    EXPECT_EQ(cluster_session(streams, 4, p).assignment.violating_segments, 0u);
}
