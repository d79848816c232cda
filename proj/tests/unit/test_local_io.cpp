#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "../support.hpp"

using namespace mcdiar;
using testing_support::simple_bundles;

namespace {

SegmentBundle one_stream(const std::vector<double>& acts, double start = 0.0, double fr = 10.0) {
    SegmentBundle b;
    b.start = start;
    b.frame_rate = fr;
    b.activities = Matrix(1, acts.size());
    for (std::size_t t = 0; t < acts.size(); ++t) b.activities(0, t) = acts[t];
    b.embeddings = Matrix::from_rows({{3.0, 4.0}});
    return b;
}

std::vector<bool> bits(std::initializer_list<int> v) {
    std::vector<bool> out;
    for (int x : v) out.push_back(x != 0);
    return out;
}

BundleSet random_set(std::mt19937_64& rng, std::size_t segments, std::size_t S, std::size_t T, std::size_t D) {
    auto set = simple_bundles("sess", segments, S, T, D, 10.0);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::normal_distribution<double> n(0.0, 1.0);
    for (auto& b : set.bundles) {
        for (double& a : b.activities.data()) a = u(rng);
        for (double& e : b.embeddings.data()) e = n(rng);
    }
    return set;
}

}  // namespace

TEST(Bundles, ParsesShapes) {
    std::mt19937_64 rng(1);
    const auto set = random_set(rng, 2, 4, 100, 8);
    std::stringstream ss;
    format_bundles(set, ss);
    const auto back = parse_bundles(ss);
    ASSERT_EQ(back.bundles.size(), 2u);
    for (const auto& b : back.bundles) {
        EXPECT_EQ(b.activities.rows(), 4u);
        EXPECT_EQ(b.activities.cols(), 100u);
        EXPECT_EQ(b.embeddings.cols(), 8u);
    }
}

TEST(Bundles, RoundTripIsExact) {
    std::mt19937_64 rng(2);
    const auto dir = testing_support::temp_dir("bundles");
    for (int i = 0; i < 20; ++i) {
        auto set = random_set(rng, 3, 3, 50, 5);
        set.bundles.back().activities = Matrix(3, 17, 0.25);  // short last segment
        const auto path = (dir / "b.jsonl").string();
        write_bundles(set, path);
        const auto back = read_bundles(path);
        EXPECT_EQ(back, set);
        write_bundles(back, path);
        EXPECT_EQ(read_bundles(path), back);
    }
}

TEST(Bundles, SortsSegmentsByIndex) {
    std::mt19937_64 rng(3);
    auto set = random_set(rng, 3, 2, 10, 2);
    std::stringstream ss;
    format_bundles(set, ss);
    // reverse the segment lines
    std::vector<std::string> lines;
    for (std::string l; std::getline(ss, l);) lines.push_back(l);
    std::stringstream rev;
    rev << lines[0] << '\n';
    for (std::size_t i = lines.size() - 1; i >= 1; --i) rev << lines[i] << '\n';
    const auto back = parse_bundles(rev);
    for (std::size_t i = 0; i < back.bundles.size(); ++i) EXPECT_EQ(back.bundles[i].segment_index, static_cast<int>(i));
}

TEST(Bundles, MixedDimensionIsSchemaError) {
    std::stringstream ss;
    ss << R"({"record":"header","session_id":"x","S":1,"T_nominal":2,"D":8,"frame_rate":10,"embedding_source":"eend_vc"})" << '\n';
    ss << R"({"record":"segment","segment_index":0,"start":0,"T":2,"activities":[0,1],"embeddings":[1,0,0,0,0,0,0,0]})" << '\n';
    ss << R"({"record":"segment","segment_index":1,"start":0.2,"T":2,"activities":[0,1],"embeddings":[1,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0]})" << '\n';
    EXPECT_THROW(parse_bundles(ss), SchemaError);
}

TEST(Bundles, TilingGapIsSchemaError) {
    auto set = simple_bundles("x", 2, 1, 10, 2, 10.0);
    set.bundles[1].start = 1.5;
    EXPECT_THROW(validate(set), SchemaError);
}

TEST(Bundles, OutOfRangeActivityIsSchemaError) {
    auto set = simple_bundles("x", 1, 1, 10, 2, 10.0);
    set.bundles[0].activities(0, 3) = 1.5;
    EXPECT_THROW(validate(set), SchemaError);
}

TEST(Bundles, NonFiniteEmbeddingIsSchemaError) {
    auto set = simple_bundles("x", 1, 1, 10, 2, 10.0);
    set.bundles[0].embeddings(0, 1) = std::numeric_limits<double>::quiet_NaN();
    EXPECT_THROW(validate(set), SchemaError);
}

TEST(Bundles, MalformedJsonHasLine) {
    std::stringstream ss;
    ss << R"({"record":"header","session_id":"x","S":1,"T_nominal":2,"D":1,"frame_rate":10,"embedding_source":"eend_vc"})" << '\n';
    ss << "{not json\n";
    try {
        parse_bundles(ss);
        FAIL();
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
}

TEST(Binarize, AllHighIsAllTrue) {
    const auto s = binarize(one_stream(std::vector<double>(20, 0.9)), 0.5, 11);
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].active_frames, 20u);
}

TEST(Binarize, MedianFillsSingleGap) {
    const auto s = binarize(one_stream({1, 0, 1}), 0.5, 3);
    EXPECT_EQ(s[0].binary_activity, bits({1, 1, 1}));
}

TEST(Binarize, ThresholdIsInclusive) {
    const auto s = binarize(one_stream(std::vector<double>(7, 0.5)), 0.5, 1);
    EXPECT_EQ(s[0].active_frames, 7u);
}

TEST(Binarize, MedianRemovesShortBurstWithEdgeReplication) {
    const auto s = binarize(one_stream({0, 0, 1, 0, 0, 1, 1}), 0.5, 3);
    EXPECT_EQ(s[0].binary_activity, bits({0, 0, 0, 0, 0, 1, 1}));
}

TEST(Binarize, NormalizesEmbedding) {
    const auto s = binarize(one_stream({1, 1, 1}), 0.5, 1);
    EXPECT_NEAR(s[0].embedding[0], 0.6, 1e-12);
    EXPECT_NEAR(s[0].embedding[1], 0.8, 1e-12);
}

TEST(Binarize, MonotoneInThresholdWithoutFiltering) {
    std::mt19937_64 rng(5);
    for (int i = 0; i < 100; ++i) {
        const auto set = random_set(rng, 1, 3, 60, 2);
        double prev_thr = 0.05;
        auto prev = binarize(set.bundles[0], prev_thr, 1);
        for (double thr = 0.1; thr < 1.0; thr += 0.1) {
            const auto cur = binarize(set.bundles[0], thr, 1);
            for (std::size_t s = 0; s < cur.size(); ++s) {
                for (std::size_t t = 0; t < cur[s].binary_activity.size(); ++t)
                    EXPECT_LE(cur[s].binary_activity[t], prev[s].binary_activity[t]);
            }
            prev = cur;
        }
    }
}

TEST(SelectStreams, Rules) {
    LocalStream silent, short_one, long_one;
    silent.binary_activity.assign(10, false);
    short_one.binary_activity = bits({1, 1, 0, 0, 0, 0, 0, 0, 0, 0});
    short_one.active_frames = 2;
    long_one.binary_activity.assign(10, true);
    long_one.active_frames = 10;
    const std::vector<LocalStream> all{silent, short_one, long_one};
    EXPECT_EQ(select_active_streams(all, 0.5, 10.0).size(), 1u);
    EXPECT_EQ(select_active_streams(all, 0.0, 10.0).size(), 2u);
    EXPECT_EQ(select_active_streams({short_one, long_one}, 0.1, 10.0).size(), 2u);
}

TEST(Stitching, RunLengthSemantics) {
    LocalStream s;
    s.binary_activity = bits({1, 1, 0, 1});
    s.active_frames = 3;
    ClusterAssignment a{{2}, 3, 0, 0};
    const auto out = streams_to_timeline({s}, a, {0.0}, 10.0);
    ASSERT_EQ(out.turns.size(), 2u);
    EXPECT_EQ(out.turns[0].speaker, "spk2");
    EXPECT_NEAR(out.turns[0].start, 0.0, 1e-12);
    EXPECT_NEAR(out.turns[0].end, 0.2, 1e-12);
    EXPECT_NEAR(out.turns[1].start, 0.3, 1e-12);
    EXPECT_NEAR(out.turns[1].end, 0.4, 1e-12);
}

TEST(Stitching, SameSegmentDifferentLabelsOverlap) {
    LocalStream a, b;
    a.binary_activity = b.binary_activity = bits({1, 1, 1});
    b.local_speaker = 1;
    const auto out = streams_to_timeline({a, b}, ClusterAssignment{{0, 1}, 2, 0, 0}, {0.0}, 10.0);
    ASSERT_EQ(out.turns.size(), 2u);
    EXPECT_DOUBLE_EQ(total_speech(out), 0.6);
}

TEST(Stitching, MergesAcrossSegmentBoundary) {
    LocalStream a, b;
    a.binary_activity = bits({0, 1, 1});
    b.segment_index = 1;
    b.binary_activity = bits({1, 1, 0});
    const auto out = streams_to_timeline({a, b}, ClusterAssignment{{0, 0}, 1, 0, 0}, {0.0, 0.3}, 10.0);
    ASSERT_EQ(out.turns.size(), 1u);
    EXPECT_NEAR(out.turns[0].start, 0.1, 1e-12);
    EXPECT_NEAR(out.turns[0].end, 0.5, 1e-12);
}

TEST(Stitching, MissingLabelThrows) {
    LocalStream a;
    a.binary_activity = bits({1});
    EXPECT_THROW(streams_to_timeline({a, a}, ClusterAssignment{{0}, 1, 0, 0}, {0.0}, 10.0), MissingLabel);
}

TEST(Stitching, ConservesSpeech) {
    std::mt19937_64 rng(6);
    for (int i = 0; i < 50; ++i) {
        const auto set = random_set(rng, 4, 3, 40, 2);
        std::vector<LocalStream> streams;
        for (const auto& b : set.bundles)
            for (auto& s : select_active_streams(binarize(b, 0.5, 3), 0.0, 10.0)) streams.push_back(s);
        std::vector<int> labels;
        std::uniform_int_distribution<int> lab(0, 4);
        for (std::size_t k = 0; k < streams.size(); ++k) labels.push_back(lab(rng));
        const auto a = make_assignment(labels, ConstraintSet(streams.size()));
        const auto tl = streams_to_timeline(streams, a, set.segment_starts(), 10.0);
        // per label, frame-level union on the session grid
        std::map<int, std::set<long long>> frames;
        for (std::size_t k = 0; k < streams.size(); ++k) {
            const auto base = static_cast<long long>(streams[k].segment_index) * 40;
            for (std::size_t t = 0; t < streams[k].binary_activity.size(); ++t)
                if (streams[k].binary_activity[t]) frames[a.labels[k]].insert(base + static_cast<long long>(t));
        }
        double expected = 0.0;
        for (const auto& [l, f] : frames) expected += static_cast<double>(f.size()) / 10.0;
        EXPECT_NEAR(total_speech(tl), expected, 1e-9);
    }
}
