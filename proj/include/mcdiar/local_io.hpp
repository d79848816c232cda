#pragma once

// Segment-level outputs of the local (per-segment) diarization network:
// per-stream speaker activities and embeddings, stored as JSON Lines.
//
//   {"record":"header","session_id":"S01","S":4,"T_nominal":800,"D":16,
//    "frame_rate":10.0,"embedding_source":"eend_vc"}
//   {"record":"segment","segment_index":0,"start":0.0,"T":800,
//    "activities":[S*T row-major],"embeddings":[S*D row-major]}
//
// Segments tile the session: consecutive, gap-free, all of length T_nominal
// except possibly the last one.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mcdiar/cluster_types.hpp"
#include "mcdiar/errors.hpp"
#include "mcdiar/matrix.hpp"
#include "mcdiar/timeline.hpp"

namespace mcdiar {

enum class EmbeddingSource { eend_vc, external_extractor };

inline const char* to_string(EmbeddingSource source) {
    return source == EmbeddingSource::eend_vc ? "eend_vc" : "external_extractor";
}

struct SegmentBundle {
    int segment_index = 0;
    double start = 0.0;
    double frame_rate = 0.0;
    Matrix activities;  // S x T, values in [0,1]
    Matrix embeddings;  // S x D, as produced by the extractor
    EmbeddingSource embedding_source = EmbeddingSource::eend_vc;

    std::size_t local_speakers() const { return activities.rows(); }
    std::size_t frames() const { return activities.cols(); }
    double end() const { return start + static_cast<double>(frames()) / frame_rate; }

    friend bool operator==(const SegmentBundle&, const SegmentBundle&) = default;
};

/// All segments of one session on one channel.
struct BundleSet {
    std::string session_id;
    std::size_t local_speakers = 0;  // S
    std::size_t nominal_frames = 0;  // T_nominal
    std::size_t dim = 0;             // D
    double frame_rate = 0.0;
    EmbeddingSource embedding_source = EmbeddingSource::eend_vc;
    std::vector<SegmentBundle> bundles;

    std::vector<double> segment_starts() const {
        std::vector<double> out(bundles.size());
        for (const auto& b : bundles) out.at(static_cast<std::size_t>(b.segment_index)) = b.start;
        return out;
    }

    friend bool operator==(const BundleSet&, const BundleSet&) = default;
};

struct LocalStream {
    int segment_index = 0;
    int local_speaker = 0;
    std::vector<bool> binary_activity;
    std::size_t active_frames = 0;
    std::vector<double> embedding;  // unit norm unless the source row was all zero

    friend bool operator==(const LocalStream&, const LocalStream&) = default;
};

/// Checks shapes, value ranges and segment tiling; sorts segments by index.
inline void validate(BundleSet& set) {
    if (set.local_speakers < 1 || set.nominal_frames < 1 || set.dim < 1) {
        throw SchemaError("S, T_nominal and D must all be >= 1");
    }
    if (!(set.frame_rate > 0.0) || !std::isfinite(set.frame_rate)) throw SchemaError("frame_rate must be > 0");
    std::sort(set.bundles.begin(), set.bundles.end(),
              [](const SegmentBundle& a, const SegmentBundle& b) { return a.segment_index < b.segment_index; });
    for (std::size_t i = 0; i < set.bundles.size(); ++i) {
        const auto& b = set.bundles[i];
        const std::string where = "segment " + std::to_string(b.segment_index) + ": ";
        if (b.segment_index != static_cast<int>(i)) {
            throw SchemaError(where + "segment indices must run 0..n-1 without gaps or duplicates");
        }
        if (b.activities.rows() != set.local_speakers || b.embeddings.rows() != set.local_speakers) {
            throw SchemaError(where + "stream count differs from header S");
        }
        if (b.embeddings.cols() != set.dim) throw SchemaError(where + "embedding dimension differs from header D");
        if (b.frames() < 1) throw SchemaError(where + "T must be >= 1");
        const bool last = i + 1 == set.bundles.size();
        if (!last && b.frames() != set.nominal_frames) {
            throw SchemaError(where + "only the last segment may differ from T_nominal");
        }
        if (last && b.frames() > set.nominal_frames) throw SchemaError(where + "segment longer than T_nominal");
        if (b.frame_rate != set.frame_rate) throw SchemaError(where + "frame rate differs from header");
        for (double a : b.activities.data()) {
            if (!(a >= 0.0 && a <= 1.0)) throw SchemaError(where + "activity outside [0,1]");
        }
        for (double e : b.embeddings.data()) {
            if (!std::isfinite(e)) throw SchemaError(where + "non-finite embedding value");
        }
        if (i > 0) {
            const double expected = set.bundles[i - 1].end();
            if (std::abs(b.start - expected) > 1e-6) {
                throw SchemaError(where + "segments do not tile the session (gap or overlap at " +
                                  std::to_string(expected) + ")");
            }
        }
    }
}

namespace detail {

inline Matrix matrix_from_json(const nlohmann::json& values, std::size_t rows, std::size_t cols,
                               const std::string& what) {
    if (!values.is_array()) throw SchemaError(what + " must be an array");
    if (values.size() != rows * cols) {
        throw SchemaError(what + " has " + std::to_string(values.size()) + " values, expected " +
                          std::to_string(rows) + "x" + std::to_string(cols));
    }
    Matrix m(rows, cols);
    auto& data = m.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (!values[i].is_number()) throw SchemaError(what + " contains a non-numeric value");
        data[i] = values[i].get<double>();
    }
    return m;
}

}  // namespace detail

inline BundleSet parse_bundles(std::istream& in, const std::string& source = "<bundles>") {
    using nlohmann::json;
    BundleSet set;
    bool have_header = false;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json rec;
        try {
            rec = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(source, line_no, e.what());
        }
        try {
            const auto kind = rec.at("record").get<std::string>();
            if (kind == "header") {
                if (have_header) throw ParseError(source, line_no, "duplicate header record");
                set.session_id = rec.at("session_id").get<std::string>();
                set.local_speakers = rec.at("S").get<std::size_t>();
                set.nominal_frames = rec.at("T_nominal").get<std::size_t>();
                set.dim = rec.at("D").get<std::size_t>();
                set.frame_rate = rec.at("frame_rate").get<double>();
                const auto src = rec.at("embedding_source").get<std::string>();
                if (src == "eend_vc") {
                    set.embedding_source = EmbeddingSource::eend_vc;
                } else if (src == "external_extractor") {
                    set.embedding_source = EmbeddingSource::external_extractor;
                } else {
                    throw ParseError(source, line_no, "unknown embedding_source '" + src + "'");
                }
                have_header = true;
            } else if (kind == "segment") {
                if (!have_header) throw ParseError(source, line_no, "segment record before header");
                SegmentBundle b;
                b.segment_index = rec.at("segment_index").get<int>();
                b.start = rec.at("start").get<double>();
                b.frame_rate = set.frame_rate;
                b.embedding_source = set.embedding_source;
                const auto frames = rec.at("T").get<std::size_t>();
                const auto& acts = rec.at("activities");
                const auto& embs = rec.at("embeddings");
                const std::string where = "segment " + std::to_string(b.segment_index);
                if (!embs.is_array() || embs.size() % set.local_speakers != 0) {
                    throw SchemaError(where + ": embeddings length is not a multiple of S");
                }
                const std::size_t dim = embs.size() / set.local_speakers;
                if (dim != set.dim) {
                    throw SchemaError(where + ": embedding dimension " + std::to_string(dim) +
                                      " differs from header D=" + std::to_string(set.dim));
                }
                b.activities = detail::matrix_from_json(acts, set.local_speakers, frames, where + " activities");
                b.embeddings = detail::matrix_from_json(embs, set.local_speakers, dim, where + " embeddings");
                set.bundles.push_back(std::move(b));
            } else {
                throw ParseError(source, line_no, "unknown record type '" + kind + "'");
            }
        } catch (const json::exception& e) {
            throw ParseError(source, line_no, e.what());
        }
    }
    if (!have_header) throw ParseError(source, line_no, "missing header record");
    validate(set);
    return set;
}

inline BundleSet read_bundles(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open segment bundle file " + path);
    return parse_bundles(in, path);
}

inline void format_bundles(const BundleSet& set, std::ostream& out) {
    using nlohmann::json;
    json header = {{"record", "header"},
                   {"session_id", set.session_id},
                   {"S", set.local_speakers},
                   {"T_nominal", set.nominal_frames},
                   {"D", set.dim},
                   {"frame_rate", set.frame_rate},
                   {"embedding_source", to_string(set.embedding_source)}};
    out << header.dump() << '\n';
    for (const auto& b : set.bundles) {
        json rec = {{"record", "segment"},
                    {"segment_index", b.segment_index},
                    {"start", b.start},
                    {"T", b.frames()},
                    {"activities", b.activities.data()},
                    {"embeddings", b.embeddings.data()}};
        out << rec.dump() << '\n';
    }
}

inline void write_bundles(const BundleSet& set, const std::string& path) {
    BundleSet checked = set;
    validate(checked);
    std::ofstream out(path);
    if (!out) throw IoError("cannot write segment bundle file " + path);
    format_bundles(checked, out);
    if (!out) throw IoError("write failed for " + path);
}

inline std::vector<double> unit_normalized(std::span<const double> v) {
    std::vector<double> out(v.begin(), v.end());
    const double norm = std::sqrt(dot(out, out));
    if (norm > 0.0) {
        for (double& x : out) x /= norm;
    }
    return out;
}

/// Threshold (>=) then majority-vote median filter per stream, edges replicated.
inline std::vector<LocalStream> binarize(const SegmentBundle& bundle, double threshold = 0.5,
                                         int median_window = 11) {
    if (!(threshold > 0.0 && threshold < 1.0)) throw std::invalid_argument("threshold must lie in (0,1)");
    if (median_window < 1 || median_window % 2 == 0) {
        throw std::invalid_argument("median window must be odd and >= 1");
    }
    const std::size_t frames = bundle.frames();
    const auto half = static_cast<std::ptrdiff_t>(median_window / 2);
    std::vector<LocalStream> out;
    out.reserve(bundle.local_speakers());
    std::vector<int> raw(frames);
    for (std::size_t j = 0; j < bundle.local_speakers(); ++j) {
        const auto row = bundle.activities.row(j);
        for (std::size_t t = 0; t < frames; ++t) raw[t] = row[t] >= threshold ? 1 : 0;

        LocalStream s;
        s.segment_index = bundle.segment_index;
        s.local_speaker = static_cast<int>(j);
        s.binary_activity.resize(frames);
        const auto n = static_cast<std::ptrdiff_t>(frames);
        auto at = [&](std::ptrdiff_t t) { return raw[static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(t, 0, n - 1))]; };
        int window_sum = 0;
        for (std::ptrdiff_t t = -half; t <= half; ++t) window_sum += at(t);
        for (std::ptrdiff_t t = 0; t < n; ++t) {
            const bool on = window_sum > half;
            s.binary_activity[static_cast<std::size_t>(t)] = on;
            if (on) ++s.active_frames;
            window_sum += at(t + half + 1) - at(t - half);
        }
        s.embedding = unit_normalized(bundle.embeddings.row(j));
        out.push_back(std::move(s));
    }
    return out;
}

/// Keep streams with at least `min_active_seconds` of activity; silent streams are always dropped.
inline std::vector<LocalStream> select_active_streams(const std::vector<LocalStream>& streams,
                                                      double min_active_seconds, double frame_rate) {
    if (min_active_seconds < 0.0) throw std::invalid_argument("min_active_seconds must be >= 0");
    std::vector<LocalStream> out;
    for (const auto& s : streams) {
        if (s.active_frames == 0) continue;
        if (static_cast<double>(s.active_frames) / frame_rate + 1e-12 < min_active_seconds) continue;
        out.push_back(s);
    }
    return out;
}

inline std::string cluster_speaker_name(int label) { return "spk" + std::to_string(label); }

/// Each maximal run of active frames becomes a turn of speaker "spk<label>".
inline Timeline streams_to_timeline(const std::vector<LocalStream>& streams, const ClusterAssignment& assignment,
                                    const std::vector<double>& segment_starts, double frame_rate,
                                    std::string session_id = {}) {
    Timeline tl{std::move(session_id), {}};
    for (std::size_t i = 0; i < streams.size(); ++i) {
        if (i >= assignment.labels.size() || assignment.labels[i] < 0) throw MissingLabel(i);
        const auto& s = streams[i];
        const double base = segment_starts.at(static_cast<std::size_t>(s.segment_index));
        const std::string name = cluster_speaker_name(assignment.labels[i]);
        const std::size_t n = s.binary_activity.size();
        std::size_t t = 0;
        while (t < n) {
            if (!s.binary_activity[t]) {
                ++t;
                continue;
            }
            std::size_t end = t;
            while (end < n && s.binary_activity[end]) ++end;
            tl.turns.push_back({name, base + static_cast<double>(t) / frame_rate,
                                base + static_cast<double>(end) / frame_rate});
            t = end;
        }
    }
    return normalize(tl);
}

}  // namespace mcdiar
