#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include "mcdiar/errors.hpp"

namespace mcdiar {

/// Tolerance for every time comparison, in seconds.
inline constexpr double kTimeEpsilon = 1e-9;

struct Interval {
    double start = 0.0;
    double end = 0.0;

    double duration() const { return end - start; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

using IntervalList = std::vector<Interval>;

struct SpeakerTurn {
    std::string speaker;
    double start = 0.0;
    double end = 0.0;

    double duration() const { return end - start; }
    friend bool operator==(const SpeakerTurn&, const SpeakerTurn&) = default;
};

inline bool turn_order(const SpeakerTurn& a, const SpeakerTurn& b) {
    return std::tie(a.start, a.end, a.speaker) < std::tie(b.start, b.end, b.speaker);
}

/// Speaker turns of one recording session. Turns of different speakers may
/// overlap; after normalize() each speaker's turns are disjoint.
struct Timeline {
    std::string session_id;
    std::vector<SpeakerTurn> turns;

    friend bool operator==(const Timeline&, const Timeline&) = default;
};

/// Scored regions of one session.
struct Uem {
    std::string session_id;
    IntervalList scored_regions;
};

inline bool valid_speaker_label(std::string_view label) {
    if (label.empty()) return false;
    return std::none_of(label.begin(), label.end(), [](char c) {
        return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
    });
}

inline void validate_turn(const SpeakerTurn& turn) {
    if (!valid_speaker_label(turn.speaker)) {
        throw InvalidTurn("invalid speaker label '" + turn.speaker + "'");
    }
    if (!std::isfinite(turn.start) || !std::isfinite(turn.end)) {
        throw InvalidTurn("non-finite turn time for speaker " + turn.speaker);
    }
    if (turn.start < 0.0) {
        throw InvalidTurn("negative start time for speaker " + turn.speaker);
    }
    if (!(turn.end > turn.start)) {
        throw InvalidTurn("turn of " + turn.speaker + " has end <= start (" +
                          std::to_string(turn.start) + ", " + std::to_string(turn.end) + ")");
    }
}

/// Sort and merge overlapping or touching intervals (gap <= kTimeEpsilon).
inline IntervalList merge_intervals(IntervalList intervals) {
    std::sort(intervals.begin(), intervals.end(), [](const Interval& a, const Interval& b) {
        return std::tie(a.start, a.end) < std::tie(b.start, b.end);
    });
    IntervalList out;
    for (const auto& iv : intervals) {
        if (!(iv.end > iv.start)) continue;
        if (!out.empty() && iv.start <= out.back().end + kTimeEpsilon) {
            out.back().end = std::max(out.back().end, iv.end);
        } else {
            out.push_back(iv);
        }
    }
    return out;
}

/// Intersection of two sorted, disjoint interval lists.
inline IntervalList intersect(const IntervalList& a, const IntervalList& b) {
    IntervalList out;
    std::size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double lo = std::max(a[i].start, b[j].start);
        const double hi = std::min(a[i].end, b[j].end);
        if (hi > lo) out.push_back({lo, hi});
        if (a[i].end < b[j].end) {
            ++i;
        } else {
            ++j;
        }
    }
    return out;
}

/// `a` minus `b`; both sorted and disjoint.
inline IntervalList subtract(const IntervalList& a, const IntervalList& b) {
    IntervalList out;
    std::size_t j = 0;
    for (const auto& iv : a) {
        double cursor = iv.start;
        while (j < b.size() && b[j].end <= cursor) ++j;
        std::size_t k = j;
        while (k < b.size() && b[k].start < iv.end) {
            if (b[k].start > cursor) out.push_back({cursor, b[k].start});
            cursor = std::max(cursor, b[k].end);
            ++k;
        }
        if (iv.end > cursor) out.push_back({cursor, iv.end});
    }
    return out;
}

inline double total_duration(const IntervalList& intervals) {
    double sum = 0.0;
    for (const auto& iv : intervals) sum += iv.duration();
    return sum;
}

/// Overlap in seconds between two sorted, disjoint interval lists.
inline double overlap_duration(const IntervalList& a, const IntervalList& b) {
    return total_duration(intersect(a, b));
}

/// Canonical form: per-speaker overlapping or abutting turns merged, then
/// sorted by (start, end, speaker). Idempotent.
inline Timeline normalize(const Timeline& timeline) {
    std::map<std::string, IntervalList> by_speaker;
    for (const auto& turn : timeline.turns) {
        validate_turn(turn);
        by_speaker[turn.speaker].push_back({turn.start, turn.end});
    }
    Timeline out{timeline.session_id, {}};
    out.turns.reserve(timeline.turns.size());
    for (auto& [speaker, intervals] : by_speaker) {
        for (const auto& iv : merge_intervals(std::move(intervals))) {
            out.turns.push_back({speaker, iv.start, iv.end});
        }
    }
    std::sort(out.turns.begin(), out.turns.end(), turn_order);
    return out;
}

/// Sum of turn durations; overlapped speech counts once per active speaker.
inline double total_speech(const Timeline& timeline) {
    double sum = 0.0;
    for (const auto& turn : timeline.turns) sum += turn.duration();
    return sum;
}

/// Speaker labels in order of first appearance in `turns`.
inline std::vector<std::string> speakers_of(const Timeline& timeline) {
    std::vector<std::string> out;
    for (const auto& turn : timeline.turns) {
        if (std::find(out.begin(), out.end(), turn.speaker) == out.end()) out.push_back(turn.speaker);
    }
    return out;
}

/// Turns of one speaker as a sorted, merged interval list.
inline IntervalList speaker_intervals(const Timeline& timeline, std::string_view speaker) {
    IntervalList out;
    for (const auto& turn : timeline.turns) {
        if (turn.speaker == speaker) out.push_back({turn.start, turn.end});
    }
    return merge_intervals(std::move(out));
}

/// Per-speaker interval lists, keyed in first-appearance order.
inline std::vector<std::pair<std::string, IntervalList>> speaker_footprints(const Timeline& timeline) {
    std::vector<std::pair<std::string, IntervalList>> out;
    std::map<std::string, std::size_t> index;
    for (const auto& turn : timeline.turns) {
        auto [it, inserted] = index.try_emplace(turn.speaker, out.size());
        if (inserted) out.emplace_back(turn.speaker, IntervalList{});
        out[it->second].second.push_back({turn.start, turn.end});
    }
    for (auto& entry : out) entry.second = merge_intervals(std::move(entry.second));
    return out;
}

/// [earliest start, latest end] over all turns; {0,0} for an empty timeline.
inline Interval extent(const Timeline& timeline) {
    if (timeline.turns.empty()) return {0.0, 0.0};
    Interval out{timeline.turns.front().start, timeline.turns.front().end};
    for (const auto& turn : timeline.turns) {
        out.start = std::min(out.start, turn.start);
        out.end = std::max(out.end, turn.end);
    }
    return out;
}

/// Turn-by-turn equality with kTimeEpsilon tolerance on times.
inline bool approx_equal(const Timeline& a, const Timeline& b, double eps = kTimeEpsilon) {
    if (a.session_id != b.session_id || a.turns.size() != b.turns.size()) return false;
    for (std::size_t i = 0; i < a.turns.size(); ++i) {
        const auto& x = a.turns[i];
        const auto& y = b.turns[i];
        if (x.speaker != y.speaker || std::abs(x.start - y.start) > eps || std::abs(x.end - y.end) > eps) {
            return false;
        }
    }
    return true;
}

/// Apply a label rename; labels missing from `mapping` are kept.
inline Timeline relabel(const Timeline& timeline, const std::map<std::string, std::string>& mapping) {
    Timeline out{timeline.session_id, timeline.turns};
    for (auto& turn : out.turns) {
        if (auto it = mapping.find(turn.speaker); it != mapping.end()) turn.speaker = it->second;
    }
    return normalize(out);
}

}  // namespace mcdiar
