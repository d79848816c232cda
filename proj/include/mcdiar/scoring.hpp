#pragma once

// Diarization error rate with a forgiveness collar around reference
// boundaries and an optimal one-to-one speaker mapping (md-eval semantics).

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mcdiar/errors.hpp"
#include "mcdiar/hungarian.hpp"
#include "mcdiar/timeline.hpp"

namespace mcdiar {

struct ScoringOptions {
    double collar = 0.25;
    bool score_overlaps = true;
    std::optional<Uem> uem;
};

struct DerReport {
    double confusion_s = 0.0;
    double false_alarm_s = 0.0;
    double missed_s = 0.0;
    double scored_speech_s = 0.0;
    double cf = 0.0;
    double fa = 0.0;
    double mi = 0.0;
    double der = 0.0;
    std::map<std::string, std::string> mapping;  // reference -> system
};

inline void finalize_percentages(DerReport& r) {
    if (!(r.scored_speech_s > 0.0)) throw EmptyReference("reference has no scored speech");
    r.cf = 100.0 * r.confusion_s / r.scored_speech_s;
    r.fa = 100.0 * r.false_alarm_s / r.scored_speech_s;
    r.mi = 100.0 * r.missed_s / r.scored_speech_s;
    r.der = r.cf + r.fa + r.mi;
}

/// Scoring region: UEM (or the extent of reference and system turns) minus
/// [b - collar, b + collar] around every reference boundary b.
inline IntervalList scored_regions(const Timeline& reference, const ScoringOptions& opts,
                                   const Timeline* system = nullptr) {
    if (opts.collar < 0.0) throw std::invalid_argument("collar must be >= 0");
    IntervalList base;
    if (opts.uem) {
        base = merge_intervals(opts.uem->scored_regions);
    } else {
        Interval span = extent(reference);
        if (system != nullptr && !system->turns.empty()) {
            const Interval s = extent(*system);
            span = reference.turns.empty() ? s : Interval{std::min(span.start, s.start), std::max(span.end, s.end)};
        }
        if (span.end > span.start) base.push_back(span);
    }
    IntervalList excluded;
    if (opts.collar > 0.0) {
        for (const auto& t : reference.turns) {
            excluded.push_back({t.start - opts.collar, t.start + opts.collar});
            excluded.push_back({t.end - opts.collar, t.end + opts.collar});
        }
    }
    if (!opts.score_overlaps) {
        const auto fp = speaker_footprints(reference);
        for (std::size_t a = 0; a < fp.size(); ++a)
            for (std::size_t b = a + 1; b < fp.size(); ++b)
                for (const auto& iv : intersect(fp[a].second, fp[b].second)) excluded.push_back(iv);
    }
    return subtract(base, merge_intervals(std::move(excluded)));
}

/// Reference -> system speaker map maximizing mapped overlap inside `regions`.
/// Pairs without any overlap are left unmapped.
inline std::map<std::string, std::string> optimal_mapping(const Timeline& reference, const Timeline& system,
                                                          const IntervalList& regions) {
    const auto ref_fp = speaker_footprints(reference);
    const auto sys_fp = speaker_footprints(system);
    Matrix cost(ref_fp.size(), sys_fp.size(), 0.0);
    std::vector<IntervalList> ref_in(ref_fp.size());
    for (std::size_t i = 0; i < ref_fp.size(); ++i) ref_in[i] = intersect(ref_fp[i].second, regions);
    for (std::size_t j = 0; j < sys_fp.size(); ++j) {
        const auto sys_in = intersect(sys_fp[j].second, regions);
        for (std::size_t i = 0; i < ref_fp.size(); ++i) cost(i, j) = -overlap_duration(ref_in[i], sys_in);
    }
    std::map<std::string, std::string> out;
    const auto sol = hungarian(cost);
    for (std::size_t i = 0; i < ref_fp.size(); ++i) {
        const int j = sol.row_to_col[i];
        if (j >= 0 && cost(i, static_cast<std::size_t>(j)) < 0.0) {
            out[ref_fp[i].first] = sys_fp[static_cast<std::size_t>(j)].first;
        }
    }
    return out;
}

inline std::map<std::string, std::string> optimal_mapping(const Timeline& reference, const Timeline& system,
                                                          const ScoringOptions& opts = {}) {
    const Timeline ref = normalize(reference);
    const Timeline sys = normalize(system);
    return optimal_mapping(ref, sys, scored_regions(ref, opts, &sys));
}

inline DerReport score(const Timeline& reference, const Timeline& system, const ScoringOptions& opts = {}) {
    const Timeline ref = normalize(reference);
    const Timeline sys = normalize(system);
    const IntervalList regions = scored_regions(ref, opts, &sys);

    DerReport report;
    report.mapping = optimal_mapping(ref, sys, regions);

    const auto ref_fp = speaker_footprints(ref);
    const auto sys_fp = speaker_footprints(sys);
    std::map<std::string, std::size_t> sys_index;
    for (std::size_t j = 0; j < sys_fp.size(); ++j) sys_index[sys_fp[j].first] = j;
    std::vector<int> mapped_sys(ref_fp.size(), -1);
    for (std::size_t i = 0; i < ref_fp.size(); ++i) {
        if (auto it = report.mapping.find(ref_fp[i].first); it != report.mapping.end()) {
            mapped_sys[i] = static_cast<int>(sys_index.at(it->second));
        }
    }

    struct Event {
        double time;
        bool is_ref;
        std::size_t speaker;
        int delta;
    };
    std::vector<Event> events;
    auto add = [&](const auto& fps, bool is_ref) {
        for (std::size_t s = 0; s < fps.size(); ++s) {
            for (const auto& iv : intersect(fps[s].second, regions)) {
                events.push_back({iv.start, is_ref, s, +1});
                events.push_back({iv.end, is_ref, s, -1});
            }
        }
    };
    add(ref_fp, true);
    add(sys_fp, false);
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.time < b.time; });

    std::vector<int> ref_on(ref_fp.size(), 0), sys_on(sys_fp.size(), 0);
    int n_ref = 0, n_sys = 0;
    std::size_t e = 0;
    while (e < events.size()) {
        const double t0 = events[e].time;
        while (e < events.size() && events[e].time == t0) {
            const auto& ev = events[e++];
            if (ev.is_ref) {
                ref_on[ev.speaker] += ev.delta;
                n_ref += ev.delta;
            } else {
                sys_on[ev.speaker] += ev.delta;
                n_sys += ev.delta;
            }
        }
        if (e == events.size()) break;
        const double dur = events[e].time - t0;
        if (n_ref == 0 && n_sys == 0) continue;
        int correct = 0;
        for (std::size_t i = 0; i < ref_on.size(); ++i) {
            if (ref_on[i] > 0 && mapped_sys[i] >= 0 && sys_on[static_cast<std::size_t>(mapped_sys[i])] > 0) ++correct;
        }
        report.scored_speech_s += dur * n_ref;
        report.missed_s += dur * std::max(0, n_ref - n_sys);
        report.false_alarm_s += dur * std::max(0, n_sys - n_ref);
        report.confusion_s += dur * (std::min(n_ref, n_sys) - correct);
    }
    finalize_percentages(report);
    return report;
}

struct SessionScore {
    std::string session_id;
    DerReport report;
};

/// Score every reference session; sessions absent from `systems` score
/// against an empty hypothesis. Ordered by session id.
inline std::vector<SessionScore> score_sessions(const std::vector<Timeline>& references,
                                                const std::vector<Timeline>& systems, ScoringOptions opts,
                                                const std::map<std::string, Uem>& uems = {}) {
    std::map<std::string, const Timeline*> sys_by_id;
    for (const auto& s : systems) sys_by_id[s.session_id] = &s;
    std::map<std::string, const Timeline*> ref_by_id;
    for (const auto& r : references) ref_by_id[r.session_id] = &r;
    std::vector<SessionScore> out;
    for (const auto& [id, ref] : ref_by_id) {
        ScoringOptions session_opts = opts;
        if (auto it = uems.find(id); it != uems.end()) session_opts.uem = it->second;
        const auto sit = sys_by_id.find(id);
        const Timeline empty{id, {}};
        out.push_back({id, score(*ref, sit == sys_by_id.end() ? empty : *sit->second, session_opts)});
    }
    return out;
}

/// Pooled report: error and speech seconds summed over sessions.
inline DerReport pooled(const std::vector<SessionScore>& scores) {
    DerReport total;
    for (const auto& s : scores) {
        total.confusion_s += s.report.confusion_s;
        total.false_alarm_s += s.report.false_alarm_s;
        total.missed_s += s.report.missed_s;
        total.scored_speech_s += s.report.scored_speech_s;
    }
    finalize_percentages(total);
    return total;
}

enum class MacroMode { per_scenario, per_session };

/// Unweighted mean DER over scenarios (pooled within each scenario) or over
/// sessions. Sessions missing from `scenario_of` form a scenario of their own.
inline double macro_der(const std::vector<SessionScore>& scores, const std::map<std::string, std::string>& scenario_of,
                        MacroMode mode = MacroMode::per_scenario) {
    if (scores.empty()) return 0.0;
    if (mode == MacroMode::per_session) {
        double sum = 0.0;
        for (const auto& s : scores) sum += s.report.der;
        return sum / static_cast<double>(scores.size());
    }
    std::map<std::string, std::vector<SessionScore>> groups;
    for (const auto& s : scores) {
        const auto it = scenario_of.find(s.session_id);
        groups[it == scenario_of.end() ? s.session_id : it->second].push_back(s);
    }
    double sum = 0.0;
    for (const auto& [name, members] : groups) sum += pooled(members).der;
    return sum / static_cast<double>(groups.size());
}

}  // namespace mcdiar
