#pragma once

// Overlap-aware hypothesis fusion (DOVER-LAP).
//
// Hypotheses (one per channel) are first brought into a common label space:
// the hypothesis with the most speech is the anchor, every other one is
// matched by Hungarian assignment against the union of already mapped turns,
// using negative overlap duration as cost. The aligned hypotheses then vote
// on each atomic region between consecutive turn boundaries: the weighted
// mean speaker count decides how many speakers are emitted, and the speakers
// with the largest summed weight are chosen.

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcdiar/errors.hpp"
#include "mcdiar/hungarian.hpp"
#include "mcdiar/matrix.hpp"
#include "mcdiar/timeline.hpp"

namespace mcdiar {

enum class RankWeighting { uniform, linear };

inline const char* to_string(RankWeighting r) { return r == RankWeighting::uniform ? "uniform" : "linear"; }

inline RankWeighting parse_rank_weighting(const std::string& name) {
    if (name == "uniform") return RankWeighting::uniform;
    if (name == "linear") return RankWeighting::linear;
    throw ConfigError("unknown rank weighting '" + name + "' (expected uniform or linear)");
}

struct HypothesisSet {
    std::string session_id;
    std::vector<Timeline> hypotheses;
    std::vector<double> weights;  // empty means 1.0 each

    static HypothesisSet of(std::vector<Timeline> hyps, std::vector<double> weights = {}) {
        HypothesisSet set;
        if (!hyps.empty()) set.session_id = hyps.front().session_id;
        set.hypotheses = std::move(hyps);
        set.weights = std::move(weights);
        return set;
    }
};

/// Per hypothesis, local label -> global label; `global_labels` in creation order.
struct LabelMapping {
    std::vector<std::map<std::string, std::string>> local_to_global;
    std::vector<std::string> global_labels;

    std::size_t global_index(const std::string& label) const {
        const auto it = std::find(global_labels.begin(), global_labels.end(), label);
        if (it == global_labels.end()) throw std::out_of_range("unknown global label " + label);
        return static_cast<std::size_t>(it - global_labels.begin());
    }
};

struct OverlapCost {
    std::vector<std::string> row_labels;  // speakers of a, first-appearance order
    std::vector<std::string> col_labels;  // speakers of b, first-appearance order
    Matrix cost;                          // -(overlap seconds)
};

inline OverlapCost pairwise_overlap_cost(const Timeline& a, const Timeline& b) {
    const auto fa = speaker_footprints(a);
    const auto fb = speaker_footprints(b);
    OverlapCost out;
    out.cost = Matrix(fa.size(), fb.size(), 0.0);
    for (const auto& [label, iv] : fa) out.row_labels.push_back(label);
    for (const auto& [label, iv] : fb) out.col_labels.push_back(label);
    for (std::size_t i = 0; i < fa.size(); ++i)
        for (std::size_t j = 0; j < fb.size(); ++j) out.cost(i, j) = -overlap_duration(fa[i].second, fb[j].second);
    return out;
}

namespace detail {

inline void check_hypotheses(const HypothesisSet& hyps) {
    if (hyps.hypotheses.empty()) throw std::invalid_argument("fusion needs at least one hypothesis");
    if (!hyps.weights.empty() && hyps.weights.size() != hyps.hypotheses.size()) {
        throw std::invalid_argument("weights must match the number of hypotheses");
    }
    for (double w : hyps.weights) {
        if (!(w > 0.0) || !std::isfinite(w)) throw std::invalid_argument("hypothesis weights must be positive");
    }
}

inline Timeline apply_mapping(const Timeline& hyp, const std::map<std::string, std::string>& mapping) {
    Timeline out{hyp.session_id, hyp.turns};
    for (auto& t : out.turns) t.speaker = mapping.at(t.speaker);
    return normalize(out);
}

inline double round_half_even(double x) {
    const double fl = std::floor(x);
    const double frac = x - fl;
    constexpr double eps = 1e-9;
    if (frac < 0.5 - eps) return fl;
    if (frac > 0.5 + eps) return fl + 1.0;
    return std::fmod(fl, 2.0) == 0.0 ? fl : fl + 1.0;
}

}  // namespace detail

inline LabelMapping align_labels(const HypothesisSet& hyps) {
    detail::check_hypotheses(hyps);
    const std::size_t K = hyps.hypotheses.size();
    std::vector<Timeline> norm;
    norm.reserve(K);
    for (const auto& h : hyps.hypotheses) norm.push_back(normalize(h));

    std::size_t anchor = 0;
    for (std::size_t k = 1; k < K; ++k)
        if (total_speech(norm[k]) > total_speech(norm[anchor])) anchor = k;

    LabelMapping mapping;
    mapping.local_to_global.resize(K);
    for (const auto& label : speakers_of(norm[anchor])) {
        mapping.local_to_global[anchor][label] = label;
        mapping.global_labels.push_back(label);
    }
    Timeline merged{norm[anchor].session_id, norm[anchor].turns};

    for (std::size_t k = 0; k < K; ++k) {
        if (k == anchor) continue;
        const auto locals = speakers_of(norm[k]);
        std::map<std::string, IntervalList> global_fp;
        for (const auto& [label, iv] : speaker_footprints(merged)) global_fp[label] = iv;

        Matrix cost(locals.size(), mapping.global_labels.size(), 0.0);
        for (std::size_t i = 0; i < locals.size(); ++i) {
            const auto local_iv = speaker_intervals(norm[k], locals[i]);
            for (std::size_t g = 0; g < mapping.global_labels.size(); ++g) {
                const auto it = global_fp.find(mapping.global_labels[g]);
                if (it != global_fp.end()) cost(i, g) = -overlap_duration(local_iv, it->second);
            }
        }
        const auto solution = hungarian(cost);
        std::set<std::string> taken(mapping.global_labels.begin(), mapping.global_labels.end());
        for (std::size_t i = 0; i < locals.size(); ++i) {
            const int g = solution.row_to_col[i];
            if (g >= 0 && cost(i, static_cast<std::size_t>(g)) < 0.0) {
                mapping.local_to_global[k][locals[i]] = mapping.global_labels[static_cast<std::size_t>(g)];
                continue;
            }
            // No temporal support in the matched column: new global speaker.
            std::string fresh = locals[i];
            for (int n = 0; taken.count(fresh) != 0; ++n) {
                fresh = locals[i] + "_" + std::to_string(k) + (n > 0 ? "_" + std::to_string(n) : "");
            }
            taken.insert(fresh);
            mapping.global_labels.push_back(fresh);
            mapping.local_to_global[k][locals[i]] = fresh;
        }
        const Timeline mapped = detail::apply_mapping(norm[k], mapping.local_to_global[k]);
        merged.turns.insert(merged.turns.end(), mapped.turns.begin(), mapped.turns.end());
        merged = normalize(merged);
    }
    return mapping;
}

/// Final per-hypothesis voting weights (sum to 1).
inline std::vector<double> hypothesis_weights(const std::vector<Timeline>& mapped, const std::vector<double>& user,
                                              RankWeighting mode) {
    const std::size_t K = mapped.size();
    std::vector<double> w(K, 1.0);
    if (mode == RankWeighting::linear && K > 1) {
        std::vector<std::vector<std::pair<std::string, IntervalList>>> fps;
        for (const auto& h : mapped) fps.push_back(speaker_footprints(h));
        std::vector<double> agreement(K, 0.0);
        for (std::size_t a = 0; a < K; ++a) {
            for (std::size_t b = 0; b < K; ++b) {
                if (a == b) continue;
                for (const auto& [label, iv] : fps[a]) {
                    for (const auto& [other, jv] : fps[b]) {
                        if (other == label) agreement[a] += overlap_duration(iv, jv);
                    }
                }
            }
        }
        std::vector<std::size_t> order(K);
        for (std::size_t k = 0; k < K; ++k) order[k] = k;
        std::stable_sort(order.begin(), order.end(),
                         [&](std::size_t x, std::size_t y) { return agreement[x] > agreement[y]; });
        const double denom = static_cast<double>(K * (K + 1)) / 2.0;
        for (std::size_t r = 0; r < K; ++r) w[order[r]] = static_cast<double>(K - r) / denom;
    }
    double total = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
        if (!user.empty()) w[k] *= user[k];
        total += w[k];
    }
    for (double& x : w) x /= total;
    return w;
}

inline Timeline dover_lap_vote(const HypothesisSet& hyps, const LabelMapping& mapping,
                               RankWeighting mode = RankWeighting::linear) {
    detail::check_hypotheses(hyps);
    const std::size_t K = hyps.hypotheses.size();
    if (mapping.local_to_global.size() != K) throw std::invalid_argument("mapping does not cover every hypothesis");

    std::vector<Timeline> mapped;
    for (std::size_t k = 0; k < K; ++k) {
        const Timeline h = normalize(hyps.hypotheses[k]);
        for (const auto& t : h.turns) {
            if (mapping.local_to_global[k].count(t.speaker) == 0) {
                throw std::invalid_argument("label " + t.speaker + " missing from mapping");
            }
        }
        mapped.push_back(detail::apply_mapping(h, mapping.local_to_global[k]));
    }
    const auto weights = hypothesis_weights(mapped, hyps.weights, mode);
    const std::size_t G = mapping.global_labels.size();

    struct Event {
        double time;
        std::size_t hyp;
        std::size_t speaker;
        int delta;
    };
    std::vector<Event> events;
    for (std::size_t k = 0; k < K; ++k) {
        for (const auto& t : mapped[k].turns) {
            const std::size_t g = mapping.global_index(t.speaker);
            events.push_back({t.start, k, g, +1});
            events.push_back({t.end, k, g, -1});
        }
    }
    std::sort(events.begin(), events.end(), [](const Event& a, const Event& b) { return a.time < b.time; });

    Timeline out{hyps.session_id.empty() ? mapped.front().session_id : hyps.session_id, {}};
    std::vector<std::vector<int>> active(K, std::vector<int>(G, 0));
    std::vector<int> count(K, 0);
    std::vector<double> score(G);
    std::vector<std::size_t> rank(G);
    std::size_t e = 0;
    while (e < events.size()) {
        const double t0 = events[e].time;
        while (e < events.size() && events[e].time == t0) {
            const auto& ev = events[e++];
            active[ev.hyp][ev.speaker] += ev.delta;
            count[ev.hyp] += ev.delta;
        }
        if (e == events.size()) break;
        const double t1 = events[e].time;

        double expected = 0.0;
        for (std::size_t k = 0; k < K; ++k) expected += weights[k] * count[k];
        const auto n_hat = static_cast<std::size_t>(detail::round_half_even(expected));
        if (n_hat == 0) continue;

        std::fill(score.begin(), score.end(), 0.0);
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t g = 0; g < G; ++g)
                if (active[k][g] > 0) score[g] += weights[k];
        for (std::size_t g = 0; g < G; ++g) rank[g] = g;
        std::stable_sort(rank.begin(), rank.end(),
                         [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
        for (std::size_t r = 0; r < n_hat && r < G; ++r) {
            if (score[rank[r]] <= 0.0) break;
            out.turns.push_back({mapping.global_labels[rank[r]], t0, t1});
        }
    }
    return normalize(out);
}

struct FusionParams {
    RankWeighting rank_weighting = RankWeighting::linear;
};

inline Timeline fuse(const HypothesisSet& hyps, const FusionParams& params = {}) {
    return dover_lap_vote(hyps, align_labels(hyps), params.rank_weighting);
}

}  // namespace mcdiar
