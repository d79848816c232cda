#pragma once

// Shared test helpers: random inputs and brute-force reference implementations.
// The oracles deliberately avoid the library's own algorithms.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "mcdiar/mcdiar.hpp"

namespace testing_support {

using mcdiar::Matrix;
using mcdiar::Timeline;

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline std::filesystem::path temp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / ("mcdiar_test_" + name);
    std::filesystem::remove_all(p);
    std::filesystem::create_directories(p);
    return p;
}

/// Random timeline with times on a `grid`-second lattice.
inline Timeline random_timeline(std::mt19937_64& rng, int max_speakers, int max_turns, double length,
                                double grid = 0.01, const std::string& session = "rnd",
                                const std::string& prefix = "S") {
    std::uniform_int_distribution<int> n_spk(1, max_speakers);
    std::uniform_int_distribution<int> n_turns(1, max_turns);
    const int S = n_spk(rng);
    const int N = n_turns(rng);
    const auto ticks = static_cast<long long>(std::llround(length / grid));
    std::uniform_int_distribution<long long> pos(0, ticks - 1);
    std::uniform_int_distribution<int> who(0, S - 1);
    Timeline tl{session, {}};
    for (int i = 0; i < N; ++i) {
        long long a = pos(rng), b = pos(rng);
        if (a == b) b = a + 1;
        if (a > b) std::swap(a, b);
        tl.turns.push_back({prefix + std::to_string(who(rng)), static_cast<double>(a) * grid,
                            static_cast<double>(b) * grid});
    }
    return tl;
}

// ---------------------------------------------------------------------------
// Assignment oracle: every permutation of the zero-padded square problem, in
// lexicographic order, so the first optimum found is the lexicographic minimum.

struct BruteAssignment {
    std::vector<int> row_to_col;
    double cost = 0.0;
};

inline BruteAssignment brute_force_assignment(const Matrix& c) {
    const std::size_t n = c.rows(), m = c.cols();
    const std::size_t size = std::max(n, m);
    std::vector<std::size_t> perm(size);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    std::vector<std::size_t> best_perm;
    do {
        double total = 0.0;
        for (std::size_t r = 0; r < n; ++r)
            if (perm[r] < m) total += c(r, perm[r]);
        if (total < best) {
            best = total;
            best_perm = perm;
        }
    } while (std::next_permutation(perm.begin(), perm.end()));
    BruteAssignment out;
    out.cost = best;
    out.row_to_col.assign(n, -1);
    for (std::size_t r = 0; r < n; ++r)
        if (best_perm[r] < m) out.row_to_col[r] = static_cast<int>(best_perm[r]);
    return out;
}

// ---------------------------------------------------------------------------
// DER oracle: 10 ms frames judged at their centres, scored region tested point
// by point, and the error minimized over every partial injective mapping.

struct BruteDer {
    double der = 0.0;
    double speech = 0.0;
};

inline bool inside(const Timeline& tl, const std::string& spk, double t) {
    for (const auto& turn : tl.turns)
        if (turn.speaker == spk && turn.start <= t && t < turn.end) return true;
    return false;
}

inline void enumerate_maps(std::size_t i, std::size_t R, std::size_t S, std::vector<int>& cur, std::vector<char>& used,
                           const std::function<void(const std::vector<int>&)>& visit) {
    if (i == R) {
        visit(cur);
        return;
    }
    cur[i] = -1;
    enumerate_maps(i + 1, R, S, cur, used, visit);
    for (std::size_t s = 0; s < S; ++s) {
        if (used[s]) continue;
        used[s] = 1;
        cur[i] = static_cast<int>(s);
        enumerate_maps(i + 1, R, S, cur, used, visit);
        used[s] = 0;
    }
}

inline BruteDer brute_force_der(const Timeline& ref, const Timeline& sys, double uem_start, double uem_end,
                                double collar, bool score_overlaps = true, double step = 0.01) {
    std::vector<std::string> rs, ss;
    for (const auto& t : ref.turns)
        if (std::find(rs.begin(), rs.end(), t.speaker) == rs.end()) rs.push_back(t.speaker);
    for (const auto& t : sys.turns)
        if (std::find(ss.begin(), ss.end(), t.speaker) == ss.end()) ss.push_back(t.speaker);
    std::vector<double> boundaries;
    for (const auto& t : ref.turns) {
        boundaries.push_back(t.start);
        boundaries.push_back(t.end);
    }

    // per scored frame: which ref / sys speakers are active
    std::vector<std::vector<char>> ract, sact;
    const auto frames = static_cast<long long>(std::llround((uem_end - uem_start) / step));
    for (long long f = 0; f < frames; ++f) {
        const double t = uem_start + (static_cast<double>(f) + 0.5) * step;
        bool in_collar = false;
        for (double b : boundaries)
            if (std::abs(t - b) < collar) in_collar = true;
        if (in_collar) continue;
        std::vector<char> r(rs.size()), s(ss.size());
        int nref = 0;
        for (std::size_t i = 0; i < rs.size(); ++i) nref += r[i] = inside(ref, rs[i], t);
        for (std::size_t j = 0; j < ss.size(); ++j) s[j] = inside(sys, ss[j], t);
        if (!score_overlaps && nref > 1) continue;
        ract.push_back(std::move(r));
        sact.push_back(std::move(s));
    }

    double speech = 0.0;
    for (const auto& r : ract)
        for (char x : r) speech += x;
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> cur(rs.size(), -1);
    std::vector<char> used(ss.size(), 0);
    enumerate_maps(0, rs.size(), ss.size(), cur, used, [&](const std::vector<int>& map) {
        double err = 0.0;
        for (std::size_t f = 0; f < ract.size(); ++f) {
            int nr = 0, ns = 0, correct = 0;
            for (std::size_t i = 0; i < rs.size(); ++i) {
                nr += ract[f][i];
                if (ract[f][i] && map[i] >= 0 && sact[f][static_cast<std::size_t>(map[i])]) ++correct;
            }
            for (char x : sact[f]) ns += x;
            err += std::max(nr, ns) - correct;
        }
        best = std::min(best, err);
    });
    BruteDer out;
    out.speech = speech * step;
    out.der = speech > 0 ? 100.0 * best / speech : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Constrained partition oracle: every labeling with all k clusters used and no
// cannot-link pair sharing a label; cost = sum of (1 - cos) to spherical centroids.

inline double spherical_cost(const Matrix& emb, const std::vector<int>& labels, int k) {
    const std::size_t D = emb.cols();
    double total = 0.0;
    for (int c = 0; c < k; ++c) {
        std::vector<double> mean(D, 0.0);
        for (std::size_t i = 0; i < labels.size(); ++i)
            if (labels[i] == c)
                for (std::size_t d = 0; d < D; ++d) mean[d] += emb(i, d);
        double norm = 0.0;
        for (double x : mean) norm += x * x;
        norm = std::sqrt(norm);
        for (std::size_t i = 0; i < labels.size(); ++i) {
            if (labels[i] != c) continue;
            double dp = 0.0;
            for (std::size_t d = 0; d < D; ++d) dp += emb(i, d) * (norm > 0 ? mean[d] / norm : 0.0);
            total += 1.0 - dp;
        }
    }
    return total;
}

struct BrutePartition {
    bool feasible = false;
    double cost = std::numeric_limits<double>::infinity();
    std::vector<int> labels;
};

inline BrutePartition brute_force_partition(const Matrix& emb, const std::vector<std::pair<int, int>>& cannot_link,
                                            int k) {
    const std::size_t n = emb.rows();
    BrutePartition best;
    std::vector<int> labels(n, 0);
    std::size_t total = 1;
    for (std::size_t i = 0; i < n; ++i) total *= static_cast<std::size_t>(k);
    for (std::size_t code = 0; code < total; ++code) {
        std::size_t x = code;
        for (std::size_t i = 0; i < n; ++i) {
            labels[i] = static_cast<int>(x % static_cast<std::size_t>(k));
            x /= static_cast<std::size_t>(k);
        }
        std::vector<char> used(static_cast<std::size_t>(k), 0);
        for (int l : labels) used[static_cast<std::size_t>(l)] = 1;
        if (std::count(used.begin(), used.end(), 1) != k) continue;
        bool ok = true;
        for (auto [a, b] : cannot_link)
            if (labels[static_cast<std::size_t>(a)] == labels[static_cast<std::size_t>(b)]) ok = false;
        if (!ok) continue;
        const double c = spherical_cost(emb, labels, k);
        if (c < best.cost - 1e-12) {
            best.feasible = true;
            best.cost = c;
            best.labels = labels;
        }
    }
    return best;
}

/// Same partition up to renaming of labels.
inline bool same_partition(const std::vector<int>& a, const std::vector<int>& b) {
    if (a.size() != b.size()) return false;
    std::map<int, int> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        auto [it1, new1] = ab.emplace(a[i], b[i]);
        auto [it2, new2] = ba.emplace(b[i], a[i]);
        if (it1->second != b[i] || it2->second != a[i]) return false;
    }
    return true;
}

inline std::vector<double> random_unit(std::mt19937_64& rng, std::size_t D) {
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> v(D);
    double s = 0.0;
    for (auto& x : v) {
        x = n(rng);
        s += x * x;
    }
    s = std::sqrt(s);
    for (auto& x : v) x /= s;
    return v;
}

/// Unit vector at angular distance `spread` (radians, roughly) around `center`.
inline std::vector<double> perturbed(std::mt19937_64& rng, const std::vector<double>& center, double spread) {
    std::normal_distribution<double> n(0.0, spread);
    std::vector<double> v = center;
    double s = 0.0;
    for (auto& x : v) {
        x += n(rng);
        s += x * x;
    }
    s = std::sqrt(s);
    for (auto& x : v) x /= s;
    return v;
}

// ---------------------------------------------------------------------------
// Joint-permutation fusion oracle: choose one bijection per non-reference
// hypothesis onto the reference labels to maximize total pairwise overlap.

inline double joint_overlap(const std::vector<Timeline>& hyps, const std::vector<std::map<std::string, std::string>>& maps) {
    double total = 0.0;
    for (std::size_t a = 0; a < hyps.size(); ++a) {
        for (std::size_t b = a + 1; b < hyps.size(); ++b) {
            for (const auto& ta : hyps[a].turns) {
                for (const auto& tb : hyps[b].turns) {
                    if (maps[a].at(ta.speaker) != maps[b].at(tb.speaker)) continue;
                    total += std::max(0.0, std::min(ta.end, tb.end) - std::max(ta.start, tb.start));
                }
            }
        }
    }
    return total;
}

inline double best_joint_overlap(const std::vector<Timeline>& hyps, const std::vector<std::string>& labels) {
    // every hypothesis uses exactly `labels`; the first keeps its naming
    std::vector<std::map<std::string, std::string>> maps(hyps.size());
    for (const auto& l : labels) maps[0][l] = l;
    double best = -1.0;
    std::function<void(std::size_t)> rec = [&](std::size_t h) {
        if (h == hyps.size()) {
            best = std::max(best, joint_overlap(hyps, maps));
            return;
        }
        std::vector<std::string> perm = labels;
        std::sort(perm.begin(), perm.end());
        do {
            for (std::size_t i = 0; i < labels.size(); ++i) maps[h][labels[i]] = perm[i];
            rec(h + 1);
        } while (std::next_permutation(perm.begin(), perm.end()));
    };
    rec(1);
    return best;
}

// ---------------------------------------------------------------------------
// Pipeline fixtures

inline mcdiar::BundleSet simple_bundles(const std::string& session, std::size_t segments, std::size_t S,
                                        std::size_t T, std::size_t D, double frame_rate) {
    mcdiar::BundleSet set;
    set.session_id = session;
    set.local_speakers = S;
    set.nominal_frames = T;
    set.dim = D;
    set.frame_rate = frame_rate;
    for (std::size_t i = 0; i < segments; ++i) {
        mcdiar::SegmentBundle b;
        b.segment_index = static_cast<int>(i);
        b.start = static_cast<double>(i * T) / frame_rate;
        b.frame_rate = frame_rate;
        b.activities = Matrix(S, T, 0.0);
        b.embeddings = Matrix(S, D, 0.0);
        set.bundles.push_back(std::move(b));
    }
    return set;
}

}  // namespace testing_support
