#pragma once

// Seeded conversation simulator.
//
// Ground truth: every speaker alternates exponentially distributed utterances
// and pauses; speakers are independent, so overlap arises naturally. All
// times sit on the frame grid so rasterization is exact.
//
// Channel synthesis mimics the local network's output per segment: active
// speakers occupy streams in random order, activity boundaries are jittered,
// embeddings are the speaker centroid plus isotropic noise whose standard
// deviation shrinks as 1/sqrt(active seconds). Optional error injection:
// mid-segment identity swaps between two streams, and outlier channels with
// random frame flips and inflated embedding noise.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "mcdiar/errors.hpp"
#include "mcdiar/local_io.hpp"
#include "mcdiar/matrix.hpp"
#include "mcdiar/random.hpp"
#include "mcdiar/timeline.hpp"

namespace mcdiar {

struct SimConfig {
    int n_speakers = 4;
    int local_speakers = 4;  // S, streams per segment
    double session_length = 600.0;
    double mean_pause = 2.0;
    double mean_utterance = 3.0;
    std::optional<double> overlap_fraction;  // target; unset means unconstrained
    int embedding_dim = 16;
    double embedding_noise_base = 1.2;  // sigma0
    double min_separation = 0.8;
    double permutation_error_rate = 0.05;
    int n_channels = 1;
    std::set<int> channel_outlier_indices;
    double segment_size = 80.0;
    double frame_rate = 10.0;
    int boundary_jitter_frames = 2;
    double outlier_flip_prob = 0.3;
    double outlier_noise_factor = 2.0;
    // extra relative noise per unit fraction of a stream's speech that is overlapped; 0 disables
    double overlap_noise_factor = 0.0;
    std::uint64_t seed = 1;
    // mixed into channel synthesis only, so the same conversation can be re-rendered
    std::uint64_t synthesis_salt = 0;
    std::string session_id = "sim";

    void validate() const {
        if (n_speakers < 1) throw ConfigError("n_speakers must be >= 1");
        if (local_speakers < n_speakers) throw ConfigError("local_speakers must be >= n_speakers");
        if (!(session_length > 0.0) || !(mean_pause > 0.0) || !(mean_utterance > 0.0)) {
            throw ConfigError("durations must be positive");
        }
        if (!(segment_size > 0.0) || !(frame_rate > 0.0)) throw ConfigError("segment_size and frame_rate must be positive");
        if (embedding_dim < 1) throw ConfigError("embedding_dim must be >= 1");
        if (embedding_noise_base < 0.0) throw ConfigError("embedding_noise_base must be >= 0");
        auto rate = [](double r, const char* name) {
            if (!(r >= 0.0 && r <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0,1]");
        };
        rate(permutation_error_rate, "permutation_error_rate");
        rate(outlier_flip_prob, "outlier_flip_prob");
        if (overlap_fraction) rate(*overlap_fraction, "overlap_fraction");
        if (min_separation < 0.0 || min_separation > 2.0) throw ConfigError("min_separation must lie in [0,2]");
        if (n_channels < 1) throw ConfigError("n_channels must be >= 1");
        for (int c : channel_outlier_indices)
            if (c < 0 || c >= n_channels) throw ConfigError("outlier channel index out of range");
        if (boundary_jitter_frames < 0) throw ConfigError("boundary_jitter_frames must be >= 0");
        if (session_id.empty()) throw ConfigError("session_id must not be empty");
    }

    std::size_t total_frames() const { return static_cast<std::size_t>(std::llround(session_length * frame_rate)); }
    std::size_t segment_frames() const {
        return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(segment_size * frame_rate)));
    }
};

inline std::string sim_speaker_name(int s) { return "S" + std::to_string(s); }

struct GroundTruth {
    Timeline timeline;
    Matrix speaker_centroids;  // n_speakers x D
    double overlap_fraction = 0.0;
};

/// Per speaker, one flag per frame of the session.
inline std::vector<std::vector<char>> rasterize_truth(const Timeline& timeline, int n_speakers, std::size_t frames,
                                                      double frame_rate) {
    std::vector<std::vector<char>> out(static_cast<std::size_t>(n_speakers), std::vector<char>(frames, 0));
    for (const auto& t : timeline.turns) {
        const int s = std::stoi(t.speaker.substr(1));
        const auto a = static_cast<std::size_t>(std::llround(t.start * frame_rate));
        const auto b = std::min(frames, static_cast<std::size_t>(std::llround(t.end * frame_rate)));
        for (std::size_t f = a; f < b; ++f) out[static_cast<std::size_t>(s)][f] = 1;
    }
    return out;
}

/// Overlapped time over speech time (union of speakers).
inline double overlap_fraction_of(const std::vector<std::vector<char>>& raster) {
    if (raster.empty()) return 0.0;
    std::size_t speech = 0, overlap = 0;
    for (std::size_t f = 0; f < raster.front().size(); ++f) {
        int n = 0;
        for (const auto& row : raster) n += row[f];
        if (n >= 1) ++speech;
        if (n >= 2) ++overlap;
    }
    return speech == 0 ? 0.0 : static_cast<double>(overlap) / static_cast<double>(speech);
}

namespace detail {

inline Timeline draw_conversation(const SimConfig& cfg, Rng& rng) {
    const double fr = cfg.frame_rate;
    const auto n_frames = static_cast<long long>(cfg.total_frames());
    std::exponential_distribution<double> utterance(1.0 / cfg.mean_utterance);
    std::exponential_distribution<double> pause(1.0 / cfg.mean_pause);
    std::uniform_real_distribution<double> offset(0.0, cfg.mean_utterance + cfg.mean_pause);
    Timeline tl{cfg.session_id, {}};
    for (int s = 0; s < cfg.n_speakers; ++s) {
        double t = offset(rng);
        while (true) {
            const double end = t + utterance(rng);
            long long a = std::llround(t * fr);
            long long b = std::llround(end * fr);
            if (a >= n_frames) break;
            b = std::min(std::max(b, a + 1), n_frames);
            tl.turns.push_back({sim_speaker_name(s), static_cast<double>(a) / fr, static_cast<double>(b) / fr});
            t = end + pause(rng);
        }
    }
    return normalize(tl);
}

}  // namespace detail

inline GroundTruth generate_ground_truth(const SimConfig& cfg) {
    cfg.validate();
    if (cfg.overlap_fraction && cfg.n_speakers == 1 && *cfg.overlap_fraction > 0.1) {
        throw ConfigError("a single speaker cannot produce overlapped speech");
    }
    GroundTruth truth;
    Rng rng(derive_seed(cfg.seed, {0x7275746855ULL}));
    const std::size_t frames = cfg.total_frames();
    constexpr int kMaxAttempts = 200;
    bool accepted = false;
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        truth.timeline = detail::draw_conversation(cfg, rng);
        truth.overlap_fraction =
            overlap_fraction_of(rasterize_truth(truth.timeline, cfg.n_speakers, frames, cfg.frame_rate));
        if (!cfg.overlap_fraction || std::abs(truth.overlap_fraction - *cfg.overlap_fraction) <= 0.1) {
            accepted = true;
            break;
        }
    }
    if (!accepted) {
        throw ConfigError("overlap fraction " + std::to_string(*cfg.overlap_fraction) + " not reachable with " +
                          std::to_string(cfg.n_speakers) + " speakers (last draw " +
                          std::to_string(truth.overlap_fraction) + ")");
    }

    const auto dim = static_cast<std::size_t>(cfg.embedding_dim);
    truth.speaker_centroids = Matrix(static_cast<std::size_t>(cfg.n_speakers), dim);
    for (int s = 0; s < cfg.n_speakers; ++s) {
        bool placed = false;
        for (int tries = 0; tries < 10000 && !placed; ++tries) {
            const auto v = random_unit_vector(dim, rng);
            placed = true;
            for (int o = 0; o < s && placed; ++o) {
                if (1.0 - dot(v, truth.speaker_centroids.row(static_cast<std::size_t>(o))) < cfg.min_separation) {
                    placed = false;
                }
            }
            if (placed) std::copy(v.begin(), v.end(), truth.speaker_centroids.row(static_cast<std::size_t>(s)).begin());
        }
        if (!placed) throw ConfigError("cannot place speaker centroids with the requested separation");
    }
    return truth;
}

/// Unit vector around `direction` with isotropic noise of per-dimension
/// standard deviation sigma0 / sqrt(active_seconds), renormalized.
inline std::vector<double> noisy_embedding(std::span<const double> direction, double active_seconds, double sigma0,
                                           Rng& rng) {
    const double sigma = sigma0 / std::sqrt(std::max(active_seconds, 1e-3));
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(direction.begin(), direction.end());
    if (sigma > 0.0) {
        for (double& x : v) x += sigma * normal(rng);
    }
    return unit_normalized(v);
}

struct ChannelSynthesis {
    BundleSet bundles;
    std::vector<int> swapped_segments;  // segments with an injected identity swap
};

inline ChannelSynthesis synthesize_channel(const GroundTruth& truth, const SimConfig& cfg, int channel) {
    cfg.validate();
    if (channel < 0 || channel >= cfg.n_channels) throw ConfigError("channel index out of range");
    Rng rng(derive_seed(cfg.seed, {0x73796e7468ULL, cfg.synthesis_salt, static_cast<std::uint64_t>(channel)}));
    const bool outlier = cfg.channel_outlier_indices.count(channel) != 0;
    const double fr = cfg.frame_rate;
    const std::size_t n_frames = cfg.total_frames();
    const std::size_t seg_frames = cfg.segment_frames();
    const auto S = static_cast<std::size_t>(cfg.local_speakers);
    const auto D = static_cast<std::size_t>(cfg.embedding_dim);
    const auto raster = rasterize_truth(truth.timeline, cfg.n_speakers, n_frames, fr);

    ChannelSynthesis out;
    auto& set = out.bundles;
    set.session_id = cfg.session_id;
    set.local_speakers = S;
    set.nominal_frames = seg_frames;
    set.dim = D;
    set.frame_rate = fr;
    set.embedding_source = EmbeddingSource::eend_vc;

    const int J = cfg.boundary_jitter_frames;
    std::uniform_int_distribution<int> jitter(-J, J);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double noise_base = cfg.embedding_noise_base * (outlier ? cfg.outlier_noise_factor : 1.0);

    for (std::size_t seg_start = 0, index = 0; seg_start < n_frames; seg_start += seg_frames, ++index) {
        const std::size_t T = std::min(seg_frames, n_frames - seg_start);
        std::vector<int> active;
        for (int s = 0; s < cfg.n_speakers; ++s) {
            const auto& row = raster[static_cast<std::size_t>(s)];
            if (std::any_of(row.begin() + static_cast<std::ptrdiff_t>(seg_start),
                            row.begin() + static_cast<std::ptrdiff_t>(seg_start + T), [](char c) { return c != 0; })) {
                active.push_back(s);
            }
        }
        std::vector<std::size_t> slots(S);
        for (std::size_t j = 0; j < S; ++j) slots[j] = j;
        std::shuffle(slots.begin(), slots.end(), rng);

        // owner[slot][t]: speaker whose speech the slot carries at frame t (-1 none)
        std::vector<std::vector<int>> owner(S, std::vector<int>(T, -1));
        for (std::size_t a = 0; a < active.size(); ++a) {
            const int s = active[a];
            const auto& row = raster[static_cast<std::size_t>(s)];
            auto& dst = owner[slots[a]];
            std::size_t t = 0;
            while (t < T) {
                if (!row[seg_start + t]) {
                    ++t;
                    continue;
                }
                std::size_t e = t;
                while (e < T && row[seg_start + e]) ++e;
                long long a0 = static_cast<long long>(t), b0 = static_cast<long long>(e);
                if (J > 0) {
                    // segment cuts are not speech boundaries and stay put
                    const bool cut_start = t == 0 && seg_start > 0 && raster[static_cast<std::size_t>(s)][seg_start - 1];
                    const bool cut_end = e == T && seg_start + T < n_frames && row[seg_start + T];
                    if (!cut_start) a0 += jitter(rng);
                    if (!cut_end) b0 += jitter(rng);
                    a0 = std::clamp<long long>(a0, 0, static_cast<long long>(T) - 1);
                    b0 = std::clamp<long long>(b0, a0 + 1, static_cast<long long>(T));
                }
                for (long long f = a0; f < b0; ++f) dst[static_cast<std::size_t>(f)] = s;
                t = e;
            }
        }

        if (active.size() >= 2 && unit(rng) < cfg.permutation_error_rate) {
            std::uniform_int_distribution<std::size_t> pick(0, active.size() - 1);
            const std::size_t x = pick(rng);
            std::size_t y = pick(rng);
            while (y == x) y = pick(rng);
            for (std::size_t t = T / 2; t < T; ++t) std::swap(owner[slots[x]][t], owner[slots[y]][t]);
            out.swapped_segments.push_back(static_cast<int>(index));
        }

        SegmentBundle b;
        b.segment_index = static_cast<int>(index);
        b.start = static_cast<double>(seg_start) / fr;
        b.frame_rate = fr;
        b.embedding_source = set.embedding_source;
        b.activities = Matrix(S, T, 0.0);
        b.embeddings = Matrix(S, D, 0.0);
        for (std::size_t j = 0; j < S; ++j) {
            auto act = b.activities.row(j);
            std::vector<double> seconds(static_cast<std::size_t>(cfg.n_speakers), 0.0);
            std::size_t overlapped = 0, total = 0;
            for (std::size_t t = 0; t < T; ++t) {
                const int s = owner[j][t];
                if (s < 0) continue;
                act[t] = 1.0;
                seconds[static_cast<std::size_t>(s)] += 1.0 / fr;
                ++total;
                int others = 0;
                for (int o = 0; o < cfg.n_speakers; ++o)
                    if (o != s && raster[static_cast<std::size_t>(o)][seg_start + t]) ++others;
                if (others > 0) ++overlapped;
            }
            if (outlier) {
                for (std::size_t t = 0; t < T; ++t)
                    if (unit(rng) < cfg.outlier_flip_prob) act[t] = 1.0 - act[t];
            }
            std::vector<double> emb;
            if (total == 0) {
                emb = random_unit_vector(D, rng);
            } else {
                // a stream carrying several speakers (after a swap) embeds their time-weighted mixture
                std::vector<double> mixture(D, 0.0);
                double active_seconds = 0.0;
                for (std::size_t s = 0; s < seconds.size(); ++s) {
                    if (seconds[s] == 0.0) continue;
                    active_seconds += seconds[s];
                    const auto c = truth.speaker_centroids.row(s);
                    for (std::size_t d = 0; d < D; ++d) mixture[d] += seconds[s] * c[d];
                }
                double sigma0 = noise_base;
                if (cfg.overlap_noise_factor > 0.0) {
                    sigma0 *= 1.0 + cfg.overlap_noise_factor * static_cast<double>(overlapped) / static_cast<double>(total);
                }
                emb = noisy_embedding(unit_normalized(mixture), active_seconds, sigma0, rng);
            }
            std::copy(emb.begin(), emb.end(), b.embeddings.row(j).begin());
        }
        set.bundles.push_back(std::move(b));
    }
    return out;
}

}  // namespace mcdiar
