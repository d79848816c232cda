#pragma once

// Two-step constrained clustering of per-segment speaker embeddings.
//
// 1. Constrained average-linkage AHC estimates the speaker count. Cannot-link
//    pairs are a soft constraint: each pair spanning two clusters adds
//    `penalty` to their merge cost.
// 2. The count is capped at the maximum number of speakers and COP-Kmeans
//    refines the partition with cannot-link as a hard constraint.
//
// Embeddings are unit vectors; distance is cosine distance 1 - <a, b>.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "mcdiar/cluster_types.hpp"
#include "mcdiar/errors.hpp"
#include "mcdiar/local_io.hpp"
#include "mcdiar/matrix.hpp"

namespace mcdiar {

enum class ClusteringMethod { cop_kmeans, kmeans, cahc, ahc };

inline const char* to_string(ClusteringMethod m) {
    switch (m) {
        case ClusteringMethod::cop_kmeans: return "cop_kmeans";
        case ClusteringMethod::kmeans: return "kmeans";
        case ClusteringMethod::cahc: return "cahc";
        case ClusteringMethod::ahc: return "ahc";
    }
    return "?";
}

inline ClusteringMethod parse_clustering_method(const std::string& name) {
    if (name == "cop_kmeans") return ClusteringMethod::cop_kmeans;
    if (name == "kmeans") return ClusteringMethod::kmeans;
    if (name == "cahc") return ClusteringMethod::cahc;
    if (name == "ahc") return ClusteringMethod::ahc;
    throw ConfigError("unknown clustering method '" + name + "'");
}

struct ClusteringParams {
    double stop_threshold = 0.6;
    double penalty = 2.0;
    int max_iter = 100;
    std::uint64_t seed = 0;
    ClusteringMethod method = ClusteringMethod::cop_kmeans;
};

/// d(i,j) = 1 - <e_i, e_j>; exact zero diagonal, exactly symmetric.
inline Matrix cosine_distance_matrix(const Matrix& embeddings) {
    const std::size_t n = embeddings.rows();
    Matrix d(n, n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double v = 1.0 - dot(embeddings.row(i), embeddings.row(j));
            d(i, j) = v;
            d(j, i) = v;
        }
    }
    return d;
}

inline Matrix embedding_matrix(const std::vector<LocalStream>& streams) {
    if (streams.empty()) return {};
    Matrix m(streams.size(), streams.front().embedding.size());
    for (std::size_t i = 0; i < streams.size(); ++i) {
        if (streams[i].embedding.size() != m.cols()) throw SchemaError("streams disagree on embedding dimension");
        std::copy(streams[i].embedding.begin(), streams[i].embedding.end(), m.row(i).begin());
    }
    return m;
}

/// Average-linkage AHC with an additive penalty per cannot-link pair spanning
/// the two clusters. Merges the cheapest pair while its cost < stop_threshold;
/// ties go to the smallest (first, second) cluster index pair.
inline ClusterAssignment constrained_ahc(const Matrix& dist, const ConstraintSet& constraints, double stop_threshold,
                                         double penalty) {
    const std::size_t n = dist.rows();
    if (dist.cols() != n) throw std::invalid_argument("distance matrix must be square");
    if (constraints.n_items() != n && !(constraints.n_items() == 0 && constraints.empty())) {
        throw std::invalid_argument("constraint set size does not match distance matrix");
    }
    Matrix sum(n, n);
    std::vector<std::vector<std::size_t>> links(n, std::vector<std::size_t>(n, 0));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) sum(i, j) = dist(i, j);
    for (const auto& [a, b] : constraints.pairs()) {
        links[a][b] = 1;
        links[b][a] = 1;
    }
    std::vector<double> size(n, 1.0);
    std::vector<std::size_t> active(n);
    std::iota(active.begin(), active.end(), 0);
    std::vector<int> owner(n);
    std::iota(owner.begin(), owner.end(), 0);

    while (active.size() > 1) {
        double best = std::numeric_limits<double>::infinity();
        std::size_t bi = 0, bj = 0;
        for (std::size_t x = 0; x < active.size(); ++x) {
            const std::size_t i = active[x];
            for (std::size_t y = x + 1; y < active.size(); ++y) {
                const std::size_t j = active[y];
                const double cost = sum(i, j) / (size[i] * size[j]) + penalty * static_cast<double>(links[i][j]);
                if (cost < best) {
                    best = cost;
                    bi = i;
                    bj = j;
                }
            }
        }
        if (!(best < stop_threshold)) break;
        for (std::size_t c : active) {
            sum(bi, c) += sum(bj, c);
            sum(c, bi) = sum(bi, c);
            links[bi][c] += links[bj][c];
            links[c][bi] = links[bi][c];
        }
        size[bi] += size[bj];
        for (auto& o : owner)
            if (o == static_cast<int>(bj)) o = static_cast<int>(bi);
        active.erase(std::find(active.begin(), active.end(), bj));
    }
    return make_assignment(owner, constraints);
}

/// Unconstrained baseline: penalty 0, violations still reported.
inline ClusterAssignment plain_ahc(const Matrix& dist, const ConstraintSet& constraints, double stop_threshold) {
    return constrained_ahc(dist, constraints, stop_threshold, 0.0);
}

inline int estimate_num_speakers(int ahc_k, int max_speakers) {
    if (ahc_k < 1 || max_speakers < 1) throw std::invalid_argument("speaker counts must be >= 1");
    return std::min(ahc_k, max_speakers);
}

namespace detail {

inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Spherical centroids; an empty cluster keeps `fallback` row if provided.
inline Matrix centroids_of(const Matrix& emb, const std::vector<int>& labels, int k, const Matrix* fallback) {
    Matrix c(static_cast<std::size_t>(k), emb.cols(), 0.0);
    std::vector<std::size_t> count(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < emb.rows(); ++i) {
        auto row = c.row(static_cast<std::size_t>(labels[i]));
        const auto e = emb.row(i);
        for (std::size_t d = 0; d < e.size(); ++d) row[d] += e[d];
        ++count[static_cast<std::size_t>(labels[i])];
    }
    for (std::size_t l = 0; l < c.rows(); ++l) {
        auto row = c.row(l);
        const double norm = std::sqrt(dot(row, row));
        if (count[l] == 0 || norm == 0.0) {
            if (fallback != nullptr && l < fallback->rows()) std::copy(fallback->row(l).begin(), fallback->row(l).end(), row.begin());
            continue;
        }
        for (double& x : row) x /= norm;
    }
    return c;
}

inline double cosine_distance(std::span<const double> a, std::span<const double> b) { return 1.0 - dot(a, b); }

// Merge smallest clusters into their nearest neighbour (by centroid) until k
// remain; split off the worst-fitting items if fewer than k exist.
inline std::vector<int> project_labels(const Matrix& emb, std::vector<int> labels, int k) {
    int current = 1 + *std::max_element(labels.begin(), labels.end());
    while (current > k) {
        std::vector<std::size_t> count(static_cast<std::size_t>(current), 0);
        for (int l : labels) ++count[static_cast<std::size_t>(l)];
        const Matrix cent = centroids_of(emb, labels, current, nullptr);
        // nearest other cluster for each cluster
        std::vector<std::size_t> nearest(count.size(), 0);
        std::vector<double> nearest_d(count.size(), std::numeric_limits<double>::infinity());
        for (std::size_t a = 0; a < count.size(); ++a) {
            for (std::size_t b = 0; b < count.size(); ++b) {
                if (a == b) continue;
                const double d = cosine_distance(cent.row(a), cent.row(b));
                if (d < nearest_d[a]) {
                    nearest_d[a] = d;
                    nearest[a] = b;
                }
            }
        }
        // smallest cluster; equal sizes resolved by proximity so the choice
        // does not depend on label numbering
        std::size_t smallest = 0;
        for (std::size_t l = 1; l < count.size(); ++l) {
            if (count[l] < count[smallest] || (count[l] == count[smallest] && nearest_d[l] < nearest_d[smallest])) {
                smallest = l;
            }
        }
        const std::size_t target = nearest[smallest];
        for (int& l : labels) {
            if (l == static_cast<int>(smallest)) l = static_cast<int>(target);
            if (l > static_cast<int>(smallest)) --l;
        }
        --current;
    }
    while (current < k) {
        const Matrix cent = centroids_of(emb, labels, current, nullptr);
        std::vector<std::size_t> count(static_cast<std::size_t>(current), 0);
        for (int l : labels) ++count[static_cast<std::size_t>(l)];
        std::size_t pick = emb.rows();
        double worst = -1.0;
        for (std::size_t i = 0; i < emb.rows(); ++i) {
            const auto l = static_cast<std::size_t>(labels[i]);
            if (count[l] < 2) continue;
            const double d = cosine_distance(emb.row(i), cent.row(l));
            if (d > worst) {
                worst = d;
                pick = i;
            }
        }
        if (pick == emb.rows()) throw std::invalid_argument("cannot form more clusters than items");
        labels[pick] = current++;
    }
    return labels;
}

// One assignment pass over items in `order`. Returns the failing item on
// infeasibility, or n on success.
inline std::size_t assign_in_order(const Matrix& dist_to_centroid, const ConstraintSet& constraints, bool enforce,
                                   const std::vector<std::size_t>& order, std::vector<int>& out) {
    const std::size_t n = dist_to_centroid.rows();
    const std::size_t k = dist_to_centroid.cols();
    out.assign(n, -1);
    std::vector<std::size_t> candidates(k);
    for (std::size_t i : order) {
        std::iota(candidates.begin(), candidates.end(), 0);
        std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
            return dist_to_centroid(i, a) < dist_to_centroid(i, b);
        });
        bool placed = false;
        for (std::size_t c : candidates) {
            bool blocked = false;
            if (enforce) {
                for (std::size_t p : constraints.partners(i)) {
                    if (out[p] == static_cast<int>(c)) {
                        blocked = true;
                        break;
                    }
                }
            }
            if (!blocked) {
                out[i] = static_cast<int>(c);
                placed = true;
                break;
            }
        }
        if (!placed) return i;
    }
    return n;
}

inline std::vector<int> kmeans_core(const Matrix& emb, const ConstraintSet& constraints, int k,
                                    const std::vector<int>& init_labels, int max_iter, std::uint64_t seed,
                                    bool enforce) {
    const std::size_t n = emb.rows();
    if (k < 1 || static_cast<std::size_t>(k) > n) throw std::invalid_argument("k must lie in [1, n_items]");
    if (init_labels.size() != n) throw std::invalid_argument("init labels must cover every item");
    if (constraints.n_items() != n && !constraints.empty()) {
        throw std::invalid_argument("constraint set size does not match embeddings");
    }
    const ConstraintSet none(n);
    const ConstraintSet& cs = constraints.n_items() == n ? constraints : none;
    const auto uk = static_cast<std::size_t>(k);

    std::vector<int> labels = project_labels(emb, make_assignment(init_labels, cs).labels, k);
    Matrix cent = centroids_of(emb, labels, k, nullptr);
    Matrix dc(n, uk);
    std::vector<int> next;
    for (int iter = 0; iter < max_iter; ++iter) {
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t c = 0; c < uk; ++c) dc(i, c) = cosine_distance(emb.row(i), cent.row(c));

        // Confident items (large gap between nearest and second-nearest) first.
        std::vector<double> margin(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double first = std::numeric_limits<double>::infinity(), second = first;
            for (std::size_t c = 0; c < uk; ++c) {
                const double d = dc(i, c);
                if (d < first) {
                    second = first;
                    first = d;
                } else if (d < second) {
                    second = d;
                }
            }
            margin[i] = uk > 1 ? second - first : 0.0;
        }
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return margin[a] > margin[b]; });

        std::size_t failed = assign_in_order(dc, cs, enforce, order, next);
        const std::size_t first_failure = failed;
        for (int attempt = 1; failed < n && attempt <= 10; ++attempt) {
            std::mt19937_64 rng(mix_seed(seed, (static_cast<std::uint64_t>(iter) << 8) | static_cast<std::uint64_t>(attempt)));
            std::shuffle(order.begin(), order.end(), rng);
            failed = assign_in_order(dc, cs, enforce, order, next);
        }
        if (failed < n) throw Infeasible(first_failure);

        // Refill empty clusters with the worst-fitting movable item.
        std::vector<std::size_t> count(uk, 0);
        for (int l : next) ++count[static_cast<std::size_t>(l)];
        for (std::size_t c = 0; c < uk; ++c) {
            if (count[c] > 0) continue;
            std::size_t pick = n;
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t i = 0; i < n; ++i) {
                const auto own = static_cast<std::size_t>(next[i]);
                if (count[own] < 2) continue;
                const double d = dc(i, own) - dc(i, c);
                if (d > worst) {
                    worst = d;
                    pick = i;
                }
            }
            if (pick == n) break;
            --count[static_cast<std::size_t>(next[pick])];
            next[pick] = static_cast<int>(c);
            ++count[c];
        }

        if (next == labels) break;
        labels = next;
        cent = centroids_of(emb, labels, k, &cent);
    }
    return labels;
}

}  // namespace detail

/// COP-Kmeans: spherical Lloyd iterations where each item joins the nearest
/// centroid whose cluster holds none of its cannot-link partners. Items are
/// placed in order of decreasing margin; on a dead end up to ten reseeded
/// orders are tried before Infeasible is thrown. Hitting max_iter is not an
/// error; the labels reached so far are returned.
inline ClusterAssignment cop_kmeans(const Matrix& embeddings, const ConstraintSet& constraints, int k,
                                    const ClusterAssignment& init, int max_iter = 100, std::uint64_t seed = 0) {
    const auto labels = detail::kmeans_core(embeddings, constraints, k, init.labels, max_iter, seed, true);
    return make_assignment(labels, constraints);
}

/// Same iteration without assignment blocking.
inline ClusterAssignment plain_kmeans(const Matrix& embeddings, const ConstraintSet& constraints, int k,
                                      const ClusterAssignment& init, int max_iter = 100, std::uint64_t seed = 0) {
    const auto labels = detail::kmeans_core(embeddings, constraints, k, init.labels, max_iter, seed, false);
    return make_assignment(labels, constraints);
}

/// Sum over items of cosine distance to their cluster's spherical centroid.
inline double within_cluster_cost(const Matrix& embeddings, const std::vector<int>& labels) {
    if (labels.empty()) return 0.0;
    const int k = 1 + *std::max_element(labels.begin(), labels.end());
    const Matrix cent = detail::centroids_of(embeddings, labels, k, nullptr);
    double total = 0.0;
    for (std::size_t i = 0; i < labels.size(); ++i)
        total += detail::cosine_distance(embeddings.row(i), cent.row(static_cast<std::size_t>(labels[i])));
    return total;
}

struct SessionClustering {
    ClusterAssignment assignment;
    int ahc_k = 0;
    int k = 0;
    std::size_t ahc_violations = 0;
    std::size_t ahc_violating_segments = 0;
};

/// Constraint set from segment co-membership of the streams.
inline ConstraintSet segment_constraints(const std::vector<LocalStream>& streams) {
    std::vector<int> groups(streams.size());
    for (std::size_t i = 0; i < streams.size(); ++i) groups[i] = streams[i].segment_index;
    return ConstraintSet::from_groups(groups);
}

inline ClusterAssignment cap_clusters(const Matrix& emb, const ClusterAssignment& a, int k,
                                      const ConstraintSet& constraints) {
    if (a.k <= k) return a;
    return make_assignment(detail::project_labels(emb, a.labels, k), constraints);
}

inline SessionClustering cluster_session(const std::vector<LocalStream>& streams, int max_speakers,
                                         const ClusteringParams& params = {}) {
    if (streams.empty()) throw std::invalid_argument("cluster_session needs at least one stream");
    const Matrix emb = embedding_matrix(streams);
    const ConstraintSet constraints = segment_constraints(streams);
    const Matrix dist = cosine_distance_matrix(emb);

    const bool soft = params.method != ClusteringMethod::ahc;
    const ClusterAssignment ahc = constrained_ahc(dist, constraints, params.stop_threshold, soft ? params.penalty : 0.0);

    SessionClustering out;
    out.ahc_k = ahc.k;
    out.ahc_violations = ahc.violations;
    out.ahc_violating_segments = ahc.violating_segments;
    int k = estimate_num_speakers(ahc.k, max_speakers);
    // A segment with m streams needs at least m clusters.
    std::size_t largest_segment = 0;
    {
        std::vector<std::size_t> per_segment;
        for (const auto& s : streams) {
            const auto idx = static_cast<std::size_t>(s.segment_index);
            if (per_segment.size() <= idx) per_segment.resize(idx + 1, 0);
            largest_segment = std::max(largest_segment, ++per_segment[idx]);
        }
    }
    k = std::max(k, std::min(static_cast<int>(largest_segment), max_speakers));
    k = std::min(k, static_cast<int>(streams.size()));
    out.k = k;

    switch (params.method) {
        case ClusteringMethod::cop_kmeans:
            out.assignment = cop_kmeans(emb, constraints, k, ahc, params.max_iter, params.seed);
            break;
        case ClusteringMethod::kmeans:
            out.assignment = plain_kmeans(emb, constraints, k, ahc, params.max_iter, params.seed);
            break;
        case ClusteringMethod::cahc:
        case ClusteringMethod::ahc:
            out.assignment = cap_clusters(emb, ahc, k, constraints);
            break;
    }
    out.k = out.assignment.k;
    return out;
}

}  // namespace mcdiar
