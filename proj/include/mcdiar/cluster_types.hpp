#pragma once

#include <algorithm>
#include <cstddef>
#include <optional>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

namespace mcdiar {

/// Cannot-link constraints over item indices [0, n_items).
///
/// When built from segment co-membership the segment of each item is kept,
/// so violations can be reported per segment as well as per pair.
class ConstraintSet {
public:
    ConstraintSet() = default;
    explicit ConstraintSet(std::size_t n_items) : n_items_(n_items), partners_(n_items) {}

    /// Every pair of items sharing a group id is cannot-linked.
    static ConstraintSet from_groups(const std::vector<int>& group_of_item) {
        ConstraintSet cs(group_of_item.size());
        for (std::size_t i = 0; i < group_of_item.size(); ++i)
            for (std::size_t j = i + 1; j < group_of_item.size(); ++j)
                if (group_of_item[i] == group_of_item[j]) cs.add(i, j);
        cs.groups_ = group_of_item;
        return cs;
    }

    void add(std::size_t a, std::size_t b) {
        if (a >= n_items_ || b >= n_items_) throw std::out_of_range("cannot-link index out of range");
        if (a == b) throw std::invalid_argument("cannot-link pair must join two distinct items");
        if (a > b) std::swap(a, b);
        if (pairs_.insert({a, b}).second) {
            partners_[a].push_back(b);
            partners_[b].push_back(a);
        }
    }

    std::size_t n_items() const noexcept { return n_items_; }
    const std::set<std::pair<std::size_t, std::size_t>>& pairs() const noexcept { return pairs_; }
    const std::vector<std::size_t>& partners(std::size_t item) const { return partners_[item]; }
    bool empty() const noexcept { return pairs_.empty(); }
    bool contains(std::size_t a, std::size_t b) const {
        if (a > b) std::swap(a, b);
        return pairs_.count({a, b}) != 0;
    }
    const std::vector<int>& groups() const noexcept { return groups_; }

    /// Same constraints under an item permutation: new item i is old item perm[i].
    ConstraintSet permuted(const std::vector<std::size_t>& perm) const {
        std::vector<std::size_t> inverse(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) inverse[perm[i]] = i;
        ConstraintSet out(n_items_);
        for (const auto& [a, b] : pairs_) out.add(inverse[a], inverse[b]);
        if (!groups_.empty()) {
            out.groups_.resize(n_items_);
            for (std::size_t i = 0; i < n_items_; ++i) out.groups_[i] = groups_[perm[i]];
        }
        return out;
    }

private:
    std::size_t n_items_ = 0;
    std::set<std::pair<std::size_t, std::size_t>> pairs_;
    std::vector<std::vector<std::size_t>> partners_;
    std::vector<int> groups_;
};

/// Item → cluster labels plus constraint diagnostics.
struct ClusterAssignment {
    std::vector<int> labels;
    int k = 0;
    /// cannot-link pairs whose items share a label
    std::size_t violations = 0;
    /// segments with at least one violated pair; without segment information
    /// every violated pair counts as its own segment
    std::size_t violating_segments = 0;

    friend bool operator==(const ClusterAssignment&, const ClusterAssignment&) = default;
};

inline std::size_t count_violations(const std::vector<int>& labels, const ConstraintSet& constraints) {
    std::size_t n = 0;
    for (const auto& [a, b] : constraints.pairs())
        if (labels[a] == labels[b]) ++n;
    return n;
}

inline std::size_t count_violating_segments(const std::vector<int>& labels, const ConstraintSet& constraints) {
    if (constraints.groups().empty()) return count_violations(labels, constraints);
    std::set<int> segments;
    for (const auto& [a, b] : constraints.pairs())
        if (labels[a] == labels[b]) segments.insert(constraints.groups()[a]);
    return segments.size();
}

/// Renumber labels by first appearance and fill in k and the violation counts.
inline ClusterAssignment make_assignment(const std::vector<int>& raw_labels, const ConstraintSet& constraints) {
    ClusterAssignment out;
    out.labels.resize(raw_labels.size());
    std::vector<std::pair<int, int>> seen;  // raw -> canonical
    for (std::size_t i = 0; i < raw_labels.size(); ++i) {
        auto it = std::find_if(seen.begin(), seen.end(), [&](const auto& p) { return p.first == raw_labels[i]; });
        if (it == seen.end()) {
            seen.emplace_back(raw_labels[i], static_cast<int>(seen.size()));
            out.labels[i] = seen.back().second;
        } else {
            out.labels[i] = it->second;
        }
    }
    out.k = static_cast<int>(seen.size());
    out.violations = count_violations(out.labels, constraints);
    out.violating_segments = count_violating_segments(out.labels, constraints);
    return out;
}

}  // namespace mcdiar
