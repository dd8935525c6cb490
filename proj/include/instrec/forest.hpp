#pragma once

// Random forest baseline: bootstrap bags, unpruned CART trees with Gini
// splits over K attributes drawn afresh at every node, majority vote.
//
// Tree t draws from make_stream(seed, t): first its N_o bag indices, then
// the K candidate attributes of each node in preorder (left subtree first).
// Candidate thresholds are midpoints of consecutive distinct values; x goes
// right iff x[attribute] > threshold. Every tie (Gini, vote, majority)
// resolves to the lowest index.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "instrec/binary_io.hpp"
#include "instrec/dataset.hpp"
#include "instrec/error.hpp"
#include "instrec/parallel.hpp"
#include "instrec/rng.hpp"

namespace instrec {

inline double gini_impurity(std::span<const std::size_t> class_counts) {
    double total = 0.0;
    for (auto c : class_counts) total += double(c);
    if (total <= 0.0) throw InvalidArgumentError("gini impurity of an empty node");
    double sq = 0.0;
    for (auto c : class_counts) sq += (double(c) / total) * (double(c) / total);
    return 1.0 - sq;
}

struct Split {
    std::uint32_t attribute = 0;
    double threshold = 0.0;
    /// Size-weighted mean Gini impurity of the two children.
    double impurity = 0.0;
};

/// Best Gini split of `rows` (indices into `data`, duplicates allowed) over
/// the candidate attributes. Returns nothing for pure nodes and when no
/// candidate separates the rows.
inline std::optional<Split> best_split(const Dataset& data, std::span<const std::uint32_t> rows,
                                       std::span<const std::uint32_t> candidate_attributes) {
    const std::size_t n = rows.size();
    const std::size_t C = data.class_count();
    if (n < 2) return std::nullopt;

    std::vector<std::size_t> total(C, 0);
    for (auto r : rows) ++total[data.labels[r]];
    if (std::count(total.begin(), total.end(), std::size_t{0}) == std::ptrdiff_t(C) - 1) return std::nullopt;

    std::vector<std::uint32_t> attrs(candidate_attributes.begin(), candidate_attributes.end());
    std::sort(attrs.begin(), attrs.end());

    std::optional<Split> best;
    std::vector<std::pair<double, std::uint32_t>> column(n);
    std::vector<std::size_t> left(C), right(C);
    for (auto a : attrs) {
        for (std::size_t i = 0; i < n; ++i) column[i] = {data.at(rows[i], a), data.labels[rows[i]]};
        std::sort(column.begin(), column.end());
        if (column.front().first == column.back().first) continue;

        std::fill(left.begin(), left.end(), 0);
        right = total;
        double sq_left = 0.0, sq_right = 0.0;
        for (auto c : total) sq_right += double(c) * double(c);

        for (std::size_t i = 0; i + 1 < n; ++i) {
            const auto c = column[i].second;
            sq_left += 2.0 * double(left[c]) + 1.0;
            sq_right -= 2.0 * double(right[c]) - 1.0;
            ++left[c];
            --right[c];
            const double lo = column[i].first, hi = column[i + 1].first;
            if (lo == hi) continue;
            const double n_left = double(i + 1), n_right = double(n - i - 1);
            const double impurity = (double(n) - sq_left / n_left - sq_right / n_right) / double(n);
            if (!best || impurity < best->impurity) {
                double threshold = lo + (hi - lo) / 2.0;
                if (!(threshold < hi)) threshold = lo;
                best = Split{a, threshold, impurity};
            }
        }
    }
    return best;
}

/// Preorder node: the left child of node i is i + 1.
struct TreeNode {
    static constexpr std::uint32_t kLeaf = std::numeric_limits<std::uint32_t>::max();

    double threshold = 0.0;
    std::uint32_t attribute = kLeaf;
    /// Right child index for internal nodes, class label for leaves.
    std::uint32_t payload = 0;

    bool is_leaf() const { return attribute == kLeaf; }
    std::uint32_t label() const { return payload; }
    std::uint32_t right() const { return payload; }

    static TreeNode leaf(std::uint32_t label) { return {0.0, kLeaf, label}; }

    bool operator==(const TreeNode&) const = default;
};

struct Tree {
    std::vector<TreeNode> nodes;

    std::uint32_t classify(std::span<const double> x) const { return classify(x.data()); }

    std::uint32_t classify(const double* x) const {
        const TreeNode* node = nodes.data();
        std::size_t i = 0;
        while (!node[i].is_leaf()) i = x[node[i].attribute] > node[i].threshold ? node[i].right() : i + 1;
        return node[i].label();
    }

    /// Longest root-to-leaf path in edges.
    std::size_t height() const { return subtree_height(0); }

    bool operator==(const Tree&) const = default;

private:
    std::size_t subtree_height(std::size_t i) const {
        if (nodes[i].is_leaf()) return 0;
        return 1 + std::max(subtree_height(i + 1), subtree_height(nodes[i].right()));
    }
};

struct ForestParams {
    std::uint32_t tree_count = 1000;
    /// Attributes tried per node; 0 selects floor(sqrt(P)).
    std::uint32_t k = 0;
    std::uint64_t seed = 0;
    unsigned threads = 1;
};

inline std::uint32_t default_k(std::size_t attribute_count) {
    return std::max<std::uint32_t>(1, static_cast<std::uint32_t>(std::floor(std::sqrt(double(attribute_count)))));
}

struct Vote {
    std::size_t label = 0;
    std::vector<double> fractions;
};

struct TreeHeights {
    double average = 0.0;
    std::size_t max = 0;
};

class RandomForest {
public:
    static constexpr char kMagic[] = "IRFOREST";
    static constexpr std::uint32_t kVersion = 1;

    RandomForest() = default;

    RandomForest(std::vector<Tree> trees, std::uint32_t k, std::vector<std::string> class_labels,
                 std::uint32_t attribute_count, std::uint64_t seed)
        : trees_(std::move(trees)),
          k_(k),
          class_labels_(std::move(class_labels)),
          attribute_count_(attribute_count),
          seed_(seed) {
        check_structure();
    }

    const std::vector<Tree>& trees() const { return trees_; }
    std::uint32_t k() const { return k_; }
    const std::vector<std::string>& class_labels() const { return class_labels_; }
    std::size_t class_count() const { return class_labels_.size(); }
    std::uint32_t attribute_count() const { return attribute_count_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t size() const { return trees_.size(); }

    /// Forest made of the first `count` trees.
    RandomForest prefix(std::size_t count) const {
        return RandomForest(std::vector<Tree>(trees_.begin(), trees_.begin() + std::ptrdiff_t(count)), k_,
                            class_labels_, attribute_count_, seed_);
    }

    Vote predict_vote(std::span<const double> x) const {
        check_dimension(x.size());
        std::vector<std::size_t> votes(class_count(), 0);
        for (const auto& t : trees_) ++votes[t.classify(x)];
        Vote v;
        v.fractions.resize(class_count());
        for (std::size_t c = 0; c < votes.size(); ++c) {
            v.fractions[c] = double(votes[c]) / double(trees_.size());
            if (votes[c] > votes[v.label]) v.label = c;
        }
        return v;
    }

    /// Vote fractions for row-major inputs, tree-major. Returns rows x C.
    std::vector<double> predict_votes_batch(std::span<const double> rows) const {
        const std::size_t P = attribute_count_;
        if (rows.size() % P != 0) throw DimensionError("batch is not a whole number of rows");
        const std::size_t n = rows.size() / P;
        const std::size_t C = class_count();
        std::vector<std::uint32_t> votes(n * C, 0);
        for (const auto& t : trees_)
            for (std::size_t r = 0; r < n; ++r) ++votes[r * C + t.classify(rows.data() + r * P)];
        std::vector<double> out(n * C);
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = double(votes[i]) / double(trees_.size());
        return out;
    }

    TreeHeights measure_heights() const {
        TreeHeights h;
        double sum = 0.0;
        for (const auto& t : trees_) {
            const std::size_t height = t.height();
            sum += double(height);
            h.max = std::max(h.max, height);
        }
        h.average = sum / double(trees_.size());
        return h;
    }

    Bytes serialize() const {
        ByteWriter w;
        w.magic(std::string_view(kMagic, sizeof(kMagic) - 1));
        w.u32(kVersion);
        w.u32(static_cast<std::uint32_t>(trees_.size()));
        w.u32(k_);
        w.u32(attribute_count_);
        w.u32(static_cast<std::uint32_t>(class_labels_.size()));
        for (const auto& l : class_labels_) w.str(l);
        w.u64(seed_);
        for (const auto& t : trees_) {
            w.u32(static_cast<std::uint32_t>(t.nodes.size()));
            for (const auto& node : t.nodes) {
                if (node.is_leaf()) {
                    w.u8(0);
                    w.u32(node.label());
                } else {
                    w.u8(1);
                    w.u32(node.attribute);
                    w.f64(node.threshold);
                }
            }
        }
        return std::move(w).bytes();
    }

    static RandomForest deserialize(std::span<const std::uint8_t> bytes) {
        ByteReader r(bytes);
        r.expect_magic(std::string_view(kMagic, sizeof(kMagic) - 1));
        const auto version = r.u32();
        if (version != kVersion) throw FormatError("unsupported forest model version " + std::to_string(version));
        const auto count = r.u32();
        const auto k = r.u32();
        const auto attributes = r.u32();
        const auto classes = r.u32();
        std::vector<std::string> labels(classes);
        for (auto& l : labels) l = r.str();
        const auto seed = r.u64();
        std::vector<Tree> trees(count);
        for (auto& t : trees) {
            const auto n = r.u32();
            if (n == 0) throw FormatError("empty tree at offset " + std::to_string(r.offset()));
            t.nodes.resize(n);
            // open internal nodes waiting for their right child
            std::vector<std::uint32_t> pending;
            for (std::uint32_t i = 0; i < n; ++i) {
                if (i > 0 && t.nodes[i - 1].is_leaf()) {
                    if (pending.empty()) throw FormatError("tree has nodes after its last leaf");
                    t.nodes[pending.back()].payload = i;
                    pending.pop_back();
                }
                const auto kind = r.u8();
                if (kind == 0) {
                    t.nodes[i] = TreeNode::leaf(r.u32());
                } else if (kind == 1) {
                    t.nodes[i].attribute = r.u32();
                    t.nodes[i].threshold = r.f64();
                    pending.push_back(i);
                } else {
                    throw FormatError("bad node kind at offset " + std::to_string(r.offset() - 1));
                }
            }
            if (!pending.empty() || !t.nodes.back().is_leaf()) throw FormatError("truncated tree");
        }
        r.expect_end();
        return RandomForest(std::move(trees), k, std::move(labels), attributes, seed);
    }

    bool operator==(const RandomForest& o) const {
        return k_ == o.k_ && attribute_count_ == o.attribute_count_ && seed_ == o.seed_ &&
               class_labels_ == o.class_labels_ && trees_ == o.trees_;
    }

private:
    void check_dimension(std::size_t n) const {
        if (n != attribute_count_)
            throw DimensionError("input has " + std::to_string(n) + " attributes, model expects " +
                                 std::to_string(attribute_count_));
    }

    void check_structure() const {
        if (trees_.empty()) throw InvalidArgumentError("forest needs at least one tree");
        if (k_ == 0 || k_ > attribute_count_) throw InvalidArgumentError("K must lie in [1, P]");
        for (const auto& t : trees_)
            for (const auto& node : t.nodes) {
                if (node.is_leaf() ? node.label() >= class_count() : node.attribute >= attribute_count_)
                    throw FormatError("tree node refers to an unknown class or attribute");
            }
    }

    std::vector<Tree> trees_;
    std::uint32_t k_ = 0;
    std::vector<std::string> class_labels_;
    std::uint32_t attribute_count_ = 0;
    std::uint64_t seed_ = 0;
};

namespace detail {

class TreeBuilder {
public:
    TreeBuilder(const Dataset& data, std::uint32_t k, Engine& rng)
        : data_(data), k_(k), rng_(rng), pool_(data.attribute_count) {}

    Tree build(std::vector<std::uint32_t> rows) {
        Tree t;
        grow(t, rows);
        return t;
    }

private:
    void grow(Tree& t, std::span<std::uint32_t> rows) {
        const std::size_t me = t.nodes.size();
        t.nodes.emplace_back();

        std::optional<Split> split;
        if (rows.size() >= 2 && !pure(rows)) split = best_split(data_, rows, draw_candidates());
        if (!split) {
            t.nodes[me] = TreeNode::leaf(majority(rows));
            return;
        }

        auto middle = std::stable_partition(rows.begin(), rows.end(), [&](std::uint32_t r) {
            return !(data_.at(r, split->attribute) > split->threshold);
        });
        const auto n_left = static_cast<std::size_t>(middle - rows.begin());
        t.nodes[me].attribute = split->attribute;
        t.nodes[me].threshold = split->threshold;
        grow(t, rows.first(n_left));
        t.nodes[me].payload = static_cast<std::uint32_t>(t.nodes.size());
        grow(t, rows.subspan(n_left));
    }

    std::vector<std::uint32_t> draw_candidates() {
        std::iota(pool_.begin(), pool_.end(), 0u);
        for (std::size_t i = 0; i < k_; ++i) {
            const std::size_t j = i + uniform_index(rng_, pool_.size() - i);
            std::swap(pool_[i], pool_[j]);
        }
        return {pool_.begin(), pool_.begin() + k_};
    }

    bool pure(std::span<const std::uint32_t> rows) const {
        for (auto r : rows)
            if (data_.labels[r] != data_.labels[rows.front()]) return false;
        return true;
    }

    std::uint32_t majority(std::span<const std::uint32_t> rows) const {
        std::vector<std::size_t> counts(data_.class_count(), 0);
        for (auto r : rows) ++counts[data_.labels[r]];
        std::size_t best = 0;
        for (std::size_t c = 1; c < counts.size(); ++c)
            if (counts[c] > counts[best]) best = c;
        return static_cast<std::uint32_t>(best);
    }

    const Dataset& data_;
    std::uint32_t k_;
    Engine& rng_;
    std::vector<std::uint32_t> pool_;
};

}  // namespace detail

/// Trains a forest. When `out_of_bag` is given it receives, per tree, the
/// sorted indices of the objects missing from that tree's bag.
inline RandomForest train_forest(const Dataset& data, const ForestParams& params,
                                 std::vector<std::vector<std::uint32_t>>* out_of_bag = nullptr) {
    data.validate();
    if (data.size() < 2) throw EmptyDatasetError("forest training needs at least two objects");
    if (params.tree_count == 0) throw InvalidArgumentError("tree count must be at least 1");
    const std::uint32_t k = params.k == 0 ? default_k(data.attribute_count) : params.k;
    if (k > data.attribute_count) throw InvalidArgumentError("K exceeds the attribute count");

    const std::size_t n = data.size();
    std::vector<Tree> trees(params.tree_count);
    if (out_of_bag) out_of_bag->assign(params.tree_count, {});
    parallel_for(trees.size(), params.threads, [&](std::size_t t) {
        Engine rng = make_stream(params.seed, t);
        std::vector<std::uint32_t> bag(n);
        for (auto& b : bag) b = static_cast<std::uint32_t>(uniform_index(rng, n));
        if (out_of_bag) {
            std::vector<bool> seen(n, false);
            for (auto b : bag) seen[b] = true;
            for (std::uint32_t i = 0; i < n; ++i)
                if (!seen[i]) (*out_of_bag)[t].push_back(i);
        }
        detail::TreeBuilder builder(data, k, rng);
        trees[t] = builder.build(std::move(bag));
    });
    return RandomForest(std::move(trees), k, data.class_labels, static_cast<std::uint32_t>(data.attribute_count),
                        params.seed);
}

}  // namespace instrec
