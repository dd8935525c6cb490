#pragma once

// Random ferns.
//
// A fern of depth D is a decision tree whose D levels each share one split
// criterion, so it reduces to a table of 2^D class-count rows indexed by the
// D split outcomes. A fern forest trains every fern on its own bootstrap bag
// and combines the per-fern class distributions by multiplication (summed
// logarithms here, renormalized at the end).
//
// Training protocol for fern f, using the stream make_stream(seed, f):
//   1. bag: N_o draws of uniform_index(N_o);
//   2. for each level 0..D-1: attribute = uniform_index(P), then two bag
//      positions uniform_index(N_o) each; threshold = mean of the attribute
//      values of the two bag objects (which may coincide);
//   3. every leaf starts at one count per class, then each bag object adds
//      one to its (leaf, class) cell.
// Leaf index bit i is set iff x[attribute_i] > threshold_i.

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "instrec/binary_io.hpp"
#include "instrec/dataset.hpp"
#include "instrec/error.hpp"
#include "instrec/parallel.hpp"
#include "instrec/rng.hpp"

namespace instrec {

struct FernSplit {
    std::uint32_t attribute = 0;
    double threshold = 0.0;

    bool operator==(const FernSplit&) const = default;
};

struct Fern {
    std::vector<FernSplit> splits;
    /// (2^D rows) x (C classes), row-major; counts include the +1 prior.
    std::vector<std::uint32_t> leaf_counts;

    std::size_t depth() const { return splits.size(); }
    std::size_t leaf_count() const { return std::size_t{1} << splits.size(); }

    std::size_t leaf_index(std::span<const double> x) const {
        std::size_t idx = 0;
        for (std::size_t i = 0; i < splits.size(); ++i)
            idx |= std::size_t(x[splits[i].attribute] > splits[i].threshold) << i;
        return idx;
    }

    /// Class distribution stored at one leaf: counts / row total.
    std::vector<double> leaf_distribution(std::size_t leaf, std::size_t classes) const {
        std::vector<double> p(classes);
        double total = 0.0;
        for (std::size_t c = 0; c < classes; ++c) total += leaf_counts[leaf * classes + c];
        for (std::size_t c = 0; c < classes; ++c) p[c] = double(leaf_counts[leaf * classes + c]) / total;
        return p;
    }

    bool operator==(const Fern&) const = default;
};

struct FernParams {
    std::uint32_t depth = 10;
    std::uint32_t fern_count = 1000;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    /// Upper bound on 2^D * C cells per fern.
    std::size_t max_leaf_cells = std::size_t{1} << 26;
};

class FernForest {
public:
    static constexpr char kMagic[] = "IRFERNS";
    static constexpr std::uint32_t kVersion = 1;

    FernForest() = default;

    FernForest(std::vector<Fern> ferns, std::uint32_t depth, std::vector<std::string> class_labels,
               std::uint32_t attribute_count, std::uint64_t seed)
        : ferns_(std::move(ferns)),
          depth_(depth),
          class_labels_(std::move(class_labels)),
          attribute_count_(attribute_count),
          seed_(seed) {
        check_structure();
        build_tables();
    }

    const std::vector<Fern>& ferns() const { return ferns_; }
    std::uint32_t depth() const { return depth_; }
    const std::vector<std::string>& class_labels() const { return class_labels_; }
    std::size_t class_count() const { return class_labels_.size(); }
    std::uint32_t attribute_count() const { return attribute_count_; }
    std::uint64_t seed() const { return seed_; }
    std::size_t size() const { return ferns_.size(); }

    std::size_t fern_leaf_index(std::size_t fern, std::span<const double> x) const {
        check_dimension(x.size());
        return ferns_.at(fern).leaf_index(x);
    }

    /// Normalized product of the per-fern leaf distributions.
    std::vector<double> predict_scores(std::span<const double> x) const {
        check_dimension(x.size());
        const std::size_t C = class_count();
        std::vector<double> log_sum(C, 0.0);
        for (std::size_t f = 0; f < ferns_.size(); ++f) {
            const double* row = &log_probs_[(f * leaf_rows() + ferns_[f].leaf_index(x)) * C];
            for (std::size_t c = 0; c < C; ++c) log_sum[c] += row[c];
        }
        return normalize_log(log_sum);
    }

    /// Highest-scoring class; ties resolve to the lowest class index.
    std::size_t predict_class(std::span<const double> x) const { return argmax(predict_scores(x)); }

    /// Scores for `rows.size() / P` row-major inputs. Returns rows x C,
    /// row-major. Rows are processed in column-major blocks, fern by fern,
    /// so the split comparisons run over contiguous memory.
    std::vector<double> predict_scores_batch(std::span<const double> rows) const {
        const std::size_t P = attribute_count_;
        if (rows.size() % P != 0) throw DimensionError("batch is not a whole number of rows");
        const std::size_t n = rows.size() / P;
        const std::size_t C = class_count();
        std::vector<double> scores(n * C);

        constexpr std::size_t kBlock = 1024;
        std::vector<double> columns(P * kBlock);
        std::vector<std::uint32_t> leaf(kBlock);
        std::vector<double> acc(kBlock * C);
        for (std::size_t begin = 0; begin < n; begin += kBlock) {
            const std::size_t m = std::min(kBlock, n - begin);
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t a = 0; a < P; ++a) columns[a * m + r] = rows[(begin + r) * P + a];
            std::fill(acc.begin(), acc.end(), 0.0);

            for (std::size_t f = 0; f < ferns_.size(); ++f) {
                const FernSplit* splits = ferns_[f].splits.data();
                std::fill(leaf.begin(), leaf.begin() + std::ptrdiff_t(m), 0u);
                for (std::size_t i = 0; i < depth_; ++i) {
                    const double* col = &columns[splits[i].attribute * m];
                    const double t = splits[i].threshold;
                    for (std::size_t r = 0; r < m; ++r) leaf[r] |= std::uint32_t(col[r] > t) << i;
                }
                if (C == 2) {
                    const double* odds = &log_odds_[f * leaf_rows()];
                    for (std::size_t r = 0; r < m; ++r) acc[r] += odds[leaf[r]];
                } else {
                    const double* table = &log_probs_[f * leaf_rows() * C];
                    for (std::size_t r = 0; r < m; ++r)
                        for (std::size_t c = 0; c < C; ++c) acc[r * C + c] += table[leaf[r] * C + c];
                }
            }

            for (std::size_t r = 0; r < m; ++r) {
                double* out = &scores[(begin + r) * C];
                if (C == 2) {
                    // normalized product of two classes == logistic of the summed log-odds
                    out[1] = 1.0 / (1.0 + std::exp(-acc[r]));
                    out[0] = 1.0 / (1.0 + std::exp(acc[r]));
                } else {
                    const auto p = normalize_log(std::span<const double>(acc).subspan(r * C, C));
                    std::copy(p.begin(), p.end(), out);
                }
            }
        }
        return scores;
    }

    Bytes serialize() const {
        ByteWriter w;
        w.magic(std::string_view(kMagic, sizeof(kMagic) - 1));
        w.u32(kVersion);
        w.u32(depth_);
        w.u32(static_cast<std::uint32_t>(ferns_.size()));
        w.u32(attribute_count_);
        w.u32(static_cast<std::uint32_t>(class_labels_.size()));
        for (const auto& l : class_labels_) w.str(l);
        w.u64(seed_);
        for (const auto& fern : ferns_) {
            for (const auto& s : fern.splits) {
                w.u32(s.attribute);
                w.f64(s.threshold);
            }
            for (auto c : fern.leaf_counts) w.u32(c);
        }
        return std::move(w).bytes();
    }

    static FernForest deserialize(std::span<const std::uint8_t> bytes) {
        ByteReader r(bytes);
        r.expect_magic(std::string_view(kMagic, sizeof(kMagic) - 1));
        const auto version = r.u32();
        if (version != kVersion) throw FormatError("unsupported fern model version " + std::to_string(version));
        const auto depth = r.u32();
        const auto count = r.u32();
        const auto attributes = r.u32();
        const auto classes = r.u32();
        if (depth == 0 || depth > 30) throw FormatError("fern depth " + std::to_string(depth) + " out of range");
        if (classes == 0) throw FormatError("fern model declares no classes");
        std::vector<std::string> labels(classes);
        for (auto& l : labels) l = r.str();
        const auto seed = r.u64();
        const std::size_t cells = (std::size_t{1} << depth) * classes;
        std::vector<Fern> ferns(count);
        for (auto& fern : ferns) {
            fern.splits.resize(depth);
            for (auto& s : fern.splits) {
                s.attribute = r.u32();
                s.threshold = r.f64();
            }
            fern.leaf_counts.resize(cells);
            for (auto& c : fern.leaf_counts) c = r.u32();
        }
        r.expect_end();
        return FernForest(std::move(ferns), depth, std::move(labels), attributes, seed);
    }

    bool operator==(const FernForest& o) const {
        return depth_ == o.depth_ && attribute_count_ == o.attribute_count_ && seed_ == o.seed_ &&
               class_labels_ == o.class_labels_ && ferns_ == o.ferns_;
    }

private:
    std::size_t leaf_rows() const { return std::size_t{1} << depth_; }

    void check_dimension(std::size_t n) const {
        if (n != attribute_count_)
            throw DimensionError("input has " + std::to_string(n) + " attributes, model expects " +
                                 std::to_string(attribute_count_));
    }

    void check_structure() const {
        if (ferns_.empty()) throw InvalidArgumentError("fern forest needs at least one fern");
        const std::size_t cells = leaf_rows() * class_count();
        for (const auto& f : ferns_) {
            if (f.splits.size() != depth_) throw FormatError("fern depth mismatch");
            if (f.leaf_counts.size() != cells) throw FormatError("fern leaf table size mismatch");
            for (const auto& s : f.splits)
                if (s.attribute >= attribute_count_) throw FormatError("fern split attribute out of range");
            for (auto c : f.leaf_counts)
                if (c == 0) throw FormatError("fern leaf count below the +1 prior");
        }
    }

    void build_tables() {
        const std::size_t C = class_count();
        log_probs_.resize(ferns_.size() * leaf_rows() * C);
        for (std::size_t f = 0; f < ferns_.size(); ++f) {
            for (std::size_t leaf = 0; leaf < leaf_rows(); ++leaf) {
                const std::uint32_t* counts = &ferns_[f].leaf_counts[leaf * C];
                double total = 0.0;
                for (std::size_t c = 0; c < C; ++c) total += counts[c];
                const double log_total = std::log(total);
                for (std::size_t c = 0; c < C; ++c)
                    log_probs_[(f * leaf_rows() + leaf) * C + c] = std::log(double(counts[c])) - log_total;
            }
        }
        if (C == 2) {
            log_odds_.resize(ferns_.size() * leaf_rows());
            for (std::size_t i = 0; i < log_odds_.size(); ++i) log_odds_[i] = log_probs_[2 * i + 1] - log_probs_[2 * i];
        }
    }

    static std::vector<double> normalize_log(std::span<const double> log_sum) {
        double top = -std::numeric_limits<double>::infinity();
        for (double v : log_sum) top = std::max(top, v);
        std::vector<double> p(log_sum.size());
        double total = 0.0;
        for (std::size_t c = 0; c < p.size(); ++c) total += (p[c] = std::exp(log_sum[c] - top));
        for (double& v : p) v /= total;
        return p;
    }

    std::vector<Fern> ferns_;
    std::uint32_t depth_ = 0;
    std::vector<std::string> class_labels_;
    std::uint32_t attribute_count_ = 0;
    std::uint64_t seed_ = 0;
    std::vector<double> log_probs_;
    /// log p(class 1) - log p(class 0) per leaf, two-class models only.
    std::vector<double> log_odds_;
};

/// Trains one fern on its own bag. `rng` is the fern's private stream.
inline Fern train_fern(const Dataset& data, std::uint32_t depth, Engine& rng) {
    const std::size_t n = data.size();
    const std::size_t C = data.class_count();
    std::vector<std::size_t> bag(n);
    for (auto& b : bag) b = uniform_index(rng, n);

    Fern fern;
    fern.splits.resize(depth);
    for (auto& s : fern.splits) {
        s.attribute = static_cast<std::uint32_t>(uniform_index(rng, data.attribute_count));
        const std::size_t a = bag[uniform_index(rng, n)];
        const std::size_t b = bag[uniform_index(rng, n)];
        s.threshold = (data.at(a, s.attribute) + data.at(b, s.attribute)) / 2.0;
    }
    fern.leaf_counts.assign(fern.leaf_count() * C, 1);
    for (std::size_t i : bag) ++fern.leaf_counts[fern.leaf_index(data.row(i)) * C + data.labels[i]];
    return fern;
}

inline FernForest train_fern_forest(const Dataset& data, const FernParams& params) {
    data.validate();
    if (data.size() < 2) throw EmptyDatasetError("fern training needs at least two objects");
    if (params.depth == 0) throw InvalidArgumentError("fern depth must be at least 1");
    if (params.fern_count == 0) throw InvalidArgumentError("fern count must be at least 1");
    if (params.depth > 30 || (std::size_t{1} << params.depth) * data.class_count() > params.max_leaf_cells)
        throw CapacityError("depth " + std::to_string(params.depth) + " needs 2^" + std::to_string(params.depth) +
                            " x " + std::to_string(data.class_count()) + " leaf cells per fern, cap is " +
                            std::to_string(params.max_leaf_cells));

    std::vector<Fern> ferns(params.fern_count);
    parallel_for(ferns.size(), params.threads, [&](std::size_t f) {
        Engine rng = make_stream(params.seed, f);
        ferns[f] = train_fern(data, params.depth, rng);
    });
    return FernForest(std::move(ferns), params.depth, data.class_labels,
                      static_cast<std::uint32_t>(data.attribute_count), params.seed);
}

}  // namespace instrec
