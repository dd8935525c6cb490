#include <gtest/gtest.h>

#include <numeric>

#include "instrec.hpp"
#include "oracles.hpp"

using namespace instrec;

namespace {

Dataset column(std::vector<double> values, std::vector<std::uint32_t> labels) {
    Dataset d;
    d.attribute_count = 1;
    d.class_labels = {"A", "B"};
    for (std::size_t i = 0; i < values.size(); ++i) d.add(std::vector<double>{values[i]}, labels[i]);
    return d;
}

std::vector<std::uint32_t> all_rows(const Dataset& d) {
    std::vector<std::uint32_t> r(d.size());
    std::iota(r.begin(), r.end(), 0u);
    return r;
}

Dataset noisy(std::size_t n, std::size_t p, std::uint64_t seed) {
    Engine rng(seed);
    Dataset d;
    d.attribute_count = p;
    d.class_labels = {"a", "b"};
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> row(p);
        for (auto& v : row) v = uniform_unit(rng);
        d.add(row, std::uint32_t(uniform_index(rng, 2)));
    }
    return d;
}

}  // namespace

TEST(Gini, Examples) {
    EXPECT_EQ(gini_impurity(std::vector<std::size_t>{5, 5}), 0.5);
    EXPECT_EQ(gini_impurity(std::vector<std::size_t>{10, 0}), 0.0);
    EXPECT_EQ(gini_impurity(std::vector<std::size_t>{1, 1, 1, 1}), 0.75);
    EXPECT_THROW(gini_impurity(std::vector<std::size_t>{0, 0}), InvalidArgumentError);
}

TEST(BestSplit, SeparatesTwoClusters) {
    const Dataset d = column({0, 1, 10, 11}, {0, 0, 1, 1});
    const auto s = best_split(d, all_rows(d), std::vector<std::uint32_t>{0});
    ASSERT_TRUE(s);
    EXPECT_EQ(s->attribute, 0u);
    EXPECT_EQ(s->threshold, 5.5);
    EXPECT_EQ(s->impurity, 0.0);
}

TEST(BestSplit, NothingToSplit) {
    const Dataset same = column({3, 3, 3}, {0, 1, 0});
    EXPECT_FALSE(best_split(same, all_rows(same), std::vector<std::uint32_t>{0}));
    const Dataset pure = column({1, 2, 3}, {1, 1, 1});
    EXPECT_FALSE(best_split(pure, all_rows(pure), std::vector<std::uint32_t>{0}));
    const Dataset single = column({1}, {0});
    EXPECT_FALSE(best_split(single, all_rows(single), std::vector<std::uint32_t>{0}));
}

TEST(BestSplit, MatchesExhaustiveSearch) {
    for (std::uint64_t inst = 0; inst < 200; ++inst) {
        Engine rng(inst);
        const std::size_t rows = 2 + uniform_index(rng, 11);
        const std::size_t attrs = 1 + uniform_index(rng, 3);
        const Dataset d = oracle::random_dataset(500 + inst, rows, attrs, 2 + uniform_index(rng, 2), 4);
        std::vector<std::uint32_t> cand(attrs);
        std::iota(cand.begin(), cand.end(), 0u);
        const auto got = best_split(d, all_rows(d), cand);
        const double want = oracle::best_split_impurity(d, all_rows(d), cand);
        bool pure = true;
        for (auto l : d.labels) pure = pure && l == d.labels[0];
        if (pure || std::isinf(want)) {
            EXPECT_FALSE(got) << inst;
        } else {
            ASSERT_TRUE(got) << inst;
            EXPECT_NEAR(got->impurity, want, 1e-12) << inst;
        }
    }
}

TEST(Forest, DefaultK) {
    EXPECT_EQ(default_k(91), 9u);
    EXPECT_EQ(default_k(1), 1u);
    const Dataset d = noisy(40, 91, 1);
    EXPECT_EQ(train_forest(d, {3}).k(), 9u);
    EXPECT_THROW(train_forest(d, {3, 92}), InvalidArgumentError);
}

TEST(Forest, SingleClassGivesLeafTrees) {
    Dataset d = noisy(50, 4, 2);
    for (auto& l : d.labels) l = 1;
    const RandomForest f = train_forest(d, {10, 2, 3});
    for (const auto& t : f.trees()) EXPECT_EQ(t.nodes.size(), 1u);
    const auto h = f.measure_heights();
    EXPECT_EQ(h.average, 0.0);
    EXPECT_EQ(h.max, 0u);
    EXPECT_EQ(f.predict_vote(d.row(0)).label, 1u);
}

TEST(Forest, HeightOfStump) {
    Tree t;
    t.nodes = {TreeNode{0.5, 0, 2}, TreeNode::leaf(0), TreeNode::leaf(1)};
    EXPECT_EQ(t.height(), 1u);
    EXPECT_EQ(t.classify(std::vector<double>{0.5}), 0u);
    EXPECT_EQ(t.classify(std::vector<double>{0.6}), 1u);
}

TEST(Forest, MajorityVote) {
    auto leaf_tree = [](std::uint32_t label) {
        Tree t;
        t.nodes = {TreeNode::leaf(label)};
        return t;
    };
    const RandomForest f({leaf_tree(0), leaf_tree(0), leaf_tree(1)}, 1, {"A", "B"}, 1, 0);
    const Vote v = f.predict_vote(std::vector<double>{0.0});
    EXPECT_EQ(v.label, 0u);
    EXPECT_NEAR(v.fractions[0], 2.0 / 3.0, 1e-15);
    EXPECT_NEAR(v.fractions[1], 1.0 / 3.0, 1e-15);

    const RandomForest tie({leaf_tree(1), leaf_tree(0)}, 1, {"A", "B"}, 1, 0);
    EXPECT_EQ(tie.predict_vote(std::vector<double>{0.0}).label, 0u);
    const RandomForest single({leaf_tree(1)}, 1, {"A", "B"}, 1, 0);
    EXPECT_EQ(single.predict_vote(std::vector<double>{0.0}).fractions[1], 1.0);
    EXPECT_THROW(single.predict_vote(std::vector<double>{0.0, 1.0}), DimensionError);
}

TEST(Forest, VoteFractionsAreMultiplesOfOneOverNt) {
    const Dataset d = noisy(200, 6, 3);
    const RandomForest f = train_forest(d, {7, 2, 4});
    const Dataset q = noisy(100, 6, 4);
    const auto batch = f.predict_votes_batch(q.values);
    for (std::size_t i = 0; i < q.size(); ++i) {
        const Vote v = f.predict_vote(q.row(i));
        EXPECT_NEAR(v.fractions[0] + v.fractions[1], 1.0, 1e-15);
        EXPECT_NEAR(v.fractions[0] * 7.0, std::round(v.fractions[0] * 7.0), 1e-12);
        EXPECT_EQ(batch[2 * i], v.fractions[0]);
        EXPECT_EQ(batch[2 * i + 1], v.fractions[1]);
    }
}

TEST(Forest, SeparableTrainingSetFitsPerfectly) {
    Engine rng(5);
    Dataset d;
    d.attribute_count = 5;
    d.class_labels = {"lo", "hi"};
    for (int i = 0; i < 300; ++i) {
        std::vector<double> row(5);
        for (auto& v : row) v = uniform_unit(rng);
        d.add(row, row[2] > 0.5 ? 1u : 0u);
    }
    const RandomForest f = train_forest(d, {50, 2, 6});
    for (std::size_t i = 0; i < d.size(); ++i) EXPECT_EQ(f.predict_vote(d.row(i)).label, d.labels[i]);
}

TEST(Forest, DeterministicAndThreadIndependent) {
    const Dataset d = noisy(150, 8, 6);
    const RandomForest a = train_forest(d, {20, 3, 99, 1});
    const RandomForest b = train_forest(d, {20, 3, 99, 3});
    EXPECT_EQ(a, b);
    EXPECT_EQ(a.serialize(), b.serialize());
}

TEST(Forest, HeightGrowsWithTrainingSize) {
    std::vector<double> heights;
    for (std::size_t n : {50u, 200u, 800u}) heights.push_back(train_forest(noisy(n, 10, 7), {30, 3, 8}).measure_heights().average);
    EXPECT_LT(heights[0], heights[1]);
    EXPECT_LT(heights[1], heights[2]);
}

TEST(Forest, OutOfBagSets) {
    const Dataset d = noisy(300, 4, 9);
    std::vector<std::vector<std::uint32_t>> oob;
    const RandomForest f = train_forest(d, {10, 2, 1}, &oob);
    ASSERT_EQ(oob.size(), 10u);
    for (const auto& s : oob) {
        EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
        // about e^-1 of the objects stay out of a bootstrap bag
        EXPECT_NEAR(double(s.size()) / 300.0, std::exp(-1.0), 0.08);
    }
    EXPECT_EQ(f, train_forest(d, {10, 2, 1}));
}

TEST(Forest, Errors) {
    EXPECT_THROW(train_forest(noisy(1, 3, 1), {}), EmptyDatasetError);
    EXPECT_THROW(train_forest(noisy(10, 3, 1), {0}), InvalidArgumentError);
}

TEST(ForestSerialization, RoundTrip) {
    const Dataset d = noisy(300, 9, 10);
    const RandomForest f = train_forest(d, {25, 3, 11});
    const Bytes bytes = f.serialize();
    const RandomForest back = RandomForest::deserialize(bytes);
    EXPECT_EQ(back, f);
    EXPECT_EQ(back.serialize(), bytes);
    Bytes truncated(bytes.begin(), bytes.end() - 9);
    EXPECT_THROW(RandomForest::deserialize(truncated), FormatError);
    Bytes bad = bytes;
    bad[0] = 'x';
    EXPECT_THROW(RandomForest::deserialize(bad), FormatError);
}

TEST(Forest, PrefixKeepsLeadingTrees) {
    const Dataset d = noisy(100, 4, 12);
    const RandomForest f = train_forest(d, {10, 2, 13});
    const RandomForest p = f.prefix(4);
    ASSERT_EQ(p.size(), 4u);
    for (std::size_t t = 0; t < 4; ++t) EXPECT_EQ(p.trees()[t], f.trees()[t]);
    EXPECT_EQ(train_forest(d, {4, 2, 13}), p);
}
