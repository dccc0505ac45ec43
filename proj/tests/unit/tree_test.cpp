#include <doctest.h>

#include <cmath>
#include <limits>
#include <map>
#include <random>
#include <set>

#include <nlohmann/json.hpp>

#include "i2l/error.hpp"
#include "i2l/tree.hpp"

using namespace i2l;

namespace {

Dataset table(std::vector<std::vector<double>> rows, std::vector<int> labels, int cols = 1) {
  std::vector<std::string> names;
  for (int c = 0; c < cols; ++c) names.push_back("f" + std::to_string(c));
  Dataset d(names);
  for (std::size_t r = 0; r < rows.size(); ++r) d.append(rows[r], labels[r]);
  return d;
}

Dataset random_table(int rows, int cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> value(0, 6), label(0, 4);
  std::vector<std::vector<double>> x;
  std::vector<int> y;
  for (int r = 0; r < rows; ++r) {
    std::vector<double> row;
    for (int c = 0; c < cols; ++c) row.push_back(value(rng));
    x.push_back(row);
    // labels mostly follow the first two columns
    y.push_back(rng() % 5 == 0 ? label(rng) : std::min(4, static_cast<int>(row[0] + row[1]) / 3));
  }
  return table(x, y, cols);
}

}  // namespace

TEST_CASE("impurity examples") {
  const auto abs = LossFunction::absolute();
  const auto zo = LossFunction::zero_one();
  CHECK(impurity(std::vector<int>{0, 0, 7, 0, 0}, abs) == 0.0);
  CHECK(impurity(std::vector<int>{5, 5, 0, 0, 0}, zo) == doctest::Approx(0.5));
  CHECK(impurity(std::vector<int>{3, 3, 3, 0, 0}, abs) == doctest::Approx(8.0 / 9.0));
  CHECK(impurity(std::vector<double>{0.5, 0.0, 0.0, 0.0, 0.5}, abs) == doctest::Approx(2.0));
  CHECK_THROWS_AS(impurity(std::vector<int>{0, 0, 0, 0, 0}, abs), InputError);
  CHECK_THROWS_AS(impurity(std::vector<int>{1, -1, 0, 0, 0}, abs), InputError);
}

TEST_CASE("loss validation") {
  CHECK_THROWS(LossFunction({{0.0, 1.0}, {1.0}}));
  CHECK_THROWS(LossFunction({{1.0, 1.0}, {1.0, 0.0}}));
  CHECK_THROWS(LossFunction({{0.0, -1.0}, {1.0, 0.0}}));
  CHECK(LossFunction::absolute()(0, 4) == 4.0);
  CHECK(LossFunction::zero_one()(0, 4) == 1.0);
  CHECK(LossFunction::absolute().integral());
}

TEST_CASE("medoid label") {
  const auto abs = LossFunction::absolute();
  CHECK(medoid_label(std::vector<int>{1, 0, 0, 0, 1}, abs) == 0);
  CHECK(medoid_label(std::vector<int>{0, 3, 0, 0, 2}, abs) == 1);
  CHECK(medoid_label(std::vector<int>{2, 0, 0, 0, 3}, abs) == 4);
  CHECK(medoid_label(std::vector<int>{1, 1, 0, 1, 1}, LossFunction::zero_one()) == 0);
}

TEST_CASE("best split") {
  const auto abs = LossFunction::absolute();
  const std::vector<double> x{1, 2, 3, 4};
  auto s = best_split(x, std::vector<int>{0, 0, 2, 2}, abs);
  REQUIRE(s);
  CHECK(s->threshold == 2.5);
  CHECK(s->decrease == doctest::Approx(1.0));

  s = best_split(x, std::vector<int>{1, 1, 1, 1}, abs);
  REQUIRE(s);
  CHECK(s->decrease == 0.0);
  CHECK(s->threshold == 1.5);

  CHECK_FALSE(best_split(std::vector<double>{3, 3, 3}, std::vector<int>{0, 1, 2}, abs));
  // values need not be sorted
  s = best_split(std::vector<double>{4, 1, 3, 2}, std::vector<int>{2, 0, 2, 0}, abs);
  REQUIRE(s);
  CHECK(s->threshold == 2.5);
}

TEST_CASE("grow a stump and predict at the threshold") {
  const Dataset d = table({{1}, {2}, {3}, {4}}, {0, 0, 2, 2});
  const DecisionTree t = grow(d, LossFunction::absolute());
  CHECK(t.leaf_count() == 2);
  CHECK(t.depth() == 1);
  CHECK(t.root().threshold == 2.5);
  CHECK(t.predict(std::vector<double>{2.4}) == 0);
  CHECK(t.predict(std::vector<double>{2.5}) == 2);
  CHECK_THROWS_AS(t.predict(std::vector<double>{std::nan("")}), InputError);
  CHECK_THROWS_AS(t.predict(std::vector<double>{std::numeric_limits<double>::infinity()}), InputError);
}

TEST_CASE("grow fits separable data exactly") {
  const Dataset d = random_table(300, 4, 1);
  const DecisionTree t = grow(d, LossFunction::absolute());
  std::size_t conflicts = 0;
  for (std::size_t r = 0; r < d.rows(); ++r)
    if (t.predict(d.row(r)) != d.label(r)) ++conflicts;
  // rows with identical features and different labels are the only misses
  std::map<std::vector<double>, std::set<int>> seen;
  for (std::size_t r = 0; r < d.rows(); ++r)
    seen[std::vector<double>(d.row(r).begin(), d.row(r).end())].insert(d.label(r));
  std::size_t ambiguous = 0;
  for (const auto& [_, labels] : seen) ambiguous += labels.size() > 1;
  if (ambiguous == 0) CHECK(conflicts == 0);
  for (const auto& n : t.nodes())
    if (n.leaf()) CHECK(n.label == medoid_label(n.counts, LossFunction::absolute()));
}

TEST_CASE("contradictory rows become one leaf") {
  const Dataset d = table({{1}, {1}, {1}}, {3, 0, 4});
  const DecisionTree t = grow(d, LossFunction::absolute());
  CHECK(t.leaf_count() == 1);
  CHECK(t.root().label == 3);
  const Dataset tie = table({{1}, {1}}, {4, 0});
  CHECK(grow(tie, LossFunction::absolute()).root().label == 0);
}

TEST_CASE("used features") {
  const Dataset flat = table({{1, 1}, {1, 1}}, {2, 2}, 2);
  CHECK(grow(flat, LossFunction::absolute()).used_features().empty());

  std::vector<std::vector<double>> rows;
  for (int i = 0; i < 4; ++i) {
    std::vector<double> r(8, 0.0);
    r[7] = i;
    rows.push_back(r);
  }
  const DecisionTree t = grow(table(rows, {0, 0, 1, 1}, 8), LossFunction::absolute());
  CHECK(t.used_features() == std::vector<int>{7});
  CHECK(t.used_feature_names() == std::vector<std::string>{"f7"});
}

TEST_CASE("prune sequence on a stump") {
  const Dataset d = table({{1}, {2}, {3}, {4}}, {0, 0, 2, 2});
  const PruneSequence seq = mccp(grow(d, LossFunction::absolute()), LossFunction::absolute());
  REQUIRE(seq.size() == 2);
  CHECK(seq.alpha(0) == 0.0);
  CHECK(seq.alpha(1) == doctest::Approx(1.0));
  CHECK(seq.leaf_count(0) == 2);
  CHECK(seq.leaf_count(1) == 1);
  CHECK(seq.tree(1).node_count() == 1);
  CHECK(seq.predict(1, std::vector<double>{4}) == seq.tree(1).root().label);

  const PruneSequence single = mccp(grow(table({{1}}, {2}), LossFunction::absolute()), LossFunction::absolute());
  CHECK(single.size() == 1);
  CHECK(single.leaf_count(0) == 1);
}

TEST_CASE("prune sequence is nested and consistent") {
  const Dataset d = random_table(400, 3, 7);
  const auto loss = LossFunction::absolute();
  const DecisionTree t0 = grow(d, loss);
  const PruneSequence seq = mccp(t0, loss);
  REQUIRE(seq.size() >= 2);
  CHECK(seq.tree(0).leaf_count() == seq.leaf_count(0));
  for (std::size_t i = 1; i < seq.size(); ++i) {
    CHECK(seq.alpha(i) > seq.alpha(i - 1));
    CHECK(seq.leaf_count(i) < seq.leaf_count(i - 1));
    const DecisionTree ti = seq.tree(i);
    CHECK(ti.leaf_count() == seq.leaf_count(i));
    CHECK(seq.tree(i - 1).contains_subtree(ti));
    for (std::size_t r = 0; r < d.rows(); r += 5) CHECK(seq.predict(i, d.row(r)) == ti.predict(d.row(r)));
  }
  CHECK(seq.leaf_count(seq.size() - 1) == 1);
}

TEST_CASE("prune sequence validation") {
  const Dataset d = table({{1}, {2}, {3}, {4}}, {0, 0, 2, 2});
  const DecisionTree t = grow(d, LossFunction::absolute());
  CHECK_THROWS(PruneSequence(t, {0.0, 1.0}, {5, 0, 0}));
  CHECK_THROWS(PruneSequence(t, {0.0, 1.0}, {2, 0, 0}));
  CHECK_THROWS(PruneSequence(t, {0.0, 1.0}, {1, 1, 0}));
  CHECK_NOTHROW(PruneSequence(t, {0.0, 1.0}, {1, 0, 0}));
}

TEST_CASE("tree and sequence serialisation round trips") {
  const Dataset d = random_table(200, 5, 3);
  const auto loss = LossFunction::absolute();
  const DecisionTree t = grow(d, loss);

  const DecisionTree json_back = tree_from_json(tree_to_json(t));
  CHECK(json_back.node_count() == t.node_count());
  CHECK(json_back.feature_names() == t.feature_names());
  CHECK(tree_to_json(json_back) == tree_to_json(t));

  const DecisionTree dot_back = tree_from_dot(tree_to_dot(t));
  CHECK(dot_back.leaf_count() == t.leaf_count());
  const DecisionTree remapped = dot_back.remapped(t.feature_names());
  for (std::size_t r = 0; r < d.rows(); ++r) CHECK(remapped.predict(d.row(r)) == t.predict(d.row(r)));

  const PruneSequence seq = mccp(t, loss);
  const PruneSequence seq_back = prune_sequence_from_json(prune_sequence_to_json(seq));
  REQUIRE(seq_back.size() == seq.size());
  for (std::size_t i = 0; i < seq.size(); ++i) {
    CHECK(seq_back.alpha(i) == seq.alpha(i));
    CHECK(seq_back.leaf_count(i) == seq.leaf_count(i));
  }
  CHECK_THROWS_AS(prune_sequence_from_json(nlohmann::json::parse(R"({"alphas": [0]})")), InputError);
  CHECK_THROWS(tree_from_dot("digraph {"));
}

TEST_CASE("remapping needs every tested column") {
  std::vector<std::vector<double>> rows{{0, 1}, {0, 2}, {0, 3}, {0, 4}};
  const DecisionTree t = grow(table(rows, {0, 0, 1, 1}, 2), LossFunction::absolute());
  const DecisionTree swapped = t.remapped({"f1", "f0"});
  CHECK(swapped.predict(std::vector<double>{4, 0}) == 1);
  CHECK_THROWS(t.remapped({"f0"}));
}

TEST_CASE("accuracy over rows") {
  const Dataset d = table({{1}, {2}, {3}, {4}}, {0, 0, 2, 2});
  const DecisionTree t = grow(d, LossFunction::absolute());
  const std::vector<std::size_t> all{0, 1, 2, 3};
  CHECK(accuracy(t, d, all) == 1.0);
  const PruneSequence seq = mccp(t, LossFunction::absolute());
  CHECK(accuracy(seq.tree(1), d, all) == 0.5);
}
