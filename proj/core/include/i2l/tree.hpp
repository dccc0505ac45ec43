#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "i2l/dataset.hpp"

namespace i2l {

// Pairwise action loss as a dense K x K table.
class LossFunction {
 public:
  // Throws InputError unless the table is square, zero on the diagonal,
  // positive off it, and symmetric.
  explicit LossFunction(std::vector<std::vector<double>> table);

  static LossFunction absolute(int k = 5);  // |a - a'|
  static LossFunction zero_one(int k = 5);

  int classes() const { return k_; }
  double operator()(int a, int b) const { return table_[static_cast<std::size_t>(a) * k_ + b]; }
  // True if every entry is an integer; impurity is then computed exactly.
  bool integral() const { return integral_; }

 private:
  int k_ = 0;
  std::vector<double> table_;
  bool integral_ = false;
};

// Expected pairwise loss of two actions drawn from the counts. Throws
// InputError on a zero total or negative counts.
double impurity(std::span<const double> counts, const LossFunction& loss);
double impurity(std::span<const int> counts, const LossFunction& loss);

// argmin_a sum_a' counts[a'] * loss(a, a'), lowest index on ties.
int medoid_label(std::span<const int> counts, const LossFunction& loss);

struct Split {
  double threshold = 0.0;
  double decrease = 0.0;
};

// Best midpoint threshold of one column; nullopt if fewer than two distinct
// values. Ties resolve to the lowest threshold.
std::optional<Split> best_split(std::span<const double> values, std::span<const int> labels,
                                const LossFunction& loss);

class DecisionTree {
 public:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    int label = 0;
    std::vector<int> counts;

    bool leaf() const { return feature < 0; }
  };

  DecisionTree() = default;
  DecisionTree(std::vector<std::string> feature_names, std::vector<Node> nodes);

  const std::vector<std::string>& feature_names() const { return names_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  const Node& root() const { return nodes_.front(); }
  std::size_t node_count() const { return nodes_.size(); }

  // Throws InputError on a non-finite value at a tested feature.
  int predict(std::span<const double> x) const;
  int leaf_count() const;
  int depth() const;
  // Sorted indices of the features tested anywhere in the tree.
  std::vector<int> used_features() const;
  std::vector<std::string> used_feature_names() const;

  // Copy with node `n` collapsed to a leaf and unreachable nodes removed.
  DecisionTree collapsed(std::span<const int> nodes) const;
  // True if `other` is this tree with zero or more subtrees collapsed.
  bool contains_subtree(const DecisionTree& other) const;

  // Same tree over a different column order; every tested name must exist.
  DecisionTree remapped(const std::vector<std::string>& feature_names) const;

 private:
  std::vector<std::string> names_;
  std::vector<Node> nodes_;
};

// Grown until every leaf is pure or its rows cannot be separated.
DecisionTree grow(const Dataset& data, std::span<const std::size_t> rows, const LossFunction& loss);
DecisionTree grow(const Dataset& data, const LossFunction& loss);

// Nested trees T_0 > T_1 > ... > root, stored as the grown tree plus, for
// every node, the first sequence index at which it is a leaf.
class PruneSequence {
 public:
  PruneSequence() = default;
  PruneSequence(DecisionTree grown, std::vector<double> alphas, std::vector<int> leaf_from);

  std::size_t size() const { return alphas_.size(); }
  double alpha(std::size_t i) const { return alphas_.at(i); }
  const std::vector<double>& alphas() const { return alphas_; }
  const DecisionTree& grown() const { return grown_; }
  // First index at which `node` of the grown tree is a leaf, size() if never.
  int leaf_from(int node) const { return leaf_from_.at(node); }

  DecisionTree tree(std::size_t i) const;
  int leaf_count(std::size_t i) const { return leaves_.at(i); }
  int predict(std::size_t i, std::span<const double> x) const;

 private:
  DecisionTree grown_;
  std::vector<double> alphas_;
  std::vector<int> leaf_from_;
  std::vector<int> leaves_;
};

// Weakest-link pruning. Risk is the training l-cost of each leaf label over
// the total training row count taken from the root counts. Links with zero
// cost-complexity are folded into the first entry, so alphas strictly
// increase from 0.
PruneSequence mccp(const DecisionTree& t0, const LossFunction& loss);

double accuracy(const DecisionTree& tree, const Dataset& data, std::span<const std::size_t> rows);

nlohmann::json tree_to_json(const DecisionTree& tree);
DecisionTree tree_from_json(const nlohmann::json& j);
nlohmann::json prune_sequence_to_json(const PruneSequence& sequence);
PruneSequence prune_sequence_from_json(const nlohmann::json& j);
std::string tree_to_dot(const DecisionTree& tree);
DecisionTree tree_from_dot(const std::string& dot);

}  // namespace i2l
