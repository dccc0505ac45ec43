#include "i2l/tree.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "i2l/error.hpp"

namespace i2l {

LossFunction::LossFunction(std::vector<std::vector<double>> table) : k_(static_cast<int>(table.size())) {
  if (k_ < 1) throw InputError("loss table is empty");
  integral_ = true;
  table_.reserve(static_cast<std::size_t>(k_) * k_);
  for (const auto& row : table) {
    if (static_cast<int>(row.size()) != k_) throw InputError("loss table is not square");
    table_.insert(table_.end(), row.begin(), row.end());
  }
  for (int a = 0; a < k_; ++a) {
    for (int b = 0; b < k_; ++b) {
      const double v = (*this)(a, b);
      if (!std::isfinite(v)) throw InputError("loss table holds a non-finite entry");
      if (a == b && v != 0.0) throw InputError("loss(a, a) must be 0");
      if (a != b && !(v > 0.0)) throw InputError("loss(a, b) must be positive for a != b");
      if (v != (*this)(b, a)) throw InputError("loss table is not symmetric");
      if (v != std::floor(v)) integral_ = false;
    }
  }
}

LossFunction LossFunction::absolute(int k) {
  std::vector<std::vector<double>> t(k, std::vector<double>(k));
  for (int a = 0; a < k; ++a)
    for (int b = 0; b < k; ++b) t[a][b] = std::abs(a - b);
  return LossFunction(std::move(t));
}

LossFunction LossFunction::zero_one(int k) {
  std::vector<std::vector<double>> t(k, std::vector<double>(k, 1.0));
  for (int a = 0; a < k; ++a) t[a][a] = 0.0;
  return LossFunction(std::move(t));
}

namespace {

// Sum over ordered pairs of count products times loss. Exact for integer
// counts and an integral table while the sum stays below 2^53.
template <class T>
double pair_sum(std::span<const T> counts, const LossFunction& loss) {
  double s = 0.0;
  for (int a = 0; a < loss.classes(); ++a) {
    if (counts[a] == 0) continue;
    for (int b = 0; b < loss.classes(); ++b) s += static_cast<double>(counts[a]) * counts[b] * loss(a, b);
  }
  return s;
}

template <class T>
double impurity_impl(std::span<const T> counts, const LossFunction& loss) {
  if (static_cast<int>(counts.size()) != loss.classes()) throw InputError("count vector does not match the loss");
  double n = 0.0;
  for (T c : counts) {
    if (c < 0) throw InputError("negative class count");
    n += static_cast<double>(c);
  }
  if (!(n > 0.0)) throw InputError("impurity of an empty node is undefined");
  if constexpr (std::is_integral_v<T>) {
    if (loss.integral()) return pair_sum(counts, loss) / (n * n);
  }
  double s = 0.0;
  for (int a = 0; a < loss.classes(); ++a)
    for (int b = 0; b < loss.classes(); ++b) s += (counts[a] / n) * (counts[b] / n) * loss(a, b);
  return s;
}

double weighted(double nl, double il, double nr, double ir) {
  const double n = nl + nr;
  return (nl / n) * il + (nr / n) * ir;
}

double midpoint(double lo, double hi) {
  double mid = lo + (hi - lo) / 2.0;
  if (!(mid > lo) || !(mid <= hi)) mid = hi;
  return mid;
}

struct Scan {
  double threshold = 0.0;
  double score = std::numeric_limits<double>::infinity();
  bool found = false;
};

// Walks rows in ascending value order; `value(i)` and `label(i)` address the
// i-th row of that order.
template <class ValueAt, class LabelAt>
Scan scan_sorted(std::size_t n, ValueAt value, LabelAt label, std::span<const int> total, const LossFunction& loss,
                 std::vector<int>& left, std::vector<int>& right) {
  const int k = loss.classes();
  left.assign(k, 0);
  right.assign(total.begin(), total.end());
  Scan best;
  const bool incremental = loss.integral();
  double sl = 0.0;
  double sr = incremental ? pair_sum<int>(right, loss) : 0.0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const int a = label(i);
    if (incremental) {
      double dl = 0.0, dr = 0.0;
      for (int b = 0; b < k; ++b) {
        dl += left[b] * loss(a, b);
        dr += (right[b] - (b == a ? 1 : 0)) * loss(a, b);
      }
      sl += 2.0 * dl;
      sr -= 2.0 * dr;
    }
    ++left[a];
    --right[a];
    const double lo = value(i), hi = value(i + 1);
    if (!(lo < hi)) continue;
    const double nl = static_cast<double>(i + 1), nr = static_cast<double>(n - i - 1);
    double il, ir;
    if (incremental) {
      il = sl / (nl * nl);
      ir = sr / (nr * nr);
    } else {
      il = impurity_impl<int>(left, loss);
      ir = impurity_impl<int>(right, loss);
    }
    const double score = weighted(nl, il, nr, ir);
    if (score < best.score) {
      best.score = score;
      best.threshold = midpoint(lo, hi);
      best.found = true;
    }
  }
  return best;
}

}  // namespace

double impurity(std::span<const double> counts, const LossFunction& loss) { return impurity_impl(counts, loss); }
double impurity(std::span<const int> counts, const LossFunction& loss) { return impurity_impl(counts, loss); }

int medoid_label(std::span<const int> counts, const LossFunction& loss) {
  int best = 0;
  double best_cost = std::numeric_limits<double>::infinity();
  for (int a = 0; a < loss.classes(); ++a) {
    double cost = 0.0;
    for (int b = 0; b < loss.classes(); ++b) cost += counts[b] * loss(a, b);
    if (cost < best_cost) {
      best = a;
      best_cost = cost;
    }
  }
  return best;
}

std::optional<Split> best_split(std::span<const double> values, std::span<const int> labels,
                                const LossFunction& loss) {
  if (values.size() != labels.size()) throw InputError("values and labels differ in length");
  if (values.size() < 2) throw InputError("best_split needs at least two rows");
  std::vector<int> total(loss.classes(), 0);
  for (int l : labels) {
    if (l < 0 || l >= loss.classes()) throw InputError("label outside the loss table");
    ++total[l];
  }
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<int> left, right;
  const Scan s = scan_sorted(
      order.size(), [&](std::size_t i) { return values[order[i]]; }, [&](std::size_t i) { return labels[order[i]]; },
      total, loss, left, right);
  if (!s.found) return std::nullopt;
  return Split{s.threshold, impurity(std::span<const int>(total), loss) - s.score};
}

// ---------------------------------------------------------------------------
// DecisionTree

DecisionTree::DecisionTree(std::vector<std::string> feature_names, std::vector<Node> nodes)
    : names_(std::move(feature_names)), nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw InputError("a tree needs at least one node");
  const int n = static_cast<int>(nodes_.size());
  for (int i = 0; i < n; ++i) {
    const Node& node = nodes_[i];
    if (node.leaf()) continue;
    if (node.feature >= static_cast<int>(names_.size())) throw InputError("node tests an unknown feature");
    if (node.left <= i || node.right <= i || node.left >= n || node.right >= n)
      throw InputError("node children must follow their parent");
    if (!std::isfinite(node.threshold)) throw InputError("node threshold is not finite");
  }
}

int DecisionTree::predict(std::span<const double> x) const {
  int i = 0;
  while (!nodes_[i].leaf()) {
    const Node& node = nodes_[i];
    if (node.feature >= static_cast<int>(x.size())) throw InputError("feature vector is too short for the tree");
    const double v = x[node.feature];
    if (!std::isfinite(v)) throw InputError("non-finite value for feature '" + names_[node.feature] + "'");
    i = v < node.threshold ? node.left : node.right;
  }
  return nodes_[i].label;
}

int DecisionTree::leaf_count() const {
  int n = 0;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (node.leaf()) {
      ++n;
    } else {
      stack.push_back(node.left);
      stack.push_back(node.right);
    }
  }
  return n;
}

int DecisionTree::depth() const {
  std::function<int(int)> d = [&](int i) -> int {
    const Node& node = nodes_[i];
    return node.leaf() ? 0 : 1 + std::max(d(node.left), d(node.right));
  };
  return d(0);
}

std::vector<int> DecisionTree::used_features() const {
  std::vector<int> out;
  std::vector<int> stack{0};
  while (!stack.empty()) {
    const Node& node = nodes_[stack.back()];
    stack.pop_back();
    if (node.leaf()) continue;
    out.push_back(node.feature);
    stack.push_back(node.left);
    stack.push_back(node.right);
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

std::vector<std::string> DecisionTree::used_feature_names() const {
  std::vector<std::string> out;
  for (int f : used_features()) out.push_back(names_[f]);
  return out;
}

DecisionTree DecisionTree::collapsed(std::span<const int> collapse) const {
  std::vector<char> cut(nodes_.size(), 0);
  for (int c : collapse) cut.at(c) = 1;
  std::vector<Node> out;
  std::function<int(int)> copy = [&](int i) -> int {
    const int id = static_cast<int>(out.size());
    out.push_back(nodes_[i]);
    if (nodes_[i].leaf() || cut[i]) {
      Node& leaf = out[id];
      leaf.feature = -1;
      leaf.threshold = 0.0;
      leaf.left = leaf.right = -1;
      return id;
    }
    const int l = copy(nodes_[i].left);
    const int r = copy(nodes_[i].right);
    out[id].left = l;
    out[id].right = r;
    return id;
  };
  copy(0);
  return DecisionTree(names_, std::move(out));
}

bool DecisionTree::contains_subtree(const DecisionTree& other) const {
  std::function<bool(int, int)> walk = [&](int i, int j) -> bool {
    const Node& a = nodes_[i];
    const Node& b = other.nodes_[j];
    if (a.counts != b.counts || a.label != b.label) return false;
    if (b.leaf()) return true;
    if (a.leaf() || a.feature != b.feature || a.threshold != b.threshold) return false;
    return walk(a.left, b.left) && walk(a.right, b.right);
  };
  return names_ == other.names_ && walk(0, 0);
}

DecisionTree DecisionTree::remapped(const std::vector<std::string>& feature_names) const {
  std::vector<Node> nodes = nodes_;
  for (Node& node : nodes) {
    if (node.leaf()) continue;
    auto it = std::find(feature_names.begin(), feature_names.end(), names_[node.feature]);
    if (it == feature_names.end()) throw InputError("feature '" + names_[node.feature] + "' is not available");
    node.feature = static_cast<int>(it - feature_names.begin());
  }
  return DecisionTree(feature_names, std::move(nodes));
}

// ---------------------------------------------------------------------------
// Induction

namespace {

class Grower {
 public:
  Grower(const Dataset& data, std::span<const std::size_t> rows, const LossFunction& loss)
      : loss_(loss), n_(rows.size()), f_(data.cols()) {
    columns_.resize(f_ * n_);
    labels_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) {
      const int l = data.label(rows[i]);
      if (l < 0 || l >= loss.classes()) throw InputError("label outside the loss table");
      labels_[i] = l;
      for (std::size_t c = 0; c < f_; ++c) columns_[c * n_ + i] = data.at(rows[i], c);
    }
    order_.resize(f_ * n_);
    for (std::size_t c = 0; c < f_; ++c) {
      auto first = order_.begin() + static_cast<std::ptrdiff_t>(c * n_);
      std::iota(first, first + static_cast<std::ptrdiff_t>(n_), 0u);
      const double* col = &columns_[c * n_];
      std::stable_sort(first, first + static_cast<std::ptrdiff_t>(n_),
                       [col](std::uint32_t a, std::uint32_t b) { return col[a] < col[b]; });
    }
    goes_left_.resize(n_);
    scratch_.resize(n_);
  }

  std::vector<DecisionTree::Node> run() {
    if (n_ > 0) build(0, n_);
    return std::move(nodes_);
  }

 private:
  int build(std::size_t begin, std::size_t end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    std::vector<int> counts(loss_.classes(), 0);
    // any column's segment holds the node's rows
    for (std::size_t i = begin; i < end; ++i) ++counts[labels_[order_[i]]];
    nodes_[id].counts = counts;
    nodes_[id].label = medoid_label(counts, loss_);
    const bool pure = std::count_if(counts.begin(), counts.end(), [](int c) { return c > 0; }) <= 1;
    if (pure || end - begin < 2) return id;

    int best_feature = -1;
    Scan best;
    for (std::size_t c = 0; c < f_; ++c) {
      const std::uint32_t* idx = &order_[c * n_ + begin];
      const double* col = &columns_[c * n_];
      if (!(col[idx[0]] < col[idx[end - begin - 1]])) continue;
      const Scan s = scan_sorted(
          end - begin, [&](std::size_t i) { return col[idx[i]]; }, [&](std::size_t i) { return labels_[idx[i]]; },
          counts, loss_, left_, right_);
      if (s.found && s.score < best.score) {
        best = s;
        best_feature = static_cast<int>(c);
      }
    }
    if (best_feature < 0) return id;

    const double* col = &columns_[static_cast<std::size_t>(best_feature) * n_];
    const std::uint32_t* idx = &order_[static_cast<std::size_t>(best_feature) * n_ + begin];
    std::size_t n_left = 0;
    for (std::size_t i = 0; i < end - begin; ++i) {
      const bool l = col[idx[i]] < best.threshold;
      goes_left_[idx[i]] = l;
      n_left += l;
    }
    for (std::size_t c = 0; c < f_; ++c) {
      std::uint32_t* seg = &order_[c * n_ + begin];
      std::size_t li = 0, ri = 0;
      for (std::size_t i = 0; i < end - begin; ++i) {
        if (goes_left_[seg[i]])
          seg[li++] = seg[i];
        else
          scratch_[ri++] = seg[i];
      }
      std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(ri), seg + li);
    }
    nodes_[id].feature = best_feature;
    nodes_[id].threshold = best.threshold;
    const int l = build(begin, begin + n_left);
    const int r = build(begin + n_left, end);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  const LossFunction& loss_;
  std::size_t n_;
  std::size_t f_;
  std::vector<double> columns_;  // column-major
  std::vector<int> labels_;
  std::vector<std::uint32_t> order_;  // per column, row ids sorted by value within each node segment
  std::vector<char> goes_left_;
  std::vector<std::uint32_t> scratch_;
  std::vector<int> left_, right_;
  std::vector<DecisionTree::Node> nodes_;
};

}  // namespace

DecisionTree grow(const Dataset& data, std::span<const std::size_t> rows, const LossFunction& loss) {
  if (rows.empty()) throw InputError("cannot grow a tree on zero rows");
  Grower g(data, rows, loss);
  return DecisionTree(data.feature_names(), g.run());
}

DecisionTree grow(const Dataset& data, const LossFunction& loss) {
  std::vector<std::size_t> rows(data.rows());
  std::iota(rows.begin(), rows.end(), 0);
  return grow(data, rows, loss);
}

// ---------------------------------------------------------------------------
// Pruning

PruneSequence::PruneSequence(DecisionTree grown, std::vector<double> alphas, std::vector<int> leaf_from)
    : grown_(std::move(grown)), alphas_(std::move(alphas)), leaf_from_(std::move(leaf_from)) {
  const auto& nodes = grown_.nodes();
  if (leaf_from_.size() != nodes.size()) throw InputError("prune schedule does not match the tree");
  if (alphas_.empty()) throw InputError("a prune sequence holds at least one tree");
  const int n = static_cast<int>(alphas_.size());
  leaves_.assign(n, 0);
  // node i is a leaf of tree k iff leaf_from[i] <= k and no ancestor is
  for (int f : leaf_from_)
    if (f < 0 || f > n) throw InputError("prune schedule index out of range");
  if (leaf_from_[0] >= n) throw InputError("the last tree of a prune sequence must be a single leaf");
  std::vector<int> visible_until(nodes.size(), n - 1);
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const int from = leaf_from_[i];
    if (nodes[i].leaf() && leaf_from_[i] != 0) throw InputError("grown leaves must be leaves from the start");
    for (int k = from; k <= visible_until[i]; ++k) ++leaves_[k];
    if (!nodes[i].leaf()) {
      const int until = std::min(visible_until[i], from - 1);
      visible_until[nodes[i].left] = visible_until[nodes[i].right] = until;
    }
  }
}

DecisionTree PruneSequence::tree(std::size_t i) const {
  std::vector<int> cut;
  for (std::size_t node = 0; node < leaf_from_.size(); ++node)
    if (!grown_.nodes()[node].leaf() && leaf_from_[node] <= static_cast<int>(i)) cut.push_back(static_cast<int>(node));
  return grown_.collapsed(cut);
}

int PruneSequence::predict(std::size_t i, std::span<const double> x) const {
  const auto& nodes = grown_.nodes();
  int n = 0;
  while (!nodes[n].leaf() && leaf_from_[n] > static_cast<int>(i)) {
    const auto& node = nodes[n];
    const double v = x[node.feature];
    if (!std::isfinite(v)) throw InputError("non-finite value for feature '" + grown_.feature_names()[node.feature] + "'");
    n = v < node.threshold ? node.left : node.right;
  }
  return nodes[n].label;
}

PruneSequence mccp(const DecisionTree& t0, const LossFunction& loss) {
  const auto& nodes = t0.nodes();
  const int m = static_cast<int>(nodes.size());
  double total = 0.0;
  for (int c : t0.root().counts) total += c;
  if (!(total > 0.0)) throw InputError("tree carries no training counts");

  std::vector<int> parent(m, -1);
  std::vector<double> own(m), sub(m);
  std::vector<int> leaves(m, 1);
  std::vector<char> live(m, 0);  // internal node still present
  for (int i = 0; i < m; ++i) {
    for (int b = 0; b < loss.classes(); ++b) own[i] += nodes[i].counts[b] * loss(nodes[i].label, b);
    if (!nodes[i].leaf()) {
      parent[nodes[i].left] = parent[nodes[i].right] = i;
      live[i] = 1;
    }
  }
  // children follow their parent, so a reverse sweep is bottom-up
  for (int i = m - 1; i >= 0; --i) {
    if (nodes[i].leaf()) {
      sub[i] = own[i];
    } else {
      sub[i] = sub[nodes[i].left] + sub[nodes[i].right];
      leaves[i] = leaves[nodes[i].left] + leaves[nodes[i].right];
    }
  }
  auto g = [&](int i) { return (own[i] - sub[i]) / (total * (leaves[i] - 1)); };

  std::vector<int> leaf_from(m, std::numeric_limits<int>::max());
  for (int i = 0; i < m; ++i)
    if (nodes[i].leaf()) leaf_from[i] = 0;
  std::vector<int> stack;
  auto collapse = [&](int t, int index) {
    const double dcost = own[t] - sub[t];
    const int dleaves = 1 - leaves[t];
    leaf_from[t] = index;
    live[t] = 0;
    sub[t] = own[t];
    leaves[t] = 1;
    stack.assign({nodes[t].left, nodes[t].right});
    while (!stack.empty()) {
      const int d = stack.back();
      stack.pop_back();
      if (!live[d]) continue;
      live[d] = 0;
      stack.push_back(nodes[d].left);
      stack.push_back(nodes[d].right);
    }
    for (int a = parent[t]; a >= 0; a = parent[a]) {
      sub[a] += dcost;
      leaves[a] += dleaves;
    }
  };
  // collapse every link with g <= alpha, including ancestors that drop to it
  auto collapse_upto = [&](double alpha, int index) {
    const double limit = alpha + 1e-10 * std::abs(alpha);
    for (bool any = true; any;) {
      any = false;
      for (int i = 0; i < m; ++i) {
        if (live[i] && g(i) <= limit) {
          collapse(i, index);
          any = true;
        }
      }
    }
  };

  std::vector<double> alphas{0.0};
  collapse_upto(0.0, 0);
  while (live[0]) {
    double gmin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < m; ++i)
      if (live[i]) gmin = std::min(gmin, g(i));
    const int index = static_cast<int>(alphas.size());
    alphas.push_back(gmin);
    collapse_upto(gmin, index);
  }
  for (int& f : leaf_from) f = std::min(f, static_cast<int>(alphas.size()));
  return PruneSequence(t0, std::move(alphas), std::move(leaf_from));
}

double accuracy(const DecisionTree& tree, const Dataset& data, std::span<const std::size_t> rows) {
  if (rows.empty()) throw InputError("accuracy over an empty row set");
  std::size_t hit = 0;
  for (std::size_t r : rows) hit += tree.predict(data.row(r)) == data.label(r);
  return static_cast<double>(hit) / static_cast<double>(rows.size());
}

// ---------------------------------------------------------------------------
// Serialisation

nlohmann::json tree_to_json(const DecisionTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const auto& node : tree.nodes()) {
    nlohmann::json j;
    if (node.leaf()) {
      j["leaf"] = true;
    } else {
      j["feature"] = tree.feature_names()[node.feature];
      j["threshold"] = node.threshold;
      j["left"] = node.left;
      j["right"] = node.right;
    }
    j["label"] = node.label;
    j["counts"] = node.counts;
    nodes.push_back(std::move(j));
  }
  return {{"features", tree.feature_names()}, {"nodes", std::move(nodes)}};
}

DecisionTree tree_from_json(const nlohmann::json& j) {
  try {
    auto names = j.at("features").get<std::vector<std::string>>();
    std::vector<DecisionTree::Node> nodes;
    for (const auto& jn : j.at("nodes")) {
      DecisionTree::Node node;
      node.label = jn.at("label").get<int>();
      node.counts = jn.at("counts").get<std::vector<int>>();
      if (!jn.value("leaf", false)) {
        const auto f = jn.at("feature").get<std::string>();
        auto it = std::find(names.begin(), names.end(), f);
        if (it == names.end()) throw ConfigError("tree node tests unknown feature '" + f + "'");
        node.feature = static_cast<int>(it - names.begin());
        node.threshold = jn.at("threshold").get<double>();
        node.left = jn.at("left").get<int>();
        node.right = jn.at("right").get<int>();
      }
      nodes.push_back(std::move(node));
    }
    return DecisionTree(std::move(names), std::move(nodes));
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed tree JSON: ") + e.what());
  } catch (const InputError& e) {
    throw ConfigError(std::string("malformed tree JSON: ") + e.what());
  }
}

namespace {

std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out += '\\';
    out += c;
  }
  return out;
}

std::string dot_unescape(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s[i] == '\\' && i + 1 < s.size()) ++i;
    out += s[i];
  }
  return out;
}

std::string join_counts(const std::vector<int>& counts) {
  std::string out;
  for (std::size_t i = 0; i < counts.size(); ++i) out += (i ? " " : "") + std::to_string(counts[i]);
  return out;
}

}  // namespace

nlohmann::json prune_sequence_to_json(const PruneSequence& sequence) {
  std::vector<int> leaf_from(sequence.grown().node_count());
  for (std::size_t i = 0; i < leaf_from.size(); ++i) leaf_from[i] = sequence.leaf_from(static_cast<int>(i));
  return {{"tree", tree_to_json(sequence.grown())}, {"alphas", sequence.alphas()}, {"leaf_from", leaf_from}};
}

PruneSequence prune_sequence_from_json(const nlohmann::json& j) {
  try {
    return PruneSequence(tree_from_json(j.at("tree")), j.at("alphas").get<std::vector<double>>(),
                         j.at("leaf_from").get<std::vector<int>>());
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed prune sequence: ") + e.what());
  }
}

std::string tree_to_dot(const DecisionTree& tree) {
  std::ostringstream out;
  out.precision(17);
  out << "digraph tree {\n  node [shape=box, fontname=\"monospace\"];\n";
  const auto& nodes = tree.nodes();
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto& node = nodes[i];
    out << "  n" << i << " [";
    if (node.leaf()) {
      out << "label=\"action " << node.label << "\\n[" << join_counts(node.counts) << "]\", style=rounded";
    } else {
      const std::string name = dot_escape(tree.feature_names()[node.feature]);
      out << "label=\"" << name << " < " << node.threshold << "\", i2l_feature=\"" << name
          << "\", i2l_threshold=\"" << node.threshold << "\"";
    }
    out << ", i2l_label=\"" << node.label << "\", i2l_counts=\"" << join_counts(node.counts) << "\"];\n";
  }
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    if (nodes[i].leaf()) continue;
    out << "  n" << i << " -> n" << nodes[i].left << " [label=\"yes\"];\n";
    out << "  n" << i << " -> n" << nodes[i].right << " [label=\"no\"];\n";
  }
  out << "}\n";
  return out.str();
}

DecisionTree tree_from_dot(const std::string& dot) {
  static const std::regex node_re(R"re(^\s*n(\d+) \[(.*)\];\s*$)re");
  static const std::regex edge_re(R"re(^\s*n(\d+) -> n(\d+) \[label="(yes|no)"\];\s*$)re");
  static const std::regex attr_re(R"re(i2l_(\w+)="((?:[^"\\]|\\.)*)")re");
  std::vector<DecisionTree::Node> nodes;
  std::vector<std::string> names;
  std::istringstream in(dot);
  std::string line;
  std::smatch m;
  while (std::getline(in, line)) {
    if (std::regex_match(line, m, edge_re)) {
      const std::size_t from = std::stoul(m[1]);
      if (from >= nodes.size()) throw ConfigError("DOT edge from an unknown node");
      (m[3] == "yes" ? nodes[from].left : nodes[from].right) = std::stoi(m[2]);
    } else if (std::regex_match(line, m, node_re)) {
      if (std::stoul(m[1]) != nodes.size()) throw ConfigError("DOT nodes out of order");
      DecisionTree::Node node;
      const std::string attrs = m[2];
      for (auto it = std::sregex_iterator(attrs.begin(), attrs.end(), attr_re); it != std::sregex_iterator(); ++it) {
        const std::string key = (*it)[1];
        const std::string val = dot_unescape((*it)[2]);
        if (key == "feature") {
          auto f = std::find(names.begin(), names.end(), val);
          node.feature = static_cast<int>(f - names.begin());
          if (f == names.end()) names.push_back(val);
        } else if (key == "threshold") {
          node.threshold = std::stod(val);
        } else if (key == "label") {
          node.label = std::stoi(val);
        } else if (key == "counts") {
          std::istringstream cs(val);
          for (int c; cs >> c;) node.counts.push_back(c);
        }
      }
      nodes.push_back(std::move(node));
    }
  }
  if (nodes.empty()) throw ConfigError("DOT text holds no tree nodes");
  try {
    return DecisionTree(std::move(names), std::move(nodes));
  } catch (const InputError& e) {
    throw ConfigError(std::string("malformed tree DOT: ") + e.what());
  }
}

}  // namespace i2l
