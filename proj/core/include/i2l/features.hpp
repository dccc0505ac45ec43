#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "i2l/dataset.hpp"
#include "i2l/sim.hpp"

namespace i2l {

enum class Sort { Vehicle, Junction, Position, Speed, Separation, Delta };

// Feature-eligible sorts: Speed, Separation, Delta.
constexpr bool is_scalar(Sort s) { return s == Sort::Speed || s == Sort::Separation || s == Sort::Delta; }
std::string_view sort_name(Sort s);

enum class Op { Ego, Pos, Speed, Fj, Fa, Ba, Twin, Sep, Sub };
std::string_view op_name(Op op);

struct OperationSig {
  Op op;
  std::vector<Sort> inputs;
  Sort output;
};

// The eight operations with their overloads, one entry per signature.
const std::vector<OperationSig>& operation_signatures();

class Term;
using TermPtr = std::shared_ptr<const Term>;

// Immutable, well-sorted term. Construct through make_term / ego_term.
class Term {
 public:
  Op op() const { return op_; }
  Sort sort() const { return sort_; }
  int depth() const { return depth_; }
  const std::vector<TermPtr>& args() const { return args_; }
  const std::string& canonical() const { return canonical_; }

 private:
  friend TermPtr make_term(Op, std::vector<TermPtr>);
  friend TermPtr ego_term();
  Term() = default;

  Op op_ = Op::Ego;
  Sort sort_ = Sort::Vehicle;
  int depth_ = 0;
  std::vector<TermPtr> args_;
  std::string canonical_;
};

TermPtr ego_term();
// Throws InputError if no signature of `op` accepts the argument sorts.
TermPtr make_term(Op op, std::vector<TermPtr> args);
// Parses a canonical rendering such as "sep(pos(fj(ego)),pos(ego))".
TermPtr parse_term(std::string_view text);

// A term of scalar sort, usable as a dataset column.
class FeatureExpr {
 public:
  explicit FeatureExpr(TermPtr root);
  static FeatureExpr parse(std::string_view text);

  const Term& term() const { return *root_; }
  const TermPtr& root() const { return root_; }
  const std::string& canonical() const { return root_->canonical(); }
  int depth() const { return root_->depth(); }

  friend bool operator==(const FeatureExpr& a, const FeatureExpr& b) { return a.canonical() == b.canonical(); }

 private:
  TermPtr root_;
};

inline constexpr std::string_view kOperationSetVersion = "pos-speed-fj-fa-ba-twin-sep-sub/local-sep/ego-sub/v1";

struct FeatureSet {
  std::vector<FeatureExpr> features;
  int depth = 0;
  std::string version{kOperationSetVersion};

  std::size_t size() const { return features.size(); }
  std::vector<std::string> names() const;
  // Index of a canonical string, or -1.
  int index_of(std::string_view canonical) const;
  // Throws InputError on duplicate canonical strings.
  void validate() const;
};

// All scalar terms of depth <= r rooted in the ego symbol, ordered by depth
// then canonical string. Separations are formed only between an entity and
// the entity one operation away from it; differences always take an
// ego-anchored quantity (speed(ego), or a separation involving pos(ego)) as
// their first operand.
FeatureSet enumerate_features(int r);

// Direct recursive evaluation. Missing entities and cross-loop separations
// evaluate to sentinels: missing vehicle speed -> 0, separation -> length of
// the ego's loop.
double eval_feature(const FeatureExpr& expr, const MarkovState& state, const Topology& topology, int ego);

// A feature set compiled to a shared-subterm program; each distinct subterm
// is evaluated once per (state, ego).
class FeatureProgram {
 public:
  explicit FeatureProgram(const FeatureSet& features);

  std::size_t size() const { return outputs_.size(); }
  std::size_t node_count() const { return nodes_.size(); }
  void evaluate(const MarkovState& state, const Topology& topology, int ego, std::span<double> out) const;

  struct Node {
    Op op;
    Sort sort;
    int a = -1;
    int b = -1;
  };

 private:
  std::vector<Node> nodes_;
  std::vector<int> outputs_;
};

// One row per (recorded step with an action, vehicle), in step-major order,
// labelled with that vehicle's logged action. Rows carry `episode` and
// `topology_index` as provenance.
Dataset evaluate_matrix(const FeatureSet& features, const EpisodeHistory& history, const Topology& topology,
                        int episode = 0, int topology_index = 0);

// FeatureSet serialisation: a JSON list of canonical strings.
std::string feature_set_to_json(const FeatureSet& features);
FeatureSet feature_set_from_json(std::string_view text);

}  // namespace i2l
