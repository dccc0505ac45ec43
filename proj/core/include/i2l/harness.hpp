#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "i2l/dataset.hpp"
#include "i2l/features.hpp"
#include "i2l/policies.hpp"
#include "i2l/sim.hpp"
#include "i2l/tree.hpp"

namespace i2l {

// Worker count from I2L_THREADS (default: hardware concurrency, at least 1).
int thread_count();
// Runs fn(i) for i in [0, n) on up to thread_count() threads. The first
// exception thrown by any call is rethrown after all workers finish.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

// ---------------------------------------------------------------------------
// Representations

struct RepresentationSpec {
  enum class Kind { PhiAll, PhiF, PhiNaive };
  Kind kind = Kind::PhiAll;
  int depth = 6;  // PhiAll only
  int k = 4;      // PhiNaive only

  std::string label() const;  // "phi_all(6)", "phi_F", "phi_naive(4)"
};

// Maps (state, ego) to a fixed-width feature row.
class Representation {
 public:
  explicit Representation(const RepresentationSpec& spec);
  // Restricted to the named columns, which must belong to that representation.
  Representation(const RepresentationSpec& spec, const std::vector<std::string>& columns);

  const RepresentationSpec& spec() const { return spec_; }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  // The expression set behind a term-based representation, else empty.
  const FeatureSet& feature_set() const { return features_; }

  void evaluate(const MarkovState& state, const Topology& topology, int ego, std::span<double> out) const;

 private:
  RepresentationSpec spec_;
  std::vector<std::string> names_;
  FeatureSet features_;
  std::shared_ptr<const FeatureProgram> program_;
  std::vector<int> naive_columns_;
};

// ---------------------------------------------------------------------------
// Configuration

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  PolicyKind target = PolicyKind::FullyImitable;
  RepresentationSpec representation;
  std::vector<std::string> train_topologies;
  std::vector<std::string> test_topologies;
  int n_vehicles = 11;
  int episodes_per_topology = 10;
  int max_steps = 1000;
  std::size_t dataset_size = 20000;
  SplitFractions split;
  std::vector<int> prune_levels;
  int eval_episodes = 10;
  int eval_max_steps = 1000;
  std::string loss = "absolute";

  // Directory that relative topology paths resolve against.
  std::filesystem::path base_dir;
};

// Strict parser: unknown keys, missing seed, bad fractions or contradictory
// representation fields raise ConfigError naming the field.
ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
nlohmann::json config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::filesystem::path& path);

// "preset:X" names a built-in layout; anything else is a topology JSON path.
Topology resolve_topology(const std::string& ref, const std::filesystem::path& base_dir);
LossFunction make_loss(const std::string& name);
Policy make_policy(PolicyKind kind, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dataset assembly

// Indices kept when every class is downsampled to the smallest class count,
// further capped at `per_class_cap` when positive. Returned in ascending
// order. Throws ConfigError naming an empty class.
std::vector<std::size_t> rebalance_indices(std::span<const int> labels, std::uint64_t seed,
                                           std::size_t per_class_cap = 0, int n_classes = 5);
Dataset rebalance(const Dataset& data, std::uint64_t seed, std::size_t per_class_cap = 0);

// Episode counts per partition by largest remainder, ties to the earlier
// partition.
std::array<int, 3> split_counts(int episodes, const SplitFractions& fractions);
// Tags every row by its episode's partition, splitting the episodes of each
// topology separately. Throws ConfigError if a topology has fewer episodes
// than non-empty partitions.
void split(Dataset& data, const SplitFractions& fractions, std::uint64_t seed);

double accuracy(const DecisionTree& tree, const Dataset& data, SplitTag tag);

// Episodes recorded under the target policy. Episode ids are global across
// topologies.
struct EpisodeRecord {
  int id = 0;
  int topology = 0;
  bool test_only = false;
  EpisodeHistory history;
};

struct Collection {
  std::vector<Topology> topologies;
  std::vector<EpisodeRecord> episodes;
};

// Simulates `episodes_per_topology` episodes on every train and test
// topology. Episodes on topologies used only for testing are marked so.
Collection simulate_collection(const ExperimentConfig& config);
// The topologies simulate_collection would use, in the same order, with no
// episodes.
Collection collection_topologies(const ExperimentConfig& config);

// collect -> rebalance -> split -> evaluate the representation on the kept
// rows. Rows from test-only topologies are rebalanced separately and tagged
// Test.
Dataset assemble_dataset(const ExperimentConfig& config, const Collection& collection,
                         const Representation& representation);

// Every (step, vehicle) row of the collection under `representation`,
// without rebalancing or splitting.
Dataset collect_dataset(const Collection& collection, const Representation& representation);

// ---------------------------------------------------------------------------
// Deployment and metrics

struct MtbfResult {
  double mtbf = 0.0;
  int failures = 0;
  int collisions = 0;
  int stalls = 0;
  long long total_steps = 0;
};

struct EpisodeOutcome {
  int steps = 0;
  Termination termination = Termination::RanToLimit;
};

// Total steps over failed episodes; episodes x max_steps if none failed.
MtbfResult summarize_episodes(std::span<const EpisodeOutcome> outcomes, int max_steps);

// Seeded episodes run in parallel; the reduction is in episode order.
MtbfResult mtbf(const Policy& policy, const Topology& topology, int n_vehicles, int episodes, int max_steps,
                std::uint64_t seed);

// Tree over a representation's columns acting as a per-vehicle policy. Only
// the columns the tree tests are evaluated.
Policy tree_policy(const DecisionTree& tree, const RepresentationSpec& spec);

// ---------------------------------------------------------------------------
// Experiment

struct CurvePoint {
  int prune_index = 0;
  double alpha = 0.0;
  int leaves = 0;
  double val_accuracy = 0.0;
  int used_features = 0;
};

struct ReportRow {
  std::string tree;  // "T0", "prune_<i>", "best_val"
  int prune_index = 0;
  double alpha = 0.0;
  int leaves = 0;
  int used_features = 0;
  std::string topology;
  double accuracy = 0.0;
  MtbfResult deployment;
};

struct ReferenceRow {
  std::string policy;  // target policy or "random"
  std::string topology;
  MtbfResult deployment;
};

struct MetricsReport {
  std::string representation;
  std::string target;
  std::size_t feature_count = 0;
  std::size_t train_rows = 0;
  std::size_t val_rows = 0;
  std::size_t test_rows = 0;
  std::vector<ReportRow> rows;
  std::vector<ReferenceRow> references;
};

nlohmann::json report_to_json(const MetricsReport& report);
MetricsReport report_from_json(const nlohmann::json& j);
void write_report_csv(const MetricsReport& report, std::ostream& out);
void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out);

struct TrainResult {
  DecisionTree t0;
  PruneSequence sequence;
  std::vector<CurvePoint> curve;
  int best_val_index = 0;
};

TrainResult train_trees(const Dataset& data, const LossFunction& loss);
nlohmann::json train_result_to_json(const TrainResult& result);
TrainResult train_result_from_json(const nlohmann::json& j);

// Sequence indices to report: 0 (T0), each configured level (negative
// levels count from the end, out-of-range levels are clamped) and the
// best-validation tree, deduplicated and sorted.
std::vector<int> selected_levels(const ExperimentConfig& config, const TrainResult& trained);

struct EvaluateOptions {
  bool deploy = true;       // run MTBF deployments
  bool references = true;   // deploy the target and random policies too
};

MetricsReport evaluate_trees(const ExperimentConfig& config, const Dataset& data, const TrainResult& trained,
                             const std::vector<Topology>& test_topologies, const EvaluateOptions& options = {});

struct ExperimentResult {
  Dataset data;
  TrainResult trained;
  MetricsReport report;
};

ExperimentResult run_experiment(const ExperimentConfig& config, const EvaluateOptions& options = {});

}  // namespace i2l
