#include "i2l/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <thread>

#include <nlohmann/json.hpp>

#include "i2l/error.hpp"
#include "i2l/seeding.hpp"

namespace i2l {

namespace {

// Stream identifiers for derive_seed.
constexpr std::uint64_t kRebalanceStream = 0x7265626c;
constexpr std::uint64_t kTestRebalanceStream = 0x74726562;
constexpr std::uint64_t kSplitStream = 0x73706c74;
constexpr std::uint64_t kDeployStream = 0x64706c79;
constexpr std::uint64_t kRandomPolicyStream = 0x726e646d;

std::uint64_t name_hash(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Uniform integer in [0, n) by rejection; mt19937_64 output is fixed by the
// standard, so this is reproducible across standard libraries.
std::uint64_t bounded(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  for (;;) {
    const std::uint64_t x = rng();
    if (x < limit) return x % n;
  }
}

template <class T>
void shuffle(std::vector<T>& v, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[bounded(rng, i)]);
}

std::string format_double(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

int thread_count() {
  if (const char* env = std::getenv("I2L_THREADS")) {
    int n = 0;
    const std::string s(env);
    auto res = std::from_chars(s.data(), s.data() + s.size(), n);
    if (res.ec == std::errc() && res.ptr == s.data() + s.size() && n >= 1) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(thread_count()), n);
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto work = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < n;) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> threads;
  for (std::size_t t = 1; t < workers; ++t) threads.emplace_back(work);
  work();
  for (auto& t : threads) t.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Representations

std::string RepresentationSpec::label() const {
  switch (kind) {
    case Kind::PhiAll: return "phi_all(" + std::to_string(depth) + ")";
    case Kind::PhiF: return "phi_F";
    case Kind::PhiNaive: return "phi_naive(" + std::to_string(k) + ")";
  }
  return "unknown";
}

Representation::Representation(const RepresentationSpec& spec) : spec_(spec) {
  switch (spec.kind) {
    case RepresentationSpec::Kind::PhiAll: features_ = enumerate_features(spec.depth); break;
    case RepresentationSpec::Kind::PhiF: features_ = phi_F_set(); break;
    case RepresentationSpec::Kind::PhiNaive:
      if (spec.k < 0) throw ConfigError("representation.k must be non-negative");
      names_ = phi_naive_names(spec.k);
      naive_columns_.resize(names_.size());
      std::iota(naive_columns_.begin(), naive_columns_.end(), 0);
      return;
  }
  names_ = features_.names();
  program_ = std::make_shared<FeatureProgram>(features_);
}

Representation::Representation(const RepresentationSpec& spec, const std::vector<std::string>& columns)
    : spec_(spec), names_(columns) {
  if (spec.kind == RepresentationSpec::Kind::PhiNaive) {
    const auto all = phi_naive_names(spec.k);
    for (const std::string& c : columns) {
      auto it = std::find(all.begin(), all.end(), c);
      if (it == all.end()) throw ConfigError("column '" + c + "' is not part of " + spec.label());
      naive_columns_.push_back(static_cast<int>(it - all.begin()));
    }
    return;
  }
  const FeatureSet full = spec.kind == RepresentationSpec::Kind::PhiF ? phi_F_set() : enumerate_features(spec.depth);
  for (const std::string& c : columns) {
    const int i = full.index_of(c);
    if (i < 0) throw ConfigError("column '" + c + "' is not part of " + spec.label());
    features_.features.push_back(full.features[i]);
    features_.depth = std::max(features_.depth, full.features[i].depth());
  }
  program_ = std::make_shared<FeatureProgram>(features_);
}

void Representation::evaluate(const MarkovState& state, const Topology& topology, int ego,
                              std::span<double> out) const {
  if (program_) {
    program_->evaluate(state, topology, ego, out);
    return;
  }
  const std::vector<double> all = phi_naive(state, topology, ego, spec_.k);
  for (std::size_t i = 0; i < naive_columns_.size(); ++i) out[i] = all[naive_columns_[i]];
}

// ---------------------------------------------------------------------------
// Configuration

namespace {

template <class T>
T field(const nlohmann::json& j, const std::string& key, const std::string& path) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config field '" + path + key + "' is missing or has the wrong type");
  }
}

template <class T>
T field_or(const nlohmann::json& j, const std::string& key, const std::string& path, T fallback) {
  return j.contains(key) ? field<T>(j, key, path) : fallback;
}

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const std::string& path) {
  if (!j.is_object()) throw ConfigError("config field '" + (path.empty() ? std::string("<root>") : path) +
                                        "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::none_of(allowed.begin(), allowed.end(), [&](const char* k) { return it.key() == k; }))
      throw ConfigError("unknown config field '" + path + it.key() + "'");
  }
}

void require(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

}  // namespace

ExperimentConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir) {
  check_keys(j,
             {"seed", "target_policy", "representation", "train_topologies", "test_topologies", "n_vehicles",
              "episodes_per_topology", "max_steps", "dataset_size", "split", "prune_levels", "evaluation", "loss"},
             "");
  ExperimentConfig c;
  c.base_dir = base_dir;
  require(j.contains("seed"), "config field 'seed' is mandatory");
  c.seed = field<std::uint64_t>(j, "seed", "");
  c.target = policy_kind_from_string(field_or<std::string>(j, "target_policy", "", "pi_F"));
  require(c.target == PolicyKind::FullyImitable || c.target == PolicyKind::PartiallyImitable,
          "config field 'target_policy' must be pi_F or pi_P");

  if (j.contains("representation")) {
    const auto& r = j.at("representation");
    check_keys(r, {"kind", "depth", "k"}, "representation.");
    const auto kind = field<std::string>(r, "kind", "representation.");
    if (kind == "phi_all") {
      require(!r.contains("k"), "config field 'representation.k' only applies to phi_naive");
      c.representation.kind = RepresentationSpec::Kind::PhiAll;
      c.representation.depth = field_or<int>(r, "depth", "representation.", 6);
      require(c.representation.depth >= 1, "config field 'representation.depth' must be at least 1");
    } else if (kind == "phi_F") {
      require(!r.contains("depth") && !r.contains("k"),
              "config field 'representation' for phi_F takes no depth or k");
      c.representation.kind = RepresentationSpec::Kind::PhiF;
    } else if (kind == "phi_naive") {
      require(!r.contains("depth"), "config field 'representation.depth' only applies to phi_all");
      c.representation.kind = RepresentationSpec::Kind::PhiNaive;
      c.representation.k = field_or<int>(r, "k", "representation.", 4);
      require(c.representation.k >= 1, "config field 'representation.k' must be at least 1");
    } else {
      throw ConfigError("config field 'representation.kind' must be phi_all, phi_F or phi_naive");
    }
  }

  c.train_topologies = field<std::vector<std::string>>(j, "train_topologies", "");
  require(!c.train_topologies.empty(), "config field 'train_topologies' must not be empty");
  c.test_topologies = field_or<std::vector<std::string>>(j, "test_topologies", "", c.train_topologies);
  c.n_vehicles = field_or<int>(j, "n_vehicles", "", c.n_vehicles);
  require(c.n_vehicles >= 1, "config field 'n_vehicles' must be at least 1");
  c.episodes_per_topology = field_or<int>(j, "episodes_per_topology", "", c.episodes_per_topology);
  require(c.episodes_per_topology >= 1, "config field 'episodes_per_topology' must be at least 1");
  c.max_steps = field_or<int>(j, "max_steps", "", c.max_steps);
  require(c.max_steps >= 1, "config field 'max_steps' must be at least 1");
  c.dataset_size = field_or<std::size_t>(j, "dataset_size", "", c.dataset_size);
  require(c.dataset_size >= 5, "config field 'dataset_size' must be at least 5");

  if (j.contains("split")) {
    const auto& s = j.at("split");
    check_keys(s, {"train", "val", "test"}, "split.");
    c.split.train = field<double>(s, "train", "split.");
    c.split.val = field<double>(s, "val", "split.");
    c.split.test = field<double>(s, "test", "split.");
    for (double f : {c.split.train, c.split.val, c.split.test})
      require(f >= 0.0 && f <= 1.0, "config field 'split' fractions must lie in [0, 1]");
    require(std::abs(c.split.train + c.split.val + c.split.test - 1.0) <= 1e-9,
            "config field 'split' fractions must sum to 1");
    require(c.split.train > 0.0, "config field 'split.train' must be positive");
  }
  c.prune_levels = field_or<std::vector<int>>(j, "prune_levels", "", {});
  if (j.contains("evaluation")) {
    const auto& e = j.at("evaluation");
    check_keys(e, {"episodes", "max_steps"}, "evaluation.");
    c.eval_episodes = field_or<int>(e, "episodes", "evaluation.", c.eval_episodes);
    c.eval_max_steps = field_or<int>(e, "max_steps", "evaluation.", c.eval_max_steps);
    require(c.eval_episodes >= 0, "config field 'evaluation.episodes' must be non-negative");
    require(c.eval_max_steps >= 1, "config field 'evaluation.max_steps' must be at least 1");
  }
  c.loss = field_or<std::string>(j, "loss", "", c.loss);
  make_loss(c.loss);
  return c;
}

nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json rep;
  switch (c.representation.kind) {
    case RepresentationSpec::Kind::PhiAll: rep = {{"kind", "phi_all"}, {"depth", c.representation.depth}}; break;
    case RepresentationSpec::Kind::PhiF: rep = {{"kind", "phi_F"}}; break;
    case RepresentationSpec::Kind::PhiNaive: rep = {{"kind", "phi_naive"}, {"k", c.representation.k}}; break;
  }
  return {{"seed", c.seed},
          {"target_policy", to_string(c.target)},
          {"representation", rep},
          {"train_topologies", c.train_topologies},
          {"test_topologies", c.test_topologies},
          {"n_vehicles", c.n_vehicles},
          {"episodes_per_topology", c.episodes_per_topology},
          {"max_steps", c.max_steps},
          {"dataset_size", c.dataset_size},
          {"split", {{"train", c.split.train}, {"val", c.split.val}, {"test", c.split.test}}},
          {"prune_levels", c.prune_levels},
          {"evaluation", {{"episodes", c.eval_episodes}, {"max_steps", c.eval_max_steps}}},
          {"loss", c.loss}};
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config file '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j, path.parent_path());
}

Topology resolve_topology(const std::string& ref, const std::filesystem::path& base_dir) {
  if (ref.rfind("preset:", 0) == 0 && ref.size() == 8) return preset_topology(ref[7]);
  std::filesystem::path p(ref);
  if (p.is_relative()) p = base_dir / p;
  return load_topology(p);
}

LossFunction make_loss(const std::string& name) {
  if (name == "absolute") return LossFunction::absolute();
  if (name == "zero_one") return LossFunction::zero_one();
  throw ConfigError("config field 'loss' must be absolute or zero_one");
}

Policy make_policy(PolicyKind kind, std::uint64_t seed) {
  switch (kind) {
    case PolicyKind::FullyImitable: return fully_imitable_policy();
    case PolicyKind::PartiallyImitable: return partially_imitable_policy();
    case PolicyKind::Random: return random_policy(seed);
    case PolicyKind::MaxBrake: return max_brake_policy();
    case PolicyKind::TreeModel: break;
  }
  throw ConfigError("a tree policy needs a trained tree");
}

// ---------------------------------------------------------------------------
// Dataset assembly

std::vector<std::size_t> rebalance_indices(std::span<const int> labels, std::uint64_t seed,
                                           std::size_t per_class_cap, int n_classes) {
  std::vector<std::vector<std::size_t>> by_class(n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 0 || labels[i] >= n_classes) throw InputError("label outside the action range");
    by_class[labels[i]].push_back(i);
  }
  std::size_t keep = std::numeric_limits<std::size_t>::max();
  for (int a = 0; a < n_classes; ++a) {
    if (by_class[a].empty())
      throw ConfigError("action class " + std::to_string(a) + " has no rows; behaviour coverage is insufficient");
    keep = std::min(keep, by_class[a].size());
  }
  if (per_class_cap > 0) keep = std::min(keep, per_class_cap);
  std::vector<std::size_t> out;
  out.reserve(keep * n_classes);
  for (int a = 0; a < n_classes; ++a) {
    shuffle(by_class[a], derive_seed(seed, static_cast<std::uint64_t>(a)));
    out.insert(out.end(), by_class[a].begin(), by_class[a].begin() + static_cast<std::ptrdiff_t>(keep));
  }
  std::sort(out.begin(), out.end());
  return out;
}

Dataset rebalance(const Dataset& data, std::uint64_t seed, std::size_t per_class_cap) {
  const auto rows = rebalance_indices(data.labels(), seed, per_class_cap);
  return data.select(rows);
}

std::array<int, 3> split_counts(int episodes, const SplitFractions& f) {
  const std::array<double, 3> frac{f.train, f.val, f.test};
  const int parts = static_cast<int>(std::count_if(frac.begin(), frac.end(), [](double x) { return x > 0.0; }));
  if (episodes < parts)
    throw ConfigError("cannot split " + std::to_string(episodes) + " episodes into " + std::to_string(parts) +
                      " partitions");
  std::array<int, 3> counts{};
  std::array<double, 3> rem{};
  int assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double raw = frac[i] * episodes;
    counts[i] = static_cast<int>(std::floor(raw + 1e-9));
    rem[i] = raw - counts[i];
    assigned += counts[i];
  }
  std::array<int, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b] + 1e-9; });
  for (int i = 0; assigned < episodes; ++i, ++assigned) ++counts[order[i % 3]];
  // a non-empty partition never ends up without an episode
  for (int i = 0; i < 3; ++i) {
    if (frac[i] > 0.0 && counts[i] == 0) {
      auto donor = std::max_element(counts.begin(), counts.end());
      --*donor;
      ++counts[i];
    }
  }
  return counts;
}

namespace {

void partition_episodes(std::vector<int> ids, const SplitFractions& fractions, std::uint64_t seed,
                        std::map<int, SplitTag>& out) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  const auto counts = split_counts(static_cast<int>(ids.size()), fractions);
  shuffle(ids, seed);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const int n = static_cast<int>(i);
    out[ids[i]] = n < counts[0] ? SplitTag::Train : n < counts[0] + counts[1] ? SplitTag::Val : SplitTag::Test;
  }
}

}  // namespace

void split(Dataset& data, const SplitFractions& fractions, std::uint64_t seed) {
  std::map<int, std::vector<int>> by_topology;
  for (std::size_t r = 0; r < data.rows(); ++r) by_topology[data.topology_index(r)].push_back(data.episode(r));
  std::map<int, SplitTag> tags;
  for (auto& [topology, ids] : by_topology)
    partition_episodes(std::move(ids), fractions,
                       derive_seed(seed, kSplitStream, static_cast<std::uint64_t>(topology)), tags);
  for (std::size_t r = 0; r < data.rows(); ++r) data.set_tag(r, tags.at(data.episode(r)));
}

double accuracy(const DecisionTree& tree, const Dataset& data, SplitTag tag) {
  const auto rows = data.rows_with(tag);
  if (rows.empty()) throw InputError("no rows tagged '" + to_string(tag) + "'");
  return accuracy(tree, data, rows);
}

namespace {

Collection resolve_collection(const ExperimentConfig& config, std::vector<bool>& test_only) {
  Collection c;
  auto add = [&](const std::string& ref, bool testing) {
    Topology t = resolve_topology(ref, config.base_dir);
    for (std::size_t i = 0; i < c.topologies.size(); ++i)
      if (c.topologies[i].name() == t.name()) return;
    c.topologies.push_back(std::move(t));
    test_only.push_back(testing);
  };
  for (const auto& ref : config.train_topologies) add(ref, false);
  for (const auto& ref : config.test_topologies) add(ref, true);
  return c;
}

}  // namespace

Collection collection_topologies(const ExperimentConfig& config) {
  std::vector<bool> test_only;
  return resolve_collection(config, test_only);
}

Collection simulate_collection(const ExperimentConfig& config) {
  std::vector<bool> test_only;
  Collection c = resolve_collection(config, test_only);

  const Policy policy = make_policy(config.target, config.seed);
  for (std::size_t t = 0; t < c.topologies.size(); ++t) {
    for (int e = 0; e < config.episodes_per_topology; ++e) {
      EpisodeRecord rec;
      rec.id = static_cast<int>(c.episodes.size());
      rec.topology = static_cast<int>(t);
      rec.test_only = test_only[t];
      c.episodes.push_back(std::move(rec));
    }
  }
  parallel_for(c.episodes.size(), [&](std::size_t i) {
    EpisodeRecord& rec = c.episodes[i];
    const Topology& topo = c.topologies[rec.topology];
    const int e = rec.id % config.episodes_per_topology;
    rec.history = run_episode(topo, policy, config.n_vehicles, config.max_steps,
                              derive_seed(config.seed, name_hash(topo.name()), static_cast<std::uint64_t>(e)));
  });
  return c;
}

namespace {

struct RowRef {
  int episode;  // index into Collection::episodes
  int step;
  int vehicle;
  int label;
};

std::vector<RowRef> row_refs(const Collection& c, bool test_only) {
  std::vector<RowRef> refs;
  for (std::size_t e = 0; e < c.episodes.size(); ++e) {
    if (c.episodes[e].test_only != test_only) continue;
    const auto& records = c.episodes[e].history.records;
    for (std::size_t s = 0; s < records.size(); ++s)
      for (std::size_t v = 0; v < records[s].actions.size(); ++v)
        refs.push_back({static_cast<int>(e), static_cast<int>(s), static_cast<int>(v), records[s].actions[v]});
  }
  return refs;
}

Dataset materialize(const Collection& c, const Representation& rep, const std::vector<RowRef>& refs,
                    const std::vector<SplitTag>& tags) {
  const std::size_t cols = rep.size();
  std::vector<double> values(refs.size() * cols);
  constexpr std::size_t kChunk = 256;
  parallel_for((refs.size() + kChunk - 1) / kChunk, [&](std::size_t chunk) {
    const std::size_t end = std::min(refs.size(), (chunk + 1) * kChunk);
    for (std::size_t i = chunk * kChunk; i < end; ++i) {
      const RowRef& r = refs[i];
      const EpisodeRecord& ep = c.episodes[r.episode];
      rep.evaluate(ep.history.records[r.step].state, c.topologies[ep.topology], r.vehicle,
                   std::span<double>(values.data() + i * cols, cols));
    }
  });
  Dataset data(rep.names());
  for (const Topology& t : c.topologies) data.topology_names().push_back(t.name());
  data.reserve(refs.size());
  for (std::size_t i = 0; i < refs.size(); ++i) {
    const EpisodeRecord& ep = c.episodes[refs[i].episode];
    data.append(std::span<const double>(values.data() + i * cols, cols), refs[i].label, ep.id, ep.topology,
                tags.empty() ? SplitTag::None : tags[i]);
  }
  return data;
}

}  // namespace

Dataset collect_dataset(const Collection& collection, const Representation& representation) {
  auto refs = row_refs(collection, false);
  auto extra = row_refs(collection, true);
  refs.insert(refs.end(), extra.begin(), extra.end());
  return materialize(collection, representation, refs, {});
}

Dataset assemble_dataset(const ExperimentConfig& config, const Collection& collection,
                         const Representation& representation) {
  const auto train_refs = row_refs(collection, false);
  std::vector<int> labels(train_refs.size());
  for (std::size_t i = 0; i < train_refs.size(); ++i) labels[i] = train_refs[i].label;
  const auto keep = rebalance_indices(labels, derive_seed(config.seed, kRebalanceStream), config.dataset_size / 5);

  std::vector<RowRef> refs;
  std::vector<int> ids;
  std::map<int, std::vector<int>> by_topology;
  for (std::size_t i : keep) {
    refs.push_back(train_refs[i]);
    const EpisodeRecord& rec = collection.episodes[train_refs[i].episode];
    ids.push_back(rec.id);
    by_topology[rec.topology].push_back(rec.id);
  }
  std::map<int, SplitTag> partition;
  for (auto& [topology, group] : by_topology)
    partition_episodes(std::move(group), config.split,
                       derive_seed(config.seed, kSplitStream, static_cast<std::uint64_t>(topology)), partition);
  std::vector<SplitTag> tags;
  for (int id : ids) tags.push_back(partition.at(id));

  // held-out rows from topologies that are never trained on
  const auto test_refs = row_refs(collection, true);
  if (!test_refs.empty()) {
    labels.resize(test_refs.size());
    for (std::size_t i = 0; i < test_refs.size(); ++i) labels[i] = test_refs[i].label;
    const std::size_t cap = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(static_cast<double>(config.dataset_size) * config.split.test / 5.0)));
    for (std::size_t i : rebalance_indices(labels, derive_seed(config.seed, kTestRebalanceStream), cap)) {
      refs.push_back(test_refs[i]);
      tags.push_back(SplitTag::Test);
    }
  }
  return materialize(collection, representation, refs, tags);
}

// ---------------------------------------------------------------------------
// Deployment and metrics

MtbfResult summarize_episodes(std::span<const EpisodeOutcome> outcomes, int max_steps) {
  if (outcomes.empty()) throw ConfigError("MTBF needs at least one episode");
  MtbfResult r;
  for (const EpisodeOutcome& o : outcomes) {
    r.total_steps += o.steps;
    if (o.termination == Termination::Collision) ++r.collisions;
    if (o.termination == Termination::Stall) ++r.stalls;
  }
  r.failures = r.collisions + r.stalls;
  r.mtbf = r.failures == 0 ? static_cast<double>(outcomes.size()) * max_steps
                           : static_cast<double>(r.total_steps) / static_cast<double>(r.failures);
  return r;
}

MtbfResult mtbf(const Policy& policy, const Topology& topology, int n_vehicles, int episodes, int max_steps,
                std::uint64_t seed) {
  if (episodes < 1) throw ConfigError("MTBF needs at least one episode");
  std::vector<EpisodeOutcome> results(episodes);
  parallel_for(static_cast<std::size_t>(episodes), [&](std::size_t e) {
    const auto h = run_episode(topology, policy, n_vehicles, max_steps, derive_seed(seed, kDeployStream, e));
    results[e] = {h.steps(), h.termination};
  });
  return summarize_episodes(results, max_steps);
}

Policy tree_policy(const DecisionTree& tree, const RepresentationSpec& spec) {
  const auto used = tree.used_feature_names();
  auto rep = std::make_shared<const Representation>(spec, used);
  auto model = std::make_shared<const DecisionTree>(tree.remapped(used));
  return [rep, model](const MarkovState& s, const Topology& t, int ego) {
    thread_local std::vector<double> row;
    row.resize(rep->size());
    rep->evaluate(s, t, ego, row);
    return model->predict(row);
  };
}

// ---------------------------------------------------------------------------
// Reports

nlohmann::json report_to_json(const MetricsReport& r) {
  auto deployment = [](const MtbfResult& m) {
    return nlohmann::json{{"mtbf", m.mtbf},
                          {"failures", m.failures},
                          {"collisions", m.collisions},
                          {"stalls", m.stalls},
                          {"total_steps", m.total_steps}};
  };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& row : r.rows) {
    rows.push_back({{"tree", row.tree},
                    {"prune_index", row.prune_index},
                    {"alpha", row.alpha},
                    {"leaves", row.leaves},
                    {"used_features", row.used_features},
                    {"topology", row.topology},
                    {"accuracy", row.accuracy},
                    {"deployment", deployment(row.deployment)}});
  }
  nlohmann::json refs = nlohmann::json::array();
  for (const auto& ref : r.references)
    refs.push_back({{"policy", ref.policy}, {"topology", ref.topology}, {"deployment", deployment(ref.deployment)}});
  return {{"representation", r.representation},
          {"target", r.target},
          {"feature_count", r.feature_count},
          {"train_rows", r.train_rows},
          {"val_rows", r.val_rows},
          {"test_rows", r.test_rows},
          {"rows", std::move(rows)},
          {"references", std::move(refs)}};
}

MetricsReport report_from_json(const nlohmann::json& j) {
  try {
    auto deployment = [](const nlohmann::json& d) {
      MtbfResult m;
      m.mtbf = d.at("mtbf").get<double>();
      m.failures = d.at("failures").get<int>();
      m.collisions = d.at("collisions").get<int>();
      m.stalls = d.at("stalls").get<int>();
      m.total_steps = d.at("total_steps").get<long long>();
      return m;
    };
    MetricsReport r;
    r.representation = j.at("representation").get<std::string>();
    r.target = j.at("target").get<std::string>();
    r.feature_count = j.at("feature_count").get<std::size_t>();
    r.train_rows = j.at("train_rows").get<std::size_t>();
    r.val_rows = j.at("val_rows").get<std::size_t>();
    r.test_rows = j.at("test_rows").get<std::size_t>();
    for (const auto& jr : j.at("rows")) {
      ReportRow row;
      row.tree = jr.at("tree").get<std::string>();
      row.prune_index = jr.at("prune_index").get<int>();
      row.alpha = jr.at("alpha").get<double>();
      row.leaves = jr.at("leaves").get<int>();
      row.used_features = jr.at("used_features").get<int>();
      row.topology = jr.at("topology").get<std::string>();
      row.accuracy = jr.at("accuracy").get<double>();
      row.deployment = deployment(jr.at("deployment"));
      r.rows.push_back(std::move(row));
    }
    for (const auto& jr : j.at("references"))
      r.references.push_back({jr.at("policy").get<std::string>(), jr.at("topology").get<std::string>(),
                              deployment(jr.at("deployment"))});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed report JSON: ") + e.what());
  }
}

void write_report_csv(const MetricsReport& report, std::ostream& out) {
  out << "tree,prune_index,alpha,leaves,used_features,topology,accuracy,mtbf,failures,collisions,stalls\n";
  for (const auto& r : report.rows) {
    out << r.tree << ',' << r.prune_index << ',' << format_double(r.alpha) << ',' << r.leaves << ','
        << r.used_features << ',' << r.topology << ',' << format_double(r.accuracy) << ','
        << format_double(r.deployment.mtbf) << ',' << r.deployment.failures << ',' << r.deployment.collisions << ','
        << r.deployment.stalls << '\n';
  }
}

void write_curve_csv(const std::vector<CurvePoint>& curve, std::ostream& out) {
  out << "prune_index,alpha,leaves,val_accuracy,used_features\n";
  for (const auto& p : curve) {
    out << p.prune_index << ',' << format_double(p.alpha) << ',' << p.leaves << ',' << format_double(p.val_accuracy)
        << ',' << p.used_features << '\n';
  }
}

// ---------------------------------------------------------------------------
// Experiment

TrainResult train_trees(const Dataset& data, const LossFunction& loss) {
  const auto train_rows = data.rows_with(SplitTag::Train);
  if (train_rows.empty()) throw ConfigError("dataset has no training rows");
  const auto val_rows = data.rows_with(SplitTag::Val);
  TrainResult r;
  r.t0 = grow(data, train_rows, loss);
  r.sequence = mccp(r.t0, loss);
  double best = -1.0;
  for (std::size_t i = 0; i < r.sequence.size(); ++i) {
    CurvePoint p;
    p.prune_index = static_cast<int>(i);
    p.alpha = r.sequence.alpha(i);
    p.leaves = r.sequence.leaf_count(i);
    p.used_features = static_cast<int>(r.sequence.tree(i).used_features().size());
    if (!val_rows.empty()) {
      std::size_t hits = 0;
      for (std::size_t row : val_rows)
        if (r.sequence.predict(i, data.row(row)) == data.label(row)) ++hits;
      p.val_accuracy = static_cast<double>(hits) / static_cast<double>(val_rows.size());
    }
    // ties go to the smaller tree
    if (p.val_accuracy >= best) {
      best = p.val_accuracy;
      r.best_val_index = p.prune_index;
    }
    r.curve.push_back(p);
  }
  return r;
}

nlohmann::json train_result_to_json(const TrainResult& result) {
  nlohmann::json curve = nlohmann::json::array();
  for (const CurvePoint& p : result.curve)
    curve.push_back({{"prune_index", p.prune_index},
                     {"alpha", p.alpha},
                     {"leaves", p.leaves},
                     {"val_accuracy", p.val_accuracy},
                     {"used_features", p.used_features}});
  return {{"sequence", prune_sequence_to_json(result.sequence)},
          {"best_val_index", result.best_val_index},
          {"curve", curve}};
}

TrainResult train_result_from_json(const nlohmann::json& j) {
  try {
    TrainResult r;
    r.sequence = prune_sequence_from_json(j.at("sequence"));
    r.t0 = r.sequence.grown();
    r.best_val_index = j.at("best_val_index").get<int>();
    if (r.best_val_index < 0 || r.best_val_index >= static_cast<int>(r.sequence.size()))
      throw ConfigError("best_val_index lies outside the prune sequence");
    for (const auto& p : j.at("curve"))
      r.curve.push_back({p.at("prune_index").get<int>(), p.at("alpha").get<double>(), p.at("leaves").get<int>(),
                         p.at("val_accuracy").get<double>(), p.at("used_features").get<int>()});
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed training result: ") + e.what());
  } catch (const InputError& e) {
    throw ConfigError(std::string("malformed training result: ") + e.what());
  }
}

std::vector<int> selected_levels(const ExperimentConfig& config, const TrainResult& trained) {
  const int n = static_cast<int>(trained.sequence.size());
  std::set<int> out{0, trained.best_val_index};
  for (int level : config.prune_levels) out.insert(std::clamp(level < 0 ? n + level : level, 0, n - 1));
  return {out.begin(), out.end()};
}

MetricsReport evaluate_trees(const ExperimentConfig& config, const Dataset& data, const TrainResult& trained,
                             const std::vector<Topology>& test_topologies, const EvaluateOptions& options) {
  MetricsReport report;
  report.representation = config.representation.label();
  report.target = to_string(config.target);
  report.feature_count = data.cols();
  report.train_rows = data.rows_with(SplitTag::Train).size();
  report.val_rows = data.rows_with(SplitTag::Val).size();
  report.test_rows = data.rows_with(SplitTag::Test).size();

  std::map<std::string, std::vector<std::size_t>> test_rows;
  for (std::size_t r = 0; r < data.rows(); ++r) {
    if (data.tag(r) != SplitTag::Test) continue;
    test_rows[data.topology_names().at(data.topology_index(r))].push_back(r);
  }
  const std::uint64_t deploy_seed = derive_seed(config.seed, kDeployStream);

  for (int level : selected_levels(config, trained)) {
    const DecisionTree tree = level == 0 ? trained.t0 : trained.sequence.tree(level);
    const std::string name = level == 0 ? "T0" : "prune_" + std::to_string(level);
    std::vector<std::string> names{name};
    if (level == trained.best_val_index) names.push_back("best_val");
    const Policy policy = tree_policy(tree, config.representation);
    for (const Topology& topo : test_topologies) {
      auto it = test_rows.find(topo.name());
      if (it == test_rows.end()) throw ConfigError("no held-out rows for test topology '" + topo.name() + "'");
      ReportRow row;
      row.prune_index = level;
      row.alpha = trained.sequence.alpha(level);
      row.leaves = tree.leaf_count();
      row.used_features = static_cast<int>(tree.used_features().size());
      row.topology = topo.name();
      row.accuracy = accuracy(tree, data, it->second);
      if (options.deploy && config.eval_episodes > 0)
        row.deployment = mtbf(policy, topo, config.n_vehicles, config.eval_episodes, config.eval_max_steps,
                              deploy_seed);
      for (const auto& n : names) {
        row.tree = n;
        report.rows.push_back(row);
      }
    }
  }
  if (options.deploy && options.references && config.eval_episodes > 0) {
    const Policy target = make_policy(config.target, config.seed);
    const Policy random = random_policy(derive_seed(config.seed, kRandomPolicyStream));
    for (const Topology& topo : test_topologies) {
      report.references.push_back({to_string(config.target), topo.name(),
                                   mtbf(target, topo, config.n_vehicles, config.eval_episodes,
                                        config.eval_max_steps, deploy_seed)});
      report.references.push_back({"random", topo.name(),
                                   mtbf(random, topo, config.n_vehicles, config.eval_episodes,
                                        config.eval_max_steps, deploy_seed)});
    }
  }
  return report;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const EvaluateOptions& options) {
  const Collection collection = simulate_collection(config);
  const Representation rep(config.representation);
  ExperimentResult r;
  r.data = assemble_dataset(config, collection, rep);
  r.trained = train_trees(r.data, make_loss(config.loss));
  std::vector<Topology> tests;
  for (const auto& ref : config.test_topologies) tests.push_back(resolve_topology(ref, config.base_dir));
  r.report = evaluate_trees(config, r.data, r.trained, tests, options);
  return r;
}

}  // namespace i2l
