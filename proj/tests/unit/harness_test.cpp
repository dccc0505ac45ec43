#include <doctest.h>

#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "i2l/error.hpp"
#include "i2l/harness.hpp"

using namespace i2l;

namespace {

nlohmann::json base_config() {
  return nlohmann::json::parse(R"({
    "seed": 5,
    "target_policy": "pi_F",
    "representation": {"kind": "phi_F"},
    "train_topologies": ["preset:A"],
    "n_vehicles": 11,
    "episodes_per_topology": 3,
    "max_steps": 60,
    "dataset_size": 500,
    "split": {"train": 0.7, "val": 0.15, "test": 0.15},
    "prune_levels": [1],
    "evaluation": {"episodes": 1, "max_steps": 50},
    "loss": "absolute"
  })");
}

std::string config_error(const nlohmann::json& j) {
  try {
    config_from_json(j);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("rebalance to the smallest class") {
  std::vector<int> labels;
  const int counts[] = {100, 50, 50, 25, 25};
  for (int a = 0; a < 5; ++a) labels.insert(labels.end(), counts[a], a);
  const auto kept = rebalance_indices(labels, 1);
  CHECK(kept.size() == 125);
  CHECK(std::is_sorted(kept.begin(), kept.end()));
  std::map<int, int> per_class;
  for (auto i : kept) ++per_class[labels[i]];
  for (int a = 0; a < 5; ++a) CHECK(per_class[a] == 25);
  CHECK(rebalance_indices(labels, 1) == kept);
  CHECK(rebalance_indices(labels, 1, 10).size() == 50);

  labels.erase(std::remove(labels.begin(), labels.end(), 3), labels.end());
  try {
    rebalance_indices(labels, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find('3') != std::string::npos);
  }
}

TEST_CASE("split counts") {
  CHECK(split_counts(10, {}) == std::array<int, 3>{7, 2, 1});
  CHECK(split_counts(20, {}) == std::array<int, 3>{14, 3, 3});
  CHECK(split_counts(1, {1.0, 0.0, 0.0}) == std::array<int, 3>{1, 0, 0});
}

TEST_CASE("split keeps episodes whole and is stratified by topology") {
  Dataset d(std::vector<std::string>{"x"});
  for (int topo = 0; topo < 2; ++topo)
    for (int ep = 0; ep < 10; ++ep)
      for (int r = 0; r < 7; ++r) d.append(std::vector<double>{1.0}, r % 5, topo * 10 + ep, topo);
  Dataset again = d;
  split(d, {}, 11);
  split(again, {}, 11);
  CHECK(d.tags() == again.tags());

  std::map<int, std::set<SplitTag>> tags;
  std::map<int, std::map<SplitTag, std::set<int>>> episodes;
  for (std::size_t r = 0; r < d.rows(); ++r) {
    tags[d.episode(r)].insert(d.tag(r));
    episodes[d.topology_index(r)][d.tag(r)].insert(d.episode(r));
  }
  for (const auto& [_, t] : tags) CHECK(t.size() == 1);
  for (int topo = 0; topo < 2; ++topo) {
    CHECK(episodes[topo][SplitTag::Train].size() == 7);
    CHECK(episodes[topo][SplitTag::Val].size() == 2);
    CHECK(episodes[topo][SplitTag::Test].size() == 1);
  }

  Dataset tiny(std::vector<std::string>{"x"});
  tiny.append(std::vector<double>{1.0}, 0, 0, 0);
  CHECK_THROWS_AS(split(tiny, {}, 1), ConfigError);
}

TEST_CASE("accuracy by tag") {
  Dataset d(std::vector<std::string>{"x"});
  for (int i = 0; i < 10; ++i) d.append(std::vector<double>{double(i)}, i % 5, 0, 0, SplitTag::Val);
  const DecisionTree full = grow(d, LossFunction::absolute());
  CHECK(accuracy(full, d, SplitTag::Val) == 1.0);
  const PruneSequence seq = mccp(full, LossFunction::absolute());
  CHECK(accuracy(seq.tree(seq.size() - 1), d, SplitTag::Val) == doctest::Approx(0.2));
}

TEST_CASE("mean time between failures") {
  std::vector<EpisodeOutcome> clean(100, {1000, Termination::RanToLimit});
  auto r = summarize_episodes(clean, 1000);
  CHECK(r.mtbf == 100000.0);
  CHECK(r.failures == 0);

  std::vector<EpisodeOutcome> mixed(98, {1000, Termination::RanToLimit});
  mixed.push_back({500, Termination::Collision});
  mixed.push_back({500, Termination::Stall});
  r = summarize_episodes(mixed, 1000);
  CHECK(r.mtbf == 49500.0);
  CHECK(r.collisions == 1);
  CHECK(r.stalls == 1);

  const std::vector<EpisodeOutcome> early{{1, Termination::Collision}};
  CHECK(summarize_episodes(early, 1000).mtbf == 1.0);

  const Topology a = preset_topology('A');
  const auto brake = mtbf(max_brake_policy(), a, 11, 3, 1000, 1);
  CHECK(brake.stalls == 3);
  CHECK(brake.mtbf == doctest::Approx(20.0));
}

TEST_CASE("config parsing errors name the field") {
  CHECK_NOTHROW(config_from_json(base_config()));

  auto j = base_config();
  j["n_vehicles"] = -1;
  CHECK(config_error(j).find("n_vehicles") != std::string::npos);

  j = base_config();
  j.erase("seed");
  CHECK(config_error(j).find("seed") != std::string::npos);

  j = base_config();
  j["colour"] = "red";
  CHECK(config_error(j).find("colour") != std::string::npos);

  j = base_config();
  j["split"] = {{"train", 0.5}, {"val", 0.1}, {"test", 0.1}};
  CHECK(config_error(j).find("split") != std::string::npos);

  j = base_config();
  j["representation"] = {{"kind", "phi_F"}, {"depth", 4}};
  CHECK(config_error(j).find("depth") != std::string::npos);

  j = base_config();
  j["target_policy"] = "oracle";
  CHECK_FALSE(config_error(j).empty());

  CHECK_THROWS_AS(load_config("/nonexistent/config.json"), ConfigError);
  CHECK_THROWS_AS(resolve_topology("preset:Q", {}), ConfigError);
  CHECK_THROWS_AS(make_loss("hinge"), ConfigError);
}

TEST_CASE("config JSON round trip") {
  const ExperimentConfig c = config_from_json(base_config());
  CHECK(config_to_json(config_from_json(config_to_json(c))) == config_to_json(c));
  CHECK(c.representation.label() == "phi_F");
  CHECK(c.eval_max_steps == 50);
}

TEST_CASE("collected rows and representation widths") {
  auto c = config_from_json(base_config());
  c.episodes_per_topology = 1;
  c.max_steps = 100;
  const Collection col = simulate_collection(c);
  REQUIRE(col.episodes.size() == 1);
  const auto steps = col.episodes[0].history.steps();

  const Dataset phi_f = collect_dataset(col, Representation(c.representation));
  CHECK(phi_f.rows() == static_cast<std::size_t>(steps) * 11);
  if (steps == 100) CHECK(phi_f.rows() == 1100);
  CHECK(phi_f.cols() == 6);

  RepresentationSpec naive;
  naive.kind = RepresentationSpec::Kind::PhiNaive;
  naive.k = 3;
  CHECK(Representation(naive).size() == 12);

  RepresentationSpec all;
  all.depth = 6;
  CHECK(Representation(all).size() == 1032);
  CHECK(Representation(all, {"speed(ego)"}).size() == 1);
}

TEST_CASE("csv round trip") {
  auto c = config_from_json(base_config());
  const Collection col = simulate_collection(c);
  const Dataset d = assemble_dataset(c, col, Representation(c.representation));
  std::stringstream data, meta;
  write_dataset_csv(d, data);
  write_dataset_meta_csv(d, meta);
  const Dataset back = read_dataset_csv(data, &meta);
  REQUIRE(back.rows() == d.rows());
  CHECK(back.feature_names() == d.feature_names());
  CHECK(back.labels() == d.labels());
  CHECK(back.tags() == d.tags());
  CHECK(back.episodes() == d.episodes());
  for (std::size_t r = 0; r < d.rows(); ++r)
    for (std::size_t k = 0; k < d.cols(); ++k) CHECK(back.at(r, k) == d.at(r, k));
}

TEST_CASE("experiment is deterministic and reports round trip") {
  const ExperimentConfig c = config_from_json(base_config());
  const auto a = run_experiment(c);
  const auto b = run_experiment(c);
  CHECK(report_to_json(a.report) == report_to_json(b.report));
  CHECK(train_result_to_json(a.trained) == train_result_to_json(b.trained));
  CHECK(report_to_json(report_from_json(report_to_json(a.report))) == report_to_json(a.report));

  const TrainResult back = train_result_from_json(train_result_to_json(a.trained));
  CHECK(back.best_val_index == a.trained.best_val_index);
  CHECK(back.curve.size() == a.trained.sequence.size());

  const auto levels = selected_levels(c, a.trained);
  CHECK(levels.front() == 0);
  CHECK(std::is_sorted(levels.begin(), levels.end()));
}

TEST_CASE("thread count honours the environment") {
  CHECK(thread_count() >= 1);
  std::vector<int> hit(50, 0);
  parallel_for(hit.size(), [&](std::size_t i) { hit[i] = 1; });
  CHECK(std::count(hit.begin(), hit.end(), 1) == 50);
  CHECK_THROWS(parallel_for(4, [](std::size_t i) {
    if (i == 2) throw InputError("boom");
  }));
}
