#include <benchmark/benchmark.h>

#include <random>

#include "i2l/harness.hpp"

using namespace i2l;

namespace {

const Topology& topology_c() {
  static const Topology t = preset_topology('C');
  return t;
}

const EpisodeHistory& sample_episode() {
  static const EpisodeHistory h = run_episode(topology_c(), fully_imitable_policy(), 11, 200, 1);
  return h;
}

Dataset synthetic(std::size_t rows, std::size_t cols) {
  std::vector<std::string> names;
  for (std::size_t c = 0; c < cols; ++c) names.push_back("f" + std::to_string(c));
  Dataset d(names);
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 60.0);
  std::vector<double> row(cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (auto& v : row) v = u(rng);
    d.append(row, static_cast<int>(row[0] + row[1]) % 5);
  }
  return d;
}

}  // namespace

static void BM_Step(benchmark::State& state) {
  const auto& h = sample_episode();
  const ActionSpace as = ActionSpace::standard();
  std::size_t i = 0;
  for (auto _ : state) {
    const auto& r = h.records[i++ % (h.records.size() - 1)];
    benchmark::DoNotOptimize(step(r.state, r.actions, topology_c(), as));
  }
}
BENCHMARK(BM_Step);

static void BM_PiF(benchmark::State& state) {
  const auto& s = sample_episode().records[50].state;
  for (auto _ : state)
    for (int ego = 0; ego < 11; ++ego) benchmark::DoNotOptimize(pi_F(s, topology_c(), ego));
}
BENCHMARK(BM_PiF);

static void BM_FeatureRow(benchmark::State& state) {
  const FeatureSet set = enumerate_features(static_cast<int>(state.range(0)));
  const FeatureProgram program(set);
  std::vector<double> out(set.size());
  const auto& s = sample_episode().records[50].state;
  for (auto _ : state) {
    program.evaluate(s, topology_c(), 3, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["features"] = static_cast<double>(set.size());
}
BENCHMARK(BM_FeatureRow)->Arg(4)->Arg(6);

static void BM_BestSplit(benchmark::State& state) {
  const Dataset d = synthetic(static_cast<std::size_t>(state.range(0)), 1);
  std::vector<double> values(d.rows());
  for (std::size_t r = 0; r < d.rows(); ++r) values[r] = d.at(r, 0);
  const auto loss = LossFunction::absolute();
  for (auto _ : state) benchmark::DoNotOptimize(best_split(values, d.labels(), loss));
}
BENCHMARK(BM_BestSplit)->Arg(1000)->Arg(30000);

static void BM_Grow(benchmark::State& state) {
  const Dataset d = synthetic(static_cast<std::size_t>(state.range(0)), 6);
  const auto loss = LossFunction::absolute();
  for (auto _ : state) benchmark::DoNotOptimize(grow(d, loss));
}
BENCHMARK(BM_Grow)->Arg(5000)->Unit(benchmark::kMillisecond);

static void BM_Mccp(benchmark::State& state) {
  const Dataset d = synthetic(5000, 6);
  const auto loss = LossFunction::absolute();
  const DecisionTree t0 = grow(d, loss);
  for (auto _ : state) benchmark::DoNotOptimize(mccp(t0, loss));
  state.counters["leaves"] = t0.leaf_count();
}
BENCHMARK(BM_Mccp)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
