#include "stmd/eval.hpp"
#include "stmd/network.hpp"
#include "stmd/train.hpp"

#include <benchmark/benchmark.h>

namespace stmd {
namespace {

FieldInput make_input(Eigen::Index dim, Eigen::Index n) {
  Rng rng(0);
  Vec r = 0.5 * uniform_vec(rng, n);
  Vec s = r + 0.5 * uniform_vec(rng, n);
  return FieldInput::conditional(standard_normal(rng, dim, n), r, s, standard_normal(rng, dim, n),
                                 uniform_vec(rng, n));
}

MlpNet default_net() {
  NetConfig cfg;
  cfg.dim = 2;
  return MlpNet::init(cfg, 0);
}

void BM_Forward(benchmark::State& state) {
  const MlpNet net = default_net();
  const FieldInput in = make_input(2, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(net.evaluate(in));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Forward)->Arg(64)->Arg(1024);

void BM_Jvp(benchmark::State& state) {
  const MlpNet net = default_net();
  const FieldInput in = make_input(2, state.range(0));
  Rng rng(1);
  const FieldTangent tan = FieldTangent::along_s(standard_normal(rng, 2, state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(net.jvp(in, tan));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Jvp)->Arg(64)->Arg(1024);

void BM_Backward(benchmark::State& state) {
  const MlpNet net = default_net();
  const FieldInput in = make_input(2, state.range(0));
  const ForwardCache cache = net.forward_cached(in);
  Rng rng(2);
  const Batch upstream = standard_normal(rng, 2, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(net.backward(cache, upstream));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Backward)->Arg(64)->Arg(1024);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.objective = static_cast<Objective>(state.range(0));
  NetConfig net_cfg;
  net_cfg.dim = 2;
  TrainState ts = TrainState::create(net_cfg, cfg);
  const NoiseSchedule sched;
  const DatasetSpec data = DatasetSpec::ring();
  for (auto _ : state) benchmark::DoNotOptimize(train_step(ts, cfg, sched, data));
  state.SetLabel(to_string(cfg.objective));
}
BENCHMARK(BM_TrainStep)->DenseRange(0, 3);

void BM_W2Exact(benchmark::State& state) {
  Rng rng(3);
  const Batch a = standard_normal(rng, 2, state.range(0));
  const Batch b = 2.0 * standard_normal(rng, 2, state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(w2_exact(a, b));
  state.SetComplexityN(state.range(0));
}
BENCHMARK(BM_W2Exact)->RangeMultiplier(2)->Range(256, 4096)->Unit(benchmark::kMillisecond)->Complexity();

}  // namespace
}  // namespace stmd

BENCHMARK_MAIN();
