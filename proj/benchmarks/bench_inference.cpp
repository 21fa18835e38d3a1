// Microbenchmarks for the inference path and the per-epoch training kernels.
#include <benchmark/benchmark.h>

#include "gssc/contrast.hpp"
#include "gssc/graph.hpp"
#include "gssc/nn.hpp"
#include "gssc/sparsifier.hpp"
#include "gssc/trainer.hpp"

using namespace gssc;

namespace {

Graph bench_graph(int n, double p_scale = 1.0) {
  return generate_sbm(n, 5, 0.02 * p_scale, 0.002 * p_scale, 64, 0.5, 1);
}

void BM_InferenceByNodes(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Graph g = bench_graph(n);
  BackboneState st = BackboneState::init(64, 128, 5, 2, 0.0, 1);
  st.mode = Mode::Eval;
  for (auto _ : state) {
    Matrix H = mlp_forward(g.features, st, 0);
    Matrix Y = H * st.head_f;
    benchmark::DoNotOptimize(Y.sum());
  }
  state.SetComplexityN(n);
}

// Inference never touches the adjacency, so runtime should be flat in |E|.
void BM_InferenceByEdges(benchmark::State& state) {
  Graph g = bench_graph(1000, static_cast<double>(state.range(0)));
  BackboneState st = BackboneState::init(64, 128, 5, 2, 0.0, 1);
  st.mode = Mode::Eval;
  for (auto _ : state) {
    Matrix H = mlp_forward(g.features, st, 0);
    Matrix Y = H * st.head_f;
    benchmark::DoNotOptimize(Y.sum());
  }
  state.counters["edges"] = static_cast<double>(g.n_edges());
}

void BM_SubgraphSample(benchmark::State& state) {
  Graph g = bench_graph(1000, static_cast<double>(state.range(0)));
  SparsifierState psi = SparsifierState::init(64, 128, 0.1, 0.5, 1);
  std::uint64_t seed = 0;
  for (auto _ : state) {
    auto sub = sample_subgraph(g, psi, seed++, nullptr);
    benchmark::DoNotOptimize(sub.hard_count());
  }
  state.counters["edges"] = static_cast<double>(g.n_edges());
}

void BM_EdgeBatchLoss(benchmark::State& state) {
  Graph g = bench_graph(1000);
  BackboneState st = BackboneState::init(64, 128, 5, 2, 0.0, 1);
  st.mode = Mode::Train;
  SparsifiedSubgraph all;
  all.soft.assign(g.n_edges(), 0.9);
  all.hard.assign(g.n_edges(), 1);
  EdgeBatch batch = sample_edge_batch(g, all, 512, 5, 3);
  BackboneGrads grads = BackboneGrads::zeros_like(st);
  for (auto _ : state) {
    ForwardCache cache;
    Matrix H = mlp_forward(g.features, st, 0, &cache);
    grads.set_zero();
    BatchGradients bg;
    contrast_losses(g, batch, H, st, {}, nullptr, &grads, &bg, nullptr);
    mlp_backward(st, cache, bg.d_hidden, grads);
    benchmark::DoNotOptimize(grads.head_f.sum());
  }
}

// One full lower-level epoch (sample + batched loss/backward/update) as a
// function of the edge count; cost should stay linear.
void BM_TrainEpochByEdges(benchmark::State& state) {
  Graph g = bench_graph(1000, static_cast<double>(state.range(0)));
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.warmup_epochs = 0;
  cfg.hidden = 64;
  cfg.batch = 512;
  cfg.seed = 1;
  Trainer trainer(g, cfg);
  SparsifierCache cache;
  int epoch = 0;
  for (auto _ : state) {
    auto sub = sample_subgraph(g, trainer.psi(), epoch, &cache);
    auto losses = trainer.lower_step(sub, epoch++);
    benchmark::DoNotOptimize(losses.total);
  }
  state.SetComplexityN(static_cast<int64_t>(g.n_edges()));
}

}  // namespace

BENCHMARK(BM_InferenceByNodes)->Arg(500)->Arg(1000)->Arg(2000)->Arg(4000)->Complexity(benchmark::oN);
BENCHMARK(BM_InferenceByEdges)->DenseRange(1, 10, 3);
BENCHMARK(BM_SubgraphSample)->DenseRange(1, 10, 3);
BENCHMARK(BM_EdgeBatchLoss);
BENCHMARK(BM_TrainEpochByEdges)->DenseRange(1, 10, 3)->Complexity(benchmark::oN);

BENCHMARK_MAIN();
