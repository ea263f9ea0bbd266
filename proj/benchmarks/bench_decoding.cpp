#include <benchmark/benchmark.h>

#include <memory>
#include <vector>

#include "csearch/decoding.hpp"
#include "csearch/metrics.hpp"
#include "csearch/mock_lm.hpp"
#include "csearch/rng.hpp"
#include "csearch/transformer.hpp"
#include "oracles.hpp"

using namespace csearch;

namespace {

std::shared_ptr<const TransformerLM> tiny() {
  static const auto model = [] {
    TransformerConfig cfg;
    return std::make_shared<const TransformerLM>(cfg, random_weights(cfg, 7));
  }();
  return model;
}

TokenSequence prefix_of(int n) {
  TokenSequence out;
  for (int i = 0; i < n; ++i) out.push_back(static_cast<TokenId>(32 + (i * 7) % 90));
  return out;
}

void session_advance(benchmark::State& state) {
  const auto prefix = prefix_of(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    Session s(tiny());
    s.advance_all(prefix);
    benchmark::DoNotOptimize(s.last_output());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(session_advance)->Arg(16)->Arg(64)->Arg(120);

void session_fork(benchmark::State& state) {
  const auto base = open_session(tiny(), prefix_of(static_cast<int>(state.range(0))));
  for (auto _ : state) {
    auto child = base.fork();
    child.advance(101);
    benchmark::DoNotOptimize(child.last_output());
  }
}
BENCHMARK(session_fork)->Arg(16)->Arg(64)->Arg(120);

// Cached forked sessions against the full-recompute reference.
void contrastive_cached(benchmark::State& state) {
  const auto prefix = prefix_of(8);
  auto params = DecodeParams::defaults(Strategy::contrastive);
  params.max_new_tokens = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(decode(tiny(), prefix, params));
}
BENCHMARK(contrastive_cached)->Arg(16)->Arg(48)->Unit(benchmark::kMillisecond);

void contrastive_uncached(benchmark::State& state) {
  const auto prefix = prefix_of(8);
  const int n = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(oracle::contrastive(*tiny(), prefix, 5, 0.6, n));
}
BENCHMARK(contrastive_uncached)->Arg(16)->Arg(48)->Unit(benchmark::kMillisecond);

void mock_contrastive(benchmark::State& state) {
  const auto model = mock_lm_build(repeat_trap_spec(static_cast<int>(state.range(0)), 0.0));
  const TokenSequence prefix{0, 1, 2};
  auto params = DecodeParams::defaults(Strategy::contrastive);
  params.max_new_tokens = 200;
  for (auto _ : state) benchmark::DoNotOptimize(decode(model, prefix, params));
}
BENCHMARK(mock_contrastive)->Arg(64)->Arg(1024)->Unit(benchmark::kMillisecond);

void self_similarity_bench(benchmark::State& state) {
  Rng rng(3);
  std::vector<Representation> reps(static_cast<std::size_t>(state.range(0)), Representation(64));
  for (auto& r : reps)
    for (auto& x : r) x = rng.normal();
  for (auto _ : state) benchmark::DoNotOptimize(self_similarity(reps));
}
BENCHMARK(self_similarity_bench)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
