#include <benchmark/benchmark.h>

#include "spectree/mask_opt.hpp"

namespace {

using namespace spectree;

void BM_CountTreeBlocks(benchmark::State& state) {
  const auto shape = random_tree(static_cast<std::size_t>(state.range(0)), 1);
  const auto order = hpd_order(shape);
  for (auto _ : state) benchmark::DoNotOptimize(count_tree_blocks(shape, order, 128, 32));
}
BENCHMARK(BM_CountTreeBlocks)->Arg(256)->Arg(2048);

void BM_CountNonzeroBlocksMaterialized(benchmark::State& state) {
  const auto shape = random_tree(static_cast<std::size_t>(state.range(0)), 1);
  const auto mask = apply_permutation(shape, hpd_order(shape), 128);
  for (auto _ : state) benchmark::DoNotOptimize(count_nonzero_blocks(mask, 32));
}
BENCHMARK(BM_CountNonzeroBlocksMaterialized)->Arg(256)->Arg(2048);

void BM_HpdOrder(benchmark::State& state) {
  const auto shape = random_tree(static_cast<std::size_t>(state.range(0)), 1);
  for (auto _ : state) benchmark::DoNotOptimize(hpd_order(shape));
}
BENCHMARK(BM_HpdOrder)->Arg(2048);

void BM_BlockedAttention(benchmark::State& state) {
  const auto shape = random_tree(static_cast<std::size_t>(state.range(0)), 2);
  const auto mask = apply_permutation(shape, hpd_order(shape), 0);
  const auto q = random_matrix(mask.rows(), 64, 1);
  const auto k = random_matrix(mask.cols(), 64, 2);
  const auto v = random_matrix(mask.cols(), 64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(blocked_masked_attention_reference(q, k, v, mask, 32));
}
BENCHMARK(BM_BlockedAttention)->Arg(128)->Arg(512);

void BM_DenseAttention(benchmark::State& state) {
  const auto shape = random_tree(static_cast<std::size_t>(state.range(0)), 2);
  const auto mask = mask_from_tree(shape, 0);
  const auto q = random_matrix(mask.rows(), 64, 1);
  const auto k = random_matrix(mask.cols(), 64, 2);
  const auto v = random_matrix(mask.cols(), 64, 3);
  for (auto _ : state) benchmark::DoNotOptimize(dense_masked_attention(q, k, v, mask));
}
BENCHMARK(BM_DenseAttention)->Arg(128)->Arg(512);

}  // namespace
