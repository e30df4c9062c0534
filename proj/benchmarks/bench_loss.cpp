#include <benchmark/benchmark.h>

#include <random>

#include "esl/margin_loss.hpp"
#include "esl/stats.hpp"

namespace {

std::vector<esl::Vector> random_unit(int n, int dim, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<esl::Vector> out(n, esl::Vector(dim));
  for (auto& v : out) {
    for (int i = 0; i < dim; ++i) v[i] = g(rng);
    v.normalize();
  }
  return out;
}

// Args: batch, sub-centers per class, masked (0/1).
void BM_LossAndGrads(benchmark::State& state) {
  const int batch = static_cast<int>(state.range(0));
  const int per_class = static_cast<int>(state.range(1));
  const bool masked = state.range(2) != 0;
  constexpr int classes = 20, dim = 16;
  const auto bank = esl::SubCenterBank::random(classes, per_class, dim, 1);
  const auto features = random_unit(batch, dim, 2);
  std::vector<int> labels(batch);
  for (int i = 0; i < batch; ++i) labels[i] = i % classes;

  esl::StatsAccumulator acc(bank);
  for (const auto& f : random_unit(400, dim, 3))
    for (const auto& c : esl::cosines(f, bank)) acc.add(c.ref, c.cos);
  const auto thresholds = acc.finalize(2.0).thresholds(bank);
  const auto cfg = esl::MarginConfig::arcface(16.0, 0.2);

  for (auto _ : state) {
    auto r = esl::esl_loss_and_grads(features, labels, bank, masked ? &thresholds : nullptr, cfg);
    benchmark::DoNotOptimize(r.loss);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_LossAndGrads)->ArgsProduct({{32, 128}, {1, 3, 10}, {0, 1}});

void BM_AssignSubcenter(benchmark::State& state) {
  const auto bank = esl::SubCenterBank::random(20, static_cast<int>(state.range(0)), 16, 4);
  const auto features = random_unit(256, 16, 5);
  for (auto _ : state) {
    int sum = 0;
    for (std::size_t i = 0; i < features.size(); ++i)
      sum += esl::assign_subcenter(features[i], static_cast<int>(i % 20), bank).value_or(0);
    benchmark::DoNotOptimize(sum);
  }
  state.SetItemsProcessed(state.iterations() * 256);
}
BENCHMARK(BM_AssignSubcenter)->Arg(1)->Arg(10);

}  // namespace
