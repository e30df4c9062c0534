#include <benchmark/benchmark.h>

#include "esl/evolution.hpp"
#include "esl/stats.hpp"
#include "esl/synth.hpp"
#include "esl/trainer.hpp"

namespace {

struct Fixture {
  esl::Dataset data;
  esl::SubCenterBank bank;
  std::vector<esl::EvolutionSample> samples;
  esl::SubCenterStats stats;
  std::vector<int> labels;
};

// Mixture data against a random bank with `per_class` centers per class.
Fixture make_fixture(int per_class) {
  Fixture f;
  f.data = esl::generate_dataset(esl::make_preset(esl::Preset::mixture, {}), 16, 20.0, 1);
  f.bank = esl::SubCenterBank::random(f.data.num_classes(), per_class, 16, 2);
  esl::StatsAccumulator acc(f.bank);
  for (std::size_t i = 0; i < f.data.samples.size(); ++i) {
    const auto& s = f.data.samples[i];
    const esl::Vector x = s.x.normalized();
    const int slot = *esl::assign_subcenter(x, s.label, f.bank);
    const double c = x.dot(f.bank.at({s.label, slot}).weight);
    f.samples.push_back({i, x, s.label, slot, c});
    f.labels.push_back(s.label);
    acc.add(s.label, slot, c);
  }
  f.stats = acc.finalize(2.0);
  return f;
}

void BM_EvolveEpoch(benchmark::State& state) {
  const auto f = make_fixture(static_cast<int>(state.range(0)));
  const esl::EvolutionConfig cfg;
  for (auto _ : state) {
    auto bank = f.bank;
    auto samples = f.samples;
    esl::LabelMap labels(f.data.num_classes(), f.labels);
    auto events = esl::evolve_epoch(bank, f.stats, samples, cfg, labels, 2);
    benchmark::DoNotOptimize(events.size());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.samples.size()));
}
BENCHMARK(BM_EvolveEpoch)->Arg(1)->Arg(3)->Arg(10)->Unit(benchmark::kMicrosecond);

void BM_MergeComponents(benchmark::State& state) {
  const auto f = make_fixture(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    auto comps = esl::merge_components(f.bank, f.stats, 3.0);
    benchmark::DoNotOptimize(comps.size());
  }
}
BENCHMARK(BM_MergeComponents)->Arg(1)->Arg(10)->Unit(benchmark::kMicrosecond);

void BM_TrainEpoch(benchmark::State& state) {
  const auto data = esl::generate_dataset(esl::make_preset(esl::Preset::mixture, {}), 16, 20.0, 3);
  esl::TrainConfig cfg;
  cfg.epochs = 1 << 20;
  esl::Trainer trainer(data, cfg);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.run_epoch().loss);
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

}  // namespace
