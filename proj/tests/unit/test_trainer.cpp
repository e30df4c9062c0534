#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "checks.hpp"
#include "esl/trainer.hpp"

using namespace esl;

namespace {

Dataset small_dataset(Preset preset, std::uint64_t seed, int classes = 6, int dim = 8) {
  PresetOptions po;
  po.num_classes = classes;
  po.samples_per_cluster = 12;
  return generate_dataset(make_preset(preset, po), dim, 20.0, seed);
}

TrainConfig small_config(int dim = 8, int epochs = 6) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.batch_size = 16;
  cfg.embedding_dim = dim;
  cfg.lr_schedule = {{epochs / 2, 0.1}};
  return cfg;
}

}  // namespace

TEST(Sgd, ZeroGradientZeroDecayKeepsParams) {
  std::vector<double> p{1.0, -2.0, 3.0}, g(3, 0.0), v(3, 0.0);
  sgd_step(p, g, v, 0.1, 0.9, 0.0);
  EXPECT_EQ(p, (std::vector<double>{1.0, -2.0, 3.0}));
}

TEST(Sgd, SingleStepWithoutMomentum) {
  std::vector<double> p{1.0, -2.0}, g{0.5, 0.25}, v(2, 0.0);
  sgd_step(p, g, v, 0.1, 0.0, 0.01);
  EXPECT_DOUBLE_EQ(p[0], 1.0 - 0.1 * (0.5 + 0.01 * 1.0));
  EXPECT_DOUBLE_EQ(p[1], -2.0 - 0.1 * (0.25 + 0.01 * -2.0));
}

TEST(Sgd, TenStepsMatchScalarOracle) {
  std::vector<double> p{0.3, -1.2, 2.5}, v(3, 0.0);
  double q[3] = {0.3, -1.2, 2.5}, u[3] = {0, 0, 0};
  const double lr = 0.05, mom = 0.9, wd = 5e-4;
  for (int t = 0; t < 10; ++t) {
    std::vector<double> g{std::sin(t * 1.0), std::cos(t * 0.5), 0.1 * t};
    sgd_step(p, g, v, lr, mom, wd);
    for (int k = 0; k < 3; ++k) {
      u[k] = mom * u[k] + g[k] + wd * q[k];
      q[k] -= lr * u[k];
    }
  }
  for (int k = 0; k < 3; ++k) EXPECT_NEAR(p[k], q[k], 1e-12);
}

TEST(Sgd, ShapeMismatchThrows) {
  std::vector<double> p(3), g(2), v(3);
  EXPECT_THROW(sgd_step(p, g, v, 0.1, 0.9, 0.0), std::invalid_argument);
}

TEST(TrainConfig, LearningRateSchedule) {
  TrainConfig cfg;
  EXPECT_DOUBLE_EQ(cfg.lr_at(0), 0.1);
  EXPECT_DOUBLE_EQ(cfg.lr_at(24), 0.1);
  EXPECT_NEAR(cfg.lr_at(25), 0.01, 1e-15);
  EXPECT_NEAR(cfg.lr_at(39), 0.001, 1e-15);
}

TEST(TrainConfig, PlainBaselineTurnsEverythingOff) {
  const auto b = TrainConfig{}.plain_baseline();
  EXPECT_FALSE(b.mask);
  EXPECT_EQ(b.evolution.m_init, 1);
  EXPECT_FALSE(b.evolves());
  EXPECT_EQ(b.margin, TrainConfig{}.margin);
  EXPECT_EQ(b.lr_schedule, TrainConfig{}.lr_schedule);
}

TEST(TrainConfig, ValidationRejectsBadFields) {
  auto bad = [](auto mutate) {
    TrainConfig c;
    mutate(c);
    return c;
  };
  EXPECT_NO_THROW(TrainConfig{}.validate(16));
  EXPECT_THROW(bad([](TrainConfig& c) { c.epochs = 0; }).validate(16), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.lr = -1.0; }).validate(16), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.momentum = 1.0; }).validate(16), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.lr_schedule = {{5, 0.1}, {5, 0.1}}; }).validate(16),
               std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.encoder = EncoderMode::frozen; }).validate(8), std::invalid_argument);
  EXPECT_THROW(bad([](TrainConfig& c) { c.evolution.epsilon_start = 40; }).validate(16), std::invalid_argument);
}

TEST(TrainConfig, EnumNames) {
  EXPECT_EQ(encoder_mode_from_string(to_string(EncoderMode::frozen)), EncoderMode::frozen);
  EXPECT_EQ(encoder_mode_from_string("linear-encoder"), EncoderMode::linear);
  EXPECT_EQ(encoder_init_from_string(to_string(EncoderInit::random)), EncoderInit::random);
  EXPECT_THROW(encoder_mode_from_string("deep"), std::invalid_argument);
}

TEST(Trainer, SameSeedSameHistory) {
  const auto data = small_dataset(Preset::mixture, 1);
  const auto a = train(data, small_config());
  const auto b = train(data, small_config());
  ASSERT_EQ(a.history.size(), b.history.size());
  for (std::size_t e = 0; e < a.history.size(); ++e) {
    EXPECT_EQ(a.history[e].loss, b.history[e].loss);
    EXPECT_EQ(a.history[e].active_subcenters, b.history[e].active_subcenters);
  }
  EXPECT_EQ(a.encoder, b.encoder);
  EXPECT_EQ(a.labels.labels(), b.labels.labels());
}

TEST(Trainer, DifferentSeedDifferentRun) {
  const auto data = small_dataset(Preset::clean, 1);
  auto cfg = small_config();
  const auto a = train(data, cfg);
  cfg.seed = 99;
  const auto b = train(data, cfg);
  EXPECT_NE(a.history.back().loss, b.history.back().loss);
}

TEST(Trainer, DegenerateConfigMatchesPlainReference) {
  const auto data = small_dataset(Preset::mixture, 2);
  const auto r = checks::degeneracy_check(data, small_config(8, 20), 100);
  EXPECT_EQ(r.steps, 100);
  EXPECT_LE(r.max_loss_diff, 1e-12);
}

TEST(Trainer, DegenerateConfigRandomEncoder) {
  const auto data = small_dataset(Preset::clean, 3);
  auto cfg = small_config(8, 40);
  cfg.encoder_init = EncoderInit::random;
  cfg.margin = MarginConfig::arcface(64.0, 0.5);
  const auto r = checks::degeneracy_check(data, cfg, 100);
  EXPECT_EQ(r.steps, 100);
  EXPECT_LE(r.max_loss_diff, 1e-12);
}

TEST(Trainer, FrozenModeUsesInputs) {
  const auto data = small_dataset(Preset::clean, 4);
  auto cfg = small_config();
  cfg.encoder = EncoderMode::frozen;
  Trainer t(data, cfg);
  EXPECT_EQ(t.feature(data.samples[0].x), data.samples[0].x);
  t.run();
  EXPECT_EQ(t.state().encoder, Matrix::Identity(8, 8));
}

TEST(Trainer, EpochOrderIsPermutationOfLiveSamples) {
  const auto data = small_dataset(Preset::clean, 5);
  Trainer t(data, small_config());
  auto order = t.epoch_order(0);
  EXPECT_NE(order, t.epoch_order(1));
  std::sort(order.begin(), order.end());
  for (std::size_t i = 0; i < order.size(); ++i) EXPECT_EQ(order[i], i);
}

TEST(Trainer, DroppedSamplesNeverReachTheLoss) {
  const auto data = small_dataset(Preset::outliers, 6, 10);
  auto cfg = small_config(8, 12);
  cfg.evolution.lambda3 = 0.6;  // aggressive dropping so the test has drops to watch
  Trainer t(data, cfg);
  std::vector<char> dropped(data.samples.size(), 0);
  bool violated = false;
  t.set_step_observer([&](const StepRecord& rec) {
    for (std::size_t idx : rec.indices)
      if (dropped[idx]) violated = true;
  });
  while (!t.done()) {
    t.run_epoch();
    for (std::size_t i = 0; i < dropped.size(); ++i) dropped[i] = t.state().labels.dropped(i);
  }
  EXPECT_GT(t.state().labels.dropped_count(), 0u);
  EXPECT_FALSE(violated);
}

TEST(Trainer, MergedLabelsAreUsedAfterResume) {
  const auto data = small_dataset(Preset::clean, 7);
  auto cfg = small_config(8, 4);
  Trainer first(data, cfg);
  first.run_epoch();
  TrainState st = first.state();
  // Fold class 1 into class 0 by hand, as a merge would.
  st.labels.merge_classes(0, 1);
  for (std::size_t i = 0; i < data.samples.size(); ++i)
    if (data.samples[i].label == 1) st.labels.relabel(i, 0);
  for (int m = 0; m < st.bank.num_slots(1); ++m) st.bank.deactivate(1, m);

  Trainer resumed(data, cfg, st);
  bool saw_old_label = false;
  int seen = 0;
  resumed.set_step_observer([&](const StepRecord& rec) {
    for (std::size_t k = 0; k < rec.indices.size(); ++k) {
      if (data.samples[rec.indices[k]].label != 1) continue;
      ++seen;
      if (rec.labels[k] != 0) saw_old_label = true;
    }
  });
  resumed.run_epoch();
  EXPECT_GT(seen, 0);
  EXPECT_FALSE(saw_old_label);
}

TEST(Trainer, MaskStartsAfterFirstEpoch) {
  const auto data = small_dataset(Preset::clean, 8);
  Trainer t(data, small_config());
  EXPECT_EQ(t.mask_thresholds(), nullptr);
  t.run_epoch();
  EXPECT_NE(t.mask_thresholds(), nullptr);
  auto cfg = small_config();
  cfg.mask = false;
  Trainer u(data, cfg);
  u.run_epoch();
  EXPECT_EQ(u.mask_thresholds(), nullptr);
}

TEST(Trainer, NoEvolutionBeforeEpsilon) {
  const auto data = small_dataset(Preset::mixture, 9);
  auto cfg = small_config(8, 6);
  cfg.evolution.epsilon_start = 3;
  const auto st = train(data, cfg);
  for (const auto& ev : st.events) EXPECT_GT(ev.epoch, 3);
  for (int e = 0; e <= 3; ++e) EXPECT_EQ(st.history[e].active_subcenters, 6 * 3);
}

TEST(Trainer, HugeLearningRateDiverges) {
  const auto data = small_dataset(Preset::clean, 10);
  auto cfg = small_config();
  cfg.lr = 1e306;
  cfg.momentum = 0.0;
  EXPECT_THROW(train(data, cfg), DivergenceError);
}

TEST(Trainer, CleanLossSettlesAfterFirstDrop) {
  // After the first LR drop: no consecutive increase above 5% and no net
  // increase across any 5-epoch window.
  PresetOptions po;
  const auto data = generate_dataset(make_preset(Preset::clean, po), 16, 20.0, 11);
  const auto st = train(data, TrainConfig{});
  const int first_drop = TrainConfig{}.lr_schedule.front().epoch;
  for (int e = first_drop + 1; e < static_cast<int>(st.history.size()); ++e)
    EXPECT_LE(st.history[e].loss, 1.05 * st.history[e - 1].loss) << "epoch " << e;
  for (int e = first_drop; e + 4 < static_cast<int>(st.history.size()); ++e)
    EXPECT_LE(st.history[e + 4].loss, st.history[e].loss) << "window from epoch " << e;
}
