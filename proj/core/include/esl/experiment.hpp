#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "esl/eval.hpp"
#include "esl/run_config.hpp"
#include "esl/trainer.hpp"

namespace esl {

/// Loads `cfg.dataset` when set, otherwise generates from `cfg.synth` with `cfg.seed`.
Dataset make_dataset(const RunConfig& cfg);

struct RunResult {
  TrainState state;
  MetricReport report;
};

RunResult run_experiment(const Dataset& data, const TrainConfig& train, const VerificationOptions& eval,
                         const std::function<void(const EpochMetrics&)>& on_epoch = {});

struct SweepRow {
  double ratio = 0.0;
  std::string method;  // "esl" or "baseline"
  double measured_noise = 0.0;
  MetricReport report;
};

/// ESL and the plain single-center baseline at every noise ratio. Jobs run on
/// up to `parallel` threads; rows come back in (ratio, method) order either way.
std::vector<SweepRow> run_sweep(const RunConfig& base, std::span<const double> ratios, int parallel = 1);

/// Long format: ratio,method,metric,value.
std::string sweep_csv(std::span<const SweepRow> rows);

/// Line chart of TAR at `far` against noise ratio, one line per method.
std::string sweep_svg(std::span<const SweepRow> rows, double far);

}  // namespace esl
