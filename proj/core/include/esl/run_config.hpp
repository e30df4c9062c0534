#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "esl/eval.hpp"
#include "esl/synth.hpp"
#include "esl/trainer.hpp"

namespace esl {

struct SynthConfig {
  std::string preset = "mixture";
  int num_classes = 20;
  int dim = 16;
  int samples_per_cluster = 40;
  double concentration = 20.0;
  double noise_ratio = 0.5;
  double outlier_fraction = 0.2;
  double shared_identity_fraction = 0.25;
  double holdout_fraction = 0.2;
  std::vector<NkcClassSpec> classes;  // when non-empty, replaces the preset
};

/// Everything a run needs. `seed` is the single source of randomness: it seeds
/// the generator, the trainer and the pair sampler.
struct RunConfig {
  std::uint64_t seed = 0;
  SynthConfig synth;
  std::optional<std::string> dataset;  // existing dataset file instead of `synth`
  TrainConfig train;
  VerificationOptions eval;
  std::string out = "out";

  /// Pushes `seed` into the train and eval sections and checks every field.
  void resolve();
};

nlohmann::json run_config_to_json(const RunConfig& cfg);
/// Missing keys keep their defaults; unknown keys throw std::invalid_argument.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

std::vector<NkcClassSpec> resolve_specs(const SynthConfig& synth);

}  // namespace esl
