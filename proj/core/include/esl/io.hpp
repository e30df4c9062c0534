#pragma once

#include <filesystem>
#include <span>
#include <string>

#include <nlohmann/json.hpp>

#include "esl/eval.hpp"
#include "esl/synth.hpp"
#include "esl/trainer.hpp"

namespace esl {

using json = nlohmann::json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);
std::string read_file(const std::filesystem::path& path);

/// 17 significant digits, enough for an exact double round trip.
std::string format_double(double v);

// Dataset: {dim, classes, samples:[{x, label, identity}], holdout, seed, noise_ratio, concentration}
std::string dataset_to_json(const Dataset& data);
Dataset dataset_from_json(const std::string& text);
void save_dataset(const std::filesystem::path& path, const Dataset& data);
Dataset load_dataset(const std::filesystem::path& path);

/// Per-class realized N, K, C and the measured noise ratio.
json audit_summary(const Dataset& data);

json stats_snapshot(const SubCenterStats& stats, const SubCenterBank& bank);

/// One JSON object per line: {epoch, op, class, detail}.
std::string events_jsonl(std::span<const EvolutionEvent> events);

std::string metrics_csv(std::span<const EpochMetrics> history);

json train_config_to_json(const TrainConfig& cfg);
/// Fields missing from `j` keep the values of `base`; unknown keys are rejected.
TrainConfig train_config_from_json(const json& j, const TrainConfig& base = {});
/// FNV-1a over the canonical JSON form of the config.
std::string config_hash(const TrainConfig& cfg);

json checkpoint_to_json(const TrainState& state, const TrainConfig& cfg);
/// Rejects checkpoints written under a different config.
TrainState checkpoint_from_json(const json& j, const TrainConfig& cfg);

json report_to_json(const MetricReport& report);
/// Header plus one summary row.
std::string report_summary_csv(const MetricReport& report);

}  // namespace esl
