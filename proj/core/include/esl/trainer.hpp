#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "esl/evolution.hpp"
#include "esl/margin_loss.hpp"
#include "esl/stats.hpp"
#include "esl/synth.hpp"

namespace esl {

enum class EncoderMode { frozen, linear };
std::string to_string(EncoderMode mode);
EncoderMode encoder_mode_from_string(const std::string& name);

enum class EncoderInit { identity, random };
std::string to_string(EncoderInit init);
EncoderInit encoder_init_from_string(const std::string& name);

/// From `epoch` on, the learning rate is multiplied by `multiplier` (cumulative).
struct LrStep {
  int epoch = 0;
  double multiplier = 1.0;
  friend bool operator==(const LrStep&, const LrStep&) = default;
};

struct TrainConfig {
  int epochs = 40;
  int batch_size = 128;
  double lr = 0.1;
  std::vector<LrStep> lr_schedule{{25, 0.1}, {35, 0.1}};
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 0;
  int embedding_dim = 16;
  EncoderMode encoder = EncoderMode::linear;
  EncoderInit encoder_init = EncoderInit::identity;
  MarginConfig margin = MarginConfig::arcface(16.0, 0.2);
  bool mask = true;
  EvolutionConfig evolution;

  double lr_at(int epoch) const;
  bool evolves() const { return evolution.produce || evolution.drop || evolution.merge; }
  void validate(int input_dim) const;

  /// Same schedule and seed with a single center per class, no mask, no evolution.
  TrainConfig plain_baseline() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EpochMetrics {
  int epoch = 0;
  double lr = 0.0;
  double loss = 0.0;
  int steps = 0;
  int samples_used = 0;
  int dropped_samples = 0;
  int active_subcenters = 0;
  int classes_alive = 0;
  int produced = 0;
  int dropped_subcenters = 0;
  int merges = 0;
  int relabeled = 0;
  double masked_per_sample = 0.0;
};

struct TrainState {
  Matrix encoder;  // d x D, identity-like in frozen mode
  SubCenterBank bank;
  LabelMap labels;
  int epoch = 0;  // next epoch to run
  std::vector<EpochMetrics> history;
  std::vector<EvolutionEvent> events;
  std::optional<SubCenterStats> last_stats;
  Matrix encoder_velocity;
  std::vector<std::vector<Vector>> weight_velocity;  // [class][slot]
};

class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Classic momentum SGD with weight decay folded into the gradient:
///   v <- momentum * v + (g + weight_decay * p);  p <- p - lr * v
void sgd_step(std::span<double> params, std::span<const double> grads, std::span<double> velocity,
              double lr, double momentum, double weight_decay);

struct StepRecord {
  int epoch = 0;
  std::int64_t step = 0;
  std::span<const std::size_t> indices;
  std::span<const int> labels;
  double loss = 0.0;
};
using StepObserver = std::function<void(const StepRecord&)>;

/// Mini-batch trainer for the masked sub-center loss with per-epoch statistics
/// and sub-center evolution. Owns its TrainState; the dataset must outlive it.
class Trainer {
 public:
  Trainer(const Dataset& data, TrainConfig cfg);
  Trainer(const Dataset& data, TrainConfig cfg, TrainState resume);

  bool done() const { return state_.epoch >= cfg_.epochs; }
  const EpochMetrics& run_epoch();
  void run(const std::function<void(const EpochMetrics&)>& on_epoch = {});

  /// One SGD step on the given training indices at learning rate `lr`.
  double step(std::span<const std::size_t> batch, double lr);

  /// Shuffled live training indices for `epoch`.
  std::vector<std::size_t> epoch_order(int epoch) const;

  Vector feature(const Vector& x) const;
  Vector embed(const Vector& x) const { return feature(x).normalized(); }

  const TrainState& state() const { return state_; }
  const TrainConfig& config() const { return cfg_; }
  const ThresholdTable* mask_thresholds() const;
  void set_step_observer(StepObserver obs) { observer_ = std::move(obs); }

 private:
  void sync_velocity();
  std::vector<EvolutionSample> sweep(StatsAccumulator& acc) const;

  const Dataset& data_;
  TrainConfig cfg_;
  TrainState state_;
  ThresholdTable thresholds_;
  StepObserver observer_;
  std::int64_t steps_ = 0;
  int masked_total_ = 0;
};

TrainState train(const Dataset& data, const TrainConfig& cfg,
                 const std::function<void(const EpochMetrics&)>& on_epoch = {});

}  // namespace esl
