#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "esl/synth.hpp"

namespace esl {

/// Unified margin-softmax parameters: positive logit s * (m1 * cos(theta + m2) - m3),
/// negative logit s * cos(theta).
struct MarginConfig {
  double s = 64.0;
  double m1 = 1.0;
  double m2 = 0.5;
  double m3 = 0.0;

  static MarginConfig arcface(double s = 64.0, double m2 = 0.5) { return {s, 1.0, m2, 0.0}; }
  static MarginConfig cosface(double s = 64.0, double m3 = 0.35) { return {s, 1.0, 0.0, m3}; }

  void validate() const;
  friend bool operator==(const MarginConfig&, const MarginConfig&) = default;
};

/// cos(theta) is clamped to this range before arccos.
inline constexpr double kCosClamp = 1.0 - 1e-7;

double positive_logit(double cos_theta, const MarginConfig& cfg);
double negative_logit(double cos_theta, const MarginConfig& cfg);
/// d positive_logit / d cos_theta, zero where the clamp is active.
double positive_logit_derivative(double cos_theta, const MarginConfig& cfg);
inline double margin_logit(double cos_theta, const MarginConfig& cfg) {
  return positive_logit(cos_theta, cfg);
}

struct SubCenterRef {
  int cls = 0;
  int slot = 0;
  friend bool operator==(const SubCenterRef&, const SubCenterRef&) = default;
  friend auto operator<=>(const SubCenterRef&, const SubCenterRef&) = default;
};

struct SubCenter {
  Vector weight;
  bool active = true;
  /// True until the sub-center has been through one epoch of statistics.
  bool fresh = false;
};

/// Per-class lists of sub-center weights. Slots are never reused or removed, so
/// (class, slot) stays a stable handle; dropped or merged-away sub-centers are
/// only deactivated. Weights are stored unnormalized.
class SubCenterBank {
 public:
  SubCenterBank() = default;
  SubCenterBank(int num_classes, int dim);

  static SubCenterBank random(int num_classes, int per_class, int dim, std::uint64_t seed);

  int num_classes() const { return static_cast<int>(classes_.size()); }
  int dim() const { return dim_; }

  int num_slots(int cls) const { return static_cast<int>(classes_.at(cls).size()); }
  int num_active(int cls) const;
  int total_active() const;

  const SubCenter& at(int cls, int slot) const { return classes_.at(cls).at(slot); }
  SubCenter& at(int cls, int slot) { return classes_.at(cls).at(slot); }
  const SubCenter& at(SubCenterRef r) const { return at(r.cls, r.slot); }
  SubCenter& at(SubCenterRef r) { return at(r.cls, r.slot); }
  bool active(int cls, int slot) const { return at(cls, slot).active; }

  /// Appends a sub-center to `cls` and returns its slot.
  int add(int cls, Vector weight, bool fresh = false);
  void deactivate(int cls, int slot) { at(cls, slot).active = false; }
  void settle_all();  // clears every `fresh` flag
  void normalize_active();

  /// Active sub-centers in class-major, slot-minor order.
  std::vector<SubCenterRef> active_refs() const;
  std::vector<SubCenterRef> active_refs(int cls) const;

 private:
  int dim_ = 0;
  std::vector<std::vector<SubCenter>> classes_;
};

/// [class][slot] -> ignore threshold D; +inf never masks.
using ThresholdTable = std::vector<std::vector<double>>;

struct CosineEntry {
  SubCenterRef ref;
  double cos = 0.0;
};

/// Cosine between x and every active sub-center (class-major order).
std::vector<CosineEntry> cosines(const Vector& x, const SubCenterBank& bank);

/// Nearest active sub-center of class `label`, ties to the lowest slot.
/// Empty when the class has no active sub-center (the sample is ignored).
std::optional<int> assign_subcenter(const Vector& x, int label, const SubCenterBank& bank);

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct EslResult {
  double loss = 0.0;                           // batch mean
  std::vector<double> sample_loss;
  std::vector<Vector> grad_features;           // d loss / d feature, per sample
  std::vector<std::vector<Vector>> grad_weights;  // [class][slot], zero for inactive
  std::vector<int> assignments;                // positive slot per sample
  std::vector<double> positive_cos;
  std::vector<int> masked_negatives;           // per sample
};

/// Masked sub-center margin-softmax loss averaged over the batch, with exact
/// gradients through feature and weight normalization. The positive slot and the
/// ignore mask are treated as constants of the step. `thresholds == nullptr`
/// disables masking. Throws NumericError naming the sample on a non-finite loss
/// and std::invalid_argument when a label has no active sub-center.
EslResult esl_loss_and_grads(std::span<const Vector> features, std::span<const int> labels,
                             const SubCenterBank& bank, const ThresholdTable* thresholds,
                             const MarginConfig& cfg);

}  // namespace esl
