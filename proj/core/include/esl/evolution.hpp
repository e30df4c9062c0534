#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esl/margin_loss.hpp"
#include "esl/stats.hpp"

namespace esl {

struct EvolutionConfig {
  double lambda1 = 2.0;   // ignore threshold  D = mu + lambda1 * sigma
  double lambda2 = 2.0;   // producing: samples below mu - lambda2 * sigma
  double lambda3 = 0.25;  // dropping: mu <= lambda3
  double lambda4 = 3.0;   // merging: cos >= max(mu + lambda4 * sigma)
  int m_init = 3;
  int epsilon_start = 1;
  int total_epochs = 40;
  bool produce = true;
  bool drop = true;
  bool merge = true;

  void validate() const;
  friend bool operator==(const EvolutionConfig&, const EvolutionConfig&) = default;
};

/// Current label of every training sample, the dropped set, and the class-level
/// merge relation (each original class -> smallest label it has been merged with).
class LabelMap {
 public:
  LabelMap() = default;
  LabelMap(int num_classes, std::span<const int> sample_labels);

  int num_classes() const { return static_cast<int>(class_map_.size()); }
  std::size_t num_samples() const { return labels_.size(); }

  int class_of(int original) const { return class_map_.at(original); }
  int label(std::size_t sample) const { return labels_.at(sample); }
  bool dropped(std::size_t sample) const { return dropped_.at(sample) != 0; }
  std::size_t dropped_count() const;

  void relabel(std::size_t sample, int label);
  /// Dropping is permanent.
  void drop(std::size_t sample) { dropped_.at(sample) = 1; }
  /// Joins the merge groups of `a` and `b`; every member maps to the group minimum.
  void merge_classes(int a, int b);

  bool idempotent() const;

  const std::vector<int>& class_map() const { return class_map_; }
  const std::vector<int>& labels() const { return labels_; }
  const std::vector<char>& dropped_flags() const { return dropped_; }

  // restores a serialized state; validates shapes
  static LabelMap from_parts(std::vector<int> class_map, std::vector<int> labels, std::vector<char> dropped);

 private:
  std::vector<int> class_map_;
  std::vector<int> labels_;
  std::vector<char> dropped_;
};

/// One live (not dropped) training sample as seen at the end of an epoch.
struct EvolutionSample {
  std::size_t index = 0;  // position in the training set
  Vector feature;         // unit length
  int label = 0;
  int slot = 0;           // nearest active sub-center of `label`
  double cos = 0.0;
};

enum class EventKind { produce, drop, merge };
std::string to_string(EventKind kind);

struct EvolutionEvent {
  int epoch = 0;
  EventKind kind = EventKind::produce;
  int cls = 0;
  int slot = 0;       // produce: source; drop: dropped slot; merge: surviving slot
  int new_slot = -1;  // produce only
  int count = 0;      // produce: T; drop: samples dropped; merge: samples relabeled
  double mu = 0.0;
  std::int64_t n = 0;
  std::vector<SubCenterRef> members;  // merge only, sorted
};

/// New sub-center from the samples of (cls, slot) whose cosine falls below
/// mu - lambda2 * sigma: the L2-normalized mean of their unit features, or
/// nothing when no sample qualifies.
std::optional<Vector> produce(std::span<const Vector> features, std::span<const double> cosines,
                              const SubCenterStat& stat, double lambda2);

/// Number of samples below the producing threshold.
int producing_count(std::span<const double> cosines, const SubCenterStat& stat, double lambda2);

/// Vacant sub-centers (n == 0) and those with mu <= lambda3 are dropped.
bool should_drop(const SubCenterStat& stat, double lambda3);

/// Weights are compared after L2 normalization.
bool merge_condition(const Vector& wa, const Vector& wb, const SubCenterStat& sa,
                     const SubCenterStat& sb, double lambda4);

/// Connected components of the graph on `vertices` with an edge wherever
/// `edge(a, b)` holds. Each component is sorted and components are ordered by
/// their smallest member, so the result does not depend on vertex order.
std::vector<std::vector<SubCenterRef>> connected_components(
    std::span<const SubCenterRef> vertices,
    const std::function<bool(SubCenterRef, SubCenterRef)>& edge);

/// Components of size >= 2 among active, non-fresh sub-centers under the merge condition.
std::vector<std::vector<SubCenterRef>> merge_components(const SubCenterBank& bank,
                                                        const SubCenterStats& stats, double lambda4);

/// Replaces every merge component by the normalized mean of its unit weights,
/// stored in the lowest slot of the component's smallest class, and relabels the
/// samples of all members to that class.
std::vector<EvolutionEvent> merge_groups(SubCenterBank& bank, const SubCenterStats& stats,
                                         double lambda4, LabelMap& labels,
                                         std::vector<EvolutionSample>& samples, int epoch);

/// One evolution pass: producing over every settled sub-center, then dropping,
/// then a single global merge. Active weights leave with unit norm.
std::vector<EvolutionEvent> evolve_epoch(SubCenterBank& bank, const SubCenterStats& stats,
                                         std::vector<EvolutionSample>& samples,
                                         const EvolutionConfig& cfg, LabelMap& labels, int epoch);

}  // namespace esl
