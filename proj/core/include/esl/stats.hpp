#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include "esl/margin_loss.hpp"

namespace esl {

struct SubCenterStat {
  std::int64_t n = 0;
  double mu = 0.0;
  double sigma = 0.0;  // population standard deviation
  double threshold = std::numeric_limits<double>::infinity();  // mu + lambda1 * sigma, +inf when n == 0
};

/// Finalized per-sub-center cosine statistics for one epoch.
class SubCenterStats {
 public:
  SubCenterStats() = default;
  explicit SubCenterStats(std::vector<std::vector<SubCenterStat>> table) : table_(std::move(table)) {}

  int num_classes() const { return static_cast<int>(table_.size()); }
  int num_slots(int cls) const { return static_cast<int>(table_.at(cls).size()); }

  /// Slots unseen at accumulation time read as the empty statistic.
  SubCenterStat at(int cls, int slot) const;
  SubCenterStat at(SubCenterRef r) const { return at(r.cls, r.slot); }

  /// Ignore thresholds for the loss mask. Inactive and fresh sub-centers of
  /// `bank` never mask.
  ThresholdTable thresholds(const SubCenterBank& bank) const;

  const std::vector<std::vector<SubCenterStat>>& table() const { return table_; }

 private:
  std::vector<std::vector<SubCenterStat>> table_;
};

/// Sum-structured running moments, mergeable across workers in a fixed order.
class StatsAccumulator {
 public:
  StatsAccumulator() = default;
  explicit StatsAccumulator(const SubCenterBank& bank);

  void add(int cls, int slot, double cos);
  void add(SubCenterRef r, double cos) { add(r.cls, r.slot, cos); }
  void merge(const StatsAccumulator& other);

  SubCenterStats finalize(double lambda1) const;

 private:
  struct Moments {
    std::int64_t n = 0;
    double sum = 0.0;
    double sum_sq = 0.0;
  };
  std::vector<std::vector<Moments>> moments_;
};

}  // namespace esl
