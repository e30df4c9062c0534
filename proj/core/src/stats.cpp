#include "esl/stats.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace esl {

SubCenterStat SubCenterStats::at(int cls, int slot) const {
  if (cls < 0 || cls >= num_classes()) return {};
  const auto& row = table_[cls];
  if (slot < 0 || slot >= static_cast<int>(row.size())) return {};
  return row[slot];
}

ThresholdTable SubCenterStats::thresholds(const SubCenterBank& bank) const {
  ThresholdTable out(bank.num_classes());
  for (int j = 0; j < bank.num_classes(); ++j) {
    out[j].assign(bank.num_slots(j), std::numeric_limits<double>::infinity());
    for (int m = 0; m < bank.num_slots(j); ++m) {
      const auto& sc = bank.at(j, m);
      if (sc.active && !sc.fresh) out[j][m] = at(j, m).threshold;
    }
  }
  return out;
}

StatsAccumulator::StatsAccumulator(const SubCenterBank& bank) : moments_(bank.num_classes()) {
  for (int j = 0; j < bank.num_classes(); ++j) moments_[j].resize(bank.num_slots(j));
}

void StatsAccumulator::add(int cls, int slot, double cos) {
  if (cls < 0) throw std::invalid_argument("StatsAccumulator::add: negative class");
  if (cls >= static_cast<int>(moments_.size())) moments_.resize(cls + 1);
  auto& row = moments_[cls];
  if (slot >= static_cast<int>(row.size())) row.resize(slot + 1);
  auto& m = row[slot];
  ++m.n;
  m.sum += cos;
  m.sum_sq += cos * cos;
}

void StatsAccumulator::merge(const StatsAccumulator& other) {
  if (other.moments_.size() > moments_.size()) moments_.resize(other.moments_.size());
  for (std::size_t j = 0; j < other.moments_.size(); ++j) {
    auto& row = moments_[j];
    const auto& src = other.moments_[j];
    if (src.size() > row.size()) row.resize(src.size());
    for (std::size_t m = 0; m < src.size(); ++m) {
      row[m].n += src[m].n;
      row[m].sum += src[m].sum;
      row[m].sum_sq += src[m].sum_sq;
    }
  }
}

SubCenterStats StatsAccumulator::finalize(double lambda1) const {
  std::vector<std::vector<SubCenterStat>> table(moments_.size());
  for (std::size_t j = 0; j < moments_.size(); ++j) {
    table[j].resize(moments_[j].size());
    for (std::size_t m = 0; m < moments_[j].size(); ++m) {
      const auto& mo = moments_[j][m];
      auto& st = table[j][m];
      st.n = mo.n;
      if (mo.n == 0) continue;
      const double n = static_cast<double>(mo.n);
      st.mu = mo.sum / n;
      const double var = mo.sum_sq / n - st.mu * st.mu;
      st.sigma = var > 0.0 ? std::sqrt(var) : 0.0;
      st.threshold = st.mu + lambda1 * st.sigma;
    }
  }
  return SubCenterStats(std::move(table));
}

}  // namespace esl
