#include "esl/eval.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <set>
#include <stdexcept>

namespace esl {

TarPoint tar_at_far(std::span<const double> positives, std::span<const double> negatives, double far) {
  TarPoint p;
  p.far = far;
  if (positives.empty() || negatives.empty()) return p;
  const auto k = static_cast<std::size_t>(std::floor(far * static_cast<double>(negatives.size()) + 1e-9));
  if (k < 1) return p;
  double thr = -std::numeric_limits<double>::infinity();
  if (k < negatives.size()) {
    std::vector<double> neg(negatives.begin(), negatives.end());
    std::nth_element(neg.begin(), neg.begin() + static_cast<std::ptrdiff_t>(k), neg.end(), std::greater<>());
    thr = neg[k];
  }
  const auto accepted = std::count_if(positives.begin(), positives.end(), [&](double s) { return s > thr; });
  p.threshold = thr;
  p.tar = static_cast<double>(accepted) / static_cast<double>(positives.size());
  return p;
}

std::optional<double> VerificationResult::tar(double far) const {
  for (const auto& p : points)
    if (std::abs(p.far - far) <= 1e-12 * std::max(1.0, far)) return p.tar;
  return std::nullopt;
}

VerificationResult verification_eval(std::span<const Vector> embeddings, std::span<const int> identities,
                                     const VerificationOptions& options) {
  if (embeddings.size() != identities.size())
    throw std::invalid_argument("verification_eval: embeddings and identities differ in length");
  if (std::set<int>(identities.begin(), identities.end()).size() < 2)
    throw std::invalid_argument("verification_eval: needs at least two identities");

  const std::size_t n = embeddings.size();
  std::vector<Vector> unit;
  unit.reserve(n);
  for (const auto& e : embeddings) unit.push_back(e.normalized());

  std::vector<double> pos, neg;
  auto score = [&](std::size_t a, std::size_t b) {
    const double s = unit[a].dot(unit[b]);
    (identities[a] == identities[b] ? pos : neg).push_back(s);
  };
  const auto total = static_cast<std::int64_t>(n) * static_cast<std::int64_t>(n - 1) / 2;
  if (total <= options.max_pairs) {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) score(a, b);
  } else {
    std::mt19937_64 rng(options.seed);
    std::uniform_int_distribution<std::size_t> pick(0, n - 1);
    for (std::int64_t t = 0; t < options.max_pairs; ++t) {
      std::size_t a = pick(rng), b = pick(rng);
      while (b == a) b = pick(rng);
      score(a, b);
    }
  }

  VerificationResult r;
  r.positive_pairs = static_cast<std::int64_t>(pos.size());
  r.negative_pairs = static_cast<std::int64_t>(neg.size());
  for (double far : options.far_grid) r.points.push_back(tar_at_far(pos, neg, far));
  return r;
}

// ---------------------------------------------------------------------------

double Confusion::precision() const {
  return tp + fp == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double Confusion::recall() const {
  return tp + fn == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
}

std::vector<std::pair<int, int>> conflict_pairs(const std::vector<Sample>& samples, int num_classes) {
  // identity -> class -> sample count
  std::map<int, std::map<int, int>> counts;
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= num_classes) throw std::invalid_argument("conflict_pairs: label out of range");
    ++counts[s.identity][s.label];
  }
  std::set<std::pair<int, int>> pairs;
  for (const auto& [id, per_class] : counts) {
    std::vector<int> holders;
    for (const auto& [cls, c] : per_class)
      if (c >= 2) holders.push_back(cls);
    for (std::size_t a = 0; a < holders.size(); ++a)
      for (std::size_t b = a + 1; b < holders.size(); ++b) pairs.emplace(holders[a], holders[b]);
  }
  return {pairs.begin(), pairs.end()};
}

CleaningReport cleaning_eval(const LabelMap& labels, const Dataset& data) {
  if (labels.num_samples() != data.samples.size())
    throw std::invalid_argument("cleaning_eval: label map does not match the dataset");
  CleaningReport r;
  const auto outlier = outlier_flags(data.samples);
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const bool pred = labels.dropped(i), truth = outlier[i];
    if (pred && truth) ++r.drop.tp;
    else if (pred) ++r.drop.fp;
    else if (truth) ++r.drop.fn;
    else ++r.drop.tn;
  }

  const int S = data.num_classes();
  const auto truth_pairs = conflict_pairs(data.samples, S);
  const std::set<std::pair<int, int>> truth(truth_pairs.begin(), truth_pairs.end());
  for (int a = 0; a < S; ++a) {
    for (int b = a + 1; b < S; ++b) {
      const bool pred = labels.class_of(a) == labels.class_of(b);
      const bool t = truth.contains({a, b});
      if (pred && t) ++r.merge.tp;
      else if (pred) ++r.merge.fp;
      else if (t) ++r.merge.fn;
      else ++r.merge.tn;
    }
  }
  return r;
}

// ---------------------------------------------------------------------------

namespace {

struct Contingency {
  std::map<std::pair<int, int>, double> joint;
  std::map<int, double> rows, cols;
  double n = 0.0;
};

Contingency contingency(std::span<const int> predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size()) throw std::invalid_argument("clustering metrics: length mismatch");
  Contingency c;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    c.joint[{predicted[i], truth[i]}] += 1.0;
    c.rows[predicted[i]] += 1.0;
    c.cols[truth[i]] += 1.0;
  }
  c.n = static_cast<double>(predicted.size());
  return c;
}

double entropy(const std::map<int, double>& counts, double n) {
  double h = 0.0;
  for (const auto& [k, c] : counts) h -= (c / n) * std::log(c / n);
  return h;
}

}  // namespace

double purity(std::span<const int> predicted, std::span<const int> truth) {
  const auto c = contingency(predicted, truth);
  if (c.n == 0.0) return 1.0;
  std::map<int, double> best;
  for (const auto& [key, v] : c.joint) best[key.first] = std::max(best[key.first], v);
  double sum = 0.0;
  for (const auto& [k, v] : best) sum += v;
  return sum / c.n;
}

double nmi(std::span<const int> predicted, std::span<const int> truth) {
  const auto c = contingency(predicted, truth);
  if (c.n == 0.0) return 1.0;
  const double hu = entropy(c.rows, c.n), hv = entropy(c.cols, c.n);
  if (hu + hv <= 0.0) return 1.0;
  double mi = 0.0;
  for (const auto& [key, v] : c.joint)
    mi += (v / c.n) * std::log(v * c.n / (c.rows.at(key.first) * c.cols.at(key.second)));
  return std::clamp(2.0 * mi / (hu + hv), 0.0, 1.0);
}

// ---------------------------------------------------------------------------

double MetricReport::singleton_empty_rate() const {
  return singleton_classes == 0 ? 1.0 : static_cast<double>(singleton_classes_emptied) / singleton_classes;
}

double MetricReport::relabel_exact_rate() const {
  return merges == 0 ? 1.0 : static_cast<double>(merges_to_min_label) / merges;
}

Vector embed(const TrainState& state, EncoderMode mode, const Vector& x) {
  if (mode == EncoderMode::frozen) return x.normalized();
  return (state.encoder.transpose() * x).normalized();
}

MetricReport evaluate(const Dataset& data, const TrainState& state, EncoderMode mode,
                      const VerificationOptions& options) {
  MetricReport r;
  const int S = data.num_classes();
  const auto audit = audit_dataset(data.samples, S);

  int recovered = 0;
  for (int j = 0; j < S; ++j) {
    ClassRecovery c;
    c.cls = j;
    c.true_k = audit.classes[j].k_clusters;
    c.active = state.bank.num_active(j);
    if (c.active == c.true_k) ++recovered;
    if (audit.classes[j].k_clusters == 0 && audit.classes[j].n_identities > 0) {
      ++r.singleton_classes;
      if (c.active == 0) ++r.singleton_classes_emptied;
    }
    r.recovery.push_back(c);
  }
  r.k_recovery_rate = S == 0 ? 1.0 : static_cast<double>(recovered) / S;

  r.cleaning = cleaning_eval(state.labels, data);

  for (const auto& ev : state.events) {
    if (ev.kind != EventKind::merge) continue;
    ++r.merges;
    int lowest = std::numeric_limits<int>::max();
    for (const auto& m : ev.members) lowest = std::min(lowest, m.cls);
    if (ev.cls == lowest && ev.slot == ev.members.front().slot) ++r.merges_to_min_label;
  }

  // Clustering of the live training samples by (class, nearest sub-center).
  std::vector<int> predicted, truth;
  std::map<std::pair<int, int>, int> cluster_id;
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    if (state.labels.dropped(i)) continue;
    const int label = state.labels.label(i);
    const Vector f = embed(state, mode, data.samples[i].x);
    const auto slot = assign_subcenter(f, label, state.bank);
    if (!slot) continue;
    const int cls = state.labels.class_of(label);
    const auto [it, inserted] = cluster_id.try_emplace({cls, *slot}, static_cast<int>(cluster_id.size()));
    predicted.push_back(it->second);
    truth.push_back(data.samples[i].identity);
  }
  r.purity = purity(predicted, truth);
  r.nmi = nmi(predicted, truth);

  std::vector<Vector> emb;
  std::vector<int> ids;
  emb.reserve(data.holdout.size());
  for (const auto& s : data.holdout) {
    emb.push_back(embed(state, mode, s.x));
    ids.push_back(s.identity);
  }
  if (std::set<int>(ids.begin(), ids.end()).size() >= 2) r.verification = verification_eval(emb, ids, options);
  else
    for (double far : options.far_grid) r.verification.points.push_back({far, std::nullopt, std::nullopt});
  return r;
}

// ---------------------------------------------------------------------------

bool ScenarioRow::pass() const {
  if (!present) return false;
  return std::all_of(checks.begin(), checks.end(), [](const auto& c) { return c.pass; });
}

std::vector<ScenarioRow> scenario_matrix(const std::map<Preset, MetricReport>& results) {
  const Preset order[] = {Preset::clean,      Preset::k_recovery, Preset::outliers, Preset::intra_only,
                          Preset::inter_only, Preset::conflicts,  Preset::mixture};
  std::vector<ScenarioRow> rows;
  for (Preset p : order) {
    ScenarioRow row;
    row.preset = p;
    const auto it = results.find(p);
    row.present = it != results.end();
    if (row.present) {
      const auto& m = it->second;
      auto check = [&](std::string name, double value, double threshold) {
        row.checks.push_back({std::move(name), value, threshold, value >= threshold});
      };
      switch (p) {
        case Preset::clean: check("k_recovery", m.k_recovery_rate, 0.95); break;
        case Preset::k_recovery: check("k_recovery", m.k_recovery_rate, 0.90); break;
        case Preset::outliers:
          check("drop_precision", m.cleaning.drop.precision(), 0.85);
          check("drop_recall", m.cleaning.drop.recall(), 0.85);
          check("singleton_classes_emptied", m.singleton_empty_rate(), 0.90);
          break;
        case Preset::intra_only: check("drop_recall", m.cleaning.drop.recall(), 0.85); break;
        case Preset::inter_only:
        case Preset::conflicts:
          check("merge_recall", m.cleaning.merge.recall(), 0.85);
          check("merge_precision", m.cleaning.merge.precision(), 0.90);
          check("relabel_min_label", m.relabel_exact_rate(), 1.0);
          break;
        case Preset::mixture:
          check("drop_recall", m.cleaning.drop.recall(), 0.85);
          check("merge_recall", m.cleaning.merge.recall(), 0.85);
          break;
      }
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace esl
