#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "esl/synth.hpp"
#include "esl/trainer.hpp"

namespace esl {

// ---------------------------------------------------------------------------
// Verification

struct TarPoint {
  double far = 0.0;
  std::optional<double> tar;        // null when far * negatives < 1
  std::optional<double> threshold;  // accept iff score > threshold
};

/// Threshold is the (k+1)-th largest negative score with k = floor(far * n_neg),
/// so at most k negatives are accepted. Null when k < 1.
TarPoint tar_at_far(std::span<const double> positives, std::span<const double> negatives, double far);

struct VerificationOptions {
  std::vector<double> far_grid{1e-1, 1e-2, 1e-3};
  std::int64_t max_pairs = 500000;  // beyond this, pairs are sampled uniformly
  std::uint64_t seed = 0;
};

struct VerificationResult {
  std::vector<TarPoint> points;
  std::int64_t positive_pairs = 0;
  std::int64_t negative_pairs = 0;

  std::optional<double> tar(double far) const;
};

/// Cosine scores over all pairs (or a seeded sample when there are more than
/// `max_pairs`); a pair is positive when both samples share an identity.
VerificationResult verification_eval(std::span<const Vector> embeddings, std::span<const int> identities,
                                     const VerificationOptions& options);

// ---------------------------------------------------------------------------
// Cleaning

struct Confusion {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  std::int64_t tn = 0;

  /// 1 when nothing was predicted positive.
  double precision() const;
  /// 1 when there are no true positives to find.
  double recall() const;
};

struct CleaningReport {
  Confusion drop;   // per training sample: dropped vs singleton outlier
  Confusion merge;  // per class pair: mapped together vs sharing a cluster identity
};

/// Class pairs (a < b) that both hold a cluster of the same identity.
std::vector<std::pair<int, int>> conflict_pairs(const std::vector<Sample>& samples, int num_classes);

CleaningReport cleaning_eval(const LabelMap& labels, const Dataset& data);

// ---------------------------------------------------------------------------
// Clustering

/// Purity of `predicted` against `truth`.
double purity(std::span<const int> predicted, std::span<const int> truth);
/// NMI with arithmetic-mean normalization; 1 when both partitions are trivial.
double nmi(std::span<const int> predicted, std::span<const int> truth);

// ---------------------------------------------------------------------------
// Full report

struct ClassRecovery {
  int cls = 0;
  int true_k = 0;
  int active = 0;
};

struct MetricReport {
  std::vector<ClassRecovery> recovery;
  double k_recovery_rate = 0.0;  // fraction of classes with active == true K
  CleaningReport cleaning;
  int singleton_classes = 0;          // classes with K = 0 and N > 0
  int singleton_classes_emptied = 0;  // of those, with no active sub-center left
  int merges = 0;
  int merges_to_min_label = 0;
  double purity = 0.0;
  double nmi = 0.0;
  VerificationResult verification;

  double singleton_empty_rate() const;
  double relabel_exact_rate() const;
};

/// Embeds a vector with the trained encoder and normalizes it.
Vector embed(const TrainState& state, EncoderMode mode, const Vector& x);

MetricReport evaluate(const Dataset& data, const TrainState& state, EncoderMode mode,
                      const VerificationOptions& options);

// ---------------------------------------------------------------------------
// Scenario matrix

struct ScenarioCheck {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool pass = false;
};

struct ScenarioRow {
  Preset preset = Preset::clean;
  bool present = false;  // absent rows are reported, not failed
  std::vector<ScenarioCheck> checks;

  bool pass() const;
};

/// Thresholds applied per preset:
///   clean        K recovery >= 0.95
///   k_recovery   K recovery >= 0.90
///   outliers     drop precision, recall >= 0.85; singleton classes emptied >= 0.90
///   intra_only   drop recall >= 0.85
///   inter_only, conflicts   merge recall >= 0.85, precision >= 0.90, relabel exact
///   mixture      drop recall >= 0.85, merge recall >= 0.85
std::vector<ScenarioRow> scenario_matrix(const std::map<Preset, MetricReport>& results);

}  // namespace esl
