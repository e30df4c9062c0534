#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace esl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Noise marks of one class under the N-identities | K^C-clusters taxonomy.
///   triangle: several valid clusters share the class label (K > 1)
///   square:   outlier identities with a single sample (N > K)
///   diamond:  a cluster whose identity also forms a cluster in another class (C > 0)
struct NoiseCell {
  bool triangle = false;
  bool square = false;
  bool diamond = false;

  bool clean() const { return !triangle && !square && !diamond; }
  std::string symbols() const;

  friend bool operator==(const NoiseCell&, const NoiseCell&) = default;
};

NoiseCell classify_noise_cell(int n, int k, int c);

struct IdentityPrototype {
  int id = 0;
  Vector direction;
  double concentration = 1.0;
};

/// Directions are uniform on S^{dim-1} (normalized isotropic Gaussian draws).
std::vector<IdentityPrototype> sample_identity_prototypes(int count, int dim, double concentration,
                                                          std::uint64_t seed);

struct NkcClassSpec {
  int class_label = 0;
  int n_identities = 1;
  int k_clusters = 1;
  int c_conflicts = 0;
  int samples_per_cluster = 40;

  int outliers() const { return n_identities - k_clusters; }
  friend bool operator==(const NkcClassSpec&, const NkcClassSpec&) = default;
};

struct Sample {
  Vector x;
  int label = 0;
  int identity = 0;
};

struct Dataset {
  int dim = 0;
  std::vector<NkcClassSpec> class_specs;
  std::vector<Sample> samples;  // training split
  std::vector<Sample> holdout;  // verification split, never trained on
  std::uint64_t seed = 0;
  double concentration = 0.0;
  double noise_ratio = 0.0;

  int num_classes() const { return static_cast<int>(class_specs.size()); }
  std::vector<int> labels() const;
  std::vector<int> identities() const;
};

struct GenerateOptions {
  double holdout_fraction = 0.2;
};

/// Builds every class described by `specs`. Cross-class conflicts are paired
/// greedily (largest remaining conflict count first, ties by lowest label);
/// an identity shared by classes a < b has home class a.
Dataset generate_dataset(const std::vector<NkcClassSpec>& specs, int dim, double concentration,
                         std::uint64_t seed, const GenerateOptions& options = {});

// ---------------------------------------------------------------------------
// Ground-truth audit

struct ClassAudit {
  int class_label = 0;
  int n_identities = 0;
  int k_clusters = 0;
  int c_conflicts = 0;
  int dominant_identity = -1;
  int samples = 0;
  int corrupted = 0;
};

struct DatasetAudit {
  std::vector<ClassAudit> classes;
  int corrupted = 0;
  int total = 0;
  double noise_ratio() const { return total == 0 ? 0.0 : static_cast<double>(corrupted) / total; }
};

/// Recomputes N, K, C and the corrupted-sample count from identity annotations.
/// A sample is corrupted when its identity is not the dominant one of its class
/// (most samples, ties to the lowest id) or when its identity clusters here but
/// its home class (lowest label holding the identity) is another class.
DatasetAudit audit_dataset(const std::vector<Sample>& samples, int num_classes);

/// Per-sample corruption flags under the same definition as `audit_dataset`.
std::vector<bool> corrupted_flags(const std::vector<Sample>& samples, int num_classes);

/// True when the sample's identity has exactly one sample inside its class.
std::vector<bool> outlier_flags(const std::vector<Sample>& samples);

// ---------------------------------------------------------------------------
// Presets

enum class Preset {
  clean,       // N = K = 1, C = 0 everywhere
  intra_only,  // C = 0 with extra clusters and outliers at a target noise ratio
  inter_only,  // N = K = 1 classes, pairs sharing their single identity
  mixture,     // extra clusters, cross-class duplicates and outliers
  k_recovery,  // N = K in {1, 2, 3, 4}, C = 0
  outliers,    // singleton-outlier samples, including classes made only of singletons
  conflicts,   // a fraction of identities split across two classes
};

std::string to_string(Preset preset);
Preset preset_from_string(const std::string& name);

struct PresetOptions {
  int num_classes = 20;
  int samples_per_cluster = 40;
  double holdout_fraction = 0.2;
  double noise_ratio = 0.5;         // intra_only, inter_only, mixture
  double outlier_fraction = 0.2;    // outliers
  double shared_identity_fraction = 0.25;  // conflicts
};

std::vector<NkcClassSpec> make_preset(Preset preset, const PresetOptions& options);

/// Training samples kept per cluster after the stratified hold-out split.
int training_samples_per_cluster(int samples_per_cluster, double holdout_fraction);

}  // namespace esl
