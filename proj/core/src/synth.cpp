#include "esl/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

namespace esl {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Vector random_unit(std::mt19937_64& rng, int dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector v(dim);
  double norm = 0.0;
  do {
    for (int i = 0; i < dim; ++i) v[i] = normal(rng);
    norm = v.norm();
  } while (norm < 1e-12);
  return v / norm;
}

// Tangent-space Gaussian with per-axis std 1/sqrt(concentration), renormalized.
Vector perturb(std::mt19937_64& rng, const Vector& direction, double concentration) {
  std::normal_distribution<double> normal(0.0, 1.0 / std::sqrt(concentration));
  Vector g(direction.size());
  for (Eigen::Index i = 0; i < g.size(); ++i) g[i] = normal(rng);
  g -= g.dot(direction) * direction;
  Vector x = direction + g;
  return x / x.norm();
}

std::string describe(const NkcClassSpec& s, std::size_t index) {
  std::ostringstream os;
  os << "class_specs[" << index << "] (class " << s.class_label << ", N=" << s.n_identities
     << ", K=" << s.k_clusters << ", C=" << s.c_conflicts << ")";
  return os.str();
}

void validate_specs(const std::vector<NkcClassSpec>& specs) {
  if (specs.empty()) throw std::invalid_argument("class_specs: at least one class is required");
  std::vector<bool> seen(specs.size(), false);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const auto& s = specs[i];
    if (s.class_label < 0 || s.class_label >= static_cast<int>(specs.size()) || seen[s.class_label])
      throw std::invalid_argument(describe(s, i) + ": class_label must be a unique index in [0, " +
                                  std::to_string(specs.size()) + ")");
    seen[s.class_label] = true;
    if (s.n_identities < 0 || s.k_clusters < 0 || s.c_conflicts < 0)
      throw std::invalid_argument(describe(s, i) + ": counts must be non-negative");
    if (s.k_clusters > s.n_identities)
      throw std::invalid_argument(describe(s, i) + ": k_clusters exceeds n_identities");
    if (s.c_conflicts > s.k_clusters)
      throw std::invalid_argument(describe(s, i) + ": c_conflicts exceeds k_clusters");
    if (s.k_clusters > 0 && s.samples_per_cluster < 2)
      throw std::invalid_argument(describe(s, i) + ": samples_per_cluster must be >= 2");
  }
}

struct ConflictPair {
  int home;
  int other;
};

std::vector<ConflictPair> pair_conflicts(const std::vector<NkcClassSpec>& by_label) {
  std::vector<int> remaining(by_label.size());
  for (std::size_t j = 0; j < by_label.size(); ++j) remaining[j] = by_label[j].c_conflicts;

  auto pick = [&](int exclude) {
    int best = -1;
    for (int j = 0; j < static_cast<int>(remaining.size()); ++j) {
      if (j == exclude || remaining[j] == 0) continue;
      if (best < 0 || remaining[j] > remaining[best]) best = j;
    }
    return best;
  };

  std::vector<ConflictPair> pairs;
  for (;;) {
    const int a = pick(-1);
    if (a < 0) break;
    const int b = pick(a);
    if (b < 0) {
      throw std::invalid_argument(describe(by_label[a], a) + ": c_conflicts=" +
                                  std::to_string(by_label[a].c_conflicts) +
                                  " is unrealizable, no other class has a conflict slot left to share "
                                  "an identity with");
    }
    --remaining[a];
    --remaining[b];
    pairs.push_back({std::min(a, b), std::max(a, b)});
  }
  return pairs;
}

}  // namespace

std::string NoiseCell::symbols() const {
  if (clean()) return "-";
  std::string out;
  auto add = [&](const char* s) {
    if (!out.empty()) out += '+';
    out += s;
  };
  if (triangle) add("triangle");
  if (square) add("square");
  if (diamond) add("diamond");
  return out;
}

NoiseCell classify_noise_cell(int n, int k, int c) {
  if (n < 0 || k < 0 || c < 0)
    throw std::invalid_argument("classify_noise_cell: counts must be non-negative");
  if (k > n)
    throw std::invalid_argument("classify_noise_cell: k=" + std::to_string(k) + " exceeds n=" +
                                std::to_string(n));
  if (c > k)
    throw std::invalid_argument("classify_noise_cell: c=" + std::to_string(c) + " exceeds k=" +
                                std::to_string(k));
  return NoiseCell{k > 1, n > k, c > 0};
}

std::vector<IdentityPrototype> sample_identity_prototypes(int count, int dim, double concentration,
                                                          std::uint64_t seed) {
  if (dim < 2) throw std::invalid_argument("sample_identity_prototypes: dim must be >= 2");
  if (count < 1) throw std::invalid_argument("sample_identity_prototypes: count must be >= 1");
  if (!(concentration > 0.0))
    throw std::invalid_argument("sample_identity_prototypes: concentration must be > 0");

  std::mt19937_64 rng(seed);
  std::vector<IdentityPrototype> out;
  out.reserve(count);
  for (int i = 0; i < count; ++i) out.push_back({i, random_unit(rng, dim), concentration});
  return out;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

std::vector<int> Dataset::identities() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.identity);
  return out;
}

int training_samples_per_cluster(int samples_per_cluster, double holdout_fraction) {
  const int held = static_cast<int>(std::floor(holdout_fraction * samples_per_cluster + 1e-9));
  return samples_per_cluster - held;
}

Dataset generate_dataset(const std::vector<NkcClassSpec>& specs, int dim, double concentration,
                         std::uint64_t seed, const GenerateOptions& options) {
  if (dim < 2) throw std::invalid_argument("generate_dataset: dim must be >= 2");
  if (!(concentration > 0.0))
    throw std::invalid_argument("generate_dataset: concentration must be > 0");
  if (!(options.holdout_fraction >= 0.0 && options.holdout_fraction < 1.0))
    throw std::invalid_argument("generate_dataset: holdout_fraction must lie in [0, 1)");
  validate_specs(specs);

  std::vector<NkcClassSpec> by_label(specs.size());
  for (const auto& s : specs) by_label[s.class_label] = s;
  const int num_classes = static_cast<int>(by_label.size());

  const auto pairs = pair_conflicts(by_label);

  // Identity ids per cluster slot. Conflict slots are the last C of K; the
  // primary slot (0) of every class with an own cluster gets the lowest ids so
  // that it wins the dominance tie-break inside its class.
  std::vector<std::vector<int>> cluster_ids(num_classes);
  std::vector<int> next_conflict_slot(num_classes);
  for (int j = 0; j < num_classes; ++j) {
    cluster_ids[j].assign(by_label[j].k_clusters, -1);
    next_conflict_slot[j] = by_label[j].k_clusters - by_label[j].c_conflicts;
  }
  int next_id = 0;
  for (int j = 0; j < num_classes; ++j)
    if (next_conflict_slot[j] >= 1) cluster_ids[j][0] = next_id++;
  for (int j = 0; j < num_classes; ++j)
    for (int slot = 1; slot < next_conflict_slot[j]; ++slot) cluster_ids[j][slot] = next_id++;
  for (const auto& p : pairs) {
    const int id = next_id++;
    cluster_ids[p.home][next_conflict_slot[p.home]++] = id;
    cluster_ids[p.other][next_conflict_slot[p.other]++] = id;
  }
  std::vector<std::vector<int>> outlier_ids(num_classes);
  for (int j = 0; j < num_classes; ++j)
    for (int o = 0; o < by_label[j].outliers(); ++o) outlier_ids[j].push_back(next_id++);

  Dataset ds;
  ds.dim = dim;
  ds.class_specs = by_label;
  ds.seed = seed;
  ds.concentration = concentration;
  if (next_id == 0) return ds;

  const auto prototypes = sample_identity_prototypes(next_id, dim, concentration, seed);
  std::mt19937_64 rng(splitmix64(seed));

  for (int j = 0; j < num_classes; ++j) {
    const auto& spec = by_label[j];
    const int train_n = training_samples_per_cluster(spec.samples_per_cluster, options.holdout_fraction);
    for (const int id : cluster_ids[j]) {
      for (int s = 0; s < spec.samples_per_cluster; ++s) {
        Sample sample{perturb(rng, prototypes[id].direction, concentration), j, id};
        if (s < spec.samples_per_cluster - train_n)
          ds.holdout.push_back(std::move(sample));
        else
          ds.samples.push_back(std::move(sample));
      }
    }
    for (const int id : outlier_ids[j])
      ds.samples.push_back({perturb(rng, prototypes[id].direction, concentration), j, id});
  }

  ds.noise_ratio = audit_dataset(ds.samples, num_classes).noise_ratio();
  return ds;
}

// ---------------------------------------------------------------------------

namespace {

struct CountTable {
  std::vector<std::map<int, int>> per_class;  // class -> identity -> count
  std::map<int, int> home;                    // identity -> lowest class containing it
  std::map<int, int> cluster_classes;         // identity -> number of classes where it clusters
};

CountTable count_identities(const std::vector<Sample>& samples, int num_classes) {
  CountTable t;
  t.per_class.resize(num_classes);
  for (const auto& s : samples) {
    if (s.label < 0 || s.label >= num_classes)
      throw std::invalid_argument("sample label " + std::to_string(s.label) + " outside [0, " +
                                  std::to_string(num_classes) + ")");
    ++t.per_class[s.label][s.identity];
    auto [it, inserted] = t.home.try_emplace(s.identity, s.label);
    if (!inserted) it->second = std::min(it->second, s.label);
  }
  for (const auto& cls : t.per_class)
    for (const auto& [id, n] : cls)
      if (n >= 2) ++t.cluster_classes[id];
  return t;
}

int dominant_of(const std::map<int, int>& counts) {
  int best = -1, best_n = 0;
  for (const auto& [id, n] : counts)  // ascending id, so strict > keeps the lowest id on ties
    if (n > best_n) best = id, best_n = n;
  return best;
}

bool is_corrupted(const CountTable& t, int label, int identity, int dominant) {
  if (identity != dominant) return true;
  const int n = t.per_class[label].at(identity);
  const auto cc = t.cluster_classes.find(identity);
  const bool conflict = n >= 2 && cc != t.cluster_classes.end() && cc->second >= 2;
  return conflict && t.home.at(identity) != label;
}

}  // namespace

DatasetAudit audit_dataset(const std::vector<Sample>& samples, int num_classes) {
  const auto t = count_identities(samples, num_classes);
  DatasetAudit audit;
  audit.classes.resize(num_classes);
  for (int j = 0; j < num_classes; ++j) {
    auto& a = audit.classes[j];
    a.class_label = j;
    a.dominant_identity = dominant_of(t.per_class[j]);
    for (const auto& [id, n] : t.per_class[j]) {
      ++a.n_identities;
      a.samples += n;
      if (n >= 2) {
        ++a.k_clusters;
        if (t.cluster_classes.at(id) >= 2) ++a.c_conflicts;
      }
      if (is_corrupted(t, j, id, a.dominant_identity)) a.corrupted += n;
    }
    audit.corrupted += a.corrupted;
    audit.total += a.samples;
  }
  return audit;
}

std::vector<bool> corrupted_flags(const std::vector<Sample>& samples, int num_classes) {
  const auto t = count_identities(samples, num_classes);
  std::vector<int> dominant(num_classes);
  for (int j = 0; j < num_classes; ++j) dominant[j] = dominant_of(t.per_class[j]);
  std::vector<bool> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    out[i] = is_corrupted(t, samples[i].label, samples[i].identity, dominant[samples[i].label]);
  return out;
}

std::vector<bool> outlier_flags(const std::vector<Sample>& samples) {
  std::map<std::pair<int, int>, int> counts;
  for (const auto& s : samples) ++counts[{s.label, s.identity}];
  std::vector<bool> out(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    out[i] = counts[{samples[i].label, samples[i].identity}] == 1;
  return out;
}

// ---------------------------------------------------------------------------
// Presets

std::string to_string(Preset preset) {
  switch (preset) {
    case Preset::clean: return "clean";
    case Preset::intra_only: return "intra_only";
    case Preset::inter_only: return "inter_only";
    case Preset::mixture: return "mixture";
    case Preset::k_recovery: return "k_recovery";
    case Preset::outliers: return "outliers";
    case Preset::conflicts: return "conflicts";
  }
  return "unknown";
}

Preset preset_from_string(const std::string& name) {
  for (Preset p : {Preset::clean, Preset::intra_only, Preset::inter_only, Preset::mixture,
                   Preset::k_recovery, Preset::outliers, Preset::conflicts})
    if (to_string(p) == name) return p;
  throw std::invalid_argument("unknown preset '" + name + "'");
}

namespace {

// Spreads `total` units over `weights` with largest-remainder rounding.
std::vector<int> apportion(int total, const std::vector<double>& weights) {
  const double sum = std::accumulate(weights.begin(), weights.end(), 0.0);
  std::vector<int> out(weights.size(), 0);
  if (total <= 0 || sum <= 0.0) return out;
  std::vector<std::pair<double, std::size_t>> rem;
  int assigned = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double exact = total * weights[i] / sum;
    out[i] = static_cast<int>(std::floor(exact));
    assigned += out[i];
    rem.push_back({exact - out[i], i});
  }
  std::stable_sort(rem.begin(), rem.end(), [](auto a, auto b) { return a.first > b.first; });
  for (int k = 0; k < total - assigned; ++k) ++out[rem[k].second];
  return out;
}

std::vector<NkcClassSpec> base_specs(const PresetOptions& o) {
  std::vector<NkcClassSpec> specs(o.num_classes);
  for (int j = 0; j < o.num_classes; ++j) specs[j] = {j, 1, 1, 0, o.samples_per_cluster};
  return specs;
}

void check_ratio(double r, double max, const char* what) {
  if (!(r >= 0.0 && r <= max))
    throw std::invalid_argument(std::string(what) + " must lie in [0, " + std::to_string(max) + "]");
}

}  // namespace

std::vector<NkcClassSpec> make_preset(Preset preset, const PresetOptions& o) {
  if (o.num_classes < 1) throw std::invalid_argument("num_classes must be >= 1");
  if (o.samples_per_cluster < 2) throw std::invalid_argument("samples_per_cluster must be >= 2");
  const int S = o.num_classes;
  const int t = training_samples_per_cluster(o.samples_per_cluster, o.holdout_fraction);
  auto specs = base_specs(o);

  switch (preset) {
    case Preset::clean:
      break;

    case Preset::k_recovery:
      for (int j = 0; j < S; ++j) specs[j].n_identities = specs[j].k_clusters = 1 + j % 4;
      break;

    case Preset::inter_only: {
      check_ratio(o.noise_ratio, 0.5, "inter_only noise_ratio");
      // Each pair turns one full class into a duplicate of another.
      const int pairs = static_cast<int>(std::lround(o.noise_ratio * S));
      for (int j = 0; j < 2 * pairs; ++j) specs[j].c_conflicts = 1;
      break;
    }

    case Preset::conflicts: {
      check_ratio(o.shared_identity_fraction, 1.0, "shared_identity_fraction");
      // shared / distinct identities = P / (S - P)
      const double f = o.shared_identity_fraction;
      int pairs = static_cast<int>(std::lround(f * S / (1.0 + f)));
      pairs = std::min(pairs, S / 2);
      for (int j = 0; j < 2 * pairs; ++j) specs[j].c_conflicts = 1;
      break;
    }

    case Preset::intra_only: {
      check_ratio(o.noise_ratio, 0.9, "intra_only noise_ratio");
      const int corrupted =
          static_cast<int>(std::lround(o.noise_ratio / (1.0 - o.noise_ratio) * S * t));
      const int extras = static_cast<int>(std::floor(0.5 * corrupted / t));
      const int outliers = corrupted - extras * t;
      for (int q = 0; q < extras; ++q) {
        auto& s = specs[q % S];
        ++s.k_clusters;
        ++s.n_identities;
      }
      const auto per_class = apportion(outliers, std::vector<double>(S, 1.0));
      for (int j = 0; j < S; ++j) specs[j].n_identities += per_class[j];
      break;
    }

    case Preset::mixture: {
      check_ratio(o.noise_ratio, 0.9, "mixture noise_ratio");
      const int corrupted =
          static_cast<int>(std::lround(o.noise_ratio / (1.0 - o.noise_ratio) * S * t));
      // Both sides of a shared non-primary cluster count as corrupted: 2t per pair.
      const int pairs = S >= 2 ? static_cast<int>(std::floor(0.3 * corrupted / (2.0 * t))) : 0;
      const int extras = static_cast<int>(std::floor(0.35 * corrupted / t));
      const int outliers = corrupted - 2 * pairs * t - extras * t;
      for (int q = 0; q < 2 * pairs; ++q) {
        auto& s = specs[q % S];
        ++s.c_conflicts;
        ++s.k_clusters;
        ++s.n_identities;
      }
      for (int q = 0; q < extras; ++q) {
        auto& s = specs[S - 1 - q % S];
        ++s.k_clusters;
        ++s.n_identities;
      }
      const auto per_class = apportion(outliers, std::vector<double>(S, 1.0));
      for (int j = 0; j < S; ++j) specs[j].n_identities += per_class[j];
      break;
    }

    case Preset::outliers: {
      check_ratio(o.outlier_fraction, 0.9, "outlier_fraction");
      // Class roles cycle through: singletons only (N > K = 0), one cluster plus
      // outliers (N > K = 1), two clusters plus outliers (N > K > 1).
      std::vector<double> weights(S);
      int cluster_samples = 0;
      for (int j = 0; j < S; ++j) {
        const int role = j % 5;
        const int k = role == 0 ? 0 : (role <= 2 ? 1 : 2);
        specs[j].k_clusters = specs[j].n_identities = k;
        cluster_samples += k * t;
        weights[j] = role == 0 ? 3.0 : 1.0;
      }
      const int outliers = static_cast<int>(
          std::lround(o.outlier_fraction / (1.0 - o.outlier_fraction) * cluster_samples));
      const auto per_class = apportion(outliers, weights);
      for (int j = 0; j < S; ++j) specs[j].n_identities += per_class[j];
      break;
    }
  }
  return specs;
}

}  // namespace esl
