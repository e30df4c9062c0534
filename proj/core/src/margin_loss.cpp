#include "esl/margin_loss.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <string>

namespace esl {

void MarginConfig::validate() const {
  if (!(s > 0.0)) throw std::invalid_argument("margin: s must be > 0");
  if (!(m1 >= 1.0)) throw std::invalid_argument("margin: m1 must be >= 1");
  if (!(m2 >= 0.0)) throw std::invalid_argument("margin: m2 must be >= 0");
  if (!(m3 >= 0.0)) throw std::invalid_argument("margin: m3 must be >= 0");
}

double positive_logit(double cos_theta, const MarginConfig& cfg) {
  const double c = std::clamp(cos_theta, -kCosClamp, kCosClamp);
  return cfg.s * (cfg.m1 * std::cos(std::acos(c) + cfg.m2) - cfg.m3);
}

double negative_logit(double cos_theta, const MarginConfig& cfg) { return cfg.s * cos_theta; }

double positive_logit_derivative(double cos_theta, const MarginConfig& cfg) {
  if (cos_theta <= -kCosClamp || cos_theta >= kCosClamp) return 0.0;
  const double theta = std::acos(cos_theta);
  // d/dc cos(acos(c) + m2) = sin(theta + m2) / sqrt(1 - c^2)
  return cfg.s * cfg.m1 * std::sin(theta + cfg.m2) / std::sqrt(1.0 - cos_theta * cos_theta);
}

// ---------------------------------------------------------------------------

SubCenterBank::SubCenterBank(int num_classes, int dim) : dim_(dim), classes_(num_classes) {
  if (num_classes < 0 || dim < 1) throw std::invalid_argument("SubCenterBank: bad shape");
}

SubCenterBank SubCenterBank::random(int num_classes, int per_class, int dim, std::uint64_t seed) {
  SubCenterBank bank(num_classes, dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int j = 0; j < num_classes; ++j) {
    for (int m = 0; m < per_class; ++m) {
      Vector w(dim);
      do {
        for (int i = 0; i < dim; ++i) w[i] = normal(rng);
      } while (w.norm() < 1e-12);
      bank.add(j, w / w.norm());
    }
  }
  return bank;
}

int SubCenterBank::num_active(int cls) const {
  const auto& c = classes_.at(cls);
  return static_cast<int>(std::count_if(c.begin(), c.end(), [](const auto& s) { return s.active; }));
}

int SubCenterBank::total_active() const {
  int n = 0;
  for (int j = 0; j < num_classes(); ++j) n += num_active(j);
  return n;
}

int SubCenterBank::add(int cls, Vector weight, bool fresh) {
  if (weight.size() != dim_) throw std::invalid_argument("SubCenterBank::add: dimension mismatch");
  auto& c = classes_.at(cls);
  c.push_back({std::move(weight), true, fresh});
  return static_cast<int>(c.size()) - 1;
}

void SubCenterBank::settle_all() {
  for (auto& c : classes_)
    for (auto& s : c) s.fresh = false;
}

void SubCenterBank::normalize_active() {
  for (auto& c : classes_)
    for (auto& s : c)
      if (s.active) s.weight.normalize();
}

std::vector<SubCenterRef> SubCenterBank::active_refs() const {
  std::vector<SubCenterRef> out;
  for (int j = 0; j < num_classes(); ++j)
    for (int m = 0; m < num_slots(j); ++m)
      if (classes_[j][m].active) out.push_back({j, m});
  return out;
}

std::vector<SubCenterRef> SubCenterBank::active_refs(int cls) const {
  std::vector<SubCenterRef> out;
  for (int m = 0; m < num_slots(cls); ++m)
    if (classes_[cls][m].active) out.push_back({cls, m});
  return out;
}

// ---------------------------------------------------------------------------

std::vector<CosineEntry> cosines(const Vector& x, const SubCenterBank& bank) {
  const double xn = x.norm();
  if (!(xn > 0.0) || !std::isfinite(xn)) throw std::invalid_argument("cosines: feature must be finite and nonzero");
  std::vector<CosineEntry> out;
  for (const auto& r : bank.active_refs()) {
    const auto& w = bank.at(r).weight;
    out.push_back({r, x.dot(w) / (xn * w.norm())});
  }
  return out;
}

std::optional<int> assign_subcenter(const Vector& x, int label, const SubCenterBank& bank) {
  std::optional<int> best;
  double best_cos = -std::numeric_limits<double>::infinity();
  const double xn = x.norm();
  for (int m = 0; m < bank.num_slots(label); ++m) {
    const auto& sc = bank.at(label, m);
    if (!sc.active) continue;
    const double c = x.dot(sc.weight) / (xn * sc.weight.norm());
    if (!best || c > best_cos) {
      best = m;
      best_cos = c;
    }
  }
  return best;
}

// ---------------------------------------------------------------------------

EslResult esl_loss_and_grads(std::span<const Vector> features, std::span<const int> labels,
                             const SubCenterBank& bank, const ThresholdTable* thresholds,
                             const MarginConfig& cfg) {
  if (features.size() != labels.size())
    throw std::invalid_argument("esl_loss_and_grads: features and labels differ in length");
  if (features.empty()) throw std::invalid_argument("esl_loss_and_grads: empty batch");

  const auto refs = bank.active_refs();
  const std::size_t K = refs.size();
  std::vector<Vector> w_unit(K);
  std::vector<double> w_norm(K);
  std::vector<double> threshold(K, std::numeric_limits<double>::infinity());
  // first flat index of each class in `refs`
  std::vector<int> class_begin(bank.num_classes() + 1, 0);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& w = bank.at(refs[k]).weight;
    w_norm[k] = w.norm();
    w_unit[k] = w / w_norm[k];
    if (thresholds) {
      const auto& row = (*thresholds)[refs[k].cls];
      if (refs[k].slot < static_cast<int>(row.size())) threshold[k] = row[refs[k].slot];
    }
    ++class_begin[refs[k].cls + 1];
  }
  for (int j = 0; j < bank.num_classes(); ++j) class_begin[j + 1] += class_begin[j];

  const std::size_t B = features.size();
  const double inv_b = 1.0 / static_cast<double>(B);

  EslResult out;
  out.sample_loss.resize(B);
  out.grad_features.resize(B);
  out.assignments.resize(B);
  out.positive_cos.resize(B);
  out.masked_negatives.resize(B);
  out.grad_weights.resize(bank.num_classes());
  for (int j = 0; j < bank.num_classes(); ++j)
    out.grad_weights[j].assign(bank.num_slots(j), Vector::Zero(bank.dim()));

  std::vector<double> cos(K), logit(K), g(K);
  std::vector<char> included(K);

  for (std::size_t i = 0; i < B; ++i) {
    const Vector& f = features[i];
    const int y = labels[i];
    if (y < 0 || y >= bank.num_classes())
      throw std::invalid_argument("esl_loss_and_grads: label out of range for sample " + std::to_string(i));
    const double fn = f.norm();
    if (!(fn > 0.0) || !std::isfinite(fn))
      throw std::invalid_argument("esl_loss_and_grads: zero or non-finite feature for sample " + std::to_string(i));
    const Vector u = f / fn;

    for (std::size_t k = 0; k < K; ++k) cos[k] = u.dot(w_unit[k]);

    const int begin = class_begin[y], end = class_begin[y + 1];
    if (begin == end)
      throw std::invalid_argument("esl_loss_and_grads: class " + std::to_string(y) +
                                  " has no active sub-center (sample " + std::to_string(i) + ")");
    int pos = begin;
    for (int k = begin + 1; k < end; ++k)
      if (cos[k] > cos[pos]) pos = k;

    int masked = 0;
    double zmax = -std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < K; ++k) {
      if (static_cast<int>(k) == pos) {
        logit[k] = positive_logit(cos[k], cfg);
        included[k] = 1;
      } else if (cos[k] > threshold[k]) {
        included[k] = 0;
        ++masked;
        continue;
      } else {
        logit[k] = negative_logit(cos[k], cfg);
        included[k] = 1;
      }
      zmax = std::max(zmax, logit[k]);
    }
    double z = 0.0;
    for (std::size_t k = 0; k < K; ++k)
      if (included[k]) z += std::exp(logit[k] - zmax);
    const double lse = zmax + std::log(z);
    const double loss_i = lse - logit[pos];
    if (!std::isfinite(loss_i))
      throw NumericError("esl_loss_and_grads: non-finite loss for sample " + std::to_string(i) +
                         " (label " + std::to_string(y) + ")");

    for (std::size_t k = 0; k < K; ++k) {
      if (!included[k]) {
        g[k] = 0.0;
        continue;
      }
      const double p = std::exp(logit[k] - lse);
      if (static_cast<int>(k) == pos)
        g[k] = (p - 1.0) * positive_logit_derivative(cos[k], cfg);
      else
        g[k] = p * cfg.s;
      g[k] *= inv_b;
    }

    Vector gf = Vector::Zero(f.size());
    for (std::size_t k = 0; k < K; ++k) {
      if (g[k] == 0.0) continue;
      gf.noalias() += g[k] * (w_unit[k] - cos[k] * u);
      out.grad_weights[refs[k].cls][refs[k].slot].noalias() += (g[k] / w_norm[k]) * (u - cos[k] * w_unit[k]);
    }
    out.grad_features[i] = gf / fn;
    out.sample_loss[i] = loss_i;
    out.loss += loss_i * inv_b;
    out.assignments[i] = refs[pos].slot;
    out.positive_cos[i] = cos[pos];
    out.masked_negatives[i] = masked;
  }
  return out;
}

}  // namespace esl
