#pragma once
// Independent reference implementations used as test oracles. Nothing here
// calls into the library code it is meant to check.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <set>
#include <utility>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;

inline double dot(const Vec& a, const Vec& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(const Vec& a) { return std::sqrt(dot(a, a)); }

inline double cosine(const Vec& a, const Vec& b) { return dot(a, b) / (norm(a) * norm(b)); }

/// Index of the largest value, first on ties.
inline int argmax_scan(const Vec& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
};

/// Two-pass population mean and standard deviation.
inline MeanStd two_pass(const Vec& v) {
  MeanStd r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - r.mean) * (x - r.mean);
  r.std = std::sqrt(ss / static_cast<double>(v.size()));
  return r;
}

/// Filter-and-average: unit mean of the unit features whose cosine is below the cut.
inline std::pair<int, Vec> produce_filter(const std::vector<Vec>& features, const Vec& cos, double cut) {
  int t = 0;
  Vec sum(features.empty() ? 0 : features[0].size(), 0.0);
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (!(cos[i] < cut)) continue;
    const double n = norm(features[i]);
    for (std::size_t k = 0; k < sum.size(); ++k) sum[k] += features[i][k] / n;
    ++t;
  }
  if (t == 0) return {0, {}};
  for (double& x : sum) x /= t;
  const double n = norm(sum);
  for (double& x : sum) x /= n;
  return {t, sum};
}

/// Connected components by breadth-first search over an adjacency list;
/// each component sorted, components ordered by first member.
inline std::vector<std::vector<int>> components_bfs(int n, const std::vector<std::pair<int, int>>& edges) {
  std::vector<std::vector<int>> adj(n);
  for (auto [a, b] : edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }
  std::vector<int> seen(n, 0);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::vector<int> comp, queue{s};
    seen[s] = 1;
    for (std::size_t q = 0; q < queue.size(); ++q) {
      const int v = queue[q];
      comp.push_back(v);
      for (int w : adj[v])
        if (!seen[w]) {
          seen[w] = 1;
          queue.push_back(w);
        }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(comp);
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Margin softmax with a fixed positive slot and a fixed mask

struct Margin {
  double s = 64.0, m1 = 1.0, m2 = 0.5, m3 = 0.0;
};

template <class T>
T clamp_cos_t(T c) {
  const T lim = T(1) - T(1e-7);
  return std::min(lim, std::max(-lim, c));
}

inline double clamp_cos(double c) { return clamp_cos_t(c); }

template <class T>
T positive_logit_t(T c, const Margin& m) {
  using std::acos, std::cos;
  return T(m.s) * (T(m.m1) * cos(acos(clamp_cos_t(c)) + T(m.m2)) - T(m.m3));
}

inline double positive_logit(double c, const Margin& m) { return positive_logit_t(c, m); }

/// One sample. `centers` holds every active sub-center as (class, weight);
/// `pos` indexes the positive and `keep[k]` says whether negative k enters
/// the denominator. Any floating type; the long double instantiation backs
/// the finite-difference checks.
template <class T>
T sample_loss_t(const std::vector<T>& f, const std::vector<std::vector<T>>& centers, int pos,
                const std::vector<char>& keep, const Margin& m) {
  using std::exp, std::log, std::sqrt;
  auto dot_t = [](const std::vector<T>& a, const std::vector<T>& b) {
    T s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };
  const T nf = sqrt(dot_t(f, f));
  std::vector<T> z;
  T zp = 0;
  for (std::size_t k = 0; k < centers.size(); ++k) {
    const T c = dot_t(f, centers[k]) / (nf * sqrt(dot_t(centers[k], centers[k])));
    if (static_cast<int>(k) == pos) {
      zp = positive_logit_t(c, m);
      z.push_back(zp);
    } else if (keep[k]) {
      z.push_back(T(m.s) * c);
    }
  }
  const T zmax = *std::max_element(z.begin(), z.end());
  T sum = 0;
  for (T v : z) sum += exp(v - zmax);
  return -(zp - zmax - log(sum));
}

inline double sample_loss(const Vec& f, const std::vector<Vec>& centers, int pos, const std::vector<char>& keep,
                          const Margin& m) {
  return sample_loss_t(f, centers, pos, keep, m);
}

// ---------------------------------------------------------------------------
// Reference single-center ArcFace trainer with a linear encoder and momentum SGD

struct PlainArcFace {
  int d = 0, D = 0, S = 0;
  std::vector<Vec> E;   // d rows of length D
  std::vector<Vec> W;   // S rows of length D
  std::vector<Vec> vE, vW;
  Margin margin;
  double momentum = 0.9, weight_decay = 5e-4;

  Vec feature(const Vec& x) const {
    Vec f(D, 0.0);
    for (int r = 0; r < d; ++r)
      for (int c = 0; c < D; ++c) f[c] += E[r][c] * x[r];
    return f;
  }

  /// Mean loss over the batch before the update, then one SGD step.
  double step(const std::vector<Vec>& xs, const std::vector<int>& ys, double lr) {
    const double B = static_cast<double>(xs.size());
    std::vector<Vec> gE(d, Vec(D, 0.0)), gW(S, Vec(D, 0.0));
    double total = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Vec f = feature(xs[i]);
      const double fn = norm(f);
      Vec u(D);
      for (int c = 0; c < D; ++c) u[c] = f[c] / fn;
      Vec cs(S), z(S), wn(S);
      std::vector<Vec> wu(S, Vec(D));
      for (int j = 0; j < S; ++j) {
        wn[j] = norm(W[j]);
        for (int c = 0; c < D; ++c) wu[j][c] = W[j][c] / wn[j];
        cs[j] = dot(u, wu[j]);
        z[j] = j == ys[i] ? positive_logit(cs[j], margin) : margin.s * cs[j];
      }
      const double zmax = *std::max_element(z.begin(), z.end());
      double sum = 0.0;
      for (double v : z) sum += std::exp(v - zmax);
      const double lse = zmax + std::log(sum);
      total += lse - z[ys[i]];

      Vec gu(D, 0.0);
      for (int j = 0; j < S; ++j) {
        const double p = std::exp(z[j] - lse);
        double dz;
        if (j == ys[i]) {
          const double c = cs[j];
          const double lim = 1.0 - 1e-7;
          const double dzdc = (c >= lim || c <= -lim)
                                  ? 0.0
                                  : margin.s * margin.m1 * std::sin(std::acos(c) + margin.m2) / std::sqrt(1.0 - c * c);
          dz = (p - 1.0) * dzdc;
        } else {
          dz = p * margin.s;
        }
        dz /= B;
        for (int c = 0; c < D; ++c) {
          gu[c] += dz * wu[j][c];
          gW[j][c] += dz * (u[c] - cs[j] * wu[j][c]) / wn[j];
        }
      }
      // through f / |f|
      const double gu_u = dot(gu, u);
      Vec gf(D);
      for (int c = 0; c < D; ++c) gf[c] = (gu[c] - gu_u * u[c]) / fn;
      for (int r = 0; r < d; ++r)
        for (int c = 0; c < D; ++c) gE[r][c] += xs[i][r] * gf[c];
    }
    auto update = [&](std::vector<Vec>& P, std::vector<Vec>& V, const std::vector<Vec>& G) {
      for (std::size_t a = 0; a < P.size(); ++a)
        for (std::size_t b = 0; b < P[a].size(); ++b) {
          V[a][b] = momentum * V[a][b] + (G[a][b] + weight_decay * P[a][b]);
          P[a][b] -= lr * V[a][b];
        }
    };
    update(E, vE, gE);
    update(W, vW, gW);
    return total / B;
  }
};

// ---------------------------------------------------------------------------
// Verification

/// TAR at the smallest threshold (among -inf and the negative scores) whose
/// accepted-negative count stays within floor(far * n_neg). Empty when that
/// budget is zero.
inline std::pair<bool, double> tar_enumerate(const Vec& pos, const Vec& neg, double far) {
  const auto budget = static_cast<long>(std::floor(far * static_cast<double>(neg.size()) + 1e-9));
  if (budget < 1 || pos.empty()) return {false, 0.0};
  Vec candidates = neg;
  candidates.push_back(-std::numeric_limits<double>::infinity());
  double best = std::numeric_limits<double>::infinity();
  for (double t : candidates) {
    long accepted = 0;
    for (double s : neg) accepted += s > t;
    if (accepted <= budget) best = std::min(best, t);
  }
  long hit = 0;
  for (double s : pos) hit += s > best;
  return {true, static_cast<double>(hit) / static_cast<double>(pos.size())};
}

/// Pairwise enumeration of class pairs that are mapped together.
inline std::set<std::pair<int, int>> mapped_pairs(const std::vector<int>& class_map) {
  std::set<std::pair<int, int>> out;
  for (int a = 0; a < static_cast<int>(class_map.size()); ++a)
    for (int b = a + 1; b < static_cast<int>(class_map.size()); ++b)
      if (class_map[a] == class_map[b]) out.emplace(a, b);
  return out;
}

}  // namespace oracle
