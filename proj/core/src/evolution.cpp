#include "esl/evolution.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>

namespace esl {

void EvolutionConfig::validate() const {
  for (double l : {lambda1, lambda2, lambda3, lambda4})
    if (!std::isfinite(l)) throw std::invalid_argument("evolution: lambdas must be finite");
  if (m_init < 1) throw std::invalid_argument("evolution: m_init must be >= 1");
  if (total_epochs < 1) throw std::invalid_argument("evolution: total_epochs must be >= 1");
  if (epsilon_start < 0 || epsilon_start >= total_epochs)
    throw std::invalid_argument("evolution: epsilon_start must lie in [0, total_epochs)");
}

std::string to_string(EventKind kind) {
  switch (kind) {
    case EventKind::produce: return "produce";
    case EventKind::drop: return "drop";
    case EventKind::merge: return "merge";
  }
  return "unknown";
}

// ---------------------------------------------------------------------------

LabelMap::LabelMap(int num_classes, std::span<const int> sample_labels)
    : class_map_(num_classes), labels_(sample_labels.begin(), sample_labels.end()),
      dropped_(sample_labels.size(), 0) {
  std::iota(class_map_.begin(), class_map_.end(), 0);
  for (int l : labels_)
    if (l < 0 || l >= num_classes) throw std::invalid_argument("LabelMap: label out of range");
}

LabelMap LabelMap::from_parts(std::vector<int> class_map, std::vector<int> labels,
                              std::vector<char> dropped) {
  if (labels.size() != dropped.size()) throw std::invalid_argument("LabelMap: shape mismatch");
  const int n = static_cast<int>(class_map.size());
  for (int c : class_map)
    if (c < 0 || c >= n) throw std::invalid_argument("LabelMap: class map entry out of range");
  for (int l : labels)
    if (l < 0 || l >= n) throw std::invalid_argument("LabelMap: label out of range");
  LabelMap m;
  m.class_map_ = std::move(class_map);
  m.labels_ = std::move(labels);
  m.dropped_ = std::move(dropped);
  if (!m.idempotent()) throw std::invalid_argument("LabelMap: class map is not resolved");
  return m;
}

std::size_t LabelMap::dropped_count() const {
  return static_cast<std::size_t>(std::count(dropped_.begin(), dropped_.end(), 1));
}

void LabelMap::relabel(std::size_t sample, int label) {
  if (label < 0 || label >= num_classes()) throw std::invalid_argument("LabelMap::relabel: bad label");
  labels_.at(sample) = label;
}

void LabelMap::merge_classes(int a, int b) {
  const int ra = class_map_.at(a), rb = class_map_.at(b);
  if (ra == rb) return;
  const int root = std::min(ra, rb), other = std::max(ra, rb);
  for (int& c : class_map_)
    if (c == other) c = root;
}

bool LabelMap::idempotent() const {
  for (int c : class_map_)
    if (class_map_[c] != c) return false;
  return true;
}

// ---------------------------------------------------------------------------

int producing_count(std::span<const double> cosines, const SubCenterStat& stat, double lambda2) {
  const double cut = stat.mu - lambda2 * stat.sigma;
  return static_cast<int>(std::count_if(cosines.begin(), cosines.end(), [&](double c) { return c < cut; }));
}

std::optional<Vector> produce(std::span<const Vector> features, std::span<const double> cosines,
                              const SubCenterStat& stat, double lambda2) {
  if (features.size() != cosines.size())
    throw std::invalid_argument("produce: features and cosines differ in length");
  if (features.empty() || stat.n < 1) return std::nullopt;
  const double cut = stat.mu - lambda2 * stat.sigma;
  Vector sum = Vector::Zero(features.front().size());
  int t = 0;
  for (std::size_t i = 0; i < features.size(); ++i) {
    if (cosines[i] < cut) {
      sum += features[i] / features[i].norm();
      ++t;
    }
  }
  if (t == 0) return std::nullopt;
  sum /= static_cast<double>(t);
  const double norm = sum.norm();
  if (!(norm > 1e-12)) return std::nullopt;
  return Vector(sum / norm);
}

bool should_drop(const SubCenterStat& stat, double lambda3) { return stat.n == 0 || stat.mu <= lambda3; }

bool merge_condition(const Vector& wa, const Vector& wb, const SubCenterStat& sa,
                     const SubCenterStat& sb, double lambda4) {
  if (sa.n == 0 || sb.n == 0) return false;
  const double cos = wa.dot(wb) / (wa.norm() * wb.norm());
  return cos >= std::max(sa.mu + lambda4 * sa.sigma, sb.mu + lambda4 * sb.sigma);
}

namespace {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), std::size_t{0});
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }

  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (size_[a] < size_[b]) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
  }

 private:
  std::vector<std::size_t> parent_;
  std::vector<std::size_t> size_;
};

}  // namespace

std::vector<std::vector<SubCenterRef>> connected_components(
    std::span<const SubCenterRef> vertices,
    const std::function<bool(SubCenterRef, SubCenterRef)>& edge) {
  const std::size_t n = vertices.size();
  DisjointSet ds(n);
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (edge(vertices[a], vertices[b])) ds.unite(a, b);

  std::map<std::size_t, std::vector<SubCenterRef>> groups;
  for (std::size_t v = 0; v < n; ++v) groups[ds.find(v)].push_back(vertices[v]);
  std::vector<std::vector<SubCenterRef>> out;
  out.reserve(groups.size());
  for (auto& [root, members] : groups) {
    std::sort(members.begin(), members.end());
    out.push_back(std::move(members));
  }
  std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
  return out;
}

std::vector<std::vector<SubCenterRef>> merge_components(const SubCenterBank& bank,
                                                        const SubCenterStats& stats, double lambda4) {
  std::vector<SubCenterRef> vertices;
  for (const auto& r : bank.active_refs())
    if (!bank.at(r).fresh) vertices.push_back(r);
  auto comps = connected_components(vertices, [&](SubCenterRef a, SubCenterRef b) {
    return merge_condition(bank.at(a).weight, bank.at(b).weight, stats.at(a), stats.at(b), lambda4);
  });
  std::erase_if(comps, [](const auto& c) { return c.size() < 2; });
  return comps;
}

std::vector<EvolutionEvent> merge_groups(SubCenterBank& bank, const SubCenterStats& stats,
                                         double lambda4, LabelMap& labels,
                                         std::vector<EvolutionSample>& samples, int epoch) {
  const auto comps = merge_components(bank, stats, lambda4);
  std::vector<EvolutionEvent> events;
  for (const auto& comp : comps) {
    // sorted, so the first member sits in the smallest class at its lowest slot
    const SubCenterRef keep = comp.front();
    Vector mean = Vector::Zero(bank.dim());
    for (const auto& r : comp) mean += bank.at(r).weight.normalized();
    mean /= static_cast<double>(comp.size());
    if (mean.norm() > 1e-12) bank.at(keep).weight = mean.normalized();
    bank.at(keep).fresh = true;
    for (std::size_t k = 1; k < comp.size(); ++k) bank.deactivate(comp[k].cls, comp[k].slot);

    int relabeled = 0;
    for (auto& s : samples) {
      if (!std::binary_search(comp.begin(), comp.end(), SubCenterRef{s.label, s.slot})) continue;
      if (s.label != keep.cls) ++relabeled;
      s.label = keep.cls;
      s.slot = keep.slot;
      labels.relabel(s.index, keep.cls);
    }
    for (const auto& r : comp) labels.merge_classes(keep.cls, r.cls);

    EvolutionEvent ev;
    ev.epoch = epoch;
    ev.kind = EventKind::merge;
    ev.cls = keep.cls;
    ev.slot = keep.slot;
    ev.count = relabeled;
    ev.members = comp;
    events.push_back(std::move(ev));
  }
  return events;
}

std::vector<EvolutionEvent> evolve_epoch(SubCenterBank& bank, const SubCenterStats& stats,
                                         std::vector<EvolutionSample>& samples,
                                         const EvolutionConfig& cfg, LabelMap& labels, int epoch) {
  std::map<SubCenterRef, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < samples.size(); ++i) members[{samples[i].label, samples[i].slot}].push_back(i);

  std::vector<SubCenterRef> settled;
  for (const auto& r : bank.active_refs())
    if (!bank.at(r).fresh) settled.push_back(r);

  std::vector<EvolutionEvent> events;

  if (cfg.produce) {
    for (const auto& r : settled) {
      const auto stat = stats.at(r);
      if (stat.n < 1) continue;
      const auto it = members.find(r);
      if (it == members.end()) continue;
      std::vector<Vector> feats;
      std::vector<double> cos;
      for (std::size_t i : it->second) {
        feats.push_back(samples[i].feature);
        cos.push_back(samples[i].cos);
      }
      if (auto w = produce(feats, cos, stat, cfg.lambda2)) {
        EvolutionEvent ev;
        ev.epoch = epoch;
        ev.kind = EventKind::produce;
        ev.cls = r.cls;
        ev.slot = r.slot;
        ev.new_slot = bank.add(r.cls, std::move(*w), /*fresh=*/true);
        ev.count = producing_count(cos, stat, cfg.lambda2);
        ev.mu = stat.mu;
        ev.n = stat.n;
        events.push_back(std::move(ev));
      }
    }
  }

  if (cfg.drop) {
    std::vector<char> gone(samples.size(), 0);
    for (const auto& r : settled) {
      const auto stat = stats.at(r);
      if (!should_drop(stat, cfg.lambda3)) continue;
      bank.deactivate(r.cls, r.slot);
      int dropped = 0;
      if (const auto it = members.find(r); it != members.end()) {
        for (std::size_t i : it->second) {
          labels.drop(samples[i].index);
          gone[i] = 1;
          ++dropped;
        }
      }
      EvolutionEvent ev;
      ev.epoch = epoch;
      ev.kind = EventKind::drop;
      ev.cls = r.cls;
      ev.slot = r.slot;
      ev.count = dropped;
      ev.mu = stat.mu;
      ev.n = stat.n;
      events.push_back(std::move(ev));
    }
    std::size_t w = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (!gone[i]) samples[w++] = std::move(samples[i]);
    samples.resize(w);
  }

  if (cfg.merge) {
    auto merged = merge_groups(bank, stats, cfg.lambda4, labels, samples, epoch);
    events.insert(events.end(), std::make_move_iterator(merged.begin()),
                  std::make_move_iterator(merged.end()));
  }

  bank.normalize_active();
  return events;
}

}  // namespace esl
