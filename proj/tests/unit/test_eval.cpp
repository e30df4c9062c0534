#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <limits>
#include <random>
#include <set>

#include "esl/eval.hpp"
#include "oracles.hpp"

using namespace esl;

namespace {

Vector random_unit(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = n(rng);
  return v.normalized();
}

}  // namespace

// ---------------------------------------------------------------------------
// Verification

TEST(Tar, SeparatedIdentitiesAcceptEverything) {
  std::vector<Vector> emb;
  std::vector<int> ids;
  for (int id = 0; id < 8; ++id)
    for (int k = 0; k < 6; ++k) {
      Vector v = Vector::Unit(8, id) + 0.01 * Vector::Unit(8, (id + 1) % 8) * k;
      emb.push_back(v);
      ids.push_back(id);
    }
  const auto r = verification_eval(emb, ids, {});
  for (const auto& p : r.points)
    if (p.tar) EXPECT_DOUBLE_EQ(*p.tar, 1.0) << "far " << p.far;
  EXPECT_TRUE(r.tar(1e-1).has_value());
}

TEST(Tar, NullEmbeddingsTrackFar) {
  std::mt19937_64 rng(1);
  std::vector<Vector> emb;
  std::vector<int> ids;
  for (int i = 0; i < 400; ++i) {
    emb.push_back(random_unit(rng, 16));
    ids.push_back(static_cast<int>(rng() % 20));
  }
  const auto r = verification_eval(emb, ids, {});
  EXPECT_GE(r.positive_pairs + r.negative_pairs, 10000);
  ASSERT_TRUE(r.tar(1e-1).has_value());
  EXPECT_NEAR(*r.tar(1e-1), 0.1, 0.02);
}

TEST(Tar, ToySetByHand) {
  // positives {0.9, 0.5, 0.2}; negatives {0.6, 0.4, 0.3, 0.1, 0.0, -0.2, -0.3, -0.4, -0.5, -0.6}
  const std::vector<double> pos{0.9, 0.5, 0.2};
  const std::vector<double> neg{0.6, 0.4, 0.3, 0.1, 0.0, -0.2, -0.3, -0.4, -0.5, -0.6};
  const auto p1 = tar_at_far(pos, neg, 0.1);  // one negative may pass: threshold 0.4
  ASSERT_TRUE(p1.tar.has_value());
  EXPECT_DOUBLE_EQ(*p1.threshold, 0.4);
  EXPECT_DOUBLE_EQ(*p1.tar, 2.0 / 3.0);
  const auto p3 = tar_at_far(pos, neg, 0.3);  // threshold 0.1
  EXPECT_DOUBLE_EQ(*p3.tar, 1.0);
  EXPECT_FALSE(tar_at_far(pos, neg, 0.05).tar.has_value());
  const auto all = tar_at_far(pos, neg, 1.0);
  EXPECT_EQ(*all.threshold, -std::numeric_limits<double>::infinity());
}

TEST(Tar, MatchesEnumerationOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int t = 0; t < 300; ++t) {
    std::vector<double> pos(1 + rng() % 20), neg(1 + rng() % 60);
    // coarse grid so ties occur
    for (double& v : pos) v = std::round(u(rng) * 10) / 10;
    for (double& v : neg) v = std::round(u(rng) * 10) / 10;
    for (double far : {0.01, 0.05, 0.1, 0.25, 0.5, 1.0}) {
      const auto got = tar_at_far(pos, neg, far);
      const auto [reachable, tar] = oracle::tar_enumerate(pos, neg, far);
      ASSERT_EQ(got.tar.has_value(), reachable);
      if (reachable) EXPECT_DOUBLE_EQ(*got.tar, tar);
    }
  }
}

TEST(Tar, MonotoneInFar) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n(0.0, 0.3);
    std::vector<double> pos(50), neg(2000);
    for (double& v : pos) v = 0.3 + n(rng);
    for (double& v : neg) v = n(rng);
    double prev = -1.0;
    for (double far : {1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 0.3, 1.0}) {
      const auto p = tar_at_far(pos, neg, far);
      ASSERT_TRUE(p.tar.has_value());
      EXPECT_GE(*p.tar, prev) << "seed " << seed << " far " << far;
      prev = *p.tar;
    }
  }
}

TEST(Tar, SampledPairsAreSeeded) {
  std::mt19937_64 rng(3);
  std::vector<Vector> emb;
  std::vector<int> ids;
  for (int i = 0; i < 300; ++i) {
    emb.push_back(random_unit(rng, 8));
    ids.push_back(i % 10);
  }
  VerificationOptions o;
  o.max_pairs = 5000;
  o.seed = 17;
  const auto a = verification_eval(emb, ids, o);
  const auto b = verification_eval(emb, ids, o);
  EXPECT_EQ(a.positive_pairs + a.negative_pairs, 5000);
  EXPECT_EQ(a.positive_pairs, b.positive_pairs);
  for (std::size_t k = 0; k < a.points.size(); ++k) EXPECT_EQ(a.points[k].tar, b.points[k].tar);
}

TEST(Tar, NeedsTwoIdentities) {
  const std::vector<Vector> emb{Vector::Unit(2, 0), Vector::Unit(2, 1)};
  const std::vector<int> ids{4, 4};
  EXPECT_THROW(verification_eval(emb, ids, {}), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Cleaning

TEST(Confusion, EmptyConventions) {
  const Confusion c{0, 0, 0, 10};
  EXPECT_DOUBLE_EQ(c.precision(), 1.0);
  EXPECT_DOUBLE_EQ(c.recall(), 1.0);
  const Confusion d{3, 1, 2, 0};
  EXPECT_DOUBLE_EQ(d.precision(), 0.75);
  EXPECT_DOUBLE_EQ(d.recall(), 0.6);
}

TEST(Cleaning, CleanDataNothingDone) {
  PresetOptions po;
  po.num_classes = 5;
  po.samples_per_cluster = 6;
  const auto ds = generate_dataset(make_preset(Preset::clean, po), 4, 10.0, 1);
  const LabelMap m(ds.num_classes(), ds.labels());
  const auto r = cleaning_eval(m, ds);
  EXPECT_DOUBLE_EQ(r.drop.precision(), 1.0);
  EXPECT_DOUBLE_EQ(r.drop.recall(), 1.0);
  EXPECT_DOUBLE_EQ(r.merge.precision(), 1.0);
  EXPECT_DOUBLE_EQ(r.merge.recall(), 1.0);
}

TEST(Cleaning, AllConflictPairsMerged) {
  PresetOptions po;
  po.num_classes = 10;
  po.samples_per_cluster = 6;
  const auto ds = generate_dataset(make_preset(Preset::conflicts, po), 4, 10.0, 2);
  LabelMap m(ds.num_classes(), ds.labels());
  const auto pairs = conflict_pairs(ds.samples, ds.num_classes());
  ASSERT_FALSE(pairs.empty());
  for (auto [a, b] : pairs) m.merge_classes(a, b);
  const auto r = cleaning_eval(m, ds);
  EXPECT_DOUBLE_EQ(r.merge.precision(), 1.0);
  EXPECT_DOUBLE_EQ(r.merge.recall(), 1.0);
}

TEST(Cleaning, RandomMapsMatchPairEnumeration) {
  PresetOptions po;
  po.num_classes = 12;
  po.samples_per_cluster = 6;
  po.noise_ratio = 0.4;
  const auto ds = generate_dataset(make_preset(Preset::mixture, po), 4, 10.0, 3);
  const auto truth_v = conflict_pairs(ds.samples, ds.num_classes());
  const std::set<std::pair<int, int>> truth(truth_v.begin(), truth_v.end());
  const auto outliers = outlier_flags(ds.samples);
  std::mt19937_64 rng(4);
  for (int t = 0; t < 100; ++t) {
    LabelMap m(ds.num_classes(), ds.labels());
    const int merges = static_cast<int>(rng() % 6);
    for (int k = 0; k < merges; ++k) m.merge_classes(static_cast<int>(rng() % 12), static_cast<int>(rng() % 12));
    std::int64_t dtp = 0, dfp = 0, dfn = 0;
    for (std::size_t i = 0; i < ds.samples.size(); ++i) {
      const bool d = rng() % 7 == 0;
      if (d) m.drop(i);
      dtp += d && outliers[i];
      dfp += d && !outliers[i];
      dfn += !d && outliers[i];
    }
    const auto mapped = oracle::mapped_pairs(m.class_map());
    std::int64_t tp = 0, fp = 0, fn = 0;
    for (const auto& p : mapped) (truth.contains(p) ? tp : fp)++;
    for (const auto& p : truth) fn += !mapped.contains(p);
    const auto r = cleaning_eval(m, ds);
    EXPECT_EQ(r.merge.tp, tp);
    EXPECT_EQ(r.merge.fp, fp);
    EXPECT_EQ(r.merge.fn, fn);
    EXPECT_EQ(r.merge.tp + r.merge.fp + r.merge.fn + r.merge.tn, 12 * 11 / 2);
    EXPECT_EQ(r.drop.tp, dtp);
    EXPECT_EQ(r.drop.fp, dfp);
    EXPECT_EQ(r.drop.fn, dfn);
  }
}

// ---------------------------------------------------------------------------
// Clustering

TEST(Clustering, PerfectAndTrivial) {
  const std::vector<int> a{0, 0, 1, 1, 2}, b{5, 5, 7, 7, 9};
  EXPECT_DOUBLE_EQ(purity(a, b), 1.0);
  EXPECT_NEAR(nmi(a, b), 1.0, 1e-12);
  const std::vector<int> one(5, 0);
  EXPECT_NEAR(nmi(one, one), 1.0, 1e-12);
  EXPECT_DOUBLE_EQ(purity(one, b), 0.4);
}

TEST(Clustering, InvariantUnderRelabeling) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 50; ++t) {
    std::vector<int> pred(80), truth(80);
    for (int i = 0; i < 80; ++i) {
      truth[i] = static_cast<int>(rng() % 6);
      pred[i] = rng() % 3 == 0 ? static_cast<int>(rng() % 8) : truth[i];
    }
    std::vector<int> perm_p(8), perm_t(6);
    std::iota(perm_p.begin(), perm_p.end(), 100);
    std::iota(perm_t.begin(), perm_t.end(), 40);
    std::shuffle(perm_p.begin(), perm_p.end(), rng);
    std::shuffle(perm_t.begin(), perm_t.end(), rng);
    std::vector<int> pred2(80), truth2(80);
    for (int i = 0; i < 80; ++i) {
      pred2[i] = perm_p[pred[i]];
      truth2[i] = perm_t[truth[i]];
    }
    EXPECT_NEAR(purity(pred, truth), purity(pred2, truth2), 1e-12);
    EXPECT_NEAR(nmi(pred, truth), nmi(pred2, truth2), 1e-12);
  }
}

TEST(Clustering, IndependentPartitionsScoreLow) {
  std::vector<int> a, b;
  for (int i = 0; i < 400; ++i) {
    a.push_back(i % 4);
    b.push_back((i / 4) % 4);
  }
  EXPECT_NEAR(nmi(a, b), 0.0, 1e-12);
}

// ---------------------------------------------------------------------------
// Scenario matrix

TEST(Scenario, AbsentRowsAreReportedNotChecked) {
  const auto rows = scenario_matrix({});
  EXPECT_EQ(rows.size(), 7u);
  for (const auto& r : rows) {
    EXPECT_FALSE(r.present);
    EXPECT_TRUE(r.checks.empty());
  }
}

TEST(Scenario, CleanRowPasses) {
  MetricReport m;
  m.k_recovery_rate = 1.0;
  const auto rows = scenario_matrix({{Preset::clean, m}});
  ASSERT_EQ(rows[0].preset, Preset::clean);
  EXPECT_TRUE(rows[0].pass());
}

TEST(Scenario, IntraOnlyChecksDropRecall) {
  MetricReport m;
  m.cleaning.drop = {5, 0, 5, 0};
  for (const auto& r : scenario_matrix({{Preset::intra_only, m}})) {
    if (r.preset != Preset::intra_only) continue;
    ASSERT_EQ(r.checks.size(), 1u);
    EXPECT_EQ(r.checks[0].name, "drop_recall");
    EXPECT_FALSE(r.pass());
  }
}

TEST(Scenario, InterOnlyChecksMergeRecall) {
  MetricReport m;
  m.cleaning.merge = {9, 0, 1, 30};
  for (const auto& r : scenario_matrix({{Preset::inter_only, m}})) {
    if (r.preset != Preset::inter_only) continue;
    EXPECT_EQ(r.checks[0].name, "merge_recall");
    EXPECT_TRUE(r.pass());
  }
}
