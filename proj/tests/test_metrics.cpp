#include <algorithm>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "ignite/evaluation.hpp"

namespace ignite {
namespace {

Vector vec(std::initializer_list<double> v) {
  Vector out(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

// Fraction of positive/negative pairs ranked correctly, ties counting half.
double auroc_pairs(const Vector& s, const Vector& y) {
  double good = 0.0, pairs = 0.0;
  for (Index i = 0; i < s.size(); ++i) {
    if (y(i) != 1.0) continue;
    for (Index j = 0; j < s.size(); ++j) {
      if (y(j) != 0.0) continue;
      pairs += 1.0;
      good += s(i) > s(j) ? 1.0 : s(i) == s(j) ? 0.5 : 0.0;
    }
  }
  return good / pairs;
}

// Precision at every distinct threshold, weighted by the recall gained there.
double auprc_thresholds(const Vector& s, const Vector& y) {
  std::set<double, std::greater<>> thresholds(s.data(), s.data() + s.size());
  const double positives = y.sum();
  double ap = 0.0, prev_recall = 0.0;
  for (double t : thresholds) {
    double tp = 0.0, called = 0.0;
    for (Index i = 0; i < s.size(); ++i) {
      if (s(i) >= t) {
        called += 1.0;
        tp += y(i);
      }
    }
    const double recall = tp / positives;
    ap += (recall - prev_recall) * (tp / called);
    prev_recall = recall;
  }
  return ap;
}

TEST(Auroc, HandExamples) {
  EXPECT_DOUBLE_EQ(auroc(vec({0.9, 0.8, 0.7, 0.6}), vec({1, 0, 1, 0})), 0.75);
  EXPECT_DOUBLE_EQ(auroc(vec({0.1, 0.9}), vec({0, 1})), 1.0);
  EXPECT_DOUBLE_EQ(auroc(vec({0.9, 0.1}), vec({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(auroc(vec({0.5, 0.5, 0.5, 0.5}), vec({0, 1, 0, 1})), 0.5);
}

TEST(Auroc, SingleClassIsAnError) {
  EXPECT_THROW(auroc(vec({0.1, 0.2}), vec({1, 1})), MetricError);
  EXPECT_THROW(auprc(vec({0.1, 0.2}), vec({0, 0})), MetricError);
  EXPECT_THROW(auroc(vec({0.1}), vec({1, 0})), Error);
}

TEST(Auroc, MatchesPairCountingWithTies) {
  std::mt19937_64 rng(1);
  std::uniform_int_distribution<int> level(0, 5);
  std::bernoulli_distribution coin(0.3);
  for (int rep = 0; rep < 200; ++rep) {
    const Index n = 2 + rep % 40;
    Vector s(n), y(n);
    for (Index i = 0; i < n; ++i) {
      s(i) = level(rng) / 5.0;
      y(i) = coin(rng) ? 1.0 : 0.0;
    }
    y(0) = 1.0;
    y(1) = 0.0;
    EXPECT_NEAR(auroc(s, y), auroc_pairs(s, y), 1e-12);
    EXPECT_NEAR(auprc(s, y), auprc_thresholds(s, y), 1e-12);
  }
}

TEST(Auroc, InvariantUnderMonotoneTransform) {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n;
  Vector s(100), y(100);
  for (Index i = 0; i < 100; ++i) {
    y(i) = i % 3 == 0 ? 1.0 : 0.0;
    s(i) = n(rng) + y(i);
  }
  const Vector t = s.array().exp() * 3.0 + 1.0;
  EXPECT_DOUBLE_EQ(auroc(s, y), auroc(t, y));
  EXPECT_DOUBLE_EQ(auprc(s, y), auprc(t, y));
}

TEST(Auroc, RandomScoresNearHalf) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u;
  const Index n = 10000;
  Vector s(n), y(n);
  for (Index i = 0; i < n; ++i) {
    s(i) = u(rng);
    y(i) = u(rng) < 0.15 ? 1.0 : 0.0;
  }
  EXPECT_NEAR(auroc(s, y), 0.5, 0.05);
  EXPECT_NEAR(auprc(s, y), y.mean(), 0.05);
}

TEST(Auprc, HandExamples) {
  EXPECT_NEAR(auprc(vec({0.9, 0.8, 0.7, 0.6}), vec({1, 0, 1, 0})), 0.5 + 0.5 * 2.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(auprc(vec({0.9, 0.1}), vec({1, 0})), 1.0);
  // One threshold holds everything: precision is the prevalence.
  EXPECT_DOUBLE_EQ(auprc(vec({0.5, 0.5, 0.5, 0.5}), vec({1, 0, 0, 0})), 0.25);
}

TEST(Metrics, RejectNonFiniteAndMismatchedInputs) {
  EXPECT_THROW(auroc(vec({0.1, std::nan("")}), vec({1, 0})), Error);
  EXPECT_THROW(auroc(vec({0.1, 0.2, 0.3}), vec({1, 0})), Error);
  EXPECT_THROW(auroc(vec({0.1, 0.2}), vec({1, 2})), Error);
}

}  // namespace
}  // namespace ignite
