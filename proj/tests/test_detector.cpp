#include <gtest/gtest.h>

#include <cmath>

#include "fpath/detector.hpp"
#include "fpath/error.hpp"
#include "oracles.hpp"

using namespace fpath;

namespace {

CentroidBank axis_bank() {
  // 3 classes, 2 layers, centroids along coordinate axes.
  return CentroidBank({3, 3},
                      {{{1, 0, 0}, {1, 0, 0}}, {{0, 1, 0}, {0, 1, 0}}, {{0, 0, 1}, {0, 0, 1}}},
                      {1, 1, 1});
}

// Draws a score set from one of several shapes, including nearly degenerate
// ones where almost every score is the same.
std::vector<double> random_scores(Rng& rng) {
  const int n = 10 + static_cast<int>(rng.below(2000));
  std::vector<double> s(n);
  switch (rng.below(4)) {
    case 0:
      for (double& v : s) v = rng.uniform(-1, 1);
      break;
    case 1:
      for (double& v : s) v = rng.below(2) ? 0.8 + 0.05 * rng.normal() : 0.3 + 0.1 * rng.normal();
      break;
    case 2:
      for (double& v : s) v = 0.5 + 0.01 * rng.normal();
      break;
    default:
      for (double& v : s) v = 0.7;
      s[rng.below(n)] = 0.7 + rng.uniform(1e-9, 1e-3);
      break;
  }
  return s;
}

}  // namespace

TEST(SMax, CentroidPathAndTies) {
  const CentroidBank bank = axis_bank();
  const FeaturePath p{{{0, 0, 2}, {0, 0, 5}}, std::nullopt};
  const MaxSimilarity m = s_max(p, bank, {});
  EXPECT_EQ(m.value, 1.0);
  EXPECT_EQ(m.cls, 2);
  const FeaturePath tie{{{1, 1, 0}, {1, 1, 0}}, std::nullopt};
  EXPECT_EQ(s_max(tie, bank, {}).cls, 0);
}

TEST(SMax, SingleClass) {
  const CentroidBank bank({2}, {{{0.6, 0.8}}}, {3});
  const FeaturePath p{{{1, 0}}, std::nullopt};
  EXPECT_NEAR(s_max(p, bank, {}).value, 0.6, 1e-15);
}

TEST(SMax, MatchesBruteForceOverMask) {
  Rng rng(12);
  std::vector<FeaturePath> train;
  for (int i = 0; i < 40; ++i) {
    FeaturePath p{{}, i % 4};
    for (int d : {3, 5, 4}) p.layers.push_back(oracle::random_input(rng, d, -1, 1));
    train.push_back(p);
  }
  const CentroidBank bank = compute_centroids(train, 4);
  DetectorConfig cfg;
  cfg.layer_mask = {true, false, true};
  for (int trial = 0; trial < 50; ++trial) {
    FeaturePath p;
    for (int d : {3, 5, 4}) p.layers.push_back(oracle::random_input(rng, d, -1, 1));
    double best = -INFINITY;
    for (int c = 0; c < 4; ++c) {
      double sc = 0;
      for (int l : {0, 2}) {
        const std::vector<double> mu(bank.centroid(c, l).begin(), bank.centroid(c, l).end());
        sc += 0.5 * oracle::cosine(p.layers[l], mu);
      }
      best = std::max(best, sc);
    }
    EXPECT_NEAR(s_max(p, bank, cfg).value, best, 1e-12);
  }
}

TEST(SMax, PermutingClassesKeepsValue) {
  const CentroidBank a = axis_bank();
  const CentroidBank b({3, 3},
                       {{{0, 0, 1}, {0, 0, 1}}, {{1, 0, 0}, {1, 0, 0}}, {{0, 1, 0}, {0, 1, 0}}},
                       {1, 1, 1});
  const FeaturePath p{{{0.3, 0.9, 0.1}, {0.5, 0.2, 0.4}}, std::nullopt};
  EXPECT_DOUBLE_EQ(s_max(p, a, {}).value, s_max(p, b, {}).value);
}

TEST(Threshold, BimodalSplitsExactly) {
  std::vector<double> s(50, 0.2);
  s.insert(s.end(), 50, 0.8);
  const double t = calibrate_threshold(s, 256);
  EXPECT_GT(t, 0.2);
  EXPECT_LE(t, 0.8);
}

TEST(Threshold, MatchesExhaustiveEdgeScan) {
  Rng rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    const auto s = random_scores(rng);
    const int bins = rng.below(3) == 0 ? 2 + static_cast<int>(rng.below(300)) : 256;
    const double t = calibrate_threshold(s, bins);
    const auto scan = oracle::threshold_scan(s, bins);
    EXPECT_EQ(t, scan.edges[scan.best]) << "trial " << trial << " bins " << bins;
    EXPECT_GE(t, *std::min_element(s.begin(), s.end()));
    EXPECT_LE(t, *std::max_element(s.begin(), s.end()));
  }
}

TEST(Threshold, RejectsDegenerateInput) {
  EXPECT_THROW(calibrate_threshold(std::vector<double>(10, 0.4), 256), DegenerateError);
  EXPECT_THROW(calibrate_threshold(std::vector<double>{}, 256), InvalidArgument);
  EXPECT_THROW(calibrate_threshold(std::vector<double>{0.1, 0.2}, 1), InvalidArgument);
  EXPECT_THROW(calibrate_threshold(std::vector<double>{0.1, NAN}, 8), NumericError);
}

TEST(Detect, BoundaryIsClean) {
  const CentroidBank bank = axis_bank();
  const FeaturePath p{{{0.6, 0.8, 0}, {0.6, 0.8, 0}}, std::nullopt};
  const double s = s_max(p, bank, {}).value;
  EXPECT_EQ(detect(p, bank, s, {}).verdict, Verdict::Clean);
  EXPECT_EQ(detect(p, bank, std::nextafter(s, 2.0), {}).verdict, Verdict::Adversarial);
  EXPECT_EQ(detect(p, bank, 0.6855, {}).verdict, Verdict::Clean);  // s = 0.8
  const FeaturePath q{{{1, 1, 1}, {1, 1, 1}}, std::nullopt};       // s = 1/sqrt(3)
  EXPECT_EQ(detect(q, bank, 0.6855, {}).verdict, Verdict::Adversarial);
  EXPECT_THROW(detect(p, bank, NAN, {}), InvalidArgument);
}

TEST(Detect, MonotoneInThreshold) {
  const CentroidBank bank = axis_bank();
  const FeaturePath p{{{0.3, 0.2, 0.9}, {0.1, 0.7, 0.2}}, std::nullopt};
  bool flagged = false;
  for (double t = 0; t <= 1.0; t += 0.01) {
    const bool now = detect(p, bank, t, {}).verdict == Verdict::Adversarial;
    EXPECT_TRUE(now || !flagged);
    flagged = now;
  }
  EXPECT_TRUE(flagged);
}

TEST(AutoMask, CutoffAndFallback) {
  EXPECT_EQ(auto_layer_mask(std::vector<double>{0.5, 0.4, 0.3}), (std::vector<bool>{1, 1, 1}));
  EXPECT_EQ(auto_layer_mask(std::vector<double>{0.9, 0.8, 0.01, 0.005}, 0.1),
            (std::vector<bool>{1, 1, 0, 0}));
  EXPECT_EQ(auto_layer_mask(std::vector<double>{0.01, 0.05, 0.02}, 0.1),
            (std::vector<bool>{0, 1, 0}));
  EXPECT_EQ(auto_layer_mask(std::vector<double>{0.1}, 0.1), std::vector<bool>{1});
}

TEST(DetectorConfig, MaskMustKeepALayer) {
  DetectorConfig cfg;
  EXPECT_EQ(cfg.resolved_mask(3), (std::vector<bool>{1, 1, 1}));
  cfg.layer_mask = {false, false, false};
  EXPECT_THROW(cfg.resolved_mask(3), InvalidArgument);
  cfg.layer_mask = {true};
  EXPECT_THROW(cfg.resolved_mask(3), Error);
}
