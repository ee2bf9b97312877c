#include <gtest/gtest.h>

#include "fpath/error.hpp"
#include "fpath/recognizer.hpp"
#include "oracles.hpp"

using namespace fpath;

namespace {

VotingConfig cfg_of(std::vector<int> layers, std::vector<double> w = {}) {
  VotingConfig c;
  c.selected_layers = std::move(layers);
  c.weights = std::move(w);
  return c;
}

std::vector<FeaturePath> clustered(Rng& rng, int n, int K, int L, int dim, double noise) {
  std::vector<FeaturePath> out;
  for (int i = 0; i < n; ++i) {
    FeaturePath p{{}, i % K};
    for (int l = 0; l < L; ++l) {
      std::vector<double> v(dim, 0.0);
      v[(*p.label + l) % dim] = 1.0;
      for (double& x : v) x += noise * rng.normal();
      p.layers.push_back(v);
    }
    out.push_back(p);
  }
  return out;
}

}  // namespace

TEST(LayerAccuracy, CentroidPathsAreAllCorrect) {
  const CentroidBank bank({2, 2}, {{{1, 0}, {0, 1}}, {{0, 1}, {1, 0}}}, {1, 1});
  const std::vector<FeaturePath> clean{{{{1, 0}, {0, 1}}, 0}, {{{0, 1}, {1, 0}}, 1}};
  const auto r = layer_accuracy(clean, clean, bank);
  EXPECT_EQ(r.clean_accuracy, (std::vector<double>{1, 1}));
  EXPECT_EQ(r.adversarial_accuracy, (std::vector<double>{1, 1}));
  EXPECT_EQ(r.clean_total, 2);
}

TEST(LayerAccuracy, ShuffledLabelsAreChance) {
  Rng rng(1);
  auto paths = clustered(rng, 2000, 10, 2, 10, 0.1);
  const CentroidBank bank = compute_centroids(paths, 10);
  std::vector<int> labels;
  for (const auto& p : paths) labels.push_back(*p.label);
  rng.shuffle(labels);
  for (size_t i = 0; i < paths.size(); ++i) paths[i].label = labels[i];
  const auto r = layer_accuracy(paths, {}, bank);
  for (double a : r.clean_accuracy) EXPECT_NEAR(a, 0.1, 0.05);
}

TEST(LayerAccuracy, MatchesBruteForceLoop) {
  Rng rng(2);
  const auto train = clustered(rng, 60, 4, 3, 6, 0.6);
  const CentroidBank bank = compute_centroids(train, 4);
  const auto clean = clustered(rng, 37, 4, 3, 6, 0.9);
  const auto adv = clustered(rng, 23, 4, 3, 6, 1.5);
  const auto r = layer_accuracy(clean, adv, bank);
  for (int l = 0; l < 3; ++l) {
    auto count = [&](const std::vector<FeaturePath>& pool) {
      int ok = 0;
      for (const auto& p : pool) {
        int best = 0;
        double bs = -2;
        for (int c = 0; c < 4; ++c) {
          const std::vector<double> mu(bank.centroid(c, l).begin(), bank.centroid(c, l).end());
          const double s = oracle::cosine(p.layers[l], mu);
          if (s > bs) bs = s, best = c;
        }
        ok += best == *p.label;
      }
      return ok;
    };
    EXPECT_EQ(r.clean_correct[l], count(clean));
    EXPECT_EQ(r.adversarial_correct[l], count(adv));
    EXPECT_EQ(r.clean_accuracy[l], static_cast<double>(count(clean)) / 37);
  }
  EXPECT_THROW(layer_accuracy({}, {}, bank), InvalidArgument);
}

TEST(SelectLayers, WorkedExample) {
  LayerAccuracyReport r;
  r.adversarial_accuracy = {0.2, 0.38, 0.40, 0.41, 0.05};
  EXPECT_EQ(select_layers(r, 3).selected_layers, (std::vector<int>{1, 2, 3}));
  EXPECT_EQ(select_layers(r, 5).selected_layers, (std::vector<int>{0, 1, 2, 3, 4}));
  EXPECT_THROW(select_layers(r, 0), InvalidArgument);
  EXPECT_THROW(select_layers(r, 6), InvalidArgument);
}

TEST(SelectLayers, TiesPreferDeeper) {
  LayerAccuracyReport r;
  r.adversarial_accuracy = {0.3, 0.5, 0.3, 0.1};
  EXPECT_EQ(select_layers(r, 2).selected_layers, (std::vector<int>{1, 2}));
}

TEST(Vote, StatedExamples) {
  const std::vector<int> preds{0, 1, 2, 2, 9};
  EXPECT_EQ(vote_predictions(preds, cfg_of({1, 2, 3})), 2);
  const std::vector<int> three_way{5, 7, 1};
  EXPECT_EQ(vote_predictions(three_way, cfg_of({0, 1, 2})), 1);
  const std::vector<int> unanimous{3, 3, 3};
  EXPECT_EQ(vote_predictions(unanimous, cfg_of({0, 1, 2})), 3);
}

TEST(Vote, EnumerateAllPatternsAgainstOracle) {
  // Three selected layers, K = 4: every prediction pattern, under equal,
  // skewed and scaled weights.
  const std::vector<std::vector<double>> weightings{
      {1, 1, 1}, {0.5, 0.3, 0.2}, {5, 3, 2}, {1, 2, 1}, {0.25, 0.25, 0.5}};
  for (const auto& w : weightings) {
    for (int a = 0; a < 4; ++a)
      for (int b = 0; b < 4; ++b)
        for (int c = 0; c < 4; ++c) {
          const std::vector<int> preds{a, b, c};
          EXPECT_EQ(vote_predictions(preds, cfg_of({0, 1, 2}, w)), oracle::vote(preds, w, 4))
              << a << b << c;
        }
  }
}

TEST(Vote, Properties) {
  Rng rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const int L = 1 + static_cast<int>(rng.below(6));
    std::vector<int> preds(L), layers(L);
    std::vector<double> w(L);
    for (int l = 0; l < L; ++l) {
      preds[l] = static_cast<int>(rng.below(5));
      layers[l] = l;
      w[l] = rng.uniform(0.1, 2);
    }
    const int base = vote_predictions(preds, cfg_of(layers, w));
    std::vector<double> scaled = w;
    for (double& v : scaled) v *= 7.25;
    EXPECT_EQ(vote_predictions(preds, cfg_of(layers, scaled)), base);

    // Monotone under agreement (equal weights): one more voter for the winner.
    const int eq = vote_predictions(preds, cfg_of(layers));
    std::vector<int> more = preds;
    more.push_back(eq);
    std::vector<int> more_layers = layers;
    more_layers.push_back(L);
    EXPECT_EQ(vote_predictions(more, cfg_of(more_layers)), eq);
  }
  const std::vector<int> preds{4, 1, 6};
  EXPECT_EQ(vote_predictions(preds, cfg_of({1})), 1);
}

TEST(VotingConfig, Validation) {
  EXPECT_THROW(cfg_of({}).validate(3), InvalidArgument);
  EXPECT_THROW(cfg_of({1, 1}).validate(3), InvalidArgument);
  EXPECT_THROW(cfg_of({2, 1}).validate(3), InvalidArgument);
  EXPECT_THROW(cfg_of({3}).validate(3), InvalidArgument);
  EXPECT_THROW(cfg_of({0, 1}, {1.0}).validate(3), ShapeError);
  EXPECT_THROW(cfg_of({0, 1}, {1.0, 0.0}).validate(3), InvalidArgument);
  EXPECT_NO_THROW(cfg_of({0, 2}, {1.0, 3.0}).validate(3));
}

TEST(Recognize, RoutesByVerdict) {
  Rng rng(5);
  TapNet net({3, 4, 4, 3}, {0, 1}, 2);
  Dataset d;
  d.dim = 3;
  d.num_classes = 3;
  for (int i = 0; i < 60; ++i) {
    d.inputs.push_back(oracle::random_input(rng, 3));
    d.labels.push_back(i % 3);
  }
  std::vector<FeaturePath> paths;
  for (size_t i = 0; i < d.size(); ++i) paths.push_back({forward(net, d.input(i)).tapped_features, d.labels[i]});
  const CentroidBank bank = compute_centroids(paths, 3);
  const VotingConfig vc = cfg_of({1});
  for (size_t i = 0; i < d.size(); ++i) {
    const ForwardTrace t = forward(net, d.input(i));
    const FeaturePath p{t.tapped_features, std::nullopt};
    // Threshold below every possible score: everything is clean.
    const Recognition clean = recognize(d.input(i), net, bank, -2.0, {}, vc);
    EXPECT_EQ(clean.detection.verdict, Verdict::Clean);
    EXPECT_EQ(clean.label, t.predicted_class());
    // Above every score: everything goes to the vote, which only reads layer 1.
    const Recognition adv = recognize(d.input(i), net, bank, 2.0, {}, vc);
    EXPECT_EQ(adv.detection.verdict, Verdict::Adversarial);
    EXPECT_EQ(adv.label, nearest_centroid(p, bank, 1));
  }
}
