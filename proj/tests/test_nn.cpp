#include <gtest/gtest.h>

#include <cmath>

#include "fpath/dataset.hpp"
#include "fpath/error.hpp"
#include "fpath/nn.hpp"
#include "oracles.hpp"

using namespace fpath;

namespace {

TapNet zero_net(std::vector<int> dims, std::vector<int> taps) {
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
  for (size_t i = 0; i + 1 < dims.size(); ++i) {
    W.push_back(Eigen::MatrixXd::Zero(dims[i + 1], dims[i]));
    b.push_back(Eigen::VectorXd::Zero(dims[i + 1]));
  }
  return TapNet(dims, taps, W, b);
}

Dataset two_blobs(int per_class, uint64_t seed) {
  Rng rng(seed);
  Dataset d;
  d.dim = 2;
  d.num_classes = 2;
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < 2; ++c) {
      const double cx = c == 0 ? 0.25 : 0.75;
      d.inputs.push_back({cx + 0.05 * rng.normal(), 0.5 + 0.05 * rng.normal()});
      d.labels.push_back(c);
    }
  }
  return d;
}

}  // namespace

TEST(Forward, ZeroNetIsUniform) {
  const TapNet net = zero_net({3, 5, 10}, {0});
  const ForwardTrace t = forward(net, std::vector<double>{0.2, -1.0, 4.0});
  for (int k = 0; k < 10; ++k) EXPECT_DOUBLE_EQ(t.probabilities(k), 0.1);
  EXPECT_NEAR(loss_and_grad(net, std::vector<double>{0.2, -1.0, 4.0}, 3).loss, std::log(10.0), 1e-15);
}

TEST(Forward, IdentityLinearLayer) {
  std::vector<Eigen::MatrixXd> W{Eigen::MatrixXd::Identity(4, 4)};
  std::vector<Eigen::VectorXd> b{Eigen::VectorXd::Zero(4)};
  const TapNet net({4, 4}, {}, W, b);
  const ForwardTrace t = forward(net, std::vector<double>{1, 0, 0, 0});
  EXPECT_EQ(t.logits, Eigen::Vector4d(1, 0, 0, 0));
  EXPECT_TRUE(t.tapped_features.empty());
}

TEST(Forward, MatchesPlainLoopOracle) {
  Rng rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const TapNet net = oracle::random_net(rng, 2);
    const auto x = oracle::random_input(rng, net.input_dim());
    const ForwardTrace t = forward(net, x);
    const oracle::Forward o = oracle::forward(net, x);
    for (int k = 0; k < net.num_classes(); ++k) {
      EXPECT_LE(oracle::rel_err(t.logits(k), o.logits[k], 1e-300), 1e-12);
    }
    ASSERT_EQ(static_cast<int>(t.tapped_features.size()), net.path_length());
    for (int l = 0; l < net.path_length(); ++l) {
      const auto& want = o.hidden[net.tap_points()[l]];
      ASSERT_EQ(t.tapped_features[l].size(), want.size());
      for (size_t d = 0; d < want.size(); ++d) {
        EXPECT_NEAR(t.tapped_features[l][d], want[d], 1e-12 * (1 + std::abs(want[d])));
      }
    }
  }
}

TEST(Forward, PureAndTapCountFixed) {
  Rng rng(2);
  const TapNet net({6, 8, 8, 8, 3}, {0, 2}, 5);
  for (int i = 0; i < 5; ++i) {
    const auto x = oracle::random_input(rng, 6, -3, 3);
    const ForwardTrace a = forward(net, x), b = forward(net, x);
    EXPECT_EQ(a.logits, b.logits);
    EXPECT_EQ(a.tapped_features, b.tapped_features);
    EXPECT_EQ(a.tapped_features.size(), 2u);
    EXPECT_EQ(a.tapped_features[1].size(), 8u);
  }
}

TEST(Forward, RejectsBadInput) {
  const TapNet net({3, 4, 2}, {0}, 1);
  EXPECT_THROW(forward(net, std::vector<double>{1, 2}), ShapeError);
  EXPECT_THROW(forward(net, std::vector<double>{1, NAN, 2}), Error);
}

TEST(Softmax, SumsToOneAndShiftInvariant) {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd z(7);
    for (int k = 0; k < 7; ++k) z(k) = rng.uniform(-50, 50);
    const Eigen::VectorXd p = softmax(z);
    EXPECT_NEAR(p.sum(), 1.0, 1e-9);
    EXPECT_GE(p.minCoeff(), 0.0);
    const Eigen::VectorXd q = softmax(z.array() + rng.uniform(-1e3, 1e3));
    EXPECT_LE((p - q).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(CrossEntropy, StableForExtremeLogits) {
  Eigen::VectorXd z(3);
  z << 1000.0, -1000.0, 0.0;
  EXPECT_NEAR(cross_entropy(z, 0), 0.0, 1e-12);
  EXPECT_NEAR(cross_entropy(z, 1), 2000.0, 1e-9);
  EXPECT_TRUE(std::isfinite(cross_entropy(z, 2)));
}

TEST(Gradients, MatchFiniteDifferences) {
  Rng rng(123);
  int done = 0;
  while (done < 15) {
    const TapNet net = oracle::random_net(rng, 3, 24);
    const auto x = oracle::random_input(rng, net.input_dim());
    if (oracle::kink_margin(net, x) < 1e-3) continue;
    const int y = static_cast<int>(rng.below(net.num_classes()));
    const LossAndGrad lg = loss_and_grad(net, x, y);
    EXPECT_NEAR(lg.loss, oracle::loss(net, x, y), 1e-12);
    const auto check = oracle::gradient_check(net, x, y, lg.grad);
    EXPECT_TRUE(check.pass()) << "trial " << done << ": ratio " << check.max_ratio << ", analytic "
                              << check.worst_analytic << " vs fd " << check.worst_fd;
    EXPECT_LT(check.max_rel_err, 1e-5) << "trial " << done;
    ++done;
  }
}

TEST(Gradients, InputOnlyVariantAgrees) {
  Rng rng(8);
  const TapNet net = oracle::random_net(rng);
  const auto x = oracle::random_input(rng, net.input_dim());
  const auto full = loss_and_grad(net, x, 1);
  const auto lite = loss_and_input_grad(net, x, 1);
  EXPECT_EQ(full.loss, lite.loss);
  EXPECT_LE((full.grad.input - lite.grad.input).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Gradients, LinearSoftmaxClosedForm) {
  Rng rng(31);
  Eigen::MatrixXd W(4, 5);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c) W(r, c) = rng.uniform(-1, 1);
  Eigen::VectorXd b(4);
  for (int r = 0; r < 4; ++r) b(r) = rng.uniform(-1, 1);
  const TapNet net({5, 4}, {}, {W}, {b});
  const auto x = oracle::random_input(rng, 5);
  const int y = 2;
  Eigen::VectorXd p = forward(net, x).probabilities;
  p(y) -= 1.0;
  const Eigen::VectorXd want = W.transpose() * p;
  const auto got = loss_and_grad(net, x, y).grad.input;
  EXPECT_LE((got - want).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Train, ZeroLearningRateLeavesParameters) {
  const Dataset d = two_blobs(20, 1);
  TapNet net({2, 8, 2}, {0}, 3);
  const TapNet before = net;
  TrainConfig cfg;
  cfg.learning_rate = 0.0;
  cfg.weight_decay = 0.0;
  cfg.epochs = 1;
  cfg.lr_drop_epochs = {};
  train(net, d, cfg);
  EXPECT_EQ(net.weights(), before.weights());
  EXPECT_EQ(net.biases(), before.biases());
}

TEST(Train, WeightDecayEntersTheStepLinearly) {
  // One full-batch step without momentum: W1 = W0 - lr * (g + wd * W0), so the
  // decayed and undecayed results differ by exactly lr * wd * W0.
  const Dataset d = two_blobs(20, 1);
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.01;
  cfg.batch_size = static_cast<int>(d.size());
  cfg.epochs = 1;
  cfg.lr_drop_epochs = {};
  const TapNet start({2, 8, 2}, {0}, 3);
  TapNet with = start, without = start;
  train(with, d, cfg);
  cfg.weight_decay = 0.0;
  train(without, d, cfg);
  for (size_t i = 0; i < start.weights().size(); ++i) {
    const Eigen::MatrixXd diff = without.weights()[i] - with.weights()[i];
    EXPECT_LE((diff - 0.1 * 0.01 * start.weights()[i]).cwiseAbs().maxCoeff(), 1e-15);
  }
}

TEST(Train, SeparableBlobsReachFullAccuracy) {
  const Dataset d = two_blobs(100, 2);
  TapNet net({2, 16, 16, 2}, {0, 1}, 4);
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.learning_rate = 0.05;
  cfg.lr_drop_epochs = {40};
  train(net, d, cfg);
  EXPECT_EQ(accuracy(net, d), 1.0);
}

TEST(Train, DeterministicForSeed) {
  const Dataset d = two_blobs(50, 3);
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.lr_drop_epochs = {3};
  TapNet a({2, 8, 2}, {0}, 9), b({2, 8, 2}, {0}, 9);
  const auto sa = train(a, d, cfg), sb = train(b, d, cfg);
  EXPECT_EQ(sa.final_epoch_loss, sb.final_epoch_loss);
  EXPECT_EQ(a.weights(), b.weights());
  cfg.rng_seed = 2;
  TapNet c({2, 8, 2}, {0}, 9);
  train(c, d, cfg);
  EXPECT_NE(a.weights(), c.weights());
}

TEST(Train, LearningRateDropsAfterListedEpoch) {
  // With momentum 0 and no decay, one epoch at lr/10 after a drop must equal a
  // fresh run of that epoch at lr/10 from the same state and shuffle.
  const Dataset d = two_blobs(10, 5);
  TrainConfig cfg;
  cfg.momentum = 0.0;
  cfg.weight_decay = 0.0;
  cfg.batch_size = static_cast<int>(d.size());  // shuffle order then no longer matters
  cfg.epochs = 2;
  cfg.learning_rate = 0.5;
  cfg.lr_drop_epochs = {1};
  TapNet a({2, 4, 2}, {0}, 1);
  train(a, d, cfg);

  TapNet b({2, 4, 2}, {0}, 1);
  TrainConfig step = cfg;
  step.epochs = 1;
  step.lr_drop_epochs = {};
  train(b, d, step);
  step.learning_rate = 0.05;
  train(b, d, step);
  for (size_t i = 0; i < a.weights().size(); ++i) {
    EXPECT_LE((a.weights()[i] - b.weights()[i]).cwiseAbs().maxCoeff(), 1e-14);
  }
}

TEST(Train, DivergenceNamesEpochAndBatch) {
  const Dataset d = two_blobs(20, 1);
  TapNet net({2, 8, 2}, {0}, 3);
  TrainConfig cfg;
  cfg.learning_rate = 1e200;
  cfg.momentum = 0.0;
  cfg.epochs = 3;
  cfg.lr_drop_epochs = {};
  try {
    train(net, d, cfg);
    FAIL() << "expected divergence";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("batch"), std::string::npos);
  }
}

TEST(TrainConfig, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.validate());
  c.lr_drop_epochs = {30, 20};
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.momentum = 1.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.lr_drop_epochs = {41};
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(TapNet, ValidatesTapsAndShapes) {
  EXPECT_THROW(TapNet({3, 4, 2}, {1}, 0), InvalidArgument);
  EXPECT_THROW(TapNet({3, 4, 4, 2}, {1, 0}, 0), InvalidArgument);
  EXPECT_THROW(TapNet({3, 0, 2}, {0}, 0), InvalidArgument);
  const TapNet net({3, 4, 5, 2}, {0, 1}, 0);
  EXPECT_EQ(net.tap_dims(), (std::vector<int>{4, 5}));
  EXPECT_EQ(net.num_parameters(), 3u * 4 + 4 + 4 * 5 + 5 + 5 * 2 + 2);
  const double bound = std::sqrt(6.0 / (3 + 4));
  EXPECT_LE(net.weights()[0].cwiseAbs().maxCoeff(), bound);
}
