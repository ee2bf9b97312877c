#include <gtest/gtest.h>

#include <cmath>

#include "fpath/attack.hpp"
#include "fpath/error.hpp"
#include "oracles.hpp"

using namespace fpath;

namespace {

double linf(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0;
  for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Dataset random_dataset(Rng& rng, const TapNet& net, int n) {
  Dataset d;
  d.dim = net.input_dim();
  d.num_classes = net.num_classes();
  for (int i = 0; i < n; ++i) {
    d.inputs.push_back(oracle::random_input(rng, d.dim));
    d.labels.push_back(static_cast<int>(rng.below(d.num_classes)));
  }
  return d;
}

}  // namespace

TEST(Pgd, ZeroEpsilonIsIdentity) {
  Rng rng(1);
  const TapNet net = oracle::random_net(rng);
  const auto x = oracle::random_input(rng, net.input_dim());
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  EXPECT_EQ(pgd_attack(net, x, 0, cfg), x);
  EXPECT_EQ(fgsm_attack(net, x, 0, 0.0), x);
}

TEST(Pgd, ConstraintsHoldOnRandomTriples) {
  Rng rng(2024);
  for (int trial = 0; trial < 300; ++trial) {
    const TapNet net = oracle::random_net(rng, 3, 32);
    AttackConfig cfg;
    cfg.box_lo = rng.uniform(-1, 0.4);
    cfg.box_hi = cfg.box_lo + rng.uniform(0.1, 2);
    cfg.epsilon = rng.uniform(0, 0.5);
    cfg.step_size = rng.uniform(0.001, 0.3);
    cfg.iterations = 1 + static_cast<int>(rng.below(15));
    cfg.random_start = rng.below(2) == 1;
    cfg.rng_seed = rng.next_u64();
    const auto x = oracle::random_input(rng, net.input_dim(), cfg.box_lo, cfg.box_hi);
    const int y = static_cast<int>(rng.below(net.num_classes()));
    const auto adv = pgd_attack(net, x, y, cfg);
    ASSERT_LE(linf(adv, x), cfg.epsilon + 1e-9);
    for (double v : adv) {
      ASSERT_GE(v, cfg.box_lo);
      ASSERT_LE(v, cfg.box_hi);
    }
  }
}

TEST(Pgd, SingleStepClosedForm) {
  Rng rng(5);
  for (int trial = 0; trial < 25; ++trial) {
    const TapNet net = oracle::random_net(rng);
    const auto x = oracle::random_input(rng, net.input_dim());
    const int y = static_cast<int>(rng.below(net.num_classes()));
    AttackConfig cfg;
    cfg.epsilon = 0.05;
    cfg.step_size = rng.uniform(0.05, 0.2);
    cfg.iterations = 1;

    // Signs of the input gradient from central differences of the plain-loop
    // loss, so the closed form does not lean on the library's backprop.
    std::vector<double> want(x.size());
    bool ambiguous = false;
    for (size_t k = 0; k < x.size(); ++k) {
      auto xp = x, xm = x;
      xp[k] += 1e-6;
      xm[k] -= 1e-6;
      const double fd = (oracle::loss(net, xp, y) - oracle::loss(net, xm, y)) / 2e-6;
      if (std::abs(fd) < 1e-7) ambiguous = true;
      const double s = fd > 0 ? 1.0 : -1.0;
      want[k] = std::clamp(x[k] + 0.05 * s, 0.0, 1.0);
    }
    if (ambiguous) continue;
    EXPECT_EQ(pgd_attack(net, x, y, cfg), want) << "trial " << trial;
  }
}

TEST(Pgd, NominalBudgetAroundMidGray) {
  Rng rng(6);
  const TapNet net = oracle::random_net(rng);
  const std::vector<double> x(net.input_dim(), 0.5);
  AttackConfig cfg;  // 8/255, 2/255, 20 iterations
  const auto adv = pgd_attack(net, x, 0, cfg);
  for (double v : adv) {
    EXPECT_GE(v, 0.5 - 8.0 / 255);
    EXPECT_LE(v, 0.5 + 8.0 / 255);
  }
}

TEST(Pgd, ReturnsBestLossIterate) {
  // With a huge step every iterate is a corner of the ball; the returned one
  // must have loss at least that of the first step.
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const TapNet net = oracle::random_net(rng);
    const auto x = oracle::random_input(rng, net.input_dim(), 0.2, 0.8);
    AttackConfig one;
    one.epsilon = 0.1;
    one.step_size = 0.07;
    one.iterations = 1;
    AttackConfig many = one;
    many.iterations = 12;
    const double l1 = oracle::loss(net, pgd_attack(net, x, 0, one), 0);
    const double lm = oracle::loss(net, pgd_attack(net, x, 0, many), 0);
    EXPECT_GE(lm, l1);
  }
}

TEST(Fgsm, EqualsOneStepPgd) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const TapNet net = oracle::random_net(rng);
    const auto x = oracle::random_input(rng, net.input_dim());
    const double eps = rng.uniform(0.001, 0.2);
    AttackConfig cfg;
    cfg.epsilon = eps;
    cfg.step_size = eps;
    cfg.iterations = 1;
    EXPECT_EQ(fgsm_attack(net, x, 1, eps), pgd_attack(net, x, 1, cfg));
  }
}

TEST(AttackDataset, ZeroEpsilonSuccessIsErrorRate) {
  Rng rng(9);
  const TapNet net = oracle::random_net(rng);
  const Dataset d = random_dataset(rng, net, 60);
  AttackConfig cfg;
  cfg.epsilon = 0.0;
  const AdversarialBatch b = attack_dataset(net, d, cfg);
  EXPECT_EQ(b.perturbed.size(), 60u);
  EXPECT_EQ(b.originals.size(), 60u);
  EXPECT_EQ(b.labels.size(), 60u);
  EXPECT_EQ(b.success.size(), 60u);
  EXPECT_DOUBLE_EQ(b.success_rate(), 1.0 - accuracy(net, d));
  EXPECT_EQ(b.perturbed, d.inputs);
}

TEST(AttackDataset, DeterministicAndPerExampleSeeds) {
  Rng rng(10);
  const TapNet net = oracle::random_net(rng);
  const Dataset d = random_dataset(rng, net, 20);
  AttackConfig cfg;
  cfg.epsilon = 0.1;
  cfg.random_start = true;
  cfg.rng_seed = 500;
  const auto a = attack_dataset(net, d, cfg), b = attack_dataset(net, d, cfg);
  EXPECT_EQ(a.perturbed, b.perturbed);
  // Example i draws from seed rng_seed + i, independent of its position.
  AttackConfig single = cfg;
  single.rng_seed = 500 + 7;
  EXPECT_EQ(pgd_attack(net, d.input(7), d.labels[7], single), a.perturbed[7]);
  const Dataset as = a.as_dataset(d.num_classes);
  EXPECT_EQ(as.inputs, a.perturbed);
  EXPECT_EQ(as.labels, d.labels);
}

TEST(AttackDataset, ErrorsNameTheExample) {
  Rng rng(11);
  const TapNet net = oracle::random_net(rng);
  Dataset d = random_dataset(rng, net, 5);
  d.inputs[3][0] = 1.5;  // outside the [0,1] box
  try {
    attack_dataset(net, d, AttackConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("example 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(attack_dataset(net, Dataset{}, AttackConfig{}), InvalidArgument);
}

TEST(AttackConfig, WarnsWhenStepExceedsEpsilon) {
  AttackConfig c;
  EXPECT_FALSE(c.validate().has_value());
  c.step_size = c.epsilon * 2;
  EXPECT_TRUE(c.validate().has_value());
  c.epsilon = -1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.iterations = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}
