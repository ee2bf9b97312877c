// Brute-force reference implementations used by the unit and acceptance
// tests. They deliberately avoid Eigen and the library's helpers: plain loops,
// written for obviousness rather than speed.
#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "fpath/nn.hpp"
#include "fpath/path.hpp"
#include "fpath/rng.hpp"

namespace oracle {

using Vec = std::vector<double>;

struct Forward {
  Vec logits;
  std::vector<Vec> hidden;  // post-ReLU output of every hidden layer
};

inline Forward forward(const fpath::TapNet& net, const Vec& x) {
  Forward out;
  Vec a = x;
  for (int i = 0; i < net.num_layers(); ++i) {
    const auto& W = net.weights()[i];
    const auto& b = net.biases()[i];
    Vec z(W.rows(), 0.0);
    for (int r = 0; r < W.rows(); ++r) {
      double acc = b(r);
      for (int c = 0; c < W.cols(); ++c) acc += W(r, c) * a[c];
      z[r] = acc;
    }
    if (i + 1 < net.num_layers()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
      out.hidden.push_back(z);
    }
    a = z;
  }
  out.logits = a;
  return out;
}

inline double loss(const fpath::TapNet& net, const Vec& x, int label) {
  const Vec z = forward(net, x).logits;
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  return m + std::log(s) - z[label];
}

// Random net with up to `max_hidden` hidden layers of at most `max_width`
// units, every hidden layer tapped, and small random biases so that ReLUs are
// not all at their kink.
inline fpath::TapNet random_net(fpath::Rng& rng, int max_hidden = 3, int max_width = 64,
                                int max_in = 12, int max_classes = 6) {
  std::vector<int> dims{1 + static_cast<int>(rng.below(max_in))};
  const int hidden = 1 + static_cast<int>(rng.below(max_hidden));
  for (int i = 0; i < hidden; ++i) dims.push_back(1 + static_cast<int>(rng.below(max_width)));
  dims.push_back(2 + static_cast<int>(rng.below(max_classes - 1)));
  std::vector<int> taps;
  for (int i = 0; i < hidden; ++i) taps.push_back(i);
  fpath::TapNet net(dims, taps, rng.next_u64());
  for (auto& b : net.biases()) {
    for (int i = 0; i < b.size(); ++i) b(i) = rng.uniform(-0.5, 0.5);
  }
  return net;
}

inline Vec random_input(fpath::Rng& rng, int dim, double lo = 0.0, double hi = 1.0) {
  Vec x(dim);
  for (double& v : x) v = rng.uniform(lo, hi);
  return x;
}

// Smallest |pre-activation| over hidden units; finite differences are only
// trustworthy when this is well above the step.
inline double kink_margin(const fpath::TapNet& net, const Vec& x) {
  double m = std::numeric_limits<double>::infinity();
  Vec a = x;
  for (int i = 0; i + 1 < net.num_layers(); ++i) {
    const auto& W = net.weights()[i];
    Vec z(W.rows());
    for (int r = 0; r < W.rows(); ++r) {
      double acc = net.biases()[i](r);
      for (int c = 0; c < W.cols(); ++c) acc += W(r, c) * a[c];
      z[r] = acc;
      m = std::min(m, std::abs(acc));
    }
    for (double& v : z) v = v > 0 ? v : 0;
    a = z;
  }
  return m;
}

// |a-b| relative to the larger magnitude, with a floor so that gradients that
// are zero up to roundoff compare on an absolute scale.
inline double rel_err(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Finite differences compared with a combined tolerance: relative 1e-5 plus
// the resolution of a double-precision central difference, eps*|L|/h (one
// ulp of the loss on each side, divided by the 2h span). Below that
// magnitude the difference quotient is roundoff, not signal.
struct GradCheck {
  double rtol = 1e-5;
  double max_rel_err = 0.0;  // over coordinates the difference quotient resolves
  double max_ratio = 0.0;    // |a-b| / (rtol*max(|a|,|b|) + resolution); pass iff < 1
  size_t checked = 0;
  size_t below_resolution = 0;
  double worst_analytic = 0.0;  // the pair behind max_ratio
  double worst_fd = 0.0;

  void record(double analytic, double fd, double loss_scale, double h) {
    const double resolution = std::numeric_limits<double>::epsilon() * loss_scale / h;
    const double diff = std::abs(analytic - fd);
    const double mag = std::max(std::abs(analytic), std::abs(fd));
    const double ratio = diff / (rtol * mag + resolution);
    if (ratio > max_ratio) max_ratio = ratio, worst_analytic = analytic, worst_fd = fd;
    if (mag * rtol >= resolution) {
      max_rel_err = std::max(max_rel_err, diff / mag);
    } else {
      ++below_resolution;
    }
    ++checked;
  }
  bool pass() const { return max_ratio < 1.0; }
};

// Central differences of the plain-loop loss against the library's analytic
// gradients, over every weight, bias and input coordinate.
template <typename Grad>
GradCheck gradient_check(const fpath::TapNet& net, const Vec& x, int y, const Grad& g,
                         double h = 1e-5) {
  GradCheck out;
  fpath::TapNet probe = net;
  auto scale = [](double a, double b) { return std::max(std::abs(a), std::abs(b)); };
  for (int i = 0; i < net.num_layers(); ++i) {
    auto& W = probe.weights()[i];
    for (int r = 0; r < W.rows(); ++r) {
      for (int c = 0; c < W.cols(); ++c) {
        const double keep = W(r, c);
        W(r, c) = keep + h;
        const double up = loss(probe, x, y);
        W(r, c) = keep - h;
        const double dn = loss(probe, x, y);
        W(r, c) = keep;
        out.record(g.weights[i](r, c), (up - dn) / (2 * h), scale(up, dn), h);
      }
    }
    auto& b = probe.biases()[i];
    for (int r = 0; r < b.size(); ++r) {
      const double keep = b(r);
      b(r) = keep + h;
      const double up = loss(probe, x, y);
      b(r) = keep - h;
      const double dn = loss(probe, x, y);
      b(r) = keep;
      out.record(g.biases[i](r), (up - dn) / (2 * h), scale(up, dn), h);
    }
  }
  for (size_t k = 0; k < x.size(); ++k) {
    Vec xp = x, xm = x;
    xp[k] += h;
    xm[k] -= h;
    const double up = loss(net, xp, y), dn = loss(net, xm, y);
    out.record(g.input(k), (up - dn) / (2 * h), scale(up, dn), h);
  }
  return out;
}

// Mean per class and layer, then divided by its Euclidean length.
inline std::vector<std::vector<Vec>> centroids(const std::vector<fpath::FeaturePath>& paths,
                                               int K) {
  const int L = paths.front().length();
  std::vector<std::vector<Vec>> sum(K, std::vector<Vec>(L));
  std::vector<int> count(K, 0);
  for (const auto& p : paths) {
    const int c = *p.label;
    ++count[c];
    for (int l = 0; l < L; ++l) {
      if (sum[c][l].empty()) sum[c][l].assign(p.layers[l].size(), 0.0);
      for (size_t d = 0; d < p.layers[l].size(); ++d) sum[c][l][d] += p.layers[l][d];
    }
  }
  for (int c = 0; c < K; ++c) {
    for (int l = 0; l < L; ++l) {
      double n2 = 0.0;
      for (double& v : sum[c][l]) {
        v /= count[c];
        n2 += v * v;
      }
      for (double& v : sum[c][l]) v /= std::sqrt(n2);
    }
  }
  return sum;
}

inline double cosine(const Vec& a, const Vec& b) {
  double ab = 0, aa = 0, bb = 0;
  for (size_t i = 0; i < a.size(); ++i) ab += a[i] * b[i], aa += a[i] * a[i], bb += b[i] * b[i];
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return ab / (std::sqrt(aa) * std::sqrt(bb));
}

struct ThresholdScan {
  std::vector<double> edges;     // candidate edges 1..bins-1
  std::vector<double> variance;  // between-class variance at each candidate
  size_t best = 0;               // first index attaining the maximum
};

// Splits the raw scores at every interior edge of a `bins`-bin histogram over
// [min, max] and evaluates w0*w1*(mu0-mu1)^2 from scratch each time.
inline ThresholdScan threshold_scan(const Vec& s, int bins) {
  const double lo = *std::min_element(s.begin(), s.end());
  const double hi = *std::max_element(s.begin(), s.end());
  ThresholdScan scan;
  for (int k = 1; k < bins; ++k) {
    const double t = lo + (hi - lo) * static_cast<double>(k) / bins;
    double n0 = 0, n1 = 0, s0 = 0, s1 = 0;
    for (double v : s) {
      if (v < t) n0 += 1, s0 += v;
      else n1 += 1, s1 += v;
    }
    double var = 0.0;
    if (n0 > 0 && n1 > 0) {
      const double w0 = n0 / s.size(), w1 = n1 / s.size();
      const double d = s0 / n0 - s1 / n1;
      var = w0 * w1 * d * d;
    }
    scan.edges.push_back(t);
    scan.variance.push_back(var);
  }
  for (size_t i = 1; i < scan.variance.size(); ++i) {
    if (scan.variance[i] > scan.variance[scan.best]) scan.best = i;
  }
  return scan;
}

// Weighted plurality over per-layer predictions (shallowest first); ties go
// to the deepest layer whose prediction is one of the tied classes.
inline int vote(const std::vector<int>& preds, const std::vector<double>& w, int K,
                double tol_rel = 1e-12) {
  std::vector<double> score(K, 0.0);
  double total = 0.0;
  for (size_t i = 0; i < preds.size(); ++i) score[preds[i]] += w[i], total += w[i];
  const double top = *std::max_element(score.begin(), score.end());
  std::vector<bool> tied(K);
  for (int k = 0; k < K; ++k) tied[k] = score[k] >= top - tol_rel * total;
  for (size_t i = preds.size(); i-- > 0;) {
    if (tied[preds[i]]) return preds[i];
  }
  return -1;  // unreachable: the top class always has a voter
}

}  // namespace oracle
