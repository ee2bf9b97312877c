#include "fpath/path.hpp"

#include <cmath>
#include <string>

#include "fpath/error.hpp"

namespace fpath {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

void check_finite(const FeaturePath& p, size_t index) {
  for (const auto& layer : p.layers) {
    for (double v : layer) {
      if (!std::isfinite(v)) {
        throw NumericError("path " + std::to_string(index) + " has non-finite features");
      }
    }
  }
}

}  // namespace

CentroidBank::CentroidBank(std::vector<int> layer_dims,
                           std::vector<std::vector<std::vector<double>>> centroids,
                           std::vector<int> class_counts, double norm_tol)
    : layer_dims_(std::move(layer_dims)),
      centroids_(std::move(centroids)),
      class_counts_(std::move(class_counts)) {
  if (layer_dims_.empty()) throw InvalidArgument("centroid bank needs at least one layer");
  if (centroids_.empty()) throw InvalidArgument("centroid bank needs at least one class");
  if (class_counts_.size() != centroids_.size()) {
    throw ShapeError("class_counts length does not match class count");
  }
  for (size_t c = 0; c < centroids_.size(); ++c) {
    if (class_counts_[c] < 1) {
      throw InvalidArgument("class " + std::to_string(c) + " has no examples");
    }
    if (centroids_[c].size() != layer_dims_.size()) {
      throw ShapeError("class " + std::to_string(c) + " has the wrong number of layers");
    }
    for (size_t l = 0; l < layer_dims_.size(); ++l) {
      const auto& mu = centroids_[c][l];
      if (static_cast<int>(mu.size()) != layer_dims_[l]) {
        throw ShapeError("centroid (class " + std::to_string(c) + ", layer " + std::to_string(l) +
                         ") has dim " + std::to_string(mu.size()) + ", expected " +
                         std::to_string(layer_dims_[l]));
      }
      const double n = norm(mu);
      if (!(std::abs(n - 1.0) <= norm_tol)) {
        throw DegenerateError("centroid (class " + std::to_string(c) + ", layer " +
                              std::to_string(l) + ") has norm " + std::to_string(n) +
                              ", expected unit norm");
      }
    }
  }
}

void CentroidBank::check_path(const FeaturePath& path) const {
  if (path.length() != num_layers()) {
    throw ShapeError("path has " + std::to_string(path.length()) + " layers, bank has " +
                     std::to_string(num_layers()));
  }
  for (int l = 0; l < num_layers(); ++l) {
    if (static_cast<int>(path.layers[l].size()) != layer_dims_[l]) {
      throw ShapeError("path layer " + std::to_string(l) + " has dim " +
                       std::to_string(path.layers[l].size()) + ", bank expects " +
                       std::to_string(layer_dims_[l]));
    }
  }
}

CentroidBank compute_centroids(std::span<const FeaturePath> paths, int num_classes) {
  if (num_classes < 1) throw InvalidArgument("num_classes must be positive");
  if (paths.empty()) throw InvalidArgument("no paths to build centroids from");
  std::vector<int> dims;
  for (const auto& layer : paths.front().layers) dims.push_back(static_cast<int>(layer.size()));
  if (dims.empty()) throw InvalidArgument("paths have no layers");

  std::vector<std::vector<std::vector<double>>> sums(num_classes);
  for (auto& per_class : sums) {
    for (int d : dims) per_class.emplace_back(d, 0.0);
  }
  std::vector<int> counts(num_classes, 0);

  for (size_t i = 0; i < paths.size(); ++i) {
    const FeaturePath& p = paths[i];
    if (!p.label) throw InvalidArgument("path " + std::to_string(i) + " has no label");
    const int c = *p.label;
    if (c < 0 || c >= num_classes) {
      throw InvalidArgument("path " + std::to_string(i) + " label " + std::to_string(c) +
                            " outside [0, " + std::to_string(num_classes) + ")");
    }
    if (p.layers.size() != dims.size()) {
      throw ShapeError("path " + std::to_string(i) + " has a different layer count");
    }
    check_finite(p, i);
    for (size_t l = 0; l < dims.size(); ++l) {
      if (static_cast<int>(p.layers[l].size()) != dims[l]) {
        throw ShapeError("path " + std::to_string(i) + " layer " + std::to_string(l) +
                         " has a different dim");
      }
      for (int k = 0; k < dims[l]; ++k) sums[c][l][k] += p.layers[l][k];
    }
    ++counts[c];
  }

  for (int c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw InvalidArgument("class " + std::to_string(c) + " has no examples");
    for (size_t l = 0; l < dims.size(); ++l) {
      auto& v = sums[c][l];
      for (double& x : v) x /= static_cast<double>(counts[c]);
      const double n = norm(v);
      if (!(n > 0.0)) {
        throw DegenerateError("class " + std::to_string(c) + " has a zero mean feature at layer " +
                              std::to_string(l) + "; cannot normalize");
      }
      for (double& x : v) x /= n;
    }
  }
  return CentroidBank(std::move(dims), std::move(sums), std::move(counts));
}

double cosine_similarity(std::span<const double> feature, std::span<const double> direction) {
  if (feature.size() != direction.size()) {
    throw ShapeError("cosine similarity of vectors with dims " + std::to_string(feature.size()) +
                     " and " + std::to_string(direction.size()));
  }
  const double nf = norm(feature);
  const double nd = norm(direction);
  if (nf == 0.0 || nd == 0.0) return 0.0;
  return dot(feature, direction) / (nf * nd);
}

std::vector<double> similarity_path(const FeaturePath& path, const CentroidBank& bank, int cls) {
  bank.check_path(path);
  if (cls < 0 || cls >= bank.num_classes()) {
    throw InvalidArgument("class " + std::to_string(cls) + " not in bank");
  }
  std::vector<double> s(bank.num_layers());
  for (int l = 0; l < bank.num_layers(); ++l) {
    s[l] = cosine_similarity(path.layers[l], bank.centroid(cls, l));
  }
  return s;
}

SimilarityProfile similarity_profile(const FeaturePath& path, const CentroidBank& bank,
                                     std::span<const double> weights) {
  if (static_cast<int>(weights.size()) != bank.num_layers()) {
    throw ShapeError("expected " + std::to_string(bank.num_layers()) + " layer weights, got " +
                     std::to_string(weights.size()));
  }
  bool any_positive = false;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) {
      throw InvalidArgument("layer weights must be finite and nonnegative");
    }
    any_positive = any_positive || w > 0.0;
  }
  if (!any_positive) throw InvalidArgument("at least one layer weight must be positive");

  SimilarityProfile prof;
  prof.weights.assign(weights.begin(), weights.end());
  prof.per_layer.reserve(bank.num_classes());
  prof.aggregated.reserve(bank.num_classes());
  for (int c = 0; c < bank.num_classes(); ++c) {
    auto s = similarity_path(path, bank, c);
    double total = 0.0;
    for (size_t l = 0; l < s.size(); ++l) total += weights[l] * s[l];
    prof.aggregated.push_back(total);
    prof.per_layer.push_back(std::move(s));
  }
  return prof;
}

std::vector<double> equal_weights(const std::vector<bool>& mask) {
  size_t included = 0;
  for (bool m : mask) included += m ? 1 : 0;
  if (included == 0) throw InvalidArgument("layer mask excludes every layer");
  std::vector<double> w(mask.size(), 0.0);
  for (size_t l = 0; l < mask.size(); ++l) {
    if (mask[l]) w[l] = 1.0 / static_cast<double>(included);
  }
  return w;
}

std::vector<double> pfc_variability(std::span<const FeaturePath> paths, const CentroidBank& bank) {
  const int K = bank.num_classes();
  if (K < 2) throw InvalidArgument("variability needs at least two classes");
  if (paths.empty()) throw InvalidArgument("no paths to measure variability on");
  const int L = bank.num_layers();

  std::vector<double> within(L, 0.0);
  for (size_t i = 0; i < paths.size(); ++i) {
    const FeaturePath& p = paths[i];
    if (!p.label || *p.label < 0 || *p.label >= K) {
      throw InvalidArgument("path " + std::to_string(i) + " lacks a valid label");
    }
    bank.check_path(p);
    for (int l = 0; l < L; ++l) {
      const auto mu = bank.centroid(*p.label, l);
      const double n = norm(p.layers[l]);
      double d2 = 0.0;
      for (size_t k = 0; k < mu.size(); ++k) {
        const double unit = n > 0.0 ? p.layers[l][k] / n : 0.0;
        d2 += (unit - mu[k]) * (unit - mu[k]);
      }
      within[l] += d2;
    }
  }

  std::vector<double> ratio(L);
  const double pairs = static_cast<double>(K) * (K - 1) / 2.0;
  for (int l = 0; l < L; ++l) {
    double between = 0.0;
    for (int a = 0; a < K; ++a) {
      for (int b = a + 1; b < K; ++b) {
        const auto ma = bank.centroid(a, l);
        const auto mb = bank.centroid(b, l);
        for (size_t k = 0; k < ma.size(); ++k) between += (ma[k] - mb[k]) * (ma[k] - mb[k]);
      }
    }
    between /= pairs;
    if (!(between > 0.0)) {
      throw DegenerateError("class centroids coincide at layer " + std::to_string(l) +
                            "; variability ratio undefined");
    }
    ratio[l] = (within[l] / static_cast<double>(paths.size())) / between;
  }
  return ratio;
}

int nearest_centroid(const FeaturePath& path, const CentroidBank& bank, int layer) {
  int best = 0;
  double best_s = -INFINITY;
  for (int c = 0; c < bank.num_classes(); ++c) {
    const double s = cosine_similarity(path.layers[layer], bank.centroid(c, layer));
    if (s > best_s) {
      best_s = s;
      best = c;
    }
  }
  return best;
}

}  // namespace fpath
