#include "fpath/dataset.hpp"

#include <cmath>
#include <string>

#include "fpath/error.hpp"
#include "fpath/rng.hpp"

namespace fpath {

void Dataset::validate() const {
  if (dim <= 0) throw InvalidArgument("dataset dim must be positive");
  if (num_classes <= 0) throw InvalidArgument("dataset must have at least one class");
  if (inputs.size() != labels.size()) {
    throw ShapeError("dataset has " + std::to_string(inputs.size()) + " inputs but " +
                     std::to_string(labels.size()) + " labels");
  }
  for (size_t i = 0; i < inputs.size(); ++i) {
    if (static_cast<int>(inputs[i].size()) != dim) {
      throw ShapeError("example " + std::to_string(i) + " has dim " +
                       std::to_string(inputs[i].size()) + ", expected " + std::to_string(dim));
    }
    if (labels[i] < 0 || labels[i] >= num_classes) {
      throw InvalidArgument("example " + std::to_string(i) + " label " +
                            std::to_string(labels[i]) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
    for (double v : inputs[i]) {
      if (!std::isfinite(v)) throw NumericError("example " + std::to_string(i) + " is not finite");
    }
  }
}

std::vector<std::vector<double>> blob_means(const SynthParams& p) {
  if (p.num_classes < 1 || p.dim < 1) throw InvalidArgument("classes and dim must be positive");
  if (!(p.separation > 0.0) || !std::isfinite(p.separation)) {
    throw InvalidArgument("separation must be positive");
  }
  if (p.num_classes > 2 * p.dim) {
    throw InvalidArgument("cannot place " + std::to_string(p.num_classes) +
                          " classes at separation " + std::to_string(p.separation) + " in dim " +
                          std::to_string(p.dim) + " (at most " + std::to_string(2 * p.dim) + ")");
  }
  // Means at +a*e_i, then -a*e_i once the positive axes run out. Means on
  // distinct axes are a*sqrt(2) apart and antipodal ones 2a, so the minimum
  // pairwise distance is a*sqrt(2), or 2a when dim == 1.
  const bool antipodal_only = p.dim == 1;
  const double a = antipodal_only ? p.separation / 2.0 : p.separation / std::sqrt(2.0);
  std::vector<std::vector<double>> means(p.num_classes, std::vector<double>(p.dim, 0.0));
  for (int c = 0; c < p.num_classes; ++c) {
    const int axis = c % p.dim;
    means[c][axis] = c < p.dim ? a : -a;
  }
  return means;
}

namespace {

Dataset sample_split(const std::vector<std::vector<double>>& means, int per_class,
                     double squash_scale, Rng& rng) {
  Dataset d;
  d.num_classes = static_cast<int>(means.size());
  d.dim = static_cast<int>(means.front().size());
  d.inputs.reserve(static_cast<size_t>(per_class) * means.size());
  // Interleave classes so any prefix is roughly balanced.
  for (int i = 0; i < per_class; ++i) {
    for (int c = 0; c < d.num_classes; ++c) {
      std::vector<double> x(d.dim);
      for (int k = 0; k < d.dim; ++k) {
        const double raw = means[c][k] + rng.normal();
        x[k] = 1.0 / (1.0 + std::exp(-raw / squash_scale));
      }
      d.inputs.push_back(std::move(x));
      d.labels.push_back(c);
    }
  }
  return d;
}

}  // namespace

SynthSplits synth_blobs(const SynthParams& p) {
  const auto means = blob_means(p);
  if (p.train_per_class < 1) throw InvalidArgument("train_per_class must be positive");
  if (p.calib_per_class < 0 || p.test_per_class < 0) {
    throw InvalidArgument("per-class counts must be nonnegative");
  }
  if (!(p.squash_scale > 0.0)) throw InvalidArgument("squash_scale must be positive");
  Rng rng(p.seed);
  SynthSplits s;
  s.train = sample_split(means, p.train_per_class, p.squash_scale, rng);
  s.calib = sample_split(means, p.calib_per_class, p.squash_scale, rng);
  s.test = sample_split(means, p.test_per_class, p.squash_scale, rng);
  return s;
}

}  // namespace fpath
