#include "fpath/nn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "fpath/error.hpp"
#include "fpath/rng.hpp"
#include "parallel.hpp"

namespace fpath {

namespace {

void check_layout(const std::vector<int>& dims, const std::vector<int>& taps) {
  if (dims.size() < 2) throw InvalidArgument("a network needs at least input and output dims");
  for (size_t i = 0; i < dims.size(); ++i) {
    if (dims[i] <= 0) throw InvalidArgument("layer dim " + std::to_string(i) + " is not positive");
  }
  const int hidden = static_cast<int>(dims.size()) - 2;
  for (size_t i = 0; i < taps.size(); ++i) {
    if (taps[i] < 0 || taps[i] >= hidden) {
      throw InvalidArgument("tap point " + std::to_string(taps[i]) +
                            " does not name a hidden layer (have " + std::to_string(hidden) + ")");
    }
    if (i > 0 && taps[i] <= taps[i - 1]) {
      throw InvalidArgument("tap points must be strictly increasing");
    }
  }
}

}  // namespace

TapNet::TapNet(std::vector<int> layer_dims, std::vector<int> tap_points, uint64_t seed)
    : layer_dims_(std::move(layer_dims)), tap_points_(std::move(tap_points)) {
  check_layout(layer_dims_, tap_points_);
  Rng rng(seed);
  for (size_t i = 0; i + 1 < layer_dims_.size(); ++i) {
    const int in = layer_dims_[i];
    const int out = layer_dims_[i + 1];
    const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
    Eigen::MatrixXd w(out, in);
    for (int r = 0; r < out; ++r) {
      for (int c = 0; c < in; ++c) w(r, c) = rng.uniform(-limit, limit);
    }
    weights_.push_back(std::move(w));
    biases_.push_back(Eigen::VectorXd::Zero(out));
  }
}

TapNet::TapNet(std::vector<int> layer_dims, std::vector<int> tap_points,
               std::vector<Eigen::MatrixXd> weights, std::vector<Eigen::VectorXd> biases)
    : layer_dims_(std::move(layer_dims)),
      tap_points_(std::move(tap_points)),
      weights_(std::move(weights)),
      biases_(std::move(biases)) {
  validate();
}

std::vector<int> TapNet::tap_dims() const {
  std::vector<int> dims;
  dims.reserve(tap_points_.size());
  for (int t : tap_points_) dims.push_back(layer_dims_[t + 1]);
  return dims;
}

size_t TapNet::num_parameters() const {
  size_t n = 0;
  for (size_t i = 0; i < weights_.size(); ++i) n += weights_[i].size() + biases_[i].size();
  return n;
}

void TapNet::validate() const {
  check_layout(layer_dims_, tap_points_);
  if (weights_.size() + 1 != layer_dims_.size() || biases_.size() != weights_.size()) {
    throw ShapeError("parameter count does not match layer dims");
  }
  for (size_t i = 0; i < weights_.size(); ++i) {
    if (weights_[i].rows() != layer_dims_[i + 1] || weights_[i].cols() != layer_dims_[i]) {
      throw ShapeError("weight " + std::to_string(i) + " has shape " +
                       std::to_string(weights_[i].rows()) + "x" +
                       std::to_string(weights_[i].cols()) + ", expected " +
                       std::to_string(layer_dims_[i + 1]) + "x" + std::to_string(layer_dims_[i]));
    }
    if (biases_[i].size() != layer_dims_[i + 1]) {
      throw ShapeError("bias " + std::to_string(i) + " has wrong length");
    }
    if (!weights_[i].allFinite() || !biases_[i].allFinite()) {
      throw NumericError("layer " + std::to_string(i) + " has non-finite parameters");
    }
  }
}

int ForwardTrace::predicted_class() const {
  Eigen::Index best = 0;
  logits.maxCoeff(&best);
  return static_cast<int>(best);
}

Gradients Gradients::zeros_like(const TapNet& net) {
  Gradients g;
  for (size_t i = 0; i < net.weights().size(); ++i) {
    g.weights.push_back(Eigen::MatrixXd::Zero(net.weights()[i].rows(), net.weights()[i].cols()));
    g.biases.push_back(Eigen::VectorXd::Zero(net.biases()[i].size()));
  }
  g.input = Eigen::VectorXd::Zero(net.input_dim());
  return g;
}

void Gradients::accumulate(const Gradients& other) {
  for (size_t i = 0; i < weights.size(); ++i) {
    weights[i] += other.weights[i];
    biases[i] += other.biases[i];
  }
}

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  const double m = logits.maxCoeff();
  Eigen::VectorXd e = (logits.array() - m).exp().matrix();
  return e / e.sum();
}

double cross_entropy(const Eigen::VectorXd& logits, int label) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(label);
}

ForwardTrace forward(const TapNet& net, std::span<const double> input) {
  if (static_cast<int>(input.size()) != net.input_dim()) {
    throw ShapeError("input has dim " + std::to_string(input.size()) + ", network expects " +
                     std::to_string(net.input_dim()));
  }
  for (double v : input) {
    if (!std::isfinite(v)) throw NumericError("input contains a non-finite value");
  }

  ForwardTrace t;
  const int layers = net.num_layers();
  t.activations.reserve(layers + 1);
  t.pre_activations.reserve(layers);
  t.activations.emplace_back(Eigen::Map<const Eigen::VectorXd>(input.data(), input.size()));

  for (int i = 0; i < layers; ++i) {
    Eigen::VectorXd z = net.weights()[i] * t.activations.back() + net.biases()[i];
    t.pre_activations.push_back(z);
    if (i + 1 < layers) {
      t.activations.push_back(z.cwiseMax(0.0));
    } else {
      t.activations.push_back(std::move(z));
    }
  }
  t.logits = t.activations.back();
  t.probabilities = softmax(t.logits);

  t.tapped_features.reserve(net.tap_points().size());
  for (int tap : net.tap_points()) {
    const Eigen::VectorXd& a = t.activations[tap + 1];
    t.tapped_features.emplace_back(a.data(), a.data() + a.size());
  }
  return t;
}

namespace {

LossAndGrad backprop(const TapNet& net, std::span<const double> input, int label,
                     bool parameter_grads) {
  if (label < 0 || label >= net.num_classes()) {
    throw InvalidArgument("label " + std::to_string(label) + " outside [0, " +
                          std::to_string(net.num_classes()) + ")");
  }
  const ForwardTrace t = forward(net, input);
  LossAndGrad out;
  out.loss = cross_entropy(t.logits, label);

  const int layers = net.num_layers();
  if (parameter_grads) {
    out.grad.weights.resize(layers);
    out.grad.biases.resize(layers);
  }
  Eigen::VectorXd delta = t.probabilities;
  delta(label) -= 1.0;
  for (int i = layers - 1; i >= 0; --i) {
    if (parameter_grads) {
      out.grad.weights[i] = delta * t.activations[i].transpose();
      out.grad.biases[i] = delta;
    }
    Eigen::VectorXd upstream = net.weights()[i].transpose() * delta;
    if (i > 0) {
      const Eigen::VectorXd& z = t.pre_activations[i - 1];
      for (Eigen::Index k = 0; k < upstream.size(); ++k) {
        if (z(k) <= 0.0) upstream(k) = 0.0;
      }
    }
    delta = std::move(upstream);
  }
  out.grad.input = std::move(delta);
  return out;
}

}  // namespace

LossAndGrad loss_and_grad(const TapNet& net, std::span<const double> input, int label) {
  return backprop(net, input, label, true);
}

LossAndGrad loss_and_input_grad(const TapNet& net, std::span<const double> input, int label) {
  return backprop(net, input, label, false);
}

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("learning_rate must be finite and nonnegative");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("momentum must be in [0, 1)");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw InvalidArgument("weight_decay must be finite and nonnegative");
  }
  if (batch_size <= 0) throw InvalidArgument("batch_size must be positive");
  if (epochs <= 0) throw InvalidArgument("epochs must be positive");
  if (!(lr_drop_factor > 0.0)) throw InvalidArgument("lr_drop_factor must be positive");
  for (size_t i = 0; i < lr_drop_epochs.size(); ++i) {
    const int e = lr_drop_epochs[i];
    if (e < 1 || e > epochs) throw InvalidArgument("lr_drop_epochs must lie in [1, epochs]");
    if (i > 0 && e <= lr_drop_epochs[i - 1]) {
      throw InvalidArgument("lr_drop_epochs must be strictly increasing");
    }
  }
}

TrainStats train(TapNet& net, const Dataset& data, const TrainConfig& cfg,
                 const InputTransform& transform) {
  cfg.validate();
  data.validate();
  if (data.empty()) throw InvalidArgument("cannot train on an empty dataset");
  if (data.dim != net.input_dim()) throw ShapeError("dataset dim does not match network input");
  if (data.num_classes > net.num_classes()) {
    throw ShapeError("dataset has more classes than network outputs");
  }

  const int layers = net.num_layers();
  Gradients velocity = Gradients::zeros_like(net);
  std::vector<size_t> order(data.size());
  std::iota(order.begin(), order.end(), size_t{0});
  Rng rng(cfg.rng_seed);
  double lr = cfg.learning_rate;
  TrainStats stats;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    int batch_index = 0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const size_t end = std::min(order.size(), start + static_cast<size_t>(cfg.batch_size));
      Gradients sum = Gradients::zeros_like(net);
      double batch_loss = 0.0;
      if (transform) {
        // The per-example attacks dominate; run them in parallel and reduce in
        // batch order so the sum is identical for any thread count.
        std::vector<LossAndGrad> parts(end - start);
        detail::parallel_for(parts.size(), [&](size_t k) {
          const size_t idx = order[start + k];
          const std::vector<double> x = transform(net, data.input(idx), data.labels[idx]);
          parts[k] = loss_and_grad(net, x, data.labels[idx]);
        });
        for (const auto& lg : parts) {
          batch_loss += lg.loss;
          sum.accumulate(lg.grad);
        }
      } else {
        for (size_t k = start; k < end; ++k) {
          const size_t idx = order[k];
          const LossAndGrad lg = loss_and_grad(net, data.input(idx), data.labels[idx]);
          batch_loss += lg.loss;
          sum.accumulate(lg.grad);
        }
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_index));
      }
      epoch_loss += batch_loss;
      const double scale = 1.0 / static_cast<double>(end - start);
      for (int i = 0; i < layers; ++i) {
        velocity.weights[i] =
            cfg.momentum * velocity.weights[i] + scale * sum.weights[i] + cfg.weight_decay * net.weights()[i];
        velocity.biases[i] =
            cfg.momentum * velocity.biases[i] + scale * sum.biases[i] + cfg.weight_decay * net.biases()[i];
        net.weights()[i] -= lr * velocity.weights[i];
        net.biases()[i] -= lr * velocity.biases[i];
      }
    }
    stats.final_epoch_loss = epoch_loss / static_cast<double>(data.size());
    stats.epoch_losses.push_back(stats.final_epoch_loss);
    if (std::find(cfg.lr_drop_epochs.begin(), cfg.lr_drop_epochs.end(), epoch) !=
        cfg.lr_drop_epochs.end()) {
      lr /= cfg.lr_drop_factor;
    }
  }
  return stats;
}

double accuracy(const TapNet& net, const Dataset& data) {
  if (data.empty()) throw InvalidArgument("accuracy of an empty dataset is undefined");
  size_t correct = 0;
  for (size_t i = 0; i < data.size(); ++i) {
    if (forward(net, data.input(i)).predicted_class() == data.labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

}  // namespace fpath
