#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "fpath/dataset.hpp"

namespace fpath {

/// Fully-connected rectifier network whose hidden-layer outputs can be tapped
/// to form a feature path. Layer `i` maps `layer_dims[i]` to `layer_dims[i+1]`;
/// every layer except the last is followed by a ReLU. Tap point `t` refers to
/// the post-activation output of hidden layer `t` (0-based).
class TapNet {
 public:
  TapNet() = default;

  /// Glorot-uniform weights, zero biases.
  TapNet(std::vector<int> layer_dims, std::vector<int> tap_points, uint64_t seed);

  /// Adopts explicit parameters (used by checkpoints and tests).
  TapNet(std::vector<int> layer_dims, std::vector<int> tap_points,
         std::vector<Eigen::MatrixXd> weights, std::vector<Eigen::VectorXd> biases);

  const std::vector<int>& layer_dims() const { return layer_dims_; }
  const std::vector<int>& tap_points() const { return tap_points_; }
  int input_dim() const { return layer_dims_.front(); }
  int num_classes() const { return layer_dims_.back(); }
  int num_layers() const { return static_cast<int>(weights_.size()); }
  int num_hidden() const { return num_layers() - 1; }
  int path_length() const { return static_cast<int>(tap_points_.size()); }
  /// Width of each tapped feature, in tap order.
  std::vector<int> tap_dims() const;

  std::vector<Eigen::MatrixXd>& weights() { return weights_; }
  std::vector<Eigen::VectorXd>& biases() { return biases_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return weights_; }
  const std::vector<Eigen::VectorXd>& biases() const { return biases_; }

  size_t num_parameters() const;

  /// Throws unless dims, taps and parameter shapes agree and are finite.
  void validate() const;

 private:
  std::vector<int> layer_dims_;
  std::vector<int> tap_points_;
  std::vector<Eigen::MatrixXd> weights_;
  std::vector<Eigen::VectorXd> biases_;
};

struct ForwardTrace {
  Eigen::VectorXd logits;
  Eigen::VectorXd probabilities;
  std::vector<std::vector<double>> tapped_features;

  // Backprop cache: activations[0] is the input, activations[i+1] the output
  // of layer i (post-ReLU for hidden layers, logits for the last).
  std::vector<Eigen::VectorXd> activations;
  std::vector<Eigen::VectorXd> pre_activations;

  int predicted_class() const;
};

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd input;

  static Gradients zeros_like(const TapNet& net);
  void accumulate(const Gradients& other);
};

struct LossAndGrad {
  double loss = 0.0;
  Gradients grad;
};

ForwardTrace forward(const TapNet& net, std::span<const double> input);

/// Cross-entropy of softmax(logits) against `label`, with exact gradients
/// w.r.t. all parameters and the input.
LossAndGrad loss_and_grad(const TapNet& net, std::span<const double> input, int label);

/// Loss and input gradient only; skips parameter-gradient outer products.
LossAndGrad loss_and_input_grad(const TapNet& net, std::span<const double> input, int label);

/// Numerically stable -log softmax(logits)[label].
double cross_entropy(const Eigen::VectorXd& logits, int label);

Eigen::VectorXd softmax(const Eigen::VectorXd& logits);

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  int batch_size = 64;
  int epochs = 40;
  std::vector<int> lr_drop_epochs = {25, 35};
  double lr_drop_factor = 10.0;
  uint64_t rng_seed = 1;

  void validate() const;
};

struct TrainStats {
  double final_epoch_loss = 0.0;
  std::vector<double> epoch_losses;
};

/// Maps an example to the input actually fed to the network for one SGD step.
/// Identity for standard training; adversarial training substitutes a PGD
/// perturbation here. It may be called concurrently for different examples.
using InputTransform =
    std::function<std::vector<double>(const TapNet&, std::span<const double>, int)>;

/// Mini-batch SGD with momentum and L2 weight decay. The learning rate is
/// divided by `lr_drop_factor` once each epoch listed in `lr_drop_epochs`
/// completes (1-based). Deterministic for a fixed seed.
TrainStats train(TapNet& net, const Dataset& data, const TrainConfig& cfg,
                 const InputTransform& transform = {});

double accuracy(const TapNet& net, const Dataset& data);

}  // namespace fpath
