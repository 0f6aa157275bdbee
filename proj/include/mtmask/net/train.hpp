#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mtmask/net/loss.hpp"
#include "mtmask/net/model.hpp"

namespace mtmask::net {

/// A training example: normalised input, all five label planes as an
/// [H x W x 5] tensor in MaskKind order, and the validity plane.
struct Sample {
  Tensor<float> input;
  Tensor<float> targets;
  MaskPlane valid;
};

Sample make_sample(const TileStack& tile, const MaskSet& labels);

/// Label channels matching `heads`, in head order.
Tensor<float> select_targets(const Tensor<float>& all_targets, const std::vector<MaskKind>& heads);

enum class OptimizerKind { sgd_momentum, adam };
std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

/// First-order optimiser over a fixed list of parameter tensors.
///
/// sgd_momentum: v = momentum * v + g; p -= lr * v.
/// adam: standard bias-corrected moments with beta1 0.9, beta2 0.999, eps 1e-8.
class Optimizer {
public:
  Optimizer(OptimizerKind kind, double learning_rate, double momentum, const std::vector<Tensor<float>*>& params);
  void step(const std::vector<Tensor<float>*>& params, const std::vector<Tensor<float>>& grads);

private:
  OptimizerKind kind_;
  double lr_;
  double momentum_;
  long long t_ = 0;
  std::vector<Tensor<float>> m_, v_;
};

/// Scales all gradients so their joint L2 norm is at most max_norm (no-op for
/// max_norm <= 0). Returns the norm before clipping.
double clip_gradients(std::vector<Tensor<float>>& grads, double max_norm);

struct TrainConfig {
  int epochs = 100;
  int batch_size = 1;
  double learning_rate = 1e-2;
  OptimizerKind optimizer = OptimizerKind::sgd_momentum;
  double momentum = 0.9;
  std::uint64_t seed = 0;
  double grad_clip = 5.0;
  /// Called after every epoch with the 1-based epoch, its mean loss and the
  /// current model; returning true stops training.
  std::function<bool(int, double, const MultiTaskModel&)> on_epoch;

  void check() const;
};

struct TrainResult {
  MultiTaskModel model;
  std::vector<double> loss_curve;
  int epochs_run = 0;
};

/// Loss of one sample for the model's heads and, when `grads` is non-null,
/// accumulation of scale * dL/dparams.
double sample_loss_and_gradients(const MultiTaskModel& model, const Sample& sample, std::vector<Tensor<float>>* grads,
                                 double scale = 1.0);

/// Mini-batch training on the multi-task loss. Batches are drawn from a
/// seeded shuffle per epoch; the epoch loss is the mean of its batch losses
/// measured before each update. Single-threaded and deterministic. Throws
/// NumericError when a loss or gradient becomes non-finite.
TrainResult train(MultiTaskModel model, std::span<const Sample> data, const TrainConfig& config);

}  // namespace mtmask::net
