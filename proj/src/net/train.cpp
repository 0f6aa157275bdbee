#include "mtmask/net/train.hpp"

#include <cmath>
#include <numeric>

namespace mtmask::net {

Sample make_sample(const TileStack& tile, const MaskSet& labels) {
  labels.check();
  if (labels.width() != tile.width || labels.height() != tile.height) throw DataError("sample: labels do not match tile");
  Sample s{normalize_input(tile), Tensor<float>({tile.height, tile.width, kMaskCount}, 0.0f), tile.valid};
  for (std::size_t p = 0; p < tile.pixel_count(); ++p)
    for (int m = 0; m < kMaskCount; ++m) s.targets[p * kMaskCount + m] = labels.planes[m].values[p] ? 1.0f : 0.0f;
  return s;
}

Tensor<float> select_targets(const Tensor<float>& all, const std::vector<MaskKind>& heads) {
  const int H = all.dim(0), W = all.dim(1), nh = static_cast<int>(heads.size());
  Tensor<float> t({H, W, nh});
  for (std::size_t p = 0; p < static_cast<std::size_t>(H) * W; ++p)
    for (int m = 0; m < nh; ++m) t[p * nh + m] = all[p * kMaskCount + static_cast<int>(heads[m])];
  return t;
}

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::adam ? "adam" : "sgd_momentum"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd_momentum" || name == "sgd") return OptimizerKind::sgd_momentum;
  if (name == "adam") return OptimizerKind::adam;
  throw DataError("unknown optimizer '" + std::string(name) + "'");
}

Optimizer::Optimizer(OptimizerKind kind, double learning_rate, double momentum, const std::vector<Tensor<float>*>& params)
    : kind_(kind), lr_(learning_rate), momentum_(momentum) {
  for (const auto* p : params) {
    m_.emplace_back(p->shape, 0.0f);
    if (kind_ == OptimizerKind::adam) v_.emplace_back(p->shape, 0.0f);
  }
}

void Optimizer::step(const std::vector<Tensor<float>*>& params, const std::vector<Tensor<float>>& grads) {
  ++t_;
  if (kind_ == OptimizerKind::sgd_momentum) {
    const float mu = static_cast<float>(momentum_), lr = static_cast<float>(lr_);
    for (std::size_t k = 0; k < params.size(); ++k) {
      auto& p = params[k]->data;
      auto& v = m_[k].data;
      const auto& g = grads[k].data;
      for (std::size_t i = 0; i < p.size(); ++i) {
        v[i] = mu * v[i] + g[i];
        p[i] -= lr * v[i];
      }
    }
    return;
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k]->data;
    auto& m = m_[k].data;
    auto& v = v_[k].data;
    const auto& g = grads[k].data;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = static_cast<float>(b1 * m[i] + (1.0 - b1) * g[i]);
      v[i] = static_cast<float>(b2 * v[i] + (1.0 - b2) * static_cast<double>(g[i]) * g[i]);
      const double mh = m[i] / c1, vh = v[i] / c2;
      p[i] -= static_cast<float>(lr_ * mh / (std::sqrt(vh) + eps));
    }
  }
}

double clip_gradients(std::vector<Tensor<float>>& grads, double max_norm) {
  double sq = 0;
  for (const auto& g : grads)
    for (float v : g.data) sq += static_cast<double>(v) * v;
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float s = static_cast<float>(max_norm / norm);
    for (auto& g : grads)
      for (auto& v : g.data) v *= s;
  }
  return norm;
}

void TrainConfig::check() const {
  if (epochs <= 0) throw DataError("train: epochs must be positive");
  if (batch_size <= 0) throw DataError("train: batch size must be positive");
  if (!(learning_rate >= 0.0)) throw DataError("train: learning rate must be non-negative");
}

double sample_loss_and_gradients(const MultiTaskModel& model, const Sample& sample, std::vector<Tensor<float>>* grads,
                                 double scale) {
  Activations<float> acts;
  const Tensor<float> probs = model.forward(sample.input, acts);
  const Tensor<float> targets = select_targets(sample.targets, model.architecture().heads);
  if (!grads) return bce_loss_grad_probs<float>(probs, targets, sample.valid, nullptr, scale);
  Tensor<float> glogits;
  const double loss = bce_loss_grad_logits(probs, targets, sample.valid, glogits, scale);
  model.backward(acts, glogits, *grads);
  return loss;
}

TrainResult train(MultiTaskModel model, std::span<const Sample> data, const TrainConfig& config) {
  config.check();
  if (data.empty()) throw DataError("train: empty dataset");

  TrainResult result;
  auto params = model.parameters();
  Optimizer opt(config.optimizer, config.learning_rate, config.momentum, params);
  std::vector<std::size_t> order(data.size());
  const Rng shuffle_root = Rng(config.seed).derive(0x5348554646ULL);

  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = shuffle_root.derive(static_cast<std::uint64_t>(epoch));
    for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);

    double epoch_loss = 0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      const double scale = 1.0 / static_cast<double>(end - start);
      auto grads = model.zero_gradients();
      double batch_loss = 0;
      for (std::size_t i = start; i < end; ++i) batch_loss += sample_loss_and_gradients(model, data[order[i]], &grads, scale);
      const double norm = clip_gradients(grads, config.grad_clip);
      if (!std::isfinite(batch_loss) || !std::isfinite(norm))
        throw NumericError("train: non-finite loss or gradient at epoch " + std::to_string(epoch) + " (loss " +
                           std::to_string(batch_loss) + ", grad norm " + std::to_string(norm) + ")");
      opt.step(params, grads);
      epoch_loss += batch_loss;
      ++batches;
    }
    epoch_loss /= batches;
    result.loss_curve.push_back(epoch_loss);
    result.epochs_run = epoch;
    if (config.on_epoch && config.on_epoch(epoch, epoch_loss, model)) break;
  }
  result.model = std::move(model);
  return result;
}

}  // namespace mtmask::net
