#pragma once

#include <cmath>
#include <span>

#include "mtmask/net/model.hpp"

namespace mtmask::net {

inline constexpr double kBceEpsilon = 1e-7;

/// Per-pixel binary cross entropy averaged over valid pixels for one mask.
/// Predictions are clamped to [eps, 1 - eps]. Throws DataError if no pixel is valid.
double mask_bce(const FloatPlane& pred, const MaskPlane& label, const MaskPlane& valid);

/// Sum over the predicted masks of mask_bce against the matching label plane.
double multitask_loss(const Prediction& pred, const MaskSet& labels, const MaskPlane& valid);

/// Mean over the batch of the per-scene multi-task loss.
double multitask_loss(std::span<const Prediction> preds, std::span<const MaskSet> labels, std::span<const MaskPlane> valid);

/// Loss and dL/dprob for probabilities [H x W x heads] against targets of the
/// same shape, summed over heads, each head averaged over valid pixels. The
/// derivative is zero where the clamp is active.
template <typename T>
double bce_loss_grad_probs(const Tensor<T>& probs, const Tensor<T>& targets, const MaskPlane& valid, Tensor<T>* grad_probs,
                           double scale = 1.0) {
  const int nh = probs.dim(2);
  const std::size_t n = probs.size() / static_cast<std::size_t>(nh);
  std::size_t count = 0;
  for (auto v : valid.values) count += v ? 1 : 0;
  if (count == 0) throw DataError("loss: no valid pixels");
  if (grad_probs) *grad_probs = Tensor<T>(probs.shape, T{0});
  const double inv = 1.0 / static_cast<double>(count);
  double total = 0;
  for (int m = 0; m < nh; ++m) {
    double sum = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (!valid.values[p]) continue;
      const std::size_t i = p * nh + m;
      const double raw = probs[i];
      const double q = std::clamp(raw, kBceEpsilon, 1.0 - kBceEpsilon);
      const double y = targets[i];
      sum += -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
      if (grad_probs && raw > kBceEpsilon && raw < 1.0 - kBceEpsilon)
        (*grad_probs)[i] = static_cast<T>(scale * inv * (-(y / q) + (1.0 - y) / (1.0 - q)));
    }
    total += sum * inv;
  }
  return total * scale;
}

/// Same loss with the gradient taken through the sigmoid: dL/dlogit =
/// (p - y) / n_valid where the clamp is inactive. Mathematically equal to
/// chaining bce_loss_grad_probs with sigmoid_backward, without the
/// cancellation of p(1-p) for saturated probabilities.
template <typename T>
double bce_loss_grad_logits(const Tensor<T>& probs, const Tensor<T>& targets, const MaskPlane& valid, Tensor<T>& grad_logits,
                            double scale = 1.0) {
  const int nh = probs.dim(2);
  const std::size_t n = probs.size() / static_cast<std::size_t>(nh);
  std::size_t count = 0;
  for (auto v : valid.values) count += v ? 1 : 0;
  if (count == 0) throw DataError("loss: no valid pixels");
  grad_logits = Tensor<T>(probs.shape, T{0});
  const double inv = 1.0 / static_cast<double>(count);
  double total = 0;
  for (int m = 0; m < nh; ++m) {
    double sum = 0;
    for (std::size_t p = 0; p < n; ++p) {
      if (!valid.values[p]) continue;
      const std::size_t i = p * nh + m;
      const double raw = probs[i];
      const double q = std::clamp(raw, kBceEpsilon, 1.0 - kBceEpsilon);
      const double y = targets[i];
      sum += -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
      if (raw > kBceEpsilon && raw < 1.0 - kBceEpsilon) grad_logits[i] = static_cast<T>(scale * inv * (raw - y));
    }
    total += sum * inv;
  }
  return total * scale;
}

}  // namespace mtmask::net
