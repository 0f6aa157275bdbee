#include "mtmask/net/loss.hpp"

namespace mtmask::net {

double mask_bce(const FloatPlane& pred, const MaskPlane& label, const MaskPlane& valid) {
  if (!pred.same_shape(label) || !pred.same_shape(valid)) throw DataError("bce: dimension mismatch");
  double sum = 0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid.values[i]) continue;
    const double q = std::clamp(static_cast<double>(pred.values[i]), kBceEpsilon, 1.0 - kBceEpsilon);
    const double y = label.values[i] ? 1.0 : 0.0;
    sum += -(y * std::log(q) + (1.0 - y) * std::log(1.0 - q));
    ++n;
  }
  if (n == 0) throw DataError("bce: no valid pixels");
  return sum / static_cast<double>(n);
}

double multitask_loss(const Prediction& pred, const MaskSet& labels, const MaskPlane& valid) {
  double total = 0;
  for (std::size_t k = 0; k < pred.kinds.size(); ++k) total += mask_bce(pred.probs[k], labels[pred.kinds[k]], valid);
  return total;
}

double multitask_loss(std::span<const Prediction> preds, std::span<const MaskSet> labels, std::span<const MaskPlane> valid) {
  if (preds.empty()) throw DataError("loss: empty batch");
  if (preds.size() != labels.size() || preds.size() != valid.size()) throw DataError("loss: batch lists differ in length");
  double total = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += multitask_loss(preds[i], labels[i], valid[i]);
  return total / static_cast<double>(preds.size());
}

}  // namespace mtmask::net
