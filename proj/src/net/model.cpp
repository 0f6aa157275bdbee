#include "mtmask/net/model.hpp"

namespace mtmask::net {

void Architecture::check() const {
  if (in_channels <= 0) throw DataError("architecture: in_channels must be positive");
  if (widths.empty()) throw DataError("architecture: at least one backbone block required");
  for (int w : widths)
    if (w <= 0) throw DataError("architecture: block widths must be positive");
  if (heads.empty()) throw DataError("architecture: at least one head required");
  for (std::size_t i = 0; i < heads.size(); ++i)
    for (std::size_t j = i + 1; j < heads.size(); ++j)
      if (heads[i] == heads[j]) throw DataError("architecture: duplicate head '" + std::string(mask_name(heads[i])) + "'");
}

Architecture single_task_variant(Architecture arch, MaskKind mask) {
  arch.heads = {mask};
  return arch;
}

Architecture single_task_variant(Architecture arch, std::string_view mask_name) {
  const auto kind = parse_mask_name(mask_name);
  if (!kind) throw DataError("unknown mask name '" + std::string(mask_name) + "'");
  return single_task_variant(std::move(arch), *kind);
}

Tensor<float> normalize_input(const TileStack& tile) {
  tile.check();
  Tensor<float> x({tile.height, tile.width, kBandCount}, 0.0f);
  for (std::size_t p = 0; p < tile.pixel_count(); ++p) {
    if (!tile.valid.values[p]) continue;
    for (int b = 0; b < kBandCount; ++b) x[p * kBandCount + b] = (tile.bands[b].values[p] - 0.5f) / 0.5f;
  }
  return x;
}

Prediction multitask_forward(const MultiTaskModel& model, const TileStack& tile) {
  const Tensor<float> probs = model.infer(normalize_input(tile));
  Prediction out;
  const int nh = model.head_count();
  for (int m = 0; m < nh; ++m) {
    out.kinds.push_back(model.heads()[m].kind);
    FloatPlane p(tile.width, tile.height);
    for (std::size_t i = 0; i < p.size(); ++i) p.values[i] = probs[i * nh + m];
    out.probs.push_back(std::move(p));
  }
  return out;
}

MaskSet binarize(const Prediction& pred, int width, int height) {
  MaskSet masks(width, height);
  for (std::size_t k = 0; k < pred.kinds.size(); ++k) {
    auto& plane = masks[pred.kinds[k]];
    const auto& p = pred.probs[k];
    if (!p.same_shape(plane)) throw DataError("binarize: probability plane size mismatch");
    for (std::size_t i = 0; i < p.size(); ++i) plane.values[i] = p.values[i] > 0.5f ? 1 : 0;
  }
  return masks;
}

}  // namespace mtmask::net
