#pragma once

#include <string>
#include <vector>

#include "mtmask/net/ops.hpp"
#include "mtmask/raster.hpp"
#include "mtmask/rng.hpp"

namespace mtmask::net {

/// Shape of a multi-task segmentation network.
///
/// Backbone: for each width w, a 3x3 same-padded conv to w channels, ReLU and
/// 2x2 max pooling. An optional residual attention block treats the coarsest
/// map as a sequence of h*w tokens of width widths.back(). The result is
/// bilinearly upsampled to the input grid and, with `skip`, concatenated
/// after the first block's full-resolution ReLU output. Each head is a 1x1
/// conv to one channel followed by a sigmoid.
struct Architecture {
  int in_channels = kBandCount;
  std::vector<int> widths{16, 32, 32};
  bool attention = true;
  bool skip = true;
  std::vector<MaskKind> heads{kAllMasks.begin(), kAllMasks.end()};

  int feature_channels() const { return widths.back() + (skip ? widths.front() : 0); }
  bool same_backbone(const Architecture& o) const {
    return in_channels == o.in_channels && widths == o.widths && attention == o.attention && skip == o.skip;
  }
  /// Throws DataError for empty widths or non-positive sizes.
  void check() const;
  bool operator==(const Architecture&) const = default;
};

/// Reference configuration with one head, used for the single-task comparison.
Architecture single_task_variant(Architecture arch, MaskKind mask);
Architecture single_task_variant(Architecture arch, std::string_view mask_name);

template <typename T>
struct ConvBlock {
  Tensor<T> kernel;  // [3 x 3 x Cin x Cout]
  Tensor<T> bias;    // [Cout]
};

template <typename T>
struct Head {
  MaskKind kind;
  Tensor<T> weight;  // [C]
  Tensor<T> bias;    // [1]
};

/// Intermediate values kept by a forward pass for the backward pass.
template <typename T>
struct Activations {
  Tensor<T> input;
  std::vector<Tensor<T>> pre_relu, post_relu, pooled;
  std::vector<std::vector<std::size_t>> argmax;
  Tensor<T> tokens;  // coarsest map as [n x d]
  AttentionCache<T> attn;
  Tensor<T> coarse;  // after the attention residual
  Tensor<T> features;  // [H x W x C] consumed by the heads
  Tensor<T> probs;     // [H x W x heads]
};

template <typename T>
class BasicModel {
public:
  BasicModel() = default;

  /// Fan-in-scaled uniform initialisation: bound sqrt(6/fan_in) for layers
  /// followed by ReLU, sqrt(3/fan_in) otherwise; biases zero. Parameter i draws
  /// from Rng(seed).derive(i).
  BasicModel(Architecture arch, std::uint64_t seed) : arch_(std::move(arch)), seed_(seed) {
    arch_.check();
    int cin = arch_.in_channels;
    for (int w : arch_.widths) {
      blocks_.push_back({Tensor<T>({3, 3, cin, w}), Tensor<T>({w}, T{0})});
      cin = w;
    }
    if (arch_.attention) {
      const int d = arch_.widths.back();
      wq_ = Tensor<T>({d, d});
      wk_ = Tensor<T>({d, d});
      wv_ = Tensor<T>({d, d});
    }
    for (MaskKind m : arch_.heads) heads_.push_back({m, Tensor<T>({arch_.feature_channels()}), Tensor<T>({1}, T{0})});
    init_backbone();
    init_heads();
  }

  const Architecture& architecture() const noexcept { return arch_; }
  std::uint64_t seed() const noexcept { return seed_; }
  int head_count() const noexcept { return static_cast<int>(heads_.size()); }
  const std::vector<Head<T>>& heads() const noexcept { return heads_; }
  std::vector<Head<T>>& heads() noexcept { return heads_; }

  /// Parameters in checkpoint order: conv kernels/biases, attention Wq/Wk/Wv,
  /// then each head's weight and bias.
  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> p;
    for (auto& b : blocks_) {
      p.push_back(&b.kernel);
      p.push_back(&b.bias);
    }
    if (arch_.attention) {
      p.push_back(&wq_);
      p.push_back(&wk_);
      p.push_back(&wv_);
    }
    for (auto& h : heads_) {
      p.push_back(&h.weight);
      p.push_back(&h.bias);
    }
    return p;
  }
  std::vector<const Tensor<T>*> parameters() const {
    std::vector<const Tensor<T>*> out;
    for (auto* t : const_cast<BasicModel*>(this)->parameters()) out.push_back(t);
    return out;
  }
  std::vector<std::string> parameter_names() const {
    std::vector<std::string> n;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
      n.push_back("conv" + std::to_string(i) + ".kernel");
      n.push_back("conv" + std::to_string(i) + ".bias");
    }
    if (arch_.attention) {
      n.push_back("attention.wq");
      n.push_back("attention.wk");
      n.push_back("attention.wv");
    }
    for (const auto& h : heads_) {
      n.push_back("head." + std::string(mask_name(h.kind)) + ".weight");
      n.push_back("head." + std::string(mask_name(h.kind)) + ".bias");
    }
    return n;
  }
  /// Number of leading entries of parameters() that belong to the backbone.
  std::size_t backbone_parameter_count() const noexcept { return blocks_.size() * 2 + (arch_.attention ? 3 : 0); }

  std::vector<Tensor<T>> zero_gradients() const {
    std::vector<Tensor<T>> g;
    for (const auto* p : parameters()) g.emplace_back(p->shape, T{0});
    return g;
  }

  /// Re-draws head parameters from the model seed.
  void init_heads() {
    auto params = parameters();
    for (std::size_t i = backbone_parameter_count(); i < params.size(); ++i) init_param(i, *params[i]);
  }

  template <typename U>
  BasicModel<U> cast() const {
    BasicModel<U> m;
    m.arch_ = arch_;
    m.seed_ = seed_;
    for (const auto& b : blocks_) m.blocks_.push_back({b.kernel.template cast<U>(), b.bias.template cast<U>()});
    m.wq_ = wq_.template cast<U>();
    m.wk_ = wk_.template cast<U>();
    m.wv_ = wv_.template cast<U>();
    for (const auto& h : heads_) m.heads_.push_back({h.kind, h.weight.template cast<U>(), h.bias.template cast<U>()});
    return m;
  }

  /// Full forward pass on a normalised [H x W x Cin] input. Returns the
  /// sigmoid probabilities [H x W x heads]; `acts` receives the intermediates.
  Tensor<T> forward(const Tensor<T>& input, Activations<T>& acts) const {
    if (input.rank() != 3 || input.dim(2) != arch_.in_channels)
      throw DataError("model: expected input [H x W x " + std::to_string(arch_.in_channels) + "], got " + shape_string(input));
    const int H = input.dim(0), W = input.dim(1);
    const int min_side = 1 << arch_.widths.size();
    if (H < min_side || W < min_side) throw DataError("model: input smaller than the pooling depth allows");

    acts = Activations<T>{};
    acts.input = input;
    const Tensor<T>* h = &acts.input;
    for (const auto& b : blocks_) {
      Tensor<T> c = conv2d_forward(*h, b.kernel, 1, 1);
      add_channel_bias(c, b.bias);
      acts.post_relu.push_back(relu_forward(c));
      acts.pre_relu.push_back(std::move(c));
      acts.argmax.emplace_back();
      acts.pooled.push_back(maxpool2_forward(acts.post_relu.back(), acts.argmax.back()));
      h = &acts.pooled.back();
    }
    const int ch = h->dim(0), cw = h->dim(1), d = h->dim(2);
    if (arch_.attention) {
      acts.tokens = Tensor<T>({ch * cw, d});
      acts.tokens.data = h->data;
      Tensor<T> o = attention_forward(acts.tokens, wq_, wk_, wv_, &acts.attn);
      add_inplace(o, acts.tokens);
      acts.coarse = Tensor<T>({ch, cw, d});
      acts.coarse.data = std::move(o.data);
    } else {
      acts.coarse = *h;
    }
    Tensor<T> up = upsample_forward(acts.coarse, H, W);
    if (arch_.skip) {
      const Tensor<T>& s = acts.post_relu.front();
      const int cs = s.dim(2);
      acts.features = Tensor<T>({H, W, cs + d});
      for (std::size_t p = 0; p < static_cast<std::size_t>(H) * W; ++p) {
        std::copy_n(s.ptr() + p * cs, cs, acts.features.ptr() + p * (cs + d));
        std::copy_n(up.ptr() + p * d, d, acts.features.ptr() + p * (cs + d) + cs);
      }
    } else {
      acts.features = std::move(up);
    }
    acts.probs = heads_forward(acts.features);
    return acts.probs;
  }

  /// Inference pass: the same values as forward() without keeping
  /// intermediates for backpropagation.
  Tensor<T> infer(const Tensor<T>& input) const {
    if (input.rank() != 3 || input.dim(2) != arch_.in_channels)
      throw DataError("model: expected input [H x W x " + std::to_string(arch_.in_channels) + "], got " + shape_string(input));
    const int H = input.dim(0), W = input.dim(1);
    const int min_side = 1 << arch_.widths.size();
    if (H < min_side || W < min_side) throw DataError("model: input smaller than the pooling depth allows");

    Tensor<T> skip;
    Tensor<T> h;
    for (std::size_t b = 0; b < blocks_.size(); ++b) {
      Tensor<T> c = conv2d_forward(b == 0 ? input : h, blocks_[b].kernel, 1, 1);
      bias_relu_inplace(c, blocks_[b].bias);
      h = maxpool2_values(c);
      if (b == 0 && arch_.skip) skip = std::move(c);
    }
    const int ch = h.dim(0), cw = h.dim(1), d = h.dim(2);
    if (arch_.attention) {
      Tensor<T> tokens({ch * cw, d});
      tokens.data = std::move(h.data);
      Tensor<T> o = attention_forward<T>(tokens, wq_, wk_, wv_);
      add_inplace(o, tokens);
      h = Tensor<T>({ch, cw, d});
      h.data = std::move(o.data);
    }
    Tensor<T> up = upsample_forward(h, H, W);
    if (!arch_.skip) return heads_forward(up);
    const int cs = skip.dim(2);
    Tensor<T> features({H, W, cs + d});
    for (std::size_t p = 0; p < static_cast<std::size_t>(H) * W; ++p) {
      std::copy_n(skip.ptr() + p * cs, cs, features.ptr() + p * (cs + d));
      std::copy_n(up.ptr() + p * d, d, features.ptr() + p * (cs + d) + cs);
    }
    return heads_forward(features);
  }

  Tensor<T> forward(const Tensor<T>& input) const { return infer(input); }

  /// Head logits on a feature map. Every head's value is the bias plus a dot
  /// product over channels in ascending order, so it does not depend on which
  /// other heads exist.
  Tensor<T> head_logits(const Tensor<T>& features) const {
    const int H = features.dim(0), W = features.dim(1), C = features.dim(2);
    const int nh = head_count();
    // Padding the head count to a multiple of 8 with zero columns lets the
    // 1x1 conv use its vector path; each real head's sum is unchanged.
    const int np = nh > 4 ? (nh + 7) / 8 * 8 : nh;
    Tensor<T> packed({1, 1, C, np}, T{0});
    for (int c = 0; c < C; ++c)
      for (int m = 0; m < nh; ++m) packed[static_cast<std::size_t>(c) * np + m] = heads_[m].weight[c];
    const Tensor<T> zp = conv2d_forward(features, packed, 1, 0);
    Tensor<T> z({H, W, nh});
    for (std::size_t p = 0; p < static_cast<std::size_t>(H) * W; ++p)
      for (int m = 0; m < nh; ++m) z[p * nh + m] = zp[p * np + m] + heads_[m].bias[0];
    return z;
  }

  Tensor<T> heads_forward(const Tensor<T>& features) const { return sigmoid_forward(head_logits(features)); }

  /// Backward pass from dL/dlogits [H x W x heads]. Gradients are accumulated
  /// into `grads` (same order as parameters()).
  void backward(const Activations<T>& acts, const Tensor<T>& grad_logits, std::vector<Tensor<T>>& grads) const {
    const int H = acts.features.dim(0), W = acts.features.dim(1), C = acts.features.dim(2);
    const int nh = head_count();
    const std::size_t hb = backbone_parameter_count();

    // Heads.
    Tensor<T> packed({1, 1, C, nh});
    for (int c = 0; c < C; ++c)
      for (int m = 0; m < nh; ++m) packed[static_cast<std::size_t>(c) * nh + m] = heads_[m].weight[c];
    Tensor<T> gpacked({1, 1, C, nh}, T{0});
    Tensor<T> gfeat;
    conv2d_backward(acts.features, packed, 1, 0, grad_logits, gpacked, &gfeat);
    for (int m = 0; m < nh; ++m) {
      Tensor<T>& gw = grads[hb + 2 * m];
      Tensor<T>& gb = grads[hb + 2 * m + 1];
      for (int c = 0; c < C; ++c) gw[c] += gpacked[static_cast<std::size_t>(c) * nh + m];
      T s{0};
      for (std::size_t p = 0; p < static_cast<std::size_t>(H) * W; ++p) s += grad_logits[p * nh + m];
      gb[0] += s;
    }

    // Split skip / upsampled channels.
    const int d = acts.coarse.dim(2);
    const int cs = arch_.skip ? acts.post_relu.front().dim(2) : 0;
    Tensor<T> gup({H, W, d});
    Tensor<T> gskip;
    if (arch_.skip) gskip = Tensor<T>({H, W, cs});
    for (std::size_t p = 0; p < static_cast<std::size_t>(H) * W; ++p) {
      if (arch_.skip) std::copy_n(gfeat.ptr() + p * C, cs, gskip.ptr() + p * cs);
      std::copy_n(gfeat.ptr() + p * C + cs, d, gup.ptr() + p * d);
    }

    Tensor<T> gh = upsample_backward(acts.coarse.shape, gup);
    if (arch_.attention) {
      const std::size_t ia = blocks_.size() * 2;
      Tensor<T> go({acts.tokens.dim(0), d});
      go.data = gh.data;
      Tensor<T> gx = attention_backward(acts.tokens, wq_, wk_, wv_, acts.attn, go, grads[ia], grads[ia + 1], grads[ia + 2]);
      add_inplace(gx, go);  // residual path
      gh.data = std::move(gx.data);
    }

    for (int b = static_cast<int>(blocks_.size()) - 1; b >= 0; --b) {
      Tensor<T> gr = maxpool2_backward(acts.post_relu[b].shape, acts.argmax[b], gh);
      if (b == 0 && arch_.skip) add_inplace(gr, gskip);
      relu_backward_inplace(acts.pre_relu[b], gr);
      accumulate_channel_bias_grad(gr, grads[2 * b + 1]);
      const Tensor<T>& in = b == 0 ? acts.input : acts.pooled[b - 1];
      Tensor<T> gin;
      conv2d_backward(in, blocks_[b].kernel, 1, 1, gr, grads[2 * b], b == 0 ? nullptr : &gin);
      gh = std::move(gin);
    }
  }

private:
  template <typename>
  friend class BasicModel;

  void init_backbone() {
    auto params = parameters();
    for (std::size_t i = 0; i < backbone_parameter_count(); ++i) init_param(i, *params[i]);
  }

  void init_param(std::size_t index, Tensor<T>& t) {
    if (t.rank() == 1) {  // biases
      t.zero();
      return;
    }
    const bool relu_follows = index < blocks_.size() * 2;
    int fan_in = t.dim(0);
    if (t.rank() == 4) fan_in = t.dim(0) * t.dim(1) * t.dim(2);
    const double bound = std::sqrt((relu_follows ? 6.0 : 3.0) / fan_in);
    Rng rng = Rng(seed_).derive(index);
    for (auto& v : t.data) v = static_cast<T>(rng.uniform(-bound, bound));
  }

  Architecture arch_;
  std::uint64_t seed_ = 0;
  std::vector<ConvBlock<T>> blocks_;
  Tensor<T> wq_, wk_, wv_;
  std::vector<Head<T>> heads_;
};

using MultiTaskModel = BasicModel<float>;

/// Model input from a tile: per band (v - 0.5) / 0.5, invalid pixels 0.
Tensor<float> normalize_input(const TileStack& tile);

/// Probability planes for every head of `model`, each H x W in (0,1).
struct Prediction {
  std::vector<MaskKind> kinds;
  std::vector<FloatPlane> probs;
};
Prediction multitask_forward(const MultiTaskModel& model, const TileStack& tile);

/// Binarises probabilities at 0.5 (p > 0.5). Heads missing from `pred` stay zero.
MaskSet binarize(const Prediction& pred, int width, int height);

}  // namespace mtmask::net
