#pragma once

// Central finite-difference checks of the analytic backward passes, in
// double precision. Each check builds a small random instance, reduces the
// layer output to a scalar with fixed random weights R (L = sum R * y) and
// returns ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||)
// over every input and parameter of the layer.

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <vector>

#include "mtmask/net/loss.hpp"
#include "mtmask/net/model.hpp"
#include "mtmask/net/ops.hpp"
#include "mtmask/rng.hpp"

namespace gradcheck {

using mtmask::Rng;
using mtmask::net::Tensor;
using T = double;

inline constexpr double kStep = 1e-3;

inline Tensor<T> random(std::vector<int> shape, Rng& rng, double scale = 1.0) {
  Tensor<T> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-scale, scale);
  return t;
}

inline double dot(const Tensor<T>& a, const Tensor<T>& b) { return std::inner_product(a.data.begin(), a.data.end(), b.data.begin(), 0.0); }

/// Accumulates analytic and numeric gradients of `loss` w.r.t. every value
/// of `params` and returns the relative error of the concatenated vectors.
struct Comparison {
  double diff2 = 0, a2 = 0, n2 = 0;
  void add(const Tensor<T>& analytic, Tensor<T>& param, const std::function<double()>& loss) {
    for (std::size_t i = 0; i < param.size(); ++i) {
      const double keep = param[i];
      param[i] = keep + kStep;
      const double up = loss();
      param[i] = keep - kStep;
      const double down = loss();
      param[i] = keep;
      const double numeric = (up - down) / (2 * kStep);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
  }
  double relative_error() const {
    const double scale = std::max(std::sqrt(a2), std::sqrt(n2));
    return scale == 0 ? 0 : std::sqrt(diff2) / scale;
  }
};

inline double conv(std::uint64_t seed) {
  Rng rng(seed);
  const int H = 4 + static_cast<int>(rng.below(4)), W = 4 + static_cast<int>(rng.below(4));
  const int cin = 1 + static_cast<int>(rng.below(3)), cout = 1 + static_cast<int>(rng.below(4));
  const int stride = 1 + static_cast<int>(rng.below(2)), pad = static_cast<int>(rng.below(2));
  Tensor<T> x = random({H, W, cin}, rng), k = random({3, 3, cin, cout}, rng);
  const Tensor<T> probe = mtmask::net::conv2d_forward(x, k, stride, pad);
  const Tensor<T> R = random(probe.shape, rng);
  auto loss = [&] { return dot(mtmask::net::conv2d_forward(x, k, stride, pad), R); };
  Tensor<T> gk(k.shape, 0.0), gx;
  mtmask::net::conv2d_backward(x, k, stride, pad, R, gk, &gx);
  Comparison c;
  c.add(gk, k, loss);
  c.add(gx, x, loss);
  return c.relative_error();
}

/// Inputs are a shuffled arithmetic sequence with spacing well above the FD
/// step, so no window holds a near-tie.
inline double maxpool(std::uint64_t seed) {
  Rng rng(seed);
  const int H = 2 * (1 + static_cast<int>(rng.below(4))) + static_cast<int>(rng.below(2));
  const int W = 2 * (1 + static_cast<int>(rng.below(4))), C = 1 + static_cast<int>(rng.below(3));
  Tensor<T> x({H, W, C});
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = 0.05 * static_cast<double>(i);
  for (std::size_t i = x.size(); i > 1; --i) std::swap(x[i - 1], x[rng.below(i)]);
  std::vector<std::size_t> arg;
  const Tensor<T> y = mtmask::net::maxpool2_forward(x, arg);
  const Tensor<T> R = random(y.shape, rng);
  auto loss = [&] {
    std::vector<std::size_t> a;
    return dot(mtmask::net::maxpool2_forward(x, a), R);
  };
  const Tensor<T> gx = mtmask::net::maxpool2_backward(x.shape, arg, R);
  Comparison c;
  c.add(gx, x, loss);
  return c.relative_error();
}

inline double upsample(std::uint64_t seed) {
  Rng rng(seed);
  const int h = 1 + static_cast<int>(rng.below(4)), w = 1 + static_cast<int>(rng.below(4)), C = 1 + static_cast<int>(rng.below(3));
  const int H = h * (1 + static_cast<int>(rng.below(4))), W = w * (1 + static_cast<int>(rng.below(4))) + 1;
  Tensor<T> x = random({h, w, C}, rng);
  const Tensor<T> R = random({H, W, C}, rng);
  auto loss = [&] { return dot(mtmask::net::upsample_forward(x, H, W), R); };
  Comparison c;
  c.add(mtmask::net::upsample_backward(x.shape, R), x, loss);
  return c.relative_error();
}

inline double dense(std::uint64_t seed) {
  Rng rng(seed);
  const int B = 1 + static_cast<int>(rng.below(5)), in = 1 + static_cast<int>(rng.below(8)), out = 1 + static_cast<int>(rng.below(6));
  Tensor<T> x = random({B, in}, rng), w = random({in, out}, rng), b = random({out}, rng);
  const Tensor<T> R = random({B, out}, rng);
  auto loss = [&] { return dot(mtmask::net::dense_forward(x, w, b), R); };
  Tensor<T> gw(w.shape, 0.0), gb(b.shape, 0.0);
  const Tensor<T> gx = mtmask::net::dense_backward(x, w, R, gw, gb);
  Comparison c;
  c.add(gw, w, loss);
  c.add(gb, b, loss);
  c.add(gx, x, loss);
  return c.relative_error();
}

inline double attention(std::uint64_t seed) {
  Rng rng(seed);
  const int n = 2 + static_cast<int>(rng.below(6)), d = 1 + static_cast<int>(rng.below(5));
  Tensor<T> x = random({n, d}, rng), wq = random({d, d}, rng), wk = random({d, d}, rng), wv = random({d, d}, rng);
  const Tensor<T> R = random({n, d}, rng);
  auto loss = [&] { return dot(mtmask::net::attention_forward(x, wq, wk, wv), R); };
  mtmask::net::AttentionCache<T> cache;
  mtmask::net::attention_forward(x, wq, wk, wv, &cache);
  Tensor<T> gq(wq.shape, 0.0), gk(wk.shape, 0.0), gv(wv.shape, 0.0);
  const Tensor<T> gx = mtmask::net::attention_backward(x, wq, wk, wv, cache, R, gq, gk, gv);
  Comparison c;
  c.add(gq, wq, loss);
  c.add(gk, wk, loss);
  c.add(gv, wv, loss);
  c.add(gx, x, loss);
  return c.relative_error();
}

/// 1x1 projection to one logit per head, sigmoid, and the masked BCE,
/// differentiated through the probability-space gradient and sigmoid_backward.
inline double sigmoid_head(std::uint64_t seed) {
  Rng rng(seed);
  const int H = 2 + static_cast<int>(rng.below(4)), W = 2 + static_cast<int>(rng.below(4));
  const int C = 1 + static_cast<int>(rng.below(6)), nh = 1 + static_cast<int>(rng.below(5));
  Tensor<T> f = random({H, W, C}, rng), w = random({1, 1, C, nh}, rng, 0.7), b = random({nh}, rng, 0.5);
  Tensor<T> targets({H, W, nh});
  for (auto& v : targets.data) v = rng.uniform() < 0.4 ? 1.0 : 0.0;
  mtmask::MaskPlane valid(W, H, 1);
  for (auto& v : valid.values) v = rng.uniform() < 0.8 ? 1 : 0;
  valid.values[0] = 1;
  auto probs_of = [&] {
    Tensor<T> z = mtmask::net::conv2d_forward(f, w, 1, 0);
    mtmask::net::add_channel_bias(z, b);
    return mtmask::net::sigmoid_forward(z);
  };
  auto loss = [&] { return mtmask::net::bce_loss_grad_probs<T>(probs_of(), targets, valid, nullptr); };
  const Tensor<T> p = probs_of();
  Tensor<T> gp;
  mtmask::net::bce_loss_grad_probs(p, targets, valid, &gp);
  const Tensor<T> gz = mtmask::net::sigmoid_backward(p, gp);
  Tensor<T> gw(w.shape, 0.0), gb(b.shape, 0.0), gf;
  mtmask::net::conv2d_backward(f, w, 1, 0, gz, gw, &gf);
  mtmask::net::accumulate_channel_bias_grad(gz, gb);
  Comparison c;
  c.add(gw, w, loss);
  c.add(gb, b, loss);
  c.add(gf, f, loss);
  return c.relative_error();
}

/// The multi-task loss of a whole small model (conv blocks, pooling,
/// attention, upsampling, skip, heads) w.r.t. every parameter.
inline double full_loss(std::uint64_t seed) {
  Rng rng(seed);
  mtmask::net::Architecture arch;
  arch.widths = {3, 4};
  arch.attention = rng.uniform() < 0.7;
  arch.skip = rng.uniform() < 0.7;
  const int H = 8 + 4 * static_cast<int>(rng.below(2)), W = 8;
  auto model = mtmask::net::BasicModel<float>(arch, seed).cast<T>();
  Tensor<T> input = random({H, W, arch.in_channels}, rng);
  Tensor<T> targets({H, W, static_cast<int>(arch.heads.size())});
  for (auto& v : targets.data) v = rng.uniform() < 0.3 ? 1.0 : 0.0;
  mtmask::MaskPlane valid(W, H, 1);
  for (int x = 0; x < 2; ++x)
    for (int y = 0; y < H; ++y) valid.at(x, y) = 0;

  auto loss = [&] {
    mtmask::net::Activations<T> a;
    const Tensor<T> p = model.forward(input, a);
    Tensor<T> g;
    return mtmask::net::bce_loss_grad_logits(p, targets, valid, g);
  };
  mtmask::net::Activations<T> acts;
  const Tensor<T> p = model.forward(input, acts);
  Tensor<T> glogits;
  mtmask::net::bce_loss_grad_logits(p, targets, valid, glogits);
  auto grads = model.zero_gradients();
  model.backward(acts, glogits, grads);
  Comparison c;
  auto params = model.parameters();
  for (std::size_t i = 0; i < params.size(); ++i) c.add(grads[i], *params[i], loss);
  return c.relative_error();
}

struct Layer {
  const char* name;
  double (*check)(std::uint64_t);
};

inline const std::vector<Layer>& layers() {
  static const std::vector<Layer> all{{"conv", conv},       {"pool", maxpool},     {"upsample", upsample},      {"dense", dense},
                                      {"attention", attention}, {"sigmoid_head", sigmoid_head}, {"full_loss", full_loss}};
  return all;
}

}  // namespace gradcheck
