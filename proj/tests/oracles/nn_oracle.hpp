#pragma once

// Textbook loop implementations of the network layers. They are written for
// readability, not speed, and share no code with the library kernels.

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "mtmask/net/tensor.hpp"
#include "mtmask/raster.hpp"

namespace oracle {

using mtmask::net::Tensor;

/// Zero-padded cross-correlation, input [H][W][Cin], kernel [k][k][Cin][Cout].
/// Each output accumulates a, then b, then ci, starting from zero.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& in, const Tensor<T>& K, int stride, int pad) {
  const int H = in.dim(0), W = in.dim(1), Cin = in.dim(2), k = K.dim(0), Cout = K.dim(3);
  const int Ho = (H + 2 * pad - k) / stride + 1, Wo = (W + 2 * pad - k) / stride + 1;
  Tensor<T> out({Ho, Wo, Cout});
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox)
      for (int co = 0; co < Cout; ++co) {
        T acc = 0;
        for (int a = 0; a < k; ++a)
          for (int b = 0; b < k; ++b)
            for (int ci = 0; ci < Cin; ++ci) {
              const int iy = oy * stride + a - pad, ix = ox * stride + b - pad;
              if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
              acc += in.data[(static_cast<std::size_t>(iy) * W + ix) * Cin + ci] *
                     K.data[((static_cast<std::size_t>(a) * k + b) * Cin + ci) * Cout + co];
            }
        out.data[(static_cast<std::size_t>(oy) * Wo + ox) * Cout + co] = acc;
      }
  return out;
}

template <typename T>
Tensor<T> maxpool2(const Tensor<T>& x) {
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  Tensor<T> y({H / 2, W / 2, C});
  for (int i = 0; i < H / 2; ++i)
    for (int j = 0; j < W / 2; ++j)
      for (int c = 0; c < C; ++c) {
        T m = -std::numeric_limits<T>::infinity();
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) m = std::max(m, x.data[((2 * i + dy) * W + 2 * j + dx) * C + c]);
        y.data[(static_cast<std::size_t>(i) * (W / 2) + j) * C + c] = m;
      }
  return y;
}

/// Bilinear resize with half-pixel centres, coordinates clamped to the grid.
template <typename T>
Tensor<T> upsample(const Tensor<T>& x, int H, int W) {
  const int h = x.dim(0), w = x.dim(1), C = x.dim(2);
  Tensor<T> y({H, W, C});
  auto src = [](int dst, int in, int out) {
    return std::clamp((dst + 0.5) * in / out - 0.5, 0.0, static_cast<double>(in - 1));
  };
  for (int i = 0; i < H; ++i)
    for (int j = 0; j < W; ++j) {
      const double sy = src(i, h, H), sx = src(j, w, W);
      const int y0 = static_cast<int>(std::floor(sy)), x0 = static_cast<int>(std::floor(sx));
      const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
      const double fy = sy - y0, fx = sx - x0;
      for (int c = 0; c < C; ++c) {
        auto at = [&](int yy, int xx) { return static_cast<double>(x.data[(static_cast<std::size_t>(yy) * w + xx) * C + c]); };
        const double v = (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
        y.data[(static_cast<std::size_t>(i) * W + j) * C + c] = static_cast<T>(v);
      }
    }
  return y;
}

/// y[i][o] = b[o] + sum_c x[i][c] w[c][o]
template <typename T>
Tensor<T> dense(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  const int n = x.dim(0), in = x.dim(1), out = w.dim(1);
  Tensor<T> y({n, out});
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < out; ++o) {
      T acc = 0;
      for (int c = 0; c < in; ++c) acc += x.data[i * in + c] * w.data[c * out + o];
      y.data[i * out + o] = acc + b.data[o];
    }
  return y;
}

/// Single-head scaled dot-product self-attention written out per token pair.
template <typename T>
Tensor<T> attention(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv) {
  const int n = x.dim(0), d = x.dim(1), dk = wq.dim(1), dv = wv.dim(1);
  auto project = [&](const Tensor<T>& w, int i, int c) {
    double s = 0;
    for (int e = 0; e < d; ++e) s += static_cast<double>(x.data[i * d + e]) * w.data[e * w.dim(1) + c];
    return s;
  };
  Tensor<T> out({n, dv});
  for (int i = 0; i < n; ++i) {
    std::vector<double> score(n);
    for (int j = 0; j < n; ++j) {
      double s = 0;
      for (int c = 0; c < dk; ++c) s += project(wq, i, c) * project(wk, j, c);
      score[j] = s / std::sqrt(static_cast<double>(dk));
    }
    const double mx = *std::max_element(score.begin(), score.end());
    double z = 0;
    for (double& s : score) z += (s = std::exp(s - mx));
    for (int c = 0; c < dv; ++c) {
      double acc = 0;
      for (int j = 0; j < n; ++j) acc += score[j] / z * project(wv, j, c);
      out.data[i * dv + c] = static_cast<T>(acc);
    }
  }
  return out;
}

/// Sum over heads of the clamped binary cross entropy averaged over valid pixels.
inline double bce(const std::vector<std::vector<double>>& probs, const std::vector<std::vector<double>>& labels,
                  const std::vector<bool>& valid, double eps = 1e-7) {
  double total = 0;
  for (std::size_t m = 0; m < probs.size(); ++m) {
    double sum = 0;
    int n = 0;
    for (std::size_t p = 0; p < valid.size(); ++p) {
      if (!valid[p]) continue;
      const double q = std::min(std::max(probs[m][p], eps), 1.0 - eps);
      sum += labels[m][p] > 0.5 ? -std::log(q) : -std::log(1.0 - q);
      ++n;
    }
    total += sum / n;
  }
  return total;
}

}  // namespace oracle
