#pragma once

// Forward and backward kernels for the layers of the segmentation and
// regression networks. Everything is templated on the scalar so the same
// code runs in float for training and in double for gradient checks.
//
// Accumulation order is part of the contract: each output element is a sum
// started at zero and extended in the index order written in the comments
// below, so naive loops written the same way reproduce results bit for bit.

#include <cmath>
#include <cstring>
#include <limits>

#include "mtmask/net/tensor.hpp"

namespace mtmask::net {

inline int conv_out_size(int in, int k, int stride, int padding) {
  const int span = in + 2 * padding - k;
  if (span < 0 || stride <= 0) return 0;
  return span / stride + 1;
}

namespace detail {

// The kernels below vectorise across output channels (straight-line code once
// kCout is fixed). Letting the loop vectoriser work on the ci loop instead is
// about 3x slower, so it is switched off for them.
#if defined(__GNUC__) && !defined(__clang__)
#define MTMASK_CHANNEL_VECTORISED __attribute__((optimize("no-tree-loop-vectorize")))
#else
#define MTMASK_CHANNEL_VECTORISED
#endif

// One output pixel of conv2d_forward. With kCout > 0 the channel count is a
// compile-time constant and the partial sums live in registers, as 8-lane
// vectors when kCout is a multiple of 8. Each lane still adds its terms in
// the order of the generic path.
template <typename T, int kCout>
MTMASK_CHANNEL_VECTORISED inline void conv_pixel(const T* in, const T* K, T* o, int H, int W, int Cin, int Cout, int k,
                                                 int iy0, int ix0) {
  constexpr bool fixed = kCout > 0;
  constexpr bool lanes8 = fixed && kCout % 8 == 0;
  typedef T Vec8 __attribute__((vector_size(8 * sizeof(T))));
  constexpr int nvec = lanes8 ? kCout / 8 : 1;
  Vec8 vacc[nvec] = {};
  T acc[fixed ? kCout : 1] = {};
  const int nco = fixed ? kCout : Cout;
  for (int a = 0; a < k; ++a) {
    const int iy = iy0 + a;
    if (iy < 0 || iy >= H) continue;
    for (int b = 0; b < k; ++b) {
      const int ix = ix0 + b;
      if (ix < 0 || ix >= W) continue;
      const T* px = in + (static_cast<std::size_t>(iy) * W + ix) * Cin;
      const T* kab = K + static_cast<std::size_t>(a * k + b) * Cin * nco;
#if defined(__clang__)
#pragma clang loop vectorize(disable)
#endif
      for (int ci = 0; ci < Cin; ++ci) {
        const T v = px[ci];
        const T* kr = kab + static_cast<std::size_t>(ci) * nco;
        if constexpr (lanes8) {
          for (int j = 0; j < nvec; ++j) {
            Vec8 kv;
            std::memcpy(&kv, kr + 8 * j, sizeof kv);
            vacc[j] += v * kv;
          }
        } else if constexpr (fixed) {
          for (int co = 0; co < kCout; ++co) acc[co] += v * kr[co];
        } else {
          for (int co = 0; co < nco; ++co) o[co] += v * kr[co];
        }
      }
    }
  }
  if constexpr (lanes8) {
    for (int j = 0; j < nvec; ++j) std::memcpy(o + 8 * j, &vacc[j], sizeof vacc[j]);
  } else if constexpr (fixed) {
    for (int co = 0; co < kCout; ++co) o[co] = acc[co];
  }
}

template <typename T, int kCout>
MTMASK_CHANNEL_VECTORISED void conv_rows(const T* in, const T* K, T* out, int H, int W, int Cin, int Cout, int k, int stride, int padding, int Ho,
               int Wo) {
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox)
      conv_pixel<T, kCout>(in, K, out + (static_cast<std::size_t>(oy) * Wo + ox) * Cout, H, W, Cin, Cout, k,
                           oy * stride - padding, ox * stride - padding);
}

}  // namespace detail

/// Cross-correlation of input [H x W x Cin] with kernel [k x k x Cin x Cout]:
/// out[oy][ox][co] = sum over a, then b, then ci of
///   in[oy*stride + a - padding][ox*stride + b - padding][ci] * K[a][b][ci][co],
/// with zero padding outside the input.
template <typename T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding) {
  if (input.rank() != 3 || kernel.rank() != 4 || kernel.dim(0) != kernel.dim(1) || kernel.dim(2) != input.dim(2))
    throw DataError("conv2d: incompatible shapes " + shape_string(input) + " and " + shape_string(kernel));
  const int H = input.dim(0), W = input.dim(1), Cin = input.dim(2);
  const int k = kernel.dim(0), Cout = kernel.dim(3);
  const int Ho = conv_out_size(H, k, stride, padding), Wo = conv_out_size(W, k, stride, padding);
  if (Ho <= 0 || Wo <= 0) throw DataError("conv2d: kernel larger than padded input");
  Tensor<T> out({Ho, Wo, Cout}, T{0});
  const T* in = input.ptr();
  const T* K = kernel.ptr();
  T* o = out.ptr();
  switch (Cout) {
    case 1: detail::conv_rows<T, 1>(in, K, o, H, W, Cin, Cout, k, stride, padding, Ho, Wo); break;
    case 4: detail::conv_rows<T, 4>(in, K, o, H, W, Cin, Cout, k, stride, padding, Ho, Wo); break;
    case 5: detail::conv_rows<T, 5>(in, K, o, H, W, Cin, Cout, k, stride, padding, Ho, Wo); break;
    case 8: detail::conv_rows<T, 8>(in, K, o, H, W, Cin, Cout, k, stride, padding, Ho, Wo); break;
    case 16: detail::conv_rows<T, 16>(in, K, o, H, W, Cin, Cout, k, stride, padding, Ho, Wo); break;
    case 32: detail::conv_rows<T, 32>(in, K, o, H, W, Cin, Cout, k, stride, padding, Ho, Wo); break;
    default: detail::conv_rows<T, 0>(in, K, o, H, W, Cin, Cout, k, stride, padding, Ho, Wo); break;
  }
  return out;
}

/// Accumulates dL/dK into grad_kernel and, when grad_input is non-null,
/// writes dL/dinput.
template <typename T>
void conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding, const Tensor<T>& grad_out,
                     Tensor<T>& grad_kernel, Tensor<T>* grad_input) {
  const int H = input.dim(0), W = input.dim(1), Cin = input.dim(2);
  const int k = kernel.dim(0), Cout = kernel.dim(3);
  const int Ho = grad_out.dim(0), Wo = grad_out.dim(1);
  if (grad_input) *grad_input = Tensor<T>({H, W, Cin}, T{0});

  // Kernel transposed to [k][k][Cout][Cin] so the input-gradient loop runs contiguously over ci.
  Tensor<T> kt;
  if (grad_input) {
    kt = Tensor<T>({k, k, Cout, Cin});
    for (int ab = 0; ab < k * k; ++ab)
      for (int ci = 0; ci < Cin; ++ci)
        for (int co = 0; co < Cout; ++co)
          kt[(static_cast<std::size_t>(ab) * Cout + co) * Cin + ci] = kernel[(static_cast<std::size_t>(ab) * Cin + ci) * Cout + co];
  }

  const T* in = input.ptr();
  T* gk = grad_kernel.ptr();
  for (int oy = 0; oy < Ho; ++oy) {
    for (int ox = 0; ox < Wo; ++ox) {
      const T* g = grad_out.ptr() + (static_cast<std::size_t>(oy) * Wo + ox) * Cout;
      for (int a = 0; a < k; ++a) {
        const int iy = oy * stride + a - padding;
        if (iy < 0 || iy >= H) continue;
        for (int b = 0; b < k; ++b) {
          const int ix = ox * stride + b - padding;
          if (ix < 0 || ix >= W) continue;
          const std::size_t pix = (static_cast<std::size_t>(iy) * W + ix) * Cin;
          const std::size_t ab = static_cast<std::size_t>(a * k + b);
          const T* px = in + pix;
          T* gkab = gk + ab * Cin * Cout;
          for (int ci = 0; ci < Cin; ++ci) {
            const T v = px[ci];
            T* gkr = gkab + static_cast<std::size_t>(ci) * Cout;
            for (int co = 0; co < Cout; ++co) gkr[co] += v * g[co];
          }
          if (grad_input) {
            T* gx = grad_input->ptr() + pix;
            const T* kr = kt.ptr() + ab * Cout * Cin;
            for (int co = 0; co < Cout; ++co) {
              const T go = g[co];
              const T* krc = kr + static_cast<std::size_t>(co) * Cin;
              for (int ci = 0; ci < Cin; ++ci) gx[ci] += go * krc[ci];
            }
          }
        }
      }
    }
  }
}

/// Adds bias[c] to every pixel of an H x W x C map.
template <typename T>
void add_channel_bias(Tensor<T>& x, const Tensor<T>& bias) {
  const int C = x.shape.back();
  const std::size_t n = x.size() / static_cast<std::size_t>(C);
  for (std::size_t p = 0; p < n; ++p)
    for (int c = 0; c < C; ++c) x[p * C + c] += bias[static_cast<std::size_t>(c)];
}

template <typename T>
void accumulate_channel_bias_grad(const Tensor<T>& grad, Tensor<T>& grad_bias) {
  const int C = grad.shape.back();
  const std::size_t n = grad.size() / static_cast<std::size_t>(C);
  for (std::size_t p = 0; p < n; ++p)
    for (int c = 0; c < C; ++c) grad_bias[static_cast<std::size_t>(c)] += grad[p * C + c];
}

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.data) v = v > T{0} ? v : T{0};
  return y;
}

/// x = relu(x + bias) per channel, the inference form of add_channel_bias
/// followed by relu_forward.
template <typename T>
void bias_relu_inplace(Tensor<T>& x, const Tensor<T>& bias) {
  const int C = x.shape.back();
  const std::size_t n = x.size() / static_cast<std::size_t>(C);
  for (std::size_t p = 0; p < n; ++p)
    for (int c = 0; c < C; ++c) {
      const T v = x[p * C + c] + bias[static_cast<std::size_t>(c)];
      x[p * C + c] = v > T{0} ? v : T{0};
    }
}

/// Gradient through ReLU given its input (derivative 0 at x <= 0).
template <typename T>
void relu_backward_inplace(const Tensor<T>& x, Tensor<T>& grad) {
  for (std::size_t i = 0; i < x.size(); ++i)
    if (!(x[i] > T{0})) grad[i] = T{0};
}

template <typename T>
T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

template <typename T>
Tensor<T> sigmoid_forward(const Tensor<T>& x) {
  Tensor<T> y = x;
  for (auto& v : y.data) v = sigmoid(v);
  return y;
}

/// Given the sigmoid output y and dL/dy, returns dL/dx = dL/dy * y * (1 - y).
template <typename T>
Tensor<T> sigmoid_backward(const Tensor<T>& y, const Tensor<T>& grad_y) {
  Tensor<T> g = grad_y;
  for (std::size_t i = 0; i < y.size(); ++i) g[i] = grad_y[i] * y[i] * (T{1} - y[i]);
  return g;
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
/// `argmax` receives the flat input index chosen for every output element
/// (first maximum in row-major window order).
template <typename T>
Tensor<T> maxpool2_forward(const Tensor<T>& x, std::vector<std::size_t>& argmax) {
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const int Ho = H / 2, Wo = W / 2;
  if (Ho == 0 || Wo == 0) throw DataError("maxpool2: input smaller than 2x2");
  Tensor<T> y({Ho, Wo, C});
  argmax.assign(y.size(), 0);
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox)
      for (int c = 0; c < C; ++c) {
        std::size_t best = (static_cast<std::size_t>(2 * oy) * W + 2 * ox) * C + c;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const std::size_t i = (static_cast<std::size_t>(2 * oy + dy) * W + 2 * ox + dx) * C + c;
            if (x[i] > x[best]) best = i;
          }
        const std::size_t o = (static_cast<std::size_t>(oy) * Wo + ox) * C + c;
        y[o] = x[best];
        argmax[o] = best;
      }
  return y;
}

/// maxpool2_forward without the argmax record.
template <typename T>
Tensor<T> maxpool2_values(const Tensor<T>& x) {
  const int H = x.dim(0), W = x.dim(1), C = x.dim(2);
  const int Ho = H / 2, Wo = W / 2;
  if (Ho == 0 || Wo == 0) throw DataError("maxpool2: input smaller than 2x2");
  Tensor<T> y({Ho, Wo, C});
  for (int oy = 0; oy < Ho; ++oy)
    for (int ox = 0; ox < Wo; ++ox) {
      const T* r0 = x.ptr() + (static_cast<std::size_t>(2 * oy) * W + 2 * ox) * C;
      const T* r1 = r0 + static_cast<std::size_t>(W) * C;
      T* o = y.ptr() + (static_cast<std::size_t>(oy) * Wo + ox) * C;
      for (int c = 0; c < C; ++c) {
        T best = r0[c];
        if (r0[C + c] > best) best = r0[C + c];
        if (r1[c] > best) best = r1[c];
        if (r1[C + c] > best) best = r1[C + c];
        o[c] = best;
      }
    }
  return y;
}

template <typename T>
Tensor<T> maxpool2_backward(const std::vector<int>& input_shape, const std::vector<std::size_t>& argmax, const Tensor<T>& grad_y) {
  Tensor<T> g(input_shape, T{0});
  for (std::size_t o = 0; o < grad_y.size(); ++o) g[argmax[o]] += grad_y[o];
  return g;
}

/// Bilinear resampling of an h x w x C map to H x W x C with half-pixel
/// centres: src = (dst + 0.5) * in/out - 0.5, clamped to the grid.
struct BilinearTaps {
  std::vector<int> lo, hi;
  std::vector<double> frac;
};

inline BilinearTaps bilinear_taps(int in, int out) {
  BilinearTaps t;
  t.lo.resize(static_cast<std::size_t>(out));
  t.hi.resize(static_cast<std::size_t>(out));
  t.frac.resize(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double s = (i + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(in - 1));
    const int l = std::min(static_cast<int>(s), in - 1);
    t.lo[static_cast<std::size_t>(i)] = l;
    t.hi[static_cast<std::size_t>(i)] = std::min(l + 1, in - 1);
    t.frac[static_cast<std::size_t>(i)] = s - l;
  }
  return t;
}

template <typename T>
Tensor<T> upsample_forward(const Tensor<T>& x, int H, int W) {
  const int h = x.dim(0), w = x.dim(1), C = x.dim(2);
  const auto ty = bilinear_taps(h, H);
  const auto tx = bilinear_taps(w, W);
  Tensor<T> y({H, W, C});
  for (int i = 0; i < H; ++i) {
    const T fy = static_cast<T>(ty.frac[i]);
    for (int j = 0; j < W; ++j) {
      const T fx = static_cast<T>(tx.frac[j]);
      const T* p00 = x.ptr() + (static_cast<std::size_t>(ty.lo[i]) * w + tx.lo[j]) * C;
      const T* p01 = x.ptr() + (static_cast<std::size_t>(ty.lo[i]) * w + tx.hi[j]) * C;
      const T* p10 = x.ptr() + (static_cast<std::size_t>(ty.hi[i]) * w + tx.lo[j]) * C;
      const T* p11 = x.ptr() + (static_cast<std::size_t>(ty.hi[i]) * w + tx.hi[j]) * C;
      T* o = y.ptr() + (static_cast<std::size_t>(i) * W + j) * C;
      const T w00 = (T{1} - fy) * (T{1} - fx), w01 = (T{1} - fy) * fx, w10 = fy * (T{1} - fx), w11 = fy * fx;
      for (int c = 0; c < C; ++c) o[c] = w00 * p00[c] + w01 * p01[c] + w10 * p10[c] + w11 * p11[c];
    }
  }
  return y;
}

template <typename T>
Tensor<T> upsample_backward(const std::vector<int>& input_shape, const Tensor<T>& grad_y) {
  const int h = input_shape[0], w = input_shape[1], C = input_shape[2];
  const int H = grad_y.dim(0), W = grad_y.dim(1);
  const auto ty = bilinear_taps(h, H);
  const auto tx = bilinear_taps(w, W);
  Tensor<T> g(input_shape, T{0});
  for (int i = 0; i < H; ++i) {
    const T fy = static_cast<T>(ty.frac[i]);
    for (int j = 0; j < W; ++j) {
      const T fx = static_cast<T>(tx.frac[j]);
      const T w00 = (T{1} - fy) * (T{1} - fx), w01 = (T{1} - fy) * fx, w10 = fy * (T{1} - fx), w11 = fy * fx;
      const T* gy = grad_y.ptr() + (static_cast<std::size_t>(i) * W + j) * C;
      T* g00 = g.ptr() + (static_cast<std::size_t>(ty.lo[i]) * w + tx.lo[j]) * C;
      T* g01 = g.ptr() + (static_cast<std::size_t>(ty.lo[i]) * w + tx.hi[j]) * C;
      T* g10 = g.ptr() + (static_cast<std::size_t>(ty.hi[i]) * w + tx.lo[j]) * C;
      T* g11 = g.ptr() + (static_cast<std::size_t>(ty.hi[i]) * w + tx.hi[j]) * C;
      for (int c = 0; c < C; ++c) {
        g00[c] += w00 * gy[c];
        g01[c] += w01 * gy[c];
        g10[c] += w10 * gy[c];
        g11[c] += w11 * gy[c];
      }
    }
  }
  return g;
}

// ---------------------------------------------------------------------------
// Matrix helpers on rank-2 tensors. Each output element accumulates over the
// shared index in ascending order.

/// A[m x k] * B[k x n]
template <typename T>
Tensor<T> matmul(const Tensor<T>& A, const Tensor<T>& B) {
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(0))
    throw DataError("matmul: incompatible shapes " + shape_string(A) + " and " + shape_string(B));
  const int m = A.dim(0), k = A.dim(1), n = B.dim(1);
  Tensor<T> C({m, n}, T{0});
  for (int i = 0; i < m; ++i) {
    T* c = C.ptr() + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T a = A[static_cast<std::size_t>(i) * k + p];
      const T* b = B.ptr() + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) c[j] += a * b[j];
    }
  }
  return C;
}

/// A[m x k] * B[n x k]^T
template <typename T>
Tensor<T> matmul_bt(const Tensor<T>& A, const Tensor<T>& B) {
  if (A.rank() != 2 || B.rank() != 2 || A.dim(1) != B.dim(1))
    throw DataError("matmul_bt: incompatible shapes " + shape_string(A) + " and " + shape_string(B));
  const int m = A.dim(0), k = A.dim(1), n = B.dim(0);
  Tensor<T> C({m, n}, T{0});
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      T s{0};
      const T* a = A.ptr() + static_cast<std::size_t>(i) * k;
      const T* b = B.ptr() + static_cast<std::size_t>(j) * k;
      for (int p = 0; p < k; ++p) s += a[p] * b[p];
      C[static_cast<std::size_t>(i) * n + j] = s;
    }
  return C;
}

/// A[k x m]^T * B[k x n]
template <typename T>
Tensor<T> matmul_at(const Tensor<T>& A, const Tensor<T>& B) {
  if (A.rank() != 2 || B.rank() != 2 || A.dim(0) != B.dim(0))
    throw DataError("matmul_at: incompatible shapes " + shape_string(A) + " and " + shape_string(B));
  const int k = A.dim(0), m = A.dim(1), n = B.dim(1);
  Tensor<T> C({m, n}, T{0});
  for (int p = 0; p < k; ++p)
    for (int i = 0; i < m; ++i) {
      const T a = A[static_cast<std::size_t>(p) * m + i];
      const T* b = B.ptr() + static_cast<std::size_t>(p) * n;
      T* c = C.ptr() + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) c[j] += a * b[j];
    }
  return C;
}

template <typename T>
void add_inplace(Tensor<T>& a, const Tensor<T>& b) {
  for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
}

// ---------------------------------------------------------------------------
// Scaled dot-product attention.

template <typename T>
struct AttentionCache {
  Tensor<T> q, k, v, p;  // p = row-softmax of the scaled scores
};

/// softmax(Q K^T / sqrt(d_k)) V with Q = X Wq, K = X Wk, V = X Wv.
/// Scores are S[i][j] = (sum_c Q[i][c] K[j][c]) / sqrt(d_k); each softmax row
/// subtracts its maximum, exponentiates, sums left to right and divides.
template <typename T>
Tensor<T> attention_forward(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv,
                            AttentionCache<T>* cache = nullptr) {
  if (x.rank() != 2 || wq.rank() != 2 || wk.rank() != 2 || wv.rank() != 2) throw DataError("attention: rank-2 inputs required");
  const int d = x.dim(1);
  if (wq.dim(0) != d || wk.dim(0) != d || wv.dim(0) != d) throw DataError("attention: weight rows must equal feature width");
  if (wq.dim(1) != wk.dim(1)) throw DataError("attention: query and key widths differ");
  const int n = x.dim(0);
  Tensor<T> q = matmul(x, wq), k = matmul(x, wk), v = matmul(x, wv);
  Tensor<T> p = matmul_bt(q, k);
  const T scale = std::sqrt(static_cast<T>(wq.dim(1)));
  for (int i = 0; i < n; ++i) {
    T* row = p.ptr() + static_cast<std::size_t>(i) * n;
    T mx = -std::numeric_limits<T>::infinity();
    for (int j = 0; j < n; ++j) {
      row[j] = row[j] / scale;
      mx = std::max(mx, row[j]);
    }
    T sum{0};
    for (int j = 0; j < n; ++j) {
      row[j] = std::exp(row[j] - mx);
      sum += row[j];
    }
    for (int j = 0; j < n; ++j) row[j] = row[j] / sum;
  }
  Tensor<T> out = matmul(p, v);
  if (cache) *cache = AttentionCache<T>{std::move(q), std::move(k), std::move(v), std::move(p)};
  return out;
}

/// Accumulates weight gradients and returns dL/dX.
template <typename T>
Tensor<T> attention_backward(const Tensor<T>& x, const Tensor<T>& wq, const Tensor<T>& wk, const Tensor<T>& wv,
                             const AttentionCache<T>& c, const Tensor<T>& grad_out, Tensor<T>& gwq, Tensor<T>& gwk, Tensor<T>& gwv) {
  const int n = x.dim(0);
  const T scale = std::sqrt(static_cast<T>(wq.dim(1)));
  Tensor<T> dv = matmul_at(c.p, grad_out);  // P^T dO
  Tensor<T> dp = matmul_bt(grad_out, c.v);  // dO V^T
  Tensor<T> ds({n, n});
  for (int i = 0; i < n; ++i) {
    const T* pr = c.p.ptr() + static_cast<std::size_t>(i) * n;
    const T* dpr = dp.ptr() + static_cast<std::size_t>(i) * n;
    T dot{0};
    for (int j = 0; j < n; ++j) dot += pr[j] * dpr[j];
    T* dsr = ds.ptr() + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) dsr[j] = pr[j] * (dpr[j] - dot) / scale;
  }
  Tensor<T> dq = matmul(ds, c.k);
  Tensor<T> dk = matmul_at(ds, c.q);
  add_inplace(gwq, matmul_at(x, dq));
  add_inplace(gwk, matmul_at(x, dk));
  add_inplace(gwv, matmul_at(x, dv));
  Tensor<T> dx = matmul_bt(dq, wq);
  add_inplace(dx, matmul_bt(dk, wk));
  add_inplace(dx, matmul_bt(dv, wv));
  return dx;
}

// ---------------------------------------------------------------------------
// Fully connected layer on a batch [B x in]: y = x W + b, W is [in x out].

template <typename T>
Tensor<T> dense_forward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  Tensor<T> y = matmul(x, w);
  const int out = w.dim(1);
  for (int i = 0; i < y.dim(0); ++i)
    for (int j = 0; j < out; ++j) y[static_cast<std::size_t>(i) * out + j] += b[static_cast<std::size_t>(j)];
  return y;
}

template <typename T>
Tensor<T> dense_backward(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& grad_y, Tensor<T>& gw, Tensor<T>& gb) {
  add_inplace(gw, matmul_at(x, grad_y));
  const int out = w.dim(1);
  for (int i = 0; i < grad_y.dim(0); ++i)
    for (int j = 0; j < out; ++j) gb[static_cast<std::size_t>(j)] += grad_y[static_cast<std::size_t>(i) * out + j];
  return matmul_bt(grad_y, w);
}

}  // namespace mtmask::net
