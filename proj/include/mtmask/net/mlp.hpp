#pragma once

#include <vector>

#include "mtmask/net/ops.hpp"
#include "mtmask/rng.hpp"

namespace mtmask::net {

/// Fully connected regressor: Dense layers with ReLU between them and a
/// linear output.
template <typename T>
class BasicMlp {
public:
  struct Cache {
    std::vector<Tensor<T>> inputs;     // input of each dense layer
    std::vector<Tensor<T>> pre_relu;   // output of each hidden dense layer
  };

  BasicMlp() = default;

  /// sizes = {in, hidden..., out}. Weights fan-in-scaled uniform (sqrt(6/fan_in)
  /// before a ReLU, sqrt(3/fan_in) for the output layer), biases zero.
  BasicMlp(std::vector<int> sizes, std::uint64_t seed) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw DataError("mlp: need at least input and output sizes");
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] <= 0 || sizes_[l + 1] <= 0) throw DataError("mlp: layer sizes must be positive");
      Tensor<T> w({sizes_[l], sizes_[l + 1]});
      const bool hidden = l + 2 < sizes_.size();
      const double bound = std::sqrt((hidden ? 6.0 : 3.0) / sizes_[l]);
      Rng rng = Rng(seed).derive(l);
      for (auto& v : w.data) v = static_cast<T>(rng.uniform(-bound, bound));
      weights_.push_back(std::move(w));
      biases_.emplace_back(std::vector<int>{sizes_[l + 1]}, T{0});
    }
  }

  const std::vector<int>& sizes() const noexcept { return sizes_; }
  int layer_count() const noexcept { return static_cast<int>(weights_.size()); }

  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> p;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      p.push_back(&weights_[l]);
      p.push_back(&biases_[l]);
    }
    return p;
  }
  std::vector<const Tensor<T>*> parameters() const {
    std::vector<const Tensor<T>*> out;
    for (auto* t : const_cast<BasicMlp*>(this)->parameters()) out.push_back(t);
    return out;
  }
  std::vector<Tensor<T>> zero_gradients() const {
    std::vector<Tensor<T>> g;
    for (const auto* p : parameters()) g.emplace_back(p->shape, T{0});
    return g;
  }

  template <typename U>
  BasicMlp<U> cast() const {
    BasicMlp<U> m;
    m.sizes_ = sizes_;
    for (const auto& w : weights_) m.weights_.push_back(w.template cast<U>());
    for (const auto& b : biases_) m.biases_.push_back(b.template cast<U>());
    return m;
  }

  /// x is [B x in]; returns [B x out].
  Tensor<T> forward(const Tensor<T>& x, Cache* cache = nullptr) const {
    if (x.rank() != 2 || x.dim(1) != sizes_.front()) throw DataError("mlp: input width mismatch");
    if (cache) *cache = Cache{};
    Tensor<T> h = x;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      if (cache) cache->inputs.push_back(h);
      Tensor<T> y = dense_forward(h, weights_[l], biases_[l]);
      if (l + 1 < weights_.size()) {
        if (cache) cache->pre_relu.push_back(y);
        h = relu_forward(y);
      } else {
        h = std::move(y);
      }
    }
    return h;
  }

  void backward(const Cache& cache, const Tensor<T>& grad_out, std::vector<Tensor<T>>& grads) const {
    Tensor<T> g = grad_out;
    for (int l = layer_count() - 1; l >= 0; --l) {
      if (l + 1 < layer_count()) relu_backward_inplace(cache.pre_relu[static_cast<std::size_t>(l)], g);
      g = dense_backward(cache.inputs[static_cast<std::size_t>(l)], weights_[static_cast<std::size_t>(l)], g,
                         grads[2 * static_cast<std::size_t>(l)], grads[2 * static_cast<std::size_t>(l) + 1]);
    }
  }

private:
  template <typename>
  friend class BasicMlp;

  std::vector<int> sizes_;
  std::vector<Tensor<T>> weights_, biases_;
};

using Mlp = BasicMlp<float>;

}  // namespace mtmask::net
