#pragma once

// Building blocks shared by the backbone, the attention module and the
// temporal consistency encoder.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "must/checkpoint.hpp"
#include "must/tensor.hpp"

namespace must::nn {

// Seeded parameter initialisation.
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  // Normal(0, std) redrawn outside ±2·std.
  Tensor truncated_normal(Shape shape, double stddev = 0.02);
  Tensor zeros(Shape shape) { return Tensor::zeros(std::move(shape), true); }
  Tensor ones(Shape shape) { return Tensor::full(std::move(shape), 1.0, true); }

 private:
  std::mt19937_64 rng_;
};

// y = x·W + b with W stored [in × out].
struct Linear {
  Tensor weight;
  Tensor bias;  // undefined when the layer has no bias

  static Linear create(std::size_t in, std::size_t out, Initializer& init, bool with_bias = true,
                       double stddev = 0.02);
  Tensor operator()(const Tensor& x) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

struct LayerNorm {
  Tensor gamma;
  Tensor beta;
  double eps = 1e-5;

  static LayerNorm create(std::size_t dim, Initializer& init);
  Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta, eps); }
  void collect(NamedParams& out, const std::string& prefix) const;
};

// Called with every attention probability matrix produced on this thread
// while installed.
using AttentionObserver = std::function<void(const Tensor& probabilities)>;

class AttentionObserverScope {
 public:
  explicit AttentionObserverScope(AttentionObserver observer);
  ~AttentionObserverScope();
  AttentionObserverScope(const AttentionObserverScope&) = delete;
  AttentionObserverScope& operator=(const AttentionObserverScope&) = delete;

 private:
  AttentionObserver previous_;
};

// softmax(Q·Kᵀ / √d_k)·V with d_k = Q.cols().
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);

struct MultiHeadSelfAttention {
  Linear query, key, value, output;
  std::size_t heads = 1;

  static MultiHeadSelfAttention create(std::size_t dim, std::size_t heads, Initializer& init);
  Tensor operator()(const Tensor& x) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

// Pre-norm encoder block: x + MHSA(LN(x)), then x + FF(LN(x)) with a GELU
// feed-forward of the given hidden width.
struct TransformerBlock {
  LayerNorm norm1;
  MultiHeadSelfAttention attention;
  LayerNorm norm2;
  Linear fc1, fc2;

  static TransformerBlock create(std::size_t dim, std::size_t heads, std::size_t hidden,
                                 Initializer& init);
  Tensor operator()(const Tensor& x) const;
  void collect(NamedParams& out, const std::string& prefix) const;
};

std::vector<Tensor> tensors_of(const NamedParams& params);
std::size_t parameter_count(const NamedParams& params);

}  // namespace must::nn
