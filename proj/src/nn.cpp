#include "must/nn.hpp"

#include <cmath>

#include "must/error.hpp"

namespace must::nn {
namespace {

thread_local AttentionObserver g_observer;

}  // namespace

Tensor Initializer::truncated_normal(Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> values(shape_numel(shape));
  for (double& v : values) {
    do {
      v = dist(rng_);
    } while (std::abs(v) > 2.0 * stddev);
  }
  return Tensor(std::move(shape), std::move(values), true);
}

Linear Linear::create(std::size_t in, std::size_t out, Initializer& init, bool with_bias, double stddev) {
  Linear l;
  l.weight = init.truncated_normal({in, out}, stddev);
  if (with_bias) l.bias = init.zeros({out});
  return l;
}

Tensor Linear::operator()(const Tensor& x) const {
  Tensor y = matmul(x, weight);
  return bias.defined() ? add_row(y, bias) : y;
}

void Linear::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".weight", weight);
  if (bias.defined()) out.emplace_back(prefix + ".bias", bias);
}

LayerNorm LayerNorm::create(std::size_t dim, Initializer& init) {
  return LayerNorm{init.ones({dim}), init.zeros({dim}), 1e-5};
}

void LayerNorm::collect(NamedParams& out, const std::string& prefix) const {
  out.emplace_back(prefix + ".gamma", gamma);
  out.emplace_back(prefix + ".beta", beta);
}

AttentionObserverScope::AttentionObserverScope(AttentionObserver observer)
    : previous_(std::move(g_observer)) {
  g_observer = std::move(observer);
}

AttentionObserverScope::~AttentionObserverScope() { g_observer = std::move(previous_); }

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (k.rows() != v.rows())
    throw DimensionError("attention: keys " + shape_to_string(k.shape()) + " and values " +
                         shape_to_string(v.shape()) + " differ in length");
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Tensor probs = softmax_rows(scale(matmul_nt(q, k), inv_sqrt_dk));
  if (g_observer) g_observer(probs);
  return matmul(probs, v);
}

MultiHeadSelfAttention MultiHeadSelfAttention::create(std::size_t dim, std::size_t heads,
                                                      Initializer& init) {
  if (heads == 0 || dim % heads != 0)
    throw ContractError("attention width " + std::to_string(dim) + " not divisible by " +
                        std::to_string(heads) + " heads");
  MultiHeadSelfAttention a;
  a.query = Linear::create(dim, dim, init);
  // A key bias only shifts each score row by a constant, which softmax
  // ignores; it would be a parameter with an identically zero gradient.
  a.key = Linear::create(dim, dim, init, false);
  a.value = Linear::create(dim, dim, init);
  a.output = Linear::create(dim, dim, init);
  a.heads = heads;
  return a;
}

Tensor MultiHeadSelfAttention::operator()(const Tensor& x) const {
  const Tensor q = query(x), k = key(x), v = value(x);
  if (heads == 1) return output(scaled_dot_attention(q, k, v));
  const std::size_t width = x.cols() / heads;
  std::vector<Tensor> parts;
  parts.reserve(heads);
  for (std::size_t h = 0; h < heads; ++h) {
    parts.push_back(scaled_dot_attention(slice_cols(q, h * width, width), slice_cols(k, h * width, width),
                                         slice_cols(v, h * width, width)));
  }
  return output(concat_cols(parts));
}

void MultiHeadSelfAttention::collect(NamedParams& out, const std::string& prefix) const {
  query.collect(out, prefix + ".query");
  key.collect(out, prefix + ".key");
  value.collect(out, prefix + ".value");
  output.collect(out, prefix + ".output");
}

TransformerBlock TransformerBlock::create(std::size_t dim, std::size_t heads, std::size_t hidden,
                                          Initializer& init) {
  TransformerBlock b;
  b.norm1 = LayerNorm::create(dim, init);
  b.attention = MultiHeadSelfAttention::create(dim, heads, init);
  b.norm2 = LayerNorm::create(dim, init);
  b.fc1 = Linear::create(dim, hidden, init);
  b.fc2 = Linear::create(hidden, dim, init);
  return b;
}

Tensor TransformerBlock::operator()(const Tensor& x) const {
  const Tensor h = add(x, attention(norm1(x)));
  return add(h, fc2(gelu(fc1(norm2(h)))));
}

void TransformerBlock::collect(NamedParams& out, const std::string& prefix) const {
  norm1.collect(out, prefix + ".norm1");
  attention.collect(out, prefix + ".attn");
  norm2.collect(out, prefix + ".norm2");
  fc1.collect(out, prefix + ".fc1");
  fc2.collect(out, prefix + ".fc2");
}

std::vector<Tensor> tensors_of(const NamedParams& params) {
  std::vector<Tensor> out;
  out.reserve(params.size());
  for (const auto& [_, t] : params) out.push_back(t);
  return out;
}

std::size_t parameter_count(const NamedParams& params) {
  std::size_t n = 0;
  for (const auto& [_, t] : params) n += t.numel();
  return n;
}

}  // namespace must::nn
