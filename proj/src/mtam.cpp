#include "must/mtam.hpp"

#include <cmath>

#include "must/error.hpp"

namespace must {
namespace {

// The module stacks attention, attention and an MLP with no residual path or
// normalisation, so weights are scaled by fan-in to keep activations (and
// gradients) at unit scale; the backbone's σ = 0.02 would shrink the signal
// by roughly 0.02·√D per layer.
double fan_in_std(std::size_t fan_in) { return 1.0 / std::sqrt(static_cast<double>(fan_in)); }

AttentionProjections make_projections(std::size_t d, nn::Initializer& init) {
  const double s = fan_in_std(d);
  return {init.truncated_normal({d, d}, s), init.truncated_normal({d, d}, s), init.truncated_normal({d, d}, s)};
}

void collect_projections(const AttentionProjections& p, NamedParams& out, const std::string& prefix) {
  out.emplace_back(prefix + ".query", p.query);
  out.emplace_back(prefix + ".key", p.key);
  out.emplace_back(prefix + ".value", p.value);
}

}  // namespace

void MtamConfig::validate() const {
  if (num_scales == 0 || embed_dim == 0 || num_classes == 0)
    throw ContractError("mtam config: scales, width and classes must be positive");
}

Tensor routed_sequence(const SequenceEmbedding& embedding) {
  const Tensor parts[] = {embedding.cls, embedding.tokens};
  return concat_rows(parts);
}

Mtam::Mtam(const MtamConfig& config, nn::Initializer& init) : config_(config) {
  config_.validate();
  const std::size_t d = config_.embed_dim;
  for (std::size_t i = 0; i < config_.num_scales; ++i) cross_.push_back(make_projections(d, init));
  for (std::size_t i = 0; i < config_.num_scales; ++i) self_.push_back(make_projections(d, init));
  mlp_in_ = nn::Linear::create(config_.fused_width(), config_.hidden_width(), init, true,
                               fan_in_std(config_.fused_width()));
  mlp_out_ = nn::Linear::create(config_.hidden_width(), config_.fused_width(), init, true,
                                fan_in_std(config_.hidden_width()));
  head_ = nn::Linear::create(config_.fused_width(), config_.num_classes, init);
}

std::vector<Tensor> Mtam::mtca(std::span<const Tensor> sequences) const {
  if (sequences.size() != config_.num_scales)
    throw ContractError("mtca: expected " + std::to_string(config_.num_scales) + " scales, got " +
                        std::to_string(sequences.size()));
  for (const auto& s : sequences) {
    if (s.shape() != sequences.front().shape())
      throw ContractError("mtca: scales differ in shape (" + shape_to_string(sequences.front().shape()) +
                          " vs " + shape_to_string(s.shape()) + ")");
  }
  if (sequences.front().cols() != config_.embed_dim)
    throw ContractError("mtca: sequence width " + std::to_string(sequences.front().cols()) +
                        " does not match D=" + std::to_string(config_.embed_dim));

  const Tensor all = concat_rows(sequences);
  std::vector<Tensor> out;
  out.reserve(sequences.size());
  for (std::size_t i = 0; i < sequences.size(); ++i) {
    const auto& w = cross_[i];
    out.push_back(nn::scaled_dot_attention(matmul(sequences[i], w.query), matmul(all, w.key),
                                           matmul(all, w.value)));
  }
  return out;
}

Tensor Mtam::mtsa(std::size_t scale, const Tensor& sequence, std::span<const Tensor> cross) const {
  if (cross.size() != config_.num_scales)
    throw ContractError("mtsa: expected " + std::to_string(config_.num_scales) +
                        " cross-attention outputs, got " + std::to_string(cross.size()));
  if (scale >= config_.num_scales) throw ContractError("mtsa: scale index out of range");
  std::vector<Tensor> parts{sequence};
  parts.insert(parts.end(), cross.begin(), cross.end());
  const Tensor joined = concat_rows(parts);
  const auto& w = self_[scale];
  return nn::scaled_dot_attention(matmul(joined, w.query), matmul(joined, w.key), matmul(joined, w.value));
}

FusionOutput Mtam::fuse_and_classify(std::span<const Tensor> cls_tokens) const {
  if (cls_tokens.size() != config_.num_scales)
    throw ContractError("fuse: expected " + std::to_string(config_.num_scales) + " class tokens, got " +
                        std::to_string(cls_tokens.size()));
  std::vector<Tensor> rows;
  rows.reserve(cls_tokens.size());
  for (const auto& c : cls_tokens) rows.push_back(reshape(c, {1, c.numel()}));
  const Tensor fused = concat_cols(rows);
  FusionOutput out;
  out.embedding = mlp_out_(gelu(mlp_in_(fused)));
  out.logits = head_(out.embedding);
  return out;
}

FusionOutput Mtam::operator()(std::span<const SequenceEmbedding> scales) const {
  std::vector<Tensor> sequences;
  sequences.reserve(scales.size());
  for (const auto& s : scales) sequences.push_back(routed_sequence(s));
  const std::vector<Tensor> cross = mtca(sequences);
  std::vector<Tensor> cls;
  cls.reserve(scales.size());
  for (std::size_t i = 0; i < scales.size(); ++i) cls.push_back(slice_rows(mtsa(i, sequences[i], cross), 0, 1));
  return fuse_and_classify(cls);
}

void Mtam::collect(NamedParams& out, const std::string& prefix) const {
  for (std::size_t i = 0; i < cross_.size(); ++i)
    collect_projections(cross_[i], out, prefix + ".mtca." + std::to_string(i));
  for (std::size_t i = 0; i < self_.size(); ++i)
    collect_projections(self_[i], out, prefix + ".sa." + std::to_string(i));
  mlp_in_.collect(out, prefix + ".mlp_in");
  mlp_out_.collect(out, prefix + ".mlp_out");
  head_.collect(out, prefix + ".head");
}

}  // namespace must
