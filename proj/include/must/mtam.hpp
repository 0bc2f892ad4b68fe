#pragma once

// Multi-temporal attention: every scale's sequence queries the concatenation
// of all scales (cross-attention), each scale then self-attends over its own
// sequence followed by all cross-attention outputs, and the per-scale class
// tokens are fused by an MLP into one multi-term embedding p of width N·D.
//
// Attention here is single-head, bias-free, with d_k = D. A scale's class
// token travels as row 0 of its sequence, so the fused class token of scale i
// is row 0 of that scale's self-attention output.

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "must/backbone.hpp"
#include "must/checkpoint.hpp"
#include "must/nn.hpp"
#include "must/tensor.hpp"

namespace must {

struct MtamConfig {
  std::size_t num_scales = 4;
  std::size_t embed_dim = 64;
  std::size_t num_classes = 4;
  std::size_t mlp_hidden = 0;  // 0 → 2·N·D

  void validate() const;
  std::size_t fused_width() const { return num_scales * embed_dim; }
  std::size_t hidden_width() const { return mlp_hidden ? mlp_hidden : 2 * fused_width(); }
};

struct AttentionProjections {
  Tensor query, key, value;  // each [D × D]
};

struct FusionOutput {
  Tensor embedding;  // p, [1 × N·D]
  Tensor logits;     // [1 × classes]
};

// Row 0 = class token, rows 1.. = the T′ sequence tokens.
Tensor routed_sequence(const SequenceEmbedding& embedding);

class Mtam {
 public:
  Mtam(const MtamConfig& config, nn::Initializer& init);

  const MtamConfig& config() const noexcept { return config_; }

  // c_i = softmax(Q_i K_iᵀ / √D) V_i with Q_i from sequence i and K_i, V_i
  // from the concatenation of all sequences. All sequences must share a shape.
  std::vector<Tensor> mtca(std::span<const Tensor> sequences) const;

  // Self-attention of scale `scale` over concat(sequence, c_1 … c_N).
  Tensor mtsa(std::size_t scale, const Tensor& sequence, std::span<const Tensor> cross) const;

  // p = MLP(concat(cls_1 … cls_N)), logits = head(p).
  FusionOutput fuse_and_classify(std::span<const Tensor> cls_tokens) const;

  // Full module on backbone outputs.
  FusionOutput operator()(std::span<const SequenceEmbedding> scales) const;

  const AttentionProjections& cross_projections(std::size_t scale) const { return cross_.at(scale); }
  const AttentionProjections& self_projections(std::size_t scale) const { return self_.at(scale); }
  const nn::Linear& mlp_in() const noexcept { return mlp_in_; }
  const nn::Linear& mlp_out() const noexcept { return mlp_out_; }
  const nn::Linear& head() const noexcept { return head_; }

  void collect(NamedParams& out, const std::string& prefix = "mtam") const;

 private:
  MtamConfig config_;
  std::vector<AttentionProjections> cross_;
  std::vector<AttentionProjections> self_;
  nn::Linear mlp_in_, mlp_out_, head_;
};

}  // namespace must
