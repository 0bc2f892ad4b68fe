#pragma once

// Compact spatio-temporal encoder shared by every pyramid scale.
//
// Frames are cut into tubelets of temporal_pool × patch × patch pixels, each
// linearly projected to D and offset by a learned space-time position
// embedding; a learned class token is prepended. Pre-norm transformer blocks
// follow. The class token row becomes cls_i and the remaining tokens are
// mean-pooled over space per temporal slot, leaving T′ = T / temporal_pool
// embeddings.

#include <cstddef>
#include <string>
#include <vector>

#include "must/checkpoint.hpp"
#include "must/nn.hpp"
#include "must/tensor.hpp"

namespace must {

struct BackboneConfig {
  std::size_t embed_dim = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t temporal_pool = 2;
  std::size_t patch = 8;
  std::size_t frame_height = 32;
  std::size_t frame_width = 32;
  std::size_t frames = 16;  // T
  std::size_t mlp_ratio = 4;

  void validate() const;
  std::size_t temporal_tokens() const { return frames / temporal_pool; }  // T′
  std::size_t spatial_tokens() const { return (frame_height / patch) * (frame_width / patch); }
  std::size_t patch_dim() const { return temporal_pool * patch * patch * 3; }
  std::size_t token_count() const { return 1 + temporal_tokens() * spatial_tokens(); }
};

struct SequenceEmbedding {
  Tensor tokens;  // [T′ × D]
  Tensor cls;     // [1 × D]
};

class Backbone {
 public:
  Backbone(const BackboneConfig& config, nn::Initializer& init);

  const BackboneConfig& config() const noexcept { return config_; }

  // {T, H, W, 3} frames → [(1 + T′·S) × D] tokens, class token at row 0.
  Tensor tokenize(const Tensor& frames) const;
  SequenceEmbedding encode_sequence(const Tensor& tokens) const;
  SequenceEmbedding operator()(const Tensor& frames) const { return encode_sequence(tokenize(frames)); }

  void collect(NamedParams& out, const std::string& prefix = "backbone") const;

 private:
  BackboneConfig config_;
  nn::Linear patch_embed_;
  Tensor cls_token_;
  Tensor pos_embed_;
  std::vector<nn::TransformerBlock> blocks_;
};

}  // namespace must
