#pragma once

// Multi-term frame encoder: shared backbone applied to every pyramid scale,
// followed by the multi-temporal attention module.

#include <cstddef>
#include <cstdint>
#include <span>

#include "must/backbone.hpp"
#include "must/checkpoint.hpp"
#include "must/mtam.hpp"

namespace must {

struct MtfeConfig {
  BackboneConfig backbone;
  std::size_t num_scales = 4;
  std::size_t num_classes = 4;
  std::size_t mlp_hidden = 0;
  std::uint64_t seed = 0;

  MtamConfig mtam() const { return {num_scales, backbone.embed_dim, num_classes, mlp_hidden}; }
  std::size_t embedding_width() const { return num_scales * backbone.embed_dim; }
};

class Mtfe {
 public:
  explicit Mtfe(const MtfeConfig& config);

  const MtfeConfig& config() const noexcept { return config_; }
  const Backbone& backbone() const noexcept { return backbone_; }
  const Mtam& mtam() const noexcept { return mtam_; }

  // One {T, H, W, 3} clip per scale.
  FusionOutput operator()(std::span<const Tensor> pyramid) const;

  // Handles onto the live parameters ("backbone.*" then "mtam.*").
  const NamedParams& parameters() const noexcept { return params_; }
  NamedParams& parameters() noexcept { return params_; }

 private:
  MtfeConfig config_;
  nn::Initializer init_;
  Backbone backbone_;
  Mtam mtam_;
  NamedParams params_;
};

}  // namespace must
