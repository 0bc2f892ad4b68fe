#include "must/backbone.hpp"

#include "must/error.hpp"

namespace must {

void BackboneConfig::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("backbone config: " + what); };
  if (embed_dim == 0 || depth > 64 || heads == 0 || temporal_pool == 0 || patch == 0 || frames == 0)
    fail("all sizes must be positive");
  if (frames % temporal_pool != 0)
    fail("T=" + std::to_string(frames) + " not divisible by temporal_pool=" + std::to_string(temporal_pool));
  if (embed_dim % heads != 0)
    fail("D=" + std::to_string(embed_dim) + " not divisible by heads=" + std::to_string(heads));
  if (frame_height % patch != 0 || frame_width % patch != 0)
    fail("frame size " + std::to_string(frame_height) + "x" + std::to_string(frame_width) +
         " not divisible by patch " + std::to_string(patch));
}

Backbone::Backbone(const BackboneConfig& config, nn::Initializer& init) : config_(config) {
  config_.validate();
  const std::size_t d = config_.embed_dim;
  patch_embed_ = nn::Linear::create(config_.patch_dim(), d, init);
  cls_token_ = init.truncated_normal({1, d});
  // Acts as a per-token bias of the patch projection. It must not start at
  // zero: patch tokens are then linear in the pixels and the spatial mean-pool
  // is symmetric, so clips differing only in where content sits would be
  // indistinguishable at initialisation.
  pos_embed_ = init.truncated_normal({config_.token_count() - 1, d});
  for (std::size_t i = 0; i < config_.depth; ++i)
    blocks_.push_back(nn::TransformerBlock::create(d, config_.heads, config_.mlp_ratio * d, init));
}

Tensor Backbone::tokenize(const Tensor& frames) const {
  const auto& c = config_;
  if (frames.shape() != Shape{c.frames, c.frame_height, c.frame_width, 3})
    throw ContractError("backbone: expected frames " +
                        shape_to_string({c.frames, c.frame_height, c.frame_width, 3}) + ", got " +
                        shape_to_string(frames.shape()));
  const std::size_t tp = c.temporal_pool, p = c.patch, h = c.frame_height, w = c.frame_width;
  const std::size_t gx = w / p, spatial = c.spatial_tokens(), pd = c.patch_dim();
  const std::size_t n_tokens = c.temporal_tokens() * spatial;

  const auto px = frames.values();
  std::vector<double> patches(n_tokens * pd);
  for (std::size_t tt = 0; tt < c.temporal_tokens(); ++tt)
    for (std::size_t s = 0; s < spatial; ++s) {
      const std::size_t y0 = (s / gx) * p, x0 = (s % gx) * p;
      double* dst = &patches[(tt * spatial + s) * pd];
      for (std::size_t dt = 0; dt < tp; ++dt)
        for (std::size_t y = 0; y < p; ++y) {
          const double* src = &px[(((tt * tp + dt) * h + y0 + y) * w + x0) * 3];
          std::copy_n(src, p * 3, dst + (dt * p + y) * p * 3);
        }
    }
  const Tensor patch_matrix({n_tokens, pd}, std::move(patches));
  const Tensor embedded = add(patch_embed_(patch_matrix), pos_embed_);
  const Tensor parts[] = {cls_token_, embedded};
  return concat_rows(parts);
}

SequenceEmbedding Backbone::encode_sequence(const Tensor& tokens) const {
  const auto& c = config_;
  if (tokens.shape() != Shape{c.token_count(), c.embed_dim})
    throw ContractError("backbone: expected tokens " + shape_to_string({c.token_count(), c.embed_dim}) +
                        ", got " + shape_to_string(tokens.shape()));
  Tensor x = tokens;
  for (const auto& block : blocks_) x = block(x);
  SequenceEmbedding out;
  out.cls = slice_rows(x, 0, 1);
  out.tokens = mean_pool_rows(slice_rows(x, 1, c.token_count() - 1), c.spatial_tokens());
  return out;
}

void Backbone::collect(NamedParams& out, const std::string& prefix) const {
  patch_embed_.collect(out, prefix + ".patch_embed");
  out.emplace_back(prefix + ".cls_token", cls_token_);
  out.emplace_back(prefix + ".pos_embed", pos_embed_);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(out, prefix + ".blocks." + std::to_string(i));
}

}  // namespace must
