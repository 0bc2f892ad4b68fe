#include "must/mtfe.hpp"

#include <vector>

#include "must/error.hpp"

namespace must {

Mtfe::Mtfe(const MtfeConfig& config)
    : config_(config),
      init_(config.seed),
      backbone_(config.backbone, init_),
      mtam_(config.mtam(), init_) {
  backbone_.collect(params_);
  mtam_.collect(params_);
}

FusionOutput Mtfe::operator()(std::span<const Tensor> pyramid) const {
  if (pyramid.size() != config_.num_scales)
    throw ContractError("mtfe: expected " + std::to_string(config_.num_scales) + " clips, got " +
                        std::to_string(pyramid.size()));
  std::vector<SequenceEmbedding> scales;
  scales.reserve(pyramid.size());
  for (const auto& clip : pyramid) scales.push_back(backbone_(clip));
  return mtam_(scales);
}

}  // namespace must
