#include "must/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "must/error.hpp"

namespace must {

SamplingMode parse_mode(const std::string& text) {
  if (text == "offline") return SamplingMode::offline;
  if (text == "online") return SamplingMode::online;
  throw ContractError("unknown mode '" + text + "' (expected offline or online)");
}

std::string to_string(SamplingMode mode) { return mode == SamplingMode::offline ? "offline" : "online"; }

void PyramidSpec::validate() const {
  if (frames_per_seq == 0) throw ContractError("pyramid: frames_per_seq must be positive");
  if (strides.empty()) throw ContractError("pyramid: at least one stride is required");
  if (!(fps > 0.0)) throw ContractError("pyramid: fps must be positive");
  for (std::size_t i = 0; i < strides.size(); ++i) {
    if (strides[i] == 0) throw ContractError("pyramid: strides must be positive");
    if (i > 0 && strides[i] <= strides[i - 1])
      throw ContractError("pyramid: strides must be strictly increasing (stride " + std::to_string(i) +
                          " = " + std::to_string(strides[i]) + " frames)");
  }
}

PyramidSpec PyramidSpec::from_seconds(const std::vector<double>& stride_seconds, double fps,
                                      std::size_t frames_per_seq, SamplingMode mode) {
  PyramidSpec spec;
  spec.frames_per_seq = frames_per_seq;
  spec.mode = mode;
  spec.fps = fps;
  spec.strides.clear();
  for (double s : stride_seconds) {
    if (!(s > 0.0)) throw ContractError("pyramid: stride seconds must be positive");
    spec.strides.push_back(std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(s * fps))));
  }
  spec.validate();
  return spec;
}

PyramidSpec PyramidSpec::defaults(SamplingMode mode, double fps) {
  return from_seconds({1.0, 4.0, 8.0, 12.0}, fps, mode == SamplingMode::offline ? 16 : 24, mode);
}

std::size_t keyframe_slot(std::size_t frames_per_seq, SamplingMode mode) {
  return mode == SamplingMode::offline ? frames_per_seq / 2 : frames_per_seq - 1;
}

PyramidIndices build_pyramid(std::size_t video_length, std::size_t keyframe, const PyramidSpec& spec) {
  if (keyframe >= video_length)
    throw BoundsError("keyframe " + std::to_string(keyframe) + " out of range for a video of " +
                        std::to_string(video_length) + " frames");
  spec.validate();
  const auto t_count = static_cast<long long>(spec.frames_per_seq);
  const auto slot = static_cast<long long>(keyframe_slot(spec.frames_per_seq, spec.mode));
  const auto last = static_cast<long long>(video_length) - 1;
  const auto k = static_cast<long long>(keyframe);

  PyramidIndices out;
  out.keyframe = keyframe;
  out.per_scale.reserve(spec.strides.size());
  for (std::size_t stride : spec.strides) {
    const auto s = static_cast<long long>(stride);
    std::vector<std::size_t> seq(spec.frames_per_seq);
    for (long long t = 0; t < t_count; ++t)
      seq[static_cast<std::size_t>(t)] = static_cast<std::size_t>(std::clamp(k + (t - slot) * s, 0LL, last));
    out.per_scale.push_back(std::move(seq));
  }
  return out;
}

std::vector<Tensor> gather_frames(const FrameStore& store, const std::string& video,
                                  const PyramidIndices& indices) {
  const std::size_t h = store.height(), w = store.width();
  const std::size_t frame_size = h * w * 3;
  std::vector<Tensor> out;
  out.reserve(indices.per_scale.size());
  for (const auto& seq : indices.per_scale) {
    std::vector<double> values(seq.size() * frame_size);
    for (std::size_t t = 0; t < seq.size(); ++t) {
      const auto px = store.frame(video, seq[t]);
      for (std::size_t i = 0; i < frame_size; ++i) values[t * frame_size + i] = px[i] / 255.0;
    }
    out.emplace_back(Shape{seq.size(), h, w, 3}, std::move(values));
  }
  return out;
}

}  // namespace must
