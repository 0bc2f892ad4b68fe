#pragma once

// Temporal multi-scale pyramid: N sub-sequences of T frame indices around a
// keyframe, one per stride, strides strictly increasing.

#include <cstddef>
#include <string>
#include <vector>

#include "must/frame_store.hpp"
#include "must/tensor.hpp"

namespace must {

enum class SamplingMode { offline, online };

SamplingMode parse_mode(const std::string& text);
std::string to_string(SamplingMode mode);

struct PyramidSpec {
  std::size_t frames_per_seq = 16;
  std::vector<std::size_t> strides{1, 4, 8, 12};  // in frames
  SamplingMode mode = SamplingMode::offline;
  double fps = 1.0;

  std::size_t num_scales() const { return strides.size(); }

  // Throws ContractError unless strides are non-empty, positive and strictly increasing.
  void validate() const;

  // Strides given in seconds, converted to frames (nearest, at least 1).
  static PyramidSpec from_seconds(const std::vector<double>& stride_seconds, double fps,
                                  std::size_t frames_per_seq, SamplingMode mode);

  // 1/4/8/12 s strides; 16 frames offline, 24 online.
  static PyramidSpec defaults(SamplingMode mode, double fps);
};

struct PyramidIndices {
  std::vector<std::vector<std::size_t>> per_scale;
  std::size_t keyframe = 0;
};

// Slot of the keyframe inside each sequence: ⌊T/2⌋ offline, T−1 online.
std::size_t keyframe_slot(std::size_t frames_per_seq, SamplingMode mode);

// Offline: index(t) = k + (t − ⌊T/2⌋)·s. Online: index(t) = k − (T−1−t)·s.
// Every index is clamped into [0, video_length − 1].
PyramidIndices build_pyramid(std::size_t video_length, std::size_t keyframe, const PyramidSpec& spec);

// One {T, H, W, 3} tensor per scale, pixel values scaled to [0, 1].
std::vector<Tensor> gather_frames(const FrameStore& store, const std::string& video,
                                  const PyramidIndices& indices);

}  // namespace must
