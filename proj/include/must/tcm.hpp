#pragma once

// Temporal consistency module: a small transformer encoder over windows of F′
// consecutive multi-term embeddings, plus window scheduling and the
// aggregation of per-window phase distributions into a per-frame timeline.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "must/checkpoint.hpp"
#include "must/nn.hpp"
#include "must/tensor.hpp"

namespace must {

struct WindowSchedule {
  std::size_t window_length = 0;  // F′
  std::size_t overlap = 0;
  std::size_t video_length = 0;  // F
  std::vector<std::size_t> starts;

  std::size_t stride() const { return window_length - overlap; }
};

// Starts 0, F′−overlap, 2(F′−overlap), …; when the last regular window stops
// short of F a tail window starting at F−F′ is appended.
// Requires 0 ≤ overlap < F′ ≤ F.
WindowSchedule schedule_windows(std::size_t video_length, std::size_t window_length, std::size_t overlap);

// As schedule_windows, except a video shorter than F′ gets one window
// spanning the whole video.
WindowSchedule schedule_video(std::size_t video_length, std::size_t window_length, std::size_t overlap);

// PE[pos, 2i] = sin(pos / 10000^(2i/dim)), PE[pos, 2i+1] = cos(…). dim must be even.
Tensor sinusoidal_pe(std::size_t length, std::size_t dim);

// Per-frame class distributions for one video.
struct PhaseTimeline {
  std::string video;
  double fps = 1.0;
  std::size_t num_classes = 0;
  std::vector<double> probs;  // frames × num_classes, row-major
  std::vector<int> labels;    // ground truth, empty when unknown

  std::size_t frames() const { return num_classes ? probs.size() / num_classes : 0; }
  std::span<const double> row(std::size_t frame) const {
    return std::span(probs).subspan(frame * num_classes, num_classes);
  }
  std::vector<int> argmax() const;
};

// Mean over every window covering a frame. Contributions are summed in order
// of window start, so the result does not depend on the order of `window_probs`
// as long as it matches `schedule.starts`.
PhaseTimeline aggregate_predictions(const WindowSchedule& schedule, std::span<const Tensor> window_probs);

struct TcmConfig {
  std::size_t width = 256;  // N·D
  std::size_t num_classes = 4;
  std::size_t layers = 2;
  std::size_t heads = 4;
  std::size_t ff_mult = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

class Tcm {
 public:
  explicit Tcm(const TcmConfig& config);

  const TcmConfig& config() const noexcept { return config_; }

  // v: [F″ × width] consecutive embeddings (F″ ≤ F′ allowed) → [F″ × classes] logits.
  Tensor encode_window(const Tensor& window) const;

  const NamedParams& parameters() const noexcept { return params_; }
  NamedParams& parameters() noexcept { return params_; }

 private:
  TcmConfig config_;
  std::vector<nn::TransformerBlock> blocks_;
  nn::Linear head_;
  NamedParams params_;
};

// Offline inference over one video's embeddings [F × width]: overlapping
// windows, softmax per position, averaged per frame.
PhaseTimeline predict_offline(const Tcm& tcm, const Tensor& embeddings, std::size_t window_length,
                              std::size_t overlap);

// Online inference: frame f takes the last position of the window
// [max(0, f−F′+1), f], so no later embedding is ever consulted.
PhaseTimeline predict_online(const Tcm& tcm, const Tensor& embeddings, std::size_t window_length);

}  // namespace must
