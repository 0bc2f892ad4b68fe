#include "must/tcm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "must/error.hpp"
#include "must/parallel.hpp"

namespace must {

std::vector<int> PhaseTimeline::argmax() const {
  std::vector<int> out(frames());
  for (std::size_t f = 0; f < out.size(); ++f) {
    const auto r = row(f);
    out[f] = static_cast<int>(std::max_element(r.begin(), r.end()) - r.begin());
  }
  return out;
}

WindowSchedule schedule_windows(std::size_t video_length, std::size_t window_length, std::size_t overlap) {
  if (overlap >= window_length)
    throw ContractError("schedule_windows: overlap " + std::to_string(overlap) + " must be below window length " +
                        std::to_string(window_length) + " (zero stride)");
  if (window_length == 0 || window_length > video_length)
    throw ContractError("schedule_windows: window length " + std::to_string(window_length) +
                        " must be in [1, " + std::to_string(video_length) + "]");
  WindowSchedule s{window_length, overlap, video_length, {}};
  const std::size_t stride = window_length - overlap;
  for (std::size_t start = 0; start + window_length <= video_length; start += stride) s.starts.push_back(start);
  if (s.starts.back() + window_length < video_length) s.starts.push_back(video_length - window_length);
  return s;
}

WindowSchedule schedule_video(std::size_t video_length, std::size_t window_length, std::size_t overlap) {
  if (video_length == 0) throw ContractError("schedule_video: empty video");
  if (video_length < window_length) return WindowSchedule{video_length, 0, video_length, {0}};
  return schedule_windows(video_length, window_length, overlap);
}

Tensor sinusoidal_pe(std::size_t length, std::size_t dim) {
  if (dim == 0 || dim % 2 != 0) throw ContractError("sinusoidal_pe: dim must be even, got " + std::to_string(dim));
  std::vector<double> pe(length * dim);
  for (std::size_t pos = 0; pos < length; ++pos)
    for (std::size_t i = 0; i < dim / 2; ++i) {
      const double angle =
          static_cast<double>(pos) / std::pow(10000.0, static_cast<double>(2 * i) / static_cast<double>(dim));
      pe[pos * dim + 2 * i] = std::sin(angle);
      pe[pos * dim + 2 * i + 1] = std::cos(angle);
    }
  return Tensor({length, dim}, std::move(pe));
}

PhaseTimeline aggregate_predictions(const WindowSchedule& schedule, std::span<const Tensor> window_probs) {
  if (window_probs.size() != schedule.starts.size())
    throw ContractError("aggregate_predictions: " + std::to_string(window_probs.size()) + " windows for a schedule of " +
                        std::to_string(schedule.starts.size()));
  if (window_probs.empty()) throw ContractError("aggregate_predictions: no windows");
  const std::size_t classes = window_probs.front().cols();
  const std::size_t frames = schedule.video_length;

  std::vector<std::size_t> order(schedule.starts.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return schedule.starts[a] < schedule.starts[b]; });

  PhaseTimeline out;
  out.num_classes = classes;
  out.probs.assign(frames * classes, 0.0);
  std::vector<std::size_t> counts(frames, 0);
  for (std::size_t w : order) {
    const Tensor& block = window_probs[w];
    if (block.rows() != schedule.window_length || block.cols() != classes)
      throw ContractError("aggregate_predictions: window block has shape " + shape_to_string(block.shape()));
    const auto v = block.values();
    for (std::size_t t = 0; t < schedule.window_length; ++t) {
      const std::size_t f = schedule.starts[w] + t;
      for (std::size_t c = 0; c < classes; ++c) out.probs[f * classes + c] += v[t * classes + c];
      ++counts[f];
    }
  }
  for (std::size_t f = 0; f < frames; ++f) {
    if (counts[f] == 0)
      throw std::logic_error("aggregate_predictions: frame " + std::to_string(f) + " not covered by any window");
    const double inv = 1.0 / static_cast<double>(counts[f]);
    for (std::size_t c = 0; c < classes; ++c) out.probs[f * classes + c] *= inv;
  }
  return out;
}

void TcmConfig::validate() const {
  if (width == 0 || num_classes == 0 || heads == 0 || ff_mult == 0)
    throw ContractError("tcm config: sizes must be positive");
  if (width % 2 != 0) throw ContractError("tcm config: embedding width must be even for the positional embedding");
  if (width % heads != 0)
    throw ContractError("tcm config: width " + std::to_string(width) + " not divisible by " +
                        std::to_string(heads) + " heads");
}

Tcm::Tcm(const TcmConfig& config) : config_(config) {
  config_.validate();
  nn::Initializer init(config_.seed);
  for (std::size_t i = 0; i < config_.layers; ++i)
    blocks_.push_back(nn::TransformerBlock::create(config_.width, config_.heads, config_.ff_mult * config_.width, init));
  head_ = nn::Linear::create(config_.width, config_.num_classes, init);
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(params_, "tcm.blocks." + std::to_string(i));
  head_.collect(params_, "tcm.head");
}

Tensor Tcm::encode_window(const Tensor& window) const {
  if (window.rank() != 2 || window.cols() != config_.width)
    throw ContractError("tcm: expected embeddings of width " + std::to_string(config_.width) + ", got " +
                        shape_to_string(window.shape()));
  Tensor x = add(window, sinusoidal_pe(window.rows(), config_.width));
  for (const auto& block : blocks_) x = block(x);
  return head_(x);
}

PhaseTimeline predict_offline(const Tcm& tcm, const Tensor& embeddings, std::size_t window_length,
                              std::size_t overlap) {
  const WindowSchedule schedule = schedule_video(embeddings.rows(), window_length, overlap);
  std::vector<Tensor> probs(schedule.starts.size());
  parallel_for(schedule.starts.size(), [&](std::size_t w) {
    NoGradGuard no_grad;
    probs[w] = softmax_rows(tcm.encode_window(slice_rows(embeddings, schedule.starts[w], schedule.window_length)));
  });
  return aggregate_predictions(schedule, probs);
}

PhaseTimeline predict_online(const Tcm& tcm, const Tensor& embeddings, std::size_t window_length) {
  if (window_length == 0) throw ContractError("predict_online: window length must be positive");
  const std::size_t frames = embeddings.rows();
  const std::size_t classes = tcm.config().num_classes;
  PhaseTimeline out;
  out.num_classes = classes;
  out.probs.assign(frames * classes, 0.0);
  parallel_for(frames, [&](std::size_t f) {
    NoGradGuard no_grad;
    const std::size_t len = std::min(window_length, f + 1);
    const Tensor probs = softmax_rows(tcm.encode_window(slice_rows(embeddings, f + 1 - len, len)));
    const auto last = probs.values().subspan((len - 1) * classes, classes);
    std::copy(last.begin(), last.end(), out.probs.begin() + static_cast<std::ptrdiff_t>(f * classes));
  });
  return out;
}

}  // namespace must
