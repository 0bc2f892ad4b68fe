#pragma once

// Losses, AdamW, the cosine schedule and the two training loops.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "must/checkpoint.hpp"
#include "must/frame_store.hpp"
#include "must/mtfe.hpp"
#include "must/sampler.hpp"
#include "must/tcm.hpp"
#include "must/tensor.hpp"

namespace must {

struct TrainConfig {
  double lr = 1e-4;
  double weight_decay = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t epochs = 5;
  std::size_t batch_size = 18;
  std::uint64_t seed = 0;
  SamplingMode mode = SamplingMode::offline;

  void validate() const;
};

// Mean over the batch of −log softmax(logits)[label], via log-sum-exp.
Tensor cross_entropy(const Tensor& logits, std::span<const int> labels);

// lr0 · ½ · (1 + cos(π · step / total)); steps past the end clamp to 0.
double cosine_lr(std::size_t step, std::size_t total_steps, double lr0);

struct MomentBuffers {
  std::vector<double> first;
  std::vector<double> second;
};

struct OptimizerState {
  std::vector<MomentBuffers> moments;  // one per parameter
  std::size_t step = 0;
};

// One AdamW update of a single parameter buffer. `step` is the 1-based
// update count used for bias correction. Weight decay is decoupled:
// w ← w·(1 − lr·λ) before the adaptive step.
void adamw_update(std::span<double> weights, std::span<const double> grads, MomentBuffers& moments,
                  std::size_t step, double lr, const TrainConfig& cfg);

class AdamW {
 public:
  AdamW(NamedParams params, const TrainConfig& cfg);

  // Applies one update with learning rate `lr` to every parameter using its
  // accumulated gradient (missing gradients count as zero). Throws
  // NumericalError on a non-finite gradient.
  void step(double lr);
  void zero_grad();

  const OptimizerState& state() const noexcept { return state_; }
  // L2 norm of the full gradient seen by the last step.
  double last_grad_norm() const noexcept { return last_grad_norm_; }

 private:
  NamedParams params_;
  TrainConfig cfg_;
  OptimizerState state_;
  double last_grad_norm_ = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  std::string split;  // "train" or "val"
  double loss = 0.0;
  double accuracy = 0.0;
  double lr = 0.0;
  double max_grad_norm = 0.0;
};

struct TrainHistory {
  std::vector<EpochLog> epochs;
  std::vector<double> step_losses;
};

// CSV with header epoch,split,loss,accuracy,lr.
void write_training_log(const std::filesystem::path& path, const TrainHistory& history);

// ---- stage 1 --------------------------------------------------------------

struct KeyframeSample {
  std::string video;
  std::size_t keyframe = 0;
  int label = 0;
};

struct MtfeDataset {
  const FrameStore* store = nullptr;
  PyramidSpec pyramid;
  std::vector<KeyframeSample> samples;
};

// Trains backbone + attention module + linear head end-to-end on keyframe
// labels. `validation` may be empty.
TrainHistory fit_mtfe(Mtfe& model, const MtfeDataset& train, const TrainConfig& cfg,
                      const MtfeDataset* validation = nullptr);

// Head logits for one keyframe, without recording a graph.
FusionOutput mtfe_predict(const Mtfe& model, const FrameStore& store, const std::string& video,
                          std::size_t keyframe, const PyramidSpec& pyramid);

// ---- stage 2 --------------------------------------------------------------

struct EmbeddingSequence {
  std::string video;
  Tensor embeddings;        // [F × width]
  std::vector<int> labels;  // F
};

struct TcmDataset {
  std::vector<EmbeddingSequence> videos;
  std::size_t window_length = 0;
  std::size_t overlap = 0;
};

struct WindowRef {
  std::size_t video = 0;
  std::size_t start = 0;
  std::size_t length = 0;
};

// Every scheduled window of every video, in video then start order.
std::vector<WindowRef> training_windows(const TcmDataset& data);

// Per-position cross-entropy over overlapping windows of frozen embeddings.
TrainHistory fit_tcm(Tcm& model, const TcmDataset& train, const TrainConfig& cfg);

}  // namespace must
