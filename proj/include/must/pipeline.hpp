#pragma once

// The two-stage pipeline, as reusable stages and as the CLI commands
// generate → train-mtfe → extract → train-tcm → infer → eval → ribbon.
//
// Workdir layout (directory names are config keys):
//   data/        frames/<video>/<idx>.ppm, annotations.csv
//   mtfe/        mtfe.ckpt, train_log.csv
//   embeddings/  embeddings.bin, index.json
//   tcm/         tcm.ckpt, tcm.json, train_log.csv
//   predictions/ predictions.jsonl (TCM), mtfe_baseline.jsonl (head argmax)
//   report/      metrics.json, metrics.txt, ribbon_<video>.svg
// Each output directory also receives config.cfg and manifest.json (the
// ribbon writes <svg stem>.manifest.json next to the SVG).

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "must/config.hpp"
#include "must/data.hpp"
#include "must/eval.hpp"
#include "must/mtfe.hpp"
#include "must/tcm.hpp"
#include "must/train.hpp"

namespace must {

using LabelMap = std::map<std::string, std::vector<int>>;

struct VideoSplit {
  std::vector<std::string> train;
  std::vector<std::string> test;  // the last `test_videos` ids in sorted order
};

VideoSplit split_videos(std::vector<std::string> ids, std::size_t test_videos);

// Keyframes 0, stride, 2·stride, … of every listed video, labelled with the
// keyframe's own phase.
MtfeDataset make_mtfe_dataset(const FrameStore& store, const LabelMap& labels, const std::vector<std::string>& videos,
                              const PyramidSpec& pyramid, std::size_t keyframe_stride);

TcmDataset make_tcm_dataset(const EmbeddingStore& embeddings, const LabelMap& labels,
                            const std::vector<std::string>& videos, std::size_t window_length, std::size_t overlap);

double mean_video_frames(const LabelMap& labels, const std::vector<std::string>& videos);

// TCM timeline per video: overlap-averaged offline, causal online.
std::vector<PhaseTimeline> tcm_timelines(const Tcm& tcm, const EmbeddingStore& embeddings, const LabelMap& labels,
                                         const std::vector<std::string>& videos, SamplingMode mode,
                                         std::size_t window_length, std::size_t overlap, double fps);

// Per-frame softmax of the stage-1 linear head.
std::vector<PhaseTimeline> mtfe_timelines(const Mtfe& mtfe, const EmbeddingStore& embeddings, const LabelMap& labels,
                                          const std::vector<std::string>& videos, double fps);

// Predictions as JSON lines {video, frame, probs, pred}, and back.
std::string format_predictions(const std::vector<PhaseTimeline>& timelines);
std::vector<PhaseTimeline> parse_predictions(const std::string& jsonl, double fps);

// The whole pipeline in memory, on the synthetic spec of `cfg`.
struct ExperimentResult {
  VideoSplit split;
  TrainHistory mtfe_history;
  TrainHistory tcm_history;
  std::size_t window_length = 0;
  std::size_t overlap = 0;
  std::vector<PhaseTimeline> tcm;   // held-out videos
  std::vector<PhaseTimeline> mtfe;  // held-out videos
  MetricsReport report;
  MetricsReport baseline;
  std::string mtfe_hash;
  std::string tcm_hash;
};

ExperimentResult run_experiment(const RunConfig& cfg, std::ostream* progress = nullptr);

// ---- commands -------------------------------------------------------------

struct CommandOptions {
  std::filesystem::path workdir = ".";
  std::optional<std::filesystem::path> out;  // replaces the command's output directory
  std::optional<std::string> video;          // ribbon
  std::optional<std::filesystem::path> svg;  // ribbon
};

const std::vector<std::string>& command_names();

// Throws the library's error types.
void run_command(const std::string& command, const RunConfig& cfg, const CommandOptions& options, std::ostream& log);

// Runs the command and maps failures to exit codes: 2 configuration,
// 3 data or I/O, 4 numerical failure, 1 anything else. Errors go to `err`.
int execute_command(const std::string& command, const RunConfig& cfg, const CommandOptions& options,
                    std::ostream& log, std::ostream& err);

}  // namespace must
