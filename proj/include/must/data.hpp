#pragma once

// Phase annotations, the synthetic phase-video generator and the embedding
// store that carries stage-1 outputs to stage 2.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "must/frame_store.hpp"
#include "must/mtfe.hpp"
#include "must/sampler.hpp"
#include "must/tcm.hpp"
#include "must/tensor.hpp"

namespace must {

struct PhaseAnnotation {
  std::string video_id;
  std::size_t frame_idx = 0;
  int phase_id = 0;

  bool operator==(const PhaseAnnotation&) const = default;
};

// CSV with header "video_id,frame_idx,phase_id". Rows are validated, sorted
// by (video_id, frame_idx), and every video must cover frames 0..n−1 exactly
// once. Errors name the offending line.
std::vector<PhaseAnnotation> load_annotations(const std::filesystem::path& path, std::size_t num_classes);
std::vector<PhaseAnnotation> parse_annotations(const std::string& csv, std::size_t num_classes);
std::string format_annotations(const std::vector<PhaseAnnotation>& annotations);
void write_annotations(const std::filesystem::path& path, const std::vector<PhaseAnnotation>& annotations);

// Per-video label sequences, assuming validated (sorted, contiguous) input.
std::map<std::string, std::vector<int>> labels_by_video(const std::vector<PhaseAnnotation>& annotations);

struct SyntheticSpec {
  std::size_t num_videos = 20;
  std::size_t frames_per_video = 300;
  std::size_t num_phases = 4;
  std::size_t min_segment = 30;
  std::size_t max_segment = 90;
  double noise_std = 0.1;
  std::size_t frame_height = 32;
  std::size_t frame_width = 32;
  std::uint64_t seed = 7;

  void validate() const;
};

struct SyntheticDataset {
  MemoryFrameStore store{32, 32};
  std::vector<PhaseAnnotation> annotations;
};

// Per-phase base image in [0, 1], H×W×3 row-major. The frame is split into a
// 4×4 grid of blocks; phase p brightens blocks b with b mod P == p.
std::vector<double> phase_pattern(const SyntheticSpec& spec, std::size_t phase);

// Each video is a run of phase segments with lengths in [min, max]; adjacent
// segments differ in phase. A frame is its phase pattern plus zero-mean
// Gaussian noise, at pixel level and per block, both with standard deviation
// noise_std, quantised to 8 bits.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

std::string synthetic_video_id(std::size_t index);

// ---- embedding store ------------------------------------------------------
//
// Binary file: "MEMB" | version:u32 | width:u64 | count:u64 | rows:f64[count·width]
// (little-endian), plus a JSON index listing {video, offset, count} per video.

inline constexpr std::uint32_t kEmbeddingStoreVersion = 1;

struct EmbeddingIndexEntry {
  std::string video;
  std::size_t offset = 0;  // first row
  std::size_t count = 0;
};

struct EmbeddingStore {
  std::size_t width = 0;
  std::vector<EmbeddingIndexEntry> videos;
  std::vector<double> rows;

  std::size_t count() const { return width ? rows.size() / width : 0; }
  const EmbeddingIndexEntry& entry(const std::string& video) const;
  // [count × width] embeddings of one video.
  Tensor video_embeddings(const std::string& video) const;
  void append(const std::string& video, const std::vector<double>& video_rows);
};

void write_embedding_store(const std::filesystem::path& binary, const std::filesystem::path& index,
                           const EmbeddingStore& store);
EmbeddingStore read_embedding_store(const std::filesystem::path& binary, const std::filesystem::path& index);

// One multi-term embedding per frame of each listed video, in frame order.
// Frames of a video are encoded in parallel; the result is independent of
// scheduling.
EmbeddingStore extract_embeddings(const Mtfe& model, const FrameStore& store, const std::vector<std::string>& videos,
                                  const PyramidSpec& pyramid);

// softmax(head(p)) per frame: the stage-1 per-frame prediction.
PhaseTimeline head_timeline(const Mtfe& model, const Tensor& embeddings);

}  // namespace must
