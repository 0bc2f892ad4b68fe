#pragma once

// Flat key=value run configuration shared by every pipeline command.
//
// A file holds one "key = value" per line; '#' starts a comment. Flag
// overrides are applied on top. Unknown keys and malformed values raise
// ConfigError naming the key.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "must/data.hpp"
#include "must/mtfe.hpp"
#include "must/sampler.hpp"
#include "must/tcm.hpp"
#include "must/train.hpp"

namespace must {

class RunConfig {
 public:
  RunConfig();

  static RunConfig from_file(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  // "key=value"
  void apply_override(const std::string& assignment);
  void merge_text(const std::string& text, const std::string& origin);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;

  bool has_key(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const noexcept { return values_; }
  static std::vector<std::string> known_keys();

  // Sorted "key = value" lines; parses back to an equal config.
  std::string serialize() const;

  // Cross-key checks; throws ConfigError on the first offending key.
  void validate() const;

  SamplingMode mode() const;
  std::uint64_t seed() const { return get_u64("seed"); }
  SyntheticSpec synthetic() const;
  PyramidSpec pyramid() const;
  MtfeConfig mtfe() const;
  TrainConfig mtfe_train() const;
  TcmConfig tcm(std::size_t width, std::size_t num_classes) const;
  TrainConfig tcm_train() const;
  // ceil(coverage · mean video length); coverage is 10% offline, 5% online
  // unless set explicitly.
  std::size_t window_length(double mean_video_frames) const;
  // overlap fraction of F′, rounded, kept below F′.
  std::size_t window_overlap(std::size_t window_length) const;
  double coverage() const;

  std::filesystem::path path(const std::string& key, const std::filesystem::path& workdir) const;

  bool operator==(const RunConfig& other) const { return values_ == other.values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace must
