#pragma once

// Read access to per-video RGB frames.
//
// On disk a store is a directory with one sub-directory per video holding
// frames named <frame_idx:08d>.<ext>; frames are binary PPM (P6, 8-bit).

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace must {

using FrameBytes = std::vector<std::uint8_t>;  // H×W×3, row-major

class FrameStore {
 public:
  virtual ~FrameStore() = default;

  virtual std::vector<std::string> video_ids() const = 0;  // sorted
  virtual std::size_t frame_count(const std::string& video) const = 0;
  virtual std::size_t height() const = 0;
  virtual std::size_t width() const = 0;
  virtual std::span<const std::uint8_t> frame(const std::string& video, std::size_t index) const = 0;
};

class MemoryFrameStore final : public FrameStore {
 public:
  MemoryFrameStore(std::size_t height, std::size_t width) : height_(height), width_(width) {}

  void add_video(const std::string& video, std::vector<FrameBytes> frames);

  std::vector<std::string> video_ids() const override;
  std::size_t frame_count(const std::string& video) const override;
  std::size_t height() const override { return height_; }
  std::size_t width() const override { return width_; }
  std::span<const std::uint8_t> frame(const std::string& video, std::size_t index) const override;

 private:
  std::size_t height_, width_;
  std::map<std::string, std::vector<FrameBytes>> videos_;
};

// Lazily loads and caches frames from a directory store.
class DirectoryFrameStore final : public FrameStore {
 public:
  explicit DirectoryFrameStore(std::filesystem::path root, std::string extension = "ppm");

  std::vector<std::string> video_ids() const override;
  std::size_t frame_count(const std::string& video) const override;
  std::size_t height() const override { return height_; }
  std::size_t width() const override { return width_; }
  std::span<const std::uint8_t> frame(const std::string& video, std::size_t index) const override;

  std::filesystem::path frame_path(const std::string& video, std::size_t index) const;

 private:
  std::filesystem::path root_;
  std::string extension_;
  std::size_t height_ = 0, width_ = 0;
  mutable std::mutex mutex_;
  mutable std::map<std::string, std::vector<std::optional<FrameBytes>>> cache_;
};

void write_ppm(const std::filesystem::path& path, std::span<const std::uint8_t> rgb,
               std::size_t height, std::size_t width);
// Returns the pixels; height/width receive the image size.
FrameBytes read_ppm(const std::filesystem::path& path, std::size_t& height, std::size_t& width);

std::string frame_file_name(std::size_t index, const std::string& extension = "ppm");

void write_frame_store(const FrameStore& store, const std::filesystem::path& root);

}  // namespace must
