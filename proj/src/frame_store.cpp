#include "must/frame_store.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include "must/error.hpp"

namespace must {
namespace fs = std::filesystem;

void MemoryFrameStore::add_video(const std::string& video, std::vector<FrameBytes> frames) {
  for (const auto& f : frames)
    if (f.size() != height_ * width_ * 3)
      throw DataError("video " + video + ": frame size does not match store geometry");
  videos_[video] = std::move(frames);
}

std::vector<std::string> MemoryFrameStore::video_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : videos_) ids.push_back(id);
  return ids;
}

std::size_t MemoryFrameStore::frame_count(const std::string& video) const {
  auto it = videos_.find(video);
  if (it == videos_.end()) throw DataError("unknown video " + video);
  return it->second.size();
}

std::span<const std::uint8_t> MemoryFrameStore::frame(const std::string& video, std::size_t index) const {
  auto it = videos_.find(video);
  if (it == videos_.end()) throw DataError("unknown video " + video);
  if (index >= it->second.size())
    throw IoError("missing frame " + video + "/" + frame_file_name(index));
  return it->second[index];
}

std::string frame_file_name(std::size_t index, const std::string& extension) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%08zu", index);
  return std::string(buf) + "." + extension;
}

void write_ppm(const fs::path& path, std::span<const std::uint8_t> rgb, std::size_t height,
               std::size_t width) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "P6\n" << width << ' ' << height << "\n255\n";
  out.write(reinterpret_cast<const char*>(rgb.data()), static_cast<std::streamsize>(rgb.size()));
}

FrameBytes read_ppm(const fs::path& path, std::size_t& height, std::size_t& width) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing frame " + path.string());
  std::string magic;
  std::size_t maxval = 0;
  in >> magic >> width >> height >> maxval;
  if (magic != "P6" || maxval != 255 || width == 0 || height == 0)
    throw IoError("unsupported image " + path.string() + " (expected 8-bit binary PPM)");
  in.get();
  FrameBytes pixels(height * width * 3);
  in.read(reinterpret_cast<char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!in) throw IoError("truncated image " + path.string());
  return pixels;
}

DirectoryFrameStore::DirectoryFrameStore(fs::path root, std::string extension)
    : root_(std::move(root)), extension_(std::move(extension)) {
  if (!fs::is_directory(root_)) throw IoError("missing frame store " + root_.string());
  for (const auto& entry : fs::directory_iterator(root_)) {
    if (!entry.is_directory()) continue;
    std::size_t count = 0;
    for (const auto& f : fs::directory_iterator(entry.path())) {
      if (f.path().extension() != "." + extension_) continue;
      const std::string stem = f.path().stem().string();
      if (stem.empty() || !std::all_of(stem.begin(), stem.end(), ::isdigit)) continue;
      count = std::max(count, static_cast<std::size_t>(std::stoull(stem)) + 1);
    }
    if (count > 0) cache_[entry.path().filename().string()].resize(count);
  }
  if (cache_.empty()) throw IoError("frame store " + root_.string() + " holds no videos");
  const auto& first = cache_.begin()->first;
  read_ppm(frame_path(first, 0), height_, width_);
}

fs::path DirectoryFrameStore::frame_path(const std::string& video, std::size_t index) const {
  return root_ / video / frame_file_name(index, extension_);
}

std::vector<std::string> DirectoryFrameStore::video_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : cache_) ids.push_back(id);
  return ids;
}

std::size_t DirectoryFrameStore::frame_count(const std::string& video) const {
  auto it = cache_.find(video);
  if (it == cache_.end()) throw DataError("unknown video " + video);
  return it->second.size();
}

std::span<const std::uint8_t> DirectoryFrameStore::frame(const std::string& video, std::size_t index) const {
  auto it = cache_.find(video);
  if (it == cache_.end()) throw DataError("unknown video " + video);
  if (index >= it->second.size()) throw IoError("missing frame " + frame_path(video, index).string());
  std::lock_guard lock(mutex_);
  auto& slot = it->second[index];
  if (!slot) {
    std::size_t h = 0, w = 0;
    FrameBytes pixels = read_ppm(frame_path(video, index), h, w);
    if (h != height_ || w != width_)
      throw IoError("frame " + frame_path(video, index).string() + " has unexpected size");
    slot = std::move(pixels);
  }
  return *slot;
}

void write_frame_store(const FrameStore& store, const fs::path& root) {
  for (const auto& video : store.video_ids()) {
    const fs::path dir = root / video;
    fs::create_directories(dir);
    const std::size_t n = store.frame_count(video);
    for (std::size_t i = 0; i < n; ++i)
      write_ppm(dir / frame_file_name(i), store.frame(video, i), store.height(), store.width());
  }
}

}  // namespace must
