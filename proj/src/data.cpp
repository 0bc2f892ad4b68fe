#include "must/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <random>
#include <sstream>

#include "json.hpp"

#include "must/error.hpp"
#include "must/parallel.hpp"
#include "must/tcm.hpp"

namespace must {
namespace fs = std::filesystem;

namespace {

constexpr const char* kAnnotationHeader = "video_id,frame_idx,phase_id";
constexpr std::size_t kGrid = 4;  // synthetic patterns use a 4×4 block grid
constexpr double kOn = 0.8;
constexpr double kOff = 0.2;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_unsigned(const std::string& text, unsigned long long& out) {
  if (text.empty() || !std::all_of(text.begin(), text.end(), ::isdigit)) return false;
  try {
    out = std::stoull(text);
  } catch (...) {
    return false;
  }
  return true;
}

std::uint8_t quantize(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Segment lengths in [lo, hi] summing to total.
std::vector<std::size_t> segment_lengths(std::size_t total, std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
  const std::size_t k_min = (total + hi - 1) / hi;
  const std::size_t k_max = total / lo;
  std::uniform_int_distribution<std::size_t> pick_k(k_min, k_max);
  const std::size_t k = pick_k(rng);
  std::vector<std::size_t> lengths(k, lo);
  std::size_t remaining = total - k * lo;
  std::vector<std::size_t> open(k);
  for (std::size_t i = 0; i < k; ++i) open[i] = i;
  while (remaining > 0) {
    std::uniform_int_distribution<std::size_t> pick(0, open.size() - 1);
    const std::size_t slot = pick(rng);
    if (++lengths[open[slot]] == hi) {
      open[slot] = open.back();
      open.pop_back();
    }
    --remaining;
  }
  return lengths;
}

}  // namespace

// ---- annotations ----------------------------------------------------------

std::vector<PhaseAnnotation> parse_annotations(const std::string& csv, std::size_t num_classes) {
  std::istringstream in(csv);
  std::string line;
  if (!std::getline(in, line) || trim(line) != kAnnotationHeader)
    throw DataError("annotations: line 1: expected header '" + std::string(kAnnotationHeader) + "'");

  struct Row {
    PhaseAnnotation a;
    std::size_t line;
  };
  std::vector<Row> rows;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    line = trim(line);
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ls(line);
    std::string field;
    while (std::getline(ls, field, ',')) fields.push_back(trim(field));
    const std::string where = "annotations: line " + std::to_string(line_no) + ": ";
    if (fields.size() != 3 || fields[0].empty()) throw DataError(where + "expected 3 fields, got '" + line + "'");
    unsigned long long frame = 0, phase = 0;
    if (!parse_unsigned(fields[1], frame)) throw DataError(where + "invalid frame_idx '" + fields[1] + "'");
    if (!parse_unsigned(fields[2], phase) || phase >= num_classes)
      throw DataError(where + "phase_id '" + fields[2] + "' outside [0, " + std::to_string(num_classes) + ")");
    rows.push_back({{fields[0], static_cast<std::size_t>(frame), static_cast<int>(phase)}, line_no});
  }

  std::stable_sort(rows.begin(), rows.end(), [](const Row& x, const Row& y) {
    return std::tie(x.a.video_id, x.a.frame_idx) < std::tie(y.a.video_id, y.a.frame_idx);
  });
  std::vector<PhaseAnnotation> out;
  out.reserve(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const bool first = i == 0 || rows[i].a.video_id != rows[i - 1].a.video_id;
    const std::size_t expected = first ? 0 : rows[i - 1].a.frame_idx + 1;
    if (rows[i].a.frame_idx != expected) {
      const bool duplicate = !first && rows[i].a.frame_idx == rows[i - 1].a.frame_idx;
      throw DataError("annotations: line " + std::to_string(rows[i].line) + ": " +
                      (duplicate ? "duplicate" : "gap before") + " frame " + std::to_string(rows[i].a.frame_idx) +
                      " of video " + rows[i].a.video_id + " (expected frame " + std::to_string(expected) + ")");
    }
    out.push_back(rows[i].a);
  }
  return out;
}

std::vector<PhaseAnnotation> load_annotations(const fs::path& path, std::size_t num_classes) {
  std::ifstream in(path);
  if (!in) throw IoError("missing annotations " + path.string());
  std::string text{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  return parse_annotations(text, num_classes);
}

std::string format_annotations(const std::vector<PhaseAnnotation>& annotations) {
  std::string out = std::string(kAnnotationHeader) + "\n";
  for (const auto& a : annotations)
    out += a.video_id + "," + std::to_string(a.frame_idx) + "," + std::to_string(a.phase_id) + "\n";
  return out;
}

void write_annotations(const fs::path& path, const std::vector<PhaseAnnotation>& annotations) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_annotations(annotations);
}

std::map<std::string, std::vector<int>> labels_by_video(const std::vector<PhaseAnnotation>& annotations) {
  std::map<std::string, std::vector<int>> out;
  for (const auto& a : annotations) out[a.video_id].push_back(a.phase_id);
  return out;
}

// ---- synthetic videos -----------------------------------------------------

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& what) { throw ContractError("synthetic spec: " + what); };
  if (num_videos == 0 || frames_per_video == 0 || num_phases == 0) fail("counts must be positive");
  if (num_phases > kGrid * kGrid) fail("at most 16 phases are supported");
  if (min_segment == 0 || min_segment > max_segment || max_segment > frames_per_video)
    fail("need 0 < min_segment <= max_segment <= frames_per_video");
  if ((frames_per_video + max_segment - 1) / max_segment > frames_per_video / min_segment)
    fail("no segmentation of " + std::to_string(frames_per_video) + " frames into lengths in [" +
         std::to_string(min_segment) + ", " + std::to_string(max_segment) + "]");
  if (!(noise_std >= 0.0)) fail("noise_std must be non-negative");
  if (frame_height % kGrid != 0 || frame_width % kGrid != 0 || frame_height == 0 || frame_width == 0)
    fail("frame size must be a positive multiple of 4");
}

std::string synthetic_video_id(std::size_t index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "v%03zu", index);
  return buf;
}

std::vector<double> phase_pattern(const SyntheticSpec& spec, std::size_t phase) {
  const std::size_t h = spec.frame_height, w = spec.frame_width;
  const std::size_t bh = h / kGrid, bw = w / kGrid;
  std::vector<double> img(h * w * 3);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t block = (y / bh) * kGrid + x / bw;
      const double v = block % spec.num_phases == phase ? kOn : kOff;
      for (std::size_t c = 0; c < 3; ++c) img[(y * w + x) * 3 + c] = v;
    }
  return img;
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t h = spec.frame_height, w = spec.frame_width;
  const std::size_t bh = h / kGrid, bw = w / kGrid;
  std::vector<std::vector<double>> patterns;
  for (std::size_t p = 0; p < spec.num_phases; ++p) patterns.push_back(phase_pattern(spec, p));

  std::vector<std::vector<FrameBytes>> frames(spec.num_videos);
  std::vector<std::vector<int>> labels(spec.num_videos);
  parallel_for(spec.num_videos, [&](std::size_t v) {
    std::seed_seq seq{static_cast<std::uint64_t>(spec.seed), static_cast<std::uint64_t>(v)};
    std::mt19937_64 rng(seq);

    int phase = std::uniform_int_distribution<int>(0, static_cast<int>(spec.num_phases) - 1)(rng);
    for (std::size_t len : segment_lengths(spec.frames_per_video, spec.min_segment, spec.max_segment, rng)) {
      labels[v].insert(labels[v].end(), len, phase);
      if (spec.num_phases > 1) {
        const int step = std::uniform_int_distribution<int>(1, static_cast<int>(spec.num_phases) - 1)(rng);
        phase = (phase + step) % static_cast<int>(spec.num_phases);
      }
    }

    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<double> block_offset(kGrid * kGrid);
    for (int label : labels[v]) {
      const auto& base = patterns[static_cast<std::size_t>(label)];
      FrameBytes px(h * w * 3);
      if (spec.noise_std == 0.0) {
        for (std::size_t i = 0; i < px.size(); ++i) px[i] = quantize(base[i]);
      } else {
        for (double& b : block_offset) b = spec.noise_std * noise(rng);
        for (std::size_t y = 0; y < h; ++y)
          for (std::size_t x = 0; x < w; ++x) {
            const double offset = block_offset[(y / bh) * kGrid + x / bw];
            for (std::size_t c = 0; c < 3; ++c) {
              const std::size_t i = (y * w + x) * 3 + c;
              px[i] = quantize(base[i] + offset + spec.noise_std * noise(rng));
            }
          }
      }
      frames[v].push_back(std::move(px));
    }
  });

  SyntheticDataset out{MemoryFrameStore(h, w), {}};
  for (std::size_t v = 0; v < spec.num_videos; ++v) {
    const std::string id = synthetic_video_id(v);
    for (std::size_t f = 0; f < labels[v].size(); ++f) out.annotations.push_back({id, f, labels[v][f]});
    out.store.add_video(id, std::move(frames[v]));
  }
  return out;
}

// ---- embedding store ------------------------------------------------------

const EmbeddingIndexEntry& EmbeddingStore::entry(const std::string& video) const {
  for (const auto& e : videos)
    if (e.video == video) return e;
  throw DataError("embedding store has no video " + video);
}

Tensor EmbeddingStore::video_embeddings(const std::string& video) const {
  const auto& e = entry(video);
  const auto first = rows.begin() + static_cast<std::ptrdiff_t>(e.offset * width);
  return Tensor({e.count, width}, std::vector<double>(first, first + static_cast<std::ptrdiff_t>(e.count * width)));
}

void EmbeddingStore::append(const std::string& video, const std::vector<double>& video_rows) {
  if (width == 0 || video_rows.size() % width != 0)
    throw DataError("embedding store: rows for " + video + " do not match width " + std::to_string(width));
  videos.push_back({video, count(), video_rows.size() / width});
  rows.insert(rows.end(), video_rows.begin(), video_rows.end());
}

void write_embedding_store(const fs::path& binary, const fs::path& index, const EmbeddingStore& store) {
  std::ofstream out(binary, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + binary.string());
  const std::uint32_t version = kEmbeddingStoreVersion;
  const std::uint64_t width = store.width, count = store.count();
  out.write("MEMB", 4);
  out.write(reinterpret_cast<const char*>(&version), sizeof version);
  out.write(reinterpret_cast<const char*>(&width), sizeof width);
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  out.write(reinterpret_cast<const char*>(store.rows.data()),
            static_cast<std::streamsize>(store.rows.size() * sizeof(double)));

  nlohmann::ordered_json j;
  j["version"] = kEmbeddingStoreVersion;
  j["width"] = store.width;
  j["count"] = store.count();
  j["videos"] = nlohmann::ordered_json::array();
  for (const auto& e : store.videos) j["videos"].push_back({{"video", e.video}, {"offset", e.offset}, {"count", e.count}});
  std::ofstream idx(index, std::ios::trunc);
  if (!idx) throw IoError("cannot write " + index.string());
  idx << j.dump(2) << '\n';
}

EmbeddingStore read_embedding_store(const fs::path& binary, const fs::path& index) {
  std::ifstream in(binary, std::ios::binary);
  if (!in) throw IoError("missing embedding store " + binary.string());
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t width = 0, count = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof version);
  in.read(reinterpret_cast<char*>(&width), sizeof width);
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || std::memcmp(magic, "MEMB", 4) != 0) throw DataError(binary.string() + " is not an embedding store");
  if (version != kEmbeddingStoreVersion) throw DataError("unsupported embedding store version " + std::to_string(version));

  EmbeddingStore store;
  store.width = width;
  store.rows.resize(width * count);
  in.read(reinterpret_cast<char*>(store.rows.data()), static_cast<std::streamsize>(store.rows.size() * sizeof(double)));
  if (!in) throw DataError(binary.string() + ": truncated payload");

  std::ifstream idx(index);
  if (!idx) throw IoError("missing embedding index " + index.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(idx);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(index.string() + ": " + e.what());
  }
  if (j.value("width", std::uint64_t{0}) != width)
    throw DataError("embedding store width mismatch: header says " + std::to_string(width) + ", index says " +
                    std::to_string(j.value("width", std::uint64_t{0})));
  std::size_t covered = 0;
  for (const auto& v : j.at("videos")) {
    EmbeddingIndexEntry e{v.at("video").get<std::string>(), v.at("offset").get<std::size_t>(),
                          v.at("count").get<std::size_t>()};
    if (e.offset + e.count > count) throw DataError("embedding index entry " + e.video + " exceeds the store");
    covered += e.count;
    store.videos.push_back(std::move(e));
  }
  if (covered != count) throw DataError("embedding index covers " + std::to_string(covered) + " of " +
                                        std::to_string(count) + " rows");
  return store;
}

EmbeddingStore extract_embeddings(const Mtfe& model, const FrameStore& store, const std::vector<std::string>& videos,
                                  const PyramidSpec& pyramid) {
  if (pyramid.num_scales() != model.config().num_scales || pyramid.frames_per_seq != model.config().backbone.frames)
    throw ContractError("extract_embeddings: pyramid shape does not match the model");
  EmbeddingStore out;
  out.width = model.config().embedding_width();
  for (const auto& video : videos) {
    const std::size_t frames = store.frame_count(video);
    std::vector<double> rows(frames * out.width);
    parallel_for(frames, [&](std::size_t f) {
      NoGradGuard no_grad;
      const auto clips = gather_frames(store, video, build_pyramid(frames, f, pyramid));
      const Tensor p = model(clips).embedding;
      if (p.numel() != out.width) throw DataError("extract_embeddings: embedding width mismatch");
      std::copy(p.values().begin(), p.values().end(), rows.begin() + static_cast<std::ptrdiff_t>(f * out.width));
    });
    out.append(video, rows);
  }
  return out;
}

PhaseTimeline head_timeline(const Mtfe& model, const Tensor& embeddings) {
  NoGradGuard no_grad;
  const Tensor probs = softmax_rows(model.mtam().head()(embeddings));
  PhaseTimeline out;
  out.num_classes = probs.cols();
  out.probs.assign(probs.values().begin(), probs.values().end());
  return out;
}

}  // namespace must
