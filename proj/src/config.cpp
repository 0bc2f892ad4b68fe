#include "must/config.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <sstream>

#include "must/error.hpp"

namespace must {

namespace {

enum class Kind { text, count, positive_count, real, mode, list, auto_count, auto_real };

struct KeySpec {
  const char* key;
  const char* fallback;
  Kind kind;
};

// Defaults follow the method's published training setup where it gives one;
// the rest are toy-scale choices.
const KeySpec kKeys[] = {
    {"mode", "offline", Kind::mode},
    {"seed", "7", Kind::count},
    {"fps", "1", Kind::real},

    {"data.num_videos", "20", Kind::positive_count},
    {"data.frames_per_video", "300", Kind::positive_count},
    {"data.num_phases", "4", Kind::positive_count},
    {"data.min_segment", "30", Kind::positive_count},
    {"data.max_segment", "90", Kind::positive_count},
    {"data.noise_std", "0.1", Kind::real},
    {"data.frame_height", "32", Kind::positive_count},
    {"data.frame_width", "32", Kind::positive_count},
    {"data.test_videos", "4", Kind::count},

    {"pyramid.frames_per_seq", "auto", Kind::auto_count},
    {"pyramid.strides_s", "1,4,8,12", Kind::list},

    {"backbone.embed_dim", "64", Kind::positive_count},
    {"backbone.depth", "2", Kind::count},
    {"backbone.heads", "4", Kind::positive_count},
    {"backbone.temporal_pool", "2", Kind::positive_count},
    {"backbone.patch", "8", Kind::positive_count},
    {"backbone.mlp_ratio", "4", Kind::positive_count},
    {"mtam.mlp_hidden", "auto", Kind::auto_count},

    {"optim.beta1", "0.9", Kind::real},
    {"optim.beta2", "0.999", Kind::real},
    {"optim.eps", "1e-8", Kind::real},

    {"mtfe.lr", "1e-4", Kind::real},
    {"mtfe.weight_decay", "1e-4", Kind::real},
    {"mtfe.epochs", "5", Kind::count},
    {"mtfe.batch_size", "18", Kind::positive_count},
    {"mtfe.keyframe_stride", "1", Kind::positive_count},

    {"tcm.layers", "2", Kind::count},
    {"tcm.heads", "4", Kind::positive_count},
    {"tcm.ff_mult", "4", Kind::positive_count},
    {"tcm.coverage", "auto", Kind::auto_real},
    {"tcm.overlap", "0.9", Kind::real},
    {"tcm.lr", "1e-4", Kind::real},
    {"tcm.weight_decay", "1e-4", Kind::real},
    {"tcm.epochs", "20", Kind::count},
    {"tcm.batch_size", "256", Kind::positive_count},

    {"data_dir", "data", Kind::text},
    {"mtfe_dir", "mtfe", Kind::text},
    {"embeddings_dir", "embeddings", Kind::text},
    {"tcm_dir", "tcm", Kind::text},
    {"predictions_dir", "predictions", Kind::text},
    {"report_dir", "report", Kind::text},
};

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : kKeys)
    if (key == k.key) return &k;
  return nullptr;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

bool parse_count(const std::string& text, std::uint64_t& out) {
  if (text.empty() || text.find_first_not_of("0123456789") != std::string::npos) return false;
  try {
    out = std::stoull(text);
  } catch (...) {
    return false;
  }
  return true;
}

bool parse_real(const std::string& text, double& out) {
  if (text.empty()) return false;
  std::size_t used = 0;
  try {
    out = std::stod(text, &used);
  } catch (...) {
    return false;
  }
  return used == text.size() && std::isfinite(out);
}

std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    double v = 0.0;
    if (!parse_real(trim(item), v) || v <= 0.0) throw ConfigError(key, "expected positive numbers, got '" + text + "'");
    out.push_back(v);
  }
  if (out.empty()) throw ConfigError(key, "empty list");
  return out;
}

void check_value(const KeySpec& spec, const std::string& value) {
  std::uint64_t n = 0;
  double x = 0.0;
  switch (spec.kind) {
    case Kind::text:
      if (value.empty()) throw ConfigError(spec.key, "must not be empty");
      break;
    case Kind::count:
      if (!parse_count(value, n)) throw ConfigError(spec.key, "expected a non-negative integer, got '" + value + "'");
      break;
    case Kind::positive_count:
      if (!parse_count(value, n) || n == 0)
        throw ConfigError(spec.key, "expected a positive integer, got '" + value + "'");
      break;
    case Kind::auto_count:
      if (value != "auto" && (!parse_count(value, n) || n == 0))
        throw ConfigError(spec.key, "expected 'auto' or a positive integer, got '" + value + "'");
      break;
    case Kind::real:
      if (!parse_real(value, x)) throw ConfigError(spec.key, "expected a number, got '" + value + "'");
      break;
    case Kind::auto_real:
      if (value != "auto" && !parse_real(value, x))
        throw ConfigError(spec.key, "expected 'auto' or a number, got '" + value + "'");
      break;
    case Kind::mode:
      if (value != "offline" && value != "online")
        throw ConfigError(spec.key, "expected 'offline' or 'online', got '" + value + "'");
      break;
    case Kind::list:
      parse_list(spec.key, value);
      break;
  }
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& k : kKeys) values_[k.key] = k.fallback;
}

std::vector<std::string> RunConfig::known_keys() {
  std::vector<std::string> out;
  for (const auto& k : kKeys) out.emplace_back(k.key);
  return out;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError(key, "unknown key");
  const std::string v = trim(value);
  check_value(*spec, v);
  values_[key] = v;
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError(trim(assignment), "expected key=value");
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(line, origin + ":" + std::to_string(line_no) + ": expected key = value");
    set(trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("missing config file " + path.string());
  RunConfig cfg;
  cfg.merge_text(std::string{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()}, path.string());
  return cfg;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown key");
  return it->second;
}

double RunConfig::get_double(const std::string& key) const {
  double x = 0.0;
  if (!parse_real(get(key), x)) throw ConfigError(key, "expected a number, got '" + get(key) + "'");
  return x;
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
  std::uint64_t n = 0;
  if (!parse_count(get(key), n)) throw ConfigError(key, "expected an integer, got '" + get(key) + "'");
  return n;
}

std::size_t RunConfig::get_size(const std::string& key) const { return static_cast<std::size_t>(get_u64(key)); }

std::string RunConfig::serialize() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

SamplingMode RunConfig::mode() const { return parse_mode(get("mode")); }

SyntheticSpec RunConfig::synthetic() const {
  SyntheticSpec s;
  s.num_videos = get_size("data.num_videos");
  s.frames_per_video = get_size("data.frames_per_video");
  s.num_phases = get_size("data.num_phases");
  s.min_segment = get_size("data.min_segment");
  s.max_segment = get_size("data.max_segment");
  s.noise_std = get_double("data.noise_std");
  s.frame_height = get_size("data.frame_height");
  s.frame_width = get_size("data.frame_width");
  s.seed = seed();
  return s;
}

PyramidSpec RunConfig::pyramid() const {
  PyramidSpec defaults = PyramidSpec::defaults(mode(), get_double("fps"));
  const std::string& t = get("pyramid.frames_per_seq");
  const std::size_t frames = t == "auto" ? defaults.frames_per_seq : get_size("pyramid.frames_per_seq");
  return PyramidSpec::from_seconds(parse_list("pyramid.strides_s", get("pyramid.strides_s")), get_double("fps"), frames,
                                   mode());
}

MtfeConfig RunConfig::mtfe() const {
  MtfeConfig c;
  const PyramidSpec p = pyramid();
  c.backbone.embed_dim = get_size("backbone.embed_dim");
  c.backbone.depth = get_size("backbone.depth");
  c.backbone.heads = get_size("backbone.heads");
  c.backbone.temporal_pool = get_size("backbone.temporal_pool");
  c.backbone.patch = get_size("backbone.patch");
  c.backbone.mlp_ratio = get_size("backbone.mlp_ratio");
  c.backbone.frame_height = get_size("data.frame_height");
  c.backbone.frame_width = get_size("data.frame_width");
  c.backbone.frames = p.frames_per_seq;
  c.num_scales = p.num_scales();
  c.num_classes = get_size("data.num_phases");
  c.mlp_hidden = get("mtam.mlp_hidden") == "auto" ? 0 : get_size("mtam.mlp_hidden");
  c.seed = seed();
  return c;
}

namespace {
TrainConfig train_config(const RunConfig& cfg, const std::string& stage) {
  TrainConfig t;
  t.lr = cfg.get_double(stage + ".lr");
  t.weight_decay = cfg.get_double(stage + ".weight_decay");
  t.beta1 = cfg.get_double("optim.beta1");
  t.beta2 = cfg.get_double("optim.beta2");
  t.eps = cfg.get_double("optim.eps");
  t.epochs = cfg.get_size(stage + ".epochs");
  t.batch_size = cfg.get_size(stage + ".batch_size");
  t.seed = cfg.seed();
  t.mode = cfg.mode();
  return t;
}
}  // namespace

TrainConfig RunConfig::mtfe_train() const { return train_config(*this, "mtfe"); }
TrainConfig RunConfig::tcm_train() const { return train_config(*this, "tcm"); }

TcmConfig RunConfig::tcm(std::size_t width, std::size_t num_classes) const {
  TcmConfig c;
  c.width = width;
  c.num_classes = num_classes;
  c.layers = get_size("tcm.layers");
  c.heads = get_size("tcm.heads");
  c.ff_mult = get_size("tcm.ff_mult");
  // Distinct stream from the MTFE initialiser.
  c.seed = seed() ^ 0x9e3779b97f4a7c15ULL;
  return c;
}

double RunConfig::coverage() const {
  if (get("tcm.coverage") == "auto") return mode() == SamplingMode::offline ? 0.10 : 0.05;
  return get_double("tcm.coverage");
}

std::size_t RunConfig::window_length(double mean_video_frames) const {
  // The small epsilon keeps exact products such as 0.1 · 300 from rounding up.
  const double raw = coverage() * mean_video_frames;
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

std::size_t RunConfig::window_overlap(std::size_t window_length) const {
  const auto o = static_cast<std::size_t>(std::llround(get_double("tcm.overlap") * static_cast<double>(window_length)));
  return window_length == 0 ? 0 : std::min(o, window_length - 1);
}

std::filesystem::path RunConfig::path(const std::string& key, const std::filesystem::path& workdir) const {
  const std::filesystem::path p = get(key);
  return p.is_absolute() ? p : workdir / p;
}

void RunConfig::validate() const {
  for (const auto& k : kKeys) check_value(k, get(k.key));
  if (!(get_double("fps") > 0.0)) throw ConfigError("fps", "must be positive");

  const auto wrap = [](const std::string& key, auto&& fn) {
    try {
      fn();
    } catch (const ContractError& e) {
      throw ConfigError(key, e.what());
    }
  };
  wrap("data.min_segment", [&] { synthetic().validate(); });
  if (get_size("data.test_videos") >= get_size("data.num_videos"))
    throw ConfigError("data.test_videos", "must leave at least one training video");
  wrap("pyramid.strides_s", [&] { pyramid().validate(); });
  wrap("backbone.temporal_pool", [&] { mtfe().backbone.validate(); });
  wrap("mtfe.lr", [&] { mtfe_train().validate(); });
  wrap("tcm.lr", [&] { tcm_train().validate(); });
  const double cov = coverage();
  if (!(cov > 0.0 && cov <= 1.0)) throw ConfigError("tcm.coverage", "must lie in (0, 1]");
  const double ov = get_double("tcm.overlap");
  if (!(ov >= 0.0 && ov < 1.0)) throw ConfigError("tcm.overlap", "must lie in [0, 1)");
  const std::size_t width = mtfe().embedding_width();
  wrap("tcm.heads", [&] { tcm(width, get_size("data.num_phases")).validate(); });
}

}  // namespace must
