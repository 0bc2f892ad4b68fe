#include "must/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <iterator>
#include <ostream>
#include <sstream>

#include "must/checkpoint.hpp"
#include "must/error.hpp"
#include "must/hash.hpp"

namespace must {
namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

VideoSplit split_videos(std::vector<std::string> ids, std::size_t test_videos) {
  std::sort(ids.begin(), ids.end());
  if (test_videos >= ids.size())
    throw ContractError("split_videos: " + std::to_string(test_videos) + " held-out videos leave none of " +
                        std::to_string(ids.size()) + " for training");
  VideoSplit s;
  const auto cut = ids.end() - static_cast<std::ptrdiff_t>(test_videos);
  s.train.assign(ids.begin(), cut);
  s.test.assign(cut, ids.end());
  return s;
}

namespace {

const std::vector<int>& labels_of(const LabelMap& labels, const std::string& video) {
  const auto it = labels.find(video);
  if (it == labels.end()) throw DataError("no annotations for video " + video);
  return it->second;
}

}  // namespace

MtfeDataset make_mtfe_dataset(const FrameStore& store, const LabelMap& labels, const std::vector<std::string>& videos,
                              const PyramidSpec& pyramid, std::size_t keyframe_stride) {
  if (keyframe_stride == 0) throw ContractError("make_mtfe_dataset: keyframe stride must be positive");
  MtfeDataset d{&store, pyramid, {}};
  for (const auto& video : videos) {
    const auto& l = labels_of(labels, video);
    if (l.size() != store.frame_count(video))
      throw DataError("video " + video + ": " + std::to_string(l.size()) + " annotations for " +
                      std::to_string(store.frame_count(video)) + " frames");
    for (std::size_t k = 0; k < l.size(); k += keyframe_stride) d.samples.push_back({video, k, l[k]});
  }
  return d;
}

TcmDataset make_tcm_dataset(const EmbeddingStore& embeddings, const LabelMap& labels,
                            const std::vector<std::string>& videos, std::size_t window_length, std::size_t overlap) {
  TcmDataset d;
  d.window_length = window_length;
  d.overlap = overlap;
  for (const auto& video : videos) d.videos.push_back({video, embeddings.video_embeddings(video), labels_of(labels, video)});
  return d;
}

double mean_video_frames(const LabelMap& labels, const std::vector<std::string>& videos) {
  if (videos.empty()) throw ContractError("mean_video_frames: no videos");
  double total = 0.0;
  for (const auto& v : videos) total += static_cast<double>(labels_of(labels, v).size());
  return total / static_cast<double>(videos.size());
}

std::vector<PhaseTimeline> tcm_timelines(const Tcm& tcm, const EmbeddingStore& embeddings, const LabelMap& labels,
                                         const std::vector<std::string>& videos, SamplingMode mode,
                                         std::size_t window_length, std::size_t overlap, double fps) {
  std::vector<PhaseTimeline> out;
  for (const auto& video : videos) {
    const Tensor e = embeddings.video_embeddings(video);
    PhaseTimeline t = mode == SamplingMode::offline ? predict_offline(tcm, e, window_length, overlap)
                                                    : predict_online(tcm, e, window_length);
    t.video = video;
    t.fps = fps;
    t.labels = labels_of(labels, video);
    if (t.labels.size() != t.frames())
      throw DataError("video " + video + ": " + std::to_string(t.frames()) + " embeddings for " +
                      std::to_string(t.labels.size()) + " annotations");
    out.push_back(std::move(t));
  }
  return out;
}

std::vector<PhaseTimeline> mtfe_timelines(const Mtfe& mtfe, const EmbeddingStore& embeddings, const LabelMap& labels,
                                          const std::vector<std::string>& videos, double fps) {
  std::vector<PhaseTimeline> out;
  for (const auto& video : videos) {
    PhaseTimeline t = head_timeline(mtfe, embeddings.video_embeddings(video));
    t.video = video;
    t.fps = fps;
    t.labels = labels_of(labels, video);
    if (t.labels.size() != t.frames())
      throw DataError("video " + video + ": " + std::to_string(t.frames()) + " embeddings for " +
                      std::to_string(t.labels.size()) + " annotations");
    out.push_back(std::move(t));
  }
  return out;
}

std::string format_predictions(const std::vector<PhaseTimeline>& timelines) {
  std::string out;
  for (const auto& t : timelines) {
    const std::vector<int> pred = t.argmax();
    for (std::size_t f = 0; f < t.frames(); ++f) {
      const auto row = t.row(f);
      json j;
      j["video"] = t.video;
      j["frame"] = f;
      j["probs"] = std::vector<double>(row.begin(), row.end());
      j["pred"] = pred[f];
      out += j.dump() + "\n";
    }
  }
  return out;
}

std::vector<PhaseTimeline> parse_predictions(const std::string& jsonl, double fps) {
  std::vector<PhaseTimeline> out;
  std::istringstream in(jsonl);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string where = "predictions line " + std::to_string(line_no) + ": ";
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception& e) {
      throw DataError(where + e.what());
    }
    if (!j.contains("video") || !j.contains("frame") || !j.contains("probs"))
      throw DataError(where + "expected video, frame and probs");
    const auto video = j["video"].get<std::string>();
    const auto frame = j["frame"].get<std::size_t>();
    const auto probs = j["probs"].get<std::vector<double>>();
    if (out.empty() || out.back().video != video) {
      PhaseTimeline t;
      t.video = video;
      t.fps = fps;
      t.num_classes = probs.size();
      out.push_back(std::move(t));
    }
    PhaseTimeline& t = out.back();
    if (frame != t.frames()) throw DataError(where + "frames of " + video + " are not consecutive");
    if (probs.size() != t.num_classes || probs.empty()) throw DataError(where + "class count changes");
    t.probs.insert(t.probs.end(), probs.begin(), probs.end());
  }
  return out;
}

// ---- in-memory experiment ---------------------------------------------------

ExperimentResult run_experiment(const RunConfig& cfg, std::ostream* progress) {
  cfg.validate();
  auto note = [&](const std::string& msg) {
    if (progress) *progress << msg << std::endl;
  };
  ExperimentResult r;
  const SyntheticDataset data = generate_synthetic(cfg.synthetic());
  const LabelMap labels = labels_by_video(data.annotations);
  r.split = split_videos(data.store.video_ids(), cfg.get_size("data.test_videos"));
  const PyramidSpec pyramid = cfg.pyramid();
  const double fps = cfg.get_double("fps");

  Mtfe mtfe(cfg.mtfe());
  const MtfeDataset train =
      make_mtfe_dataset(data.store, labels, r.split.train, pyramid, cfg.get_size("mtfe.keyframe_stride"));
  note("train-mtfe: " + std::to_string(train.samples.size()) + " keyframes");
  r.mtfe_history = fit_mtfe(mtfe, train, cfg.mtfe_train());
  r.mtfe_hash = parameters_hash(mtfe.parameters());

  note("extract");
  const EmbeddingStore embeddings = extract_embeddings(mtfe, data.store, data.store.video_ids(), pyramid);

  r.window_length = cfg.window_length(mean_video_frames(labels, r.split.train));
  r.overlap = cfg.window_overlap(r.window_length);
  Tcm tcm(cfg.tcm(embeddings.width, cfg.get_size("data.num_phases")));
  note("train-tcm: window " + std::to_string(r.window_length) + ", overlap " + std::to_string(r.overlap));
  r.tcm_history =
      fit_tcm(tcm, make_tcm_dataset(embeddings, labels, r.split.train, r.window_length, r.overlap), cfg.tcm_train());
  r.tcm_hash = parameters_hash(tcm.parameters());

  r.tcm = tcm_timelines(tcm, embeddings, labels, r.split.test, cfg.mode(), r.window_length, r.overlap, fps);
  r.mtfe = mtfe_timelines(mtfe, embeddings, labels, r.split.test, fps);
  r.report = compute_report(r.tcm);
  r.baseline = compute_report(r.mtfe);
  return r;
}

// ---- commands -----------------------------------------------------------------

namespace {

std::string read_text(const fs::path& path, const std::string& what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("missing " + what + ": expected " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

void require(const fs::path& path, const std::string& what) {
  if (!fs::exists(path)) throw IoError("missing " + what + ": expected " + path.string());
}

std::string relative_to(const fs::path& p, const fs::path& workdir) {
  const fs::path rel = fs::relative(p, workdir);
  return (rel.empty() ? p : rel).generic_string();
}

// Records the config snapshot, the seed and content hashes of every input and
// output. No timestamps, so identical runs give identical manifests. Inputs
// are named relative to the workdir, outputs relative to their own directory.
void finish(const std::string& command, const RunConfig& cfg, const fs::path& workdir, const fs::path& out_dir,
            const std::vector<fs::path>& inputs, const std::vector<fs::path>& outputs,
            const std::string& manifest_name = "manifest.json") {
  write_text(out_dir / "config.cfg", cfg.serialize());
  json m;
  m["command"] = command;
  m["seed"] = cfg.seed();
  m["config"] = json::object();
  for (const auto& [k, v] : cfg.values()) m["config"][k] = v;
  m["inputs"] = json::array();
  for (const auto& p : inputs) m["inputs"].push_back({{"path", relative_to(p, workdir)}, {"hash", content_hash(p)}});
  m["outputs"] = json::array();
  std::vector<fs::path> all = outputs;
  all.push_back(out_dir / "config.cfg");
  for (const auto& p : all) m["outputs"].push_back({{"path", relative_to(p, out_dir)}, {"hash", content_hash(p)}});
  write_text(out_dir / manifest_name, m.dump(2) + "\n");
}

struct Paths {
  fs::path data, frames, annotations, mtfe_dir, mtfe_ckpt, emb_dir, emb_bin, emb_index, tcm_dir, tcm_ckpt, tcm_meta,
      pred_dir, predictions, baseline, report_dir;
};

Paths paths_of(const RunConfig& cfg, const fs::path& workdir) {
  Paths p;
  p.data = cfg.path("data_dir", workdir);
  p.frames = p.data / "frames";
  p.annotations = p.data / "annotations.csv";
  p.mtfe_dir = cfg.path("mtfe_dir", workdir);
  p.mtfe_ckpt = p.mtfe_dir / "mtfe.ckpt";
  p.emb_dir = cfg.path("embeddings_dir", workdir);
  p.emb_bin = p.emb_dir / "embeddings.bin";
  p.emb_index = p.emb_dir / "index.json";
  p.tcm_dir = cfg.path("tcm_dir", workdir);
  p.tcm_ckpt = p.tcm_dir / "tcm.ckpt";
  p.tcm_meta = p.tcm_dir / "tcm.json";
  p.pred_dir = cfg.path("predictions_dir", workdir);
  p.predictions = p.pred_dir / "predictions.jsonl";
  p.baseline = p.pred_dir / "mtfe_baseline.jsonl";
  p.report_dir = cfg.path("report_dir", workdir);
  return p;
}

LabelMap load_labels(const Paths& p, const RunConfig& cfg) {
  require(p.annotations, "annotations");
  return labels_by_video(load_annotations(p.annotations, cfg.get_size("data.num_phases")));
}

std::unique_ptr<Mtfe> load_mtfe(const Paths& p, const RunConfig& cfg) {
  require(p.mtfe_ckpt, "MTFE checkpoint");
  auto model = std::make_unique<Mtfe>(cfg.mtfe());
  assign_parameters(model->parameters(), load_checkpoint(p.mtfe_ckpt));
  return model;
}

struct TcmMeta {
  std::size_t width = 0, num_classes = 0, window_length = 0, overlap = 0;
};

TcmMeta load_tcm_meta(const Paths& p) {
  const json j = json::parse(read_text(p.tcm_meta, "TCM metadata"), nullptr, false);
  if (j.is_discarded()) throw DataError("malformed " + p.tcm_meta.string());
  TcmMeta m;
  try {
    m.width = j.at("width").get<std::size_t>();
    m.num_classes = j.at("num_classes").get<std::size_t>();
    m.window_length = j.at("window_length").get<std::size_t>();
    m.overlap = j.at("overlap").get<std::size_t>();
  } catch (const json::exception& e) {
    throw DataError(p.tcm_meta.string() + ": " + e.what());
  }
  return m;
}

void write_history(const fs::path& path, const TrainHistory& h) { write_training_log(path, h); }

void cmd_generate(const RunConfig& cfg, const fs::path& workdir, Paths& p, std::ostream& log) {
  const SyntheticDataset data = generate_synthetic(cfg.synthetic());
  fs::remove_all(p.frames);
  fs::create_directories(p.frames);
  write_frame_store(data.store, p.frames);
  write_annotations(p.annotations, data.annotations);
  log << "generated " << data.store.video_ids().size() << " videos, " << data.annotations.size() << " frames in "
      << p.data.string() << "\n";
  finish("generate", cfg, workdir, p.data, {}, {p.frames, p.annotations});
}

void cmd_train_mtfe(const RunConfig& cfg, const fs::path& workdir, Paths& p, std::ostream& log) {
  require(p.frames, "frame store");
  const LabelMap labels = load_labels(p, cfg);
  const DirectoryFrameStore store(p.frames);
  const VideoSplit split = split_videos(store.video_ids(), cfg.get_size("data.test_videos"));
  Mtfe model(cfg.mtfe());
  const MtfeDataset train =
      make_mtfe_dataset(store, labels, split.train, cfg.pyramid(), cfg.get_size("mtfe.keyframe_stride"));
  log << "training MTFE on " << train.samples.size() << " keyframes from " << split.train.size() << " videos\n";
  const TrainHistory h = fit_mtfe(model, train, cfg.mtfe_train());
  for (const auto& e : h.epochs) log << "  epoch " << e.epoch << " loss " << e.loss << " accuracy " << e.accuracy << "\n";
  fs::create_directories(p.mtfe_dir);
  save_checkpoint(p.mtfe_ckpt, model.parameters());
  write_history(p.mtfe_dir / "train_log.csv", h);
  finish("train-mtfe", cfg, workdir, p.mtfe_dir, {p.frames, p.annotations},
         {p.mtfe_ckpt, p.mtfe_dir / "train_log.csv"});
}

void cmd_extract(const RunConfig& cfg, const fs::path& workdir, Paths& p, std::ostream& log) {
  require(p.frames, "frame store");
  const auto model = load_mtfe(p, cfg);
  const DirectoryFrameStore store(p.frames);
  const EmbeddingStore e = extract_embeddings(*model, store, store.video_ids(), cfg.pyramid());
  fs::create_directories(p.emb_dir);
  write_embedding_store(p.emb_bin, p.emb_index, e);
  log << "extracted " << e.count() << " embeddings of width " << e.width << "\n";
  finish("extract", cfg, workdir, p.emb_dir, {p.frames, p.mtfe_ckpt}, {p.emb_bin, p.emb_index});
}

void cmd_train_tcm(const RunConfig& cfg, const fs::path& workdir, Paths& p, std::ostream& log) {
  require(p.emb_bin, "embedding store");
  const LabelMap labels = load_labels(p, cfg);
  const EmbeddingStore e = read_embedding_store(p.emb_bin, p.emb_index);
  std::vector<std::string> ids;
  for (const auto& v : e.videos) ids.push_back(v.video);
  const VideoSplit split = split_videos(ids, cfg.get_size("data.test_videos"));
  TcmMeta meta;
  meta.width = e.width;
  meta.num_classes = cfg.get_size("data.num_phases");
  meta.window_length = cfg.window_length(mean_video_frames(labels, split.train));
  meta.overlap = cfg.window_overlap(meta.window_length);
  Tcm model(cfg.tcm(meta.width, meta.num_classes));
  log << "training TCM: window " << meta.window_length << ", overlap " << meta.overlap << "\n";
  const TrainHistory h =
      fit_tcm(model, make_tcm_dataset(e, labels, split.train, meta.window_length, meta.overlap), cfg.tcm_train());
  for (const auto& ep : h.epochs)
    log << "  epoch " << ep.epoch << " loss " << ep.loss << " accuracy " << ep.accuracy << "\n";
  fs::create_directories(p.tcm_dir);
  save_checkpoint(p.tcm_ckpt, model.parameters());
  json m;
  m["width"] = meta.width;
  m["num_classes"] = meta.num_classes;
  m["window_length"] = meta.window_length;
  m["overlap"] = meta.overlap;
  write_text(p.tcm_meta, m.dump(2) + "\n");
  write_history(p.tcm_dir / "train_log.csv", h);
  finish("train-tcm", cfg, workdir, p.tcm_dir, {p.emb_bin, p.emb_index, p.annotations},
         {p.tcm_ckpt, p.tcm_meta, p.tcm_dir / "train_log.csv"});
}

void cmd_infer(const RunConfig& cfg, const fs::path& workdir, Paths& p, std::ostream& log) {
  require(p.emb_bin, "embedding store");
  require(p.tcm_ckpt, "TCM checkpoint");
  const LabelMap labels = load_labels(p, cfg);
  const EmbeddingStore e = read_embedding_store(p.emb_bin, p.emb_index);
  const TcmMeta meta = load_tcm_meta(p);
  if (meta.width != e.width)
    throw DataError("TCM expects embeddings of width " + std::to_string(meta.width) + ", store has " +
                    std::to_string(e.width));
  Tcm tcm(cfg.tcm(meta.width, meta.num_classes));
  assign_parameters(tcm.parameters(), load_checkpoint(p.tcm_ckpt));
  const auto mtfe = load_mtfe(p, cfg);

  std::vector<std::string> ids;
  for (const auto& v : e.videos) ids.push_back(v.video);
  const VideoSplit split = split_videos(ids, cfg.get_size("data.test_videos"));
  const double fps = cfg.get_double("fps");
  const auto tcm_out = tcm_timelines(tcm, e, labels, split.test, cfg.mode(), meta.window_length, meta.overlap, fps);
  const auto base_out = mtfe_timelines(*mtfe, e, labels, split.test, fps);
  fs::create_directories(p.pred_dir);
  write_text(p.predictions, format_predictions(tcm_out));
  write_text(p.baseline, format_predictions(base_out));
  log << "wrote " << to_string(cfg.mode()) << " predictions for " << split.test.size() << " held-out videos\n";
  finish("infer", cfg, workdir, p.pred_dir, {p.emb_bin, p.tcm_ckpt, p.mtfe_ckpt}, {p.predictions, p.baseline});
}

std::vector<PhaseTimeline> load_labelled(const fs::path& path, const LabelMap& labels, const RunConfig& cfg,
                                         const std::string& what) {
  auto timelines = parse_predictions(read_text(path, what), cfg.get_double("fps"));
  for (auto& t : timelines) {
    t.labels = labels_of(labels, t.video);
    if (t.labels.size() != t.frames())
      throw DataError(what + " for " + t.video + " cover " + std::to_string(t.frames()) + " of " +
                      std::to_string(t.labels.size()) + " frames");
  }
  return timelines;
}

void cmd_eval(const RunConfig& cfg, const fs::path& workdir, Paths& p, std::ostream& log) {
  const LabelMap labels = load_labels(p, cfg);
  const auto tcm = load_labelled(p.predictions, labels, cfg, "predictions");
  const auto base = load_labelled(p.baseline, labels, cfg, "MTFE baseline predictions");
  if (tcm.empty()) throw DataError("predictions file " + p.predictions.string() + " is empty");
  const MetricsReport report = compute_report(tcm);
  const MetricsReport baseline = compute_report(base);
  json j;
  j["tcm"] = report_to_json(report);
  j["mtfe_baseline"] = report_to_json(baseline);
  fs::create_directories(p.report_dir);
  write_text(p.report_dir / "metrics.json", j.dump(2) + "\n");
  const std::string table = "TCM\n" + report_table(report) + "\nMTFE per-frame baseline\n" + report_table(baseline);
  write_text(p.report_dir / "metrics.txt", table);
  log << table;
  finish("eval", cfg, workdir, p.report_dir, {p.predictions, p.baseline, p.annotations},
         {p.report_dir / "metrics.json", p.report_dir / "metrics.txt"});
}

void cmd_ribbon(const RunConfig& cfg, const fs::path& workdir, Paths& p, const CommandOptions& options,
                std::ostream& log) {
  const LabelMap labels = load_labels(p, cfg);
  const auto timelines = load_labelled(p.predictions, labels, cfg, "predictions");
  if (timelines.empty()) throw DataError("predictions file " + p.predictions.string() + " is empty");
  const PhaseTimeline* chosen = &timelines.front();
  if (options.video) {
    const auto it = std::find_if(timelines.begin(), timelines.end(),
                                 [&](const PhaseTimeline& t) { return t.video == *options.video; });
    if (it == timelines.end()) throw DataError("no predictions for video " + *options.video);
    chosen = &*it;
  }
  fs::path svg = options.svg ? (options.svg->is_absolute() ? *options.svg : workdir / *options.svg)
                             : p.report_dir / ("ribbon_" + chosen->video + ".svg");
  if (svg.has_parent_path()) fs::create_directories(svg.parent_path());
  write_text(svg, render_ribbon(*chosen, chosen->labels));
  log << "wrote " << svg.string() << "\n";
  const fs::path out_dir = svg.has_parent_path() ? svg.parent_path() : workdir;
  finish("ribbon", cfg, workdir, out_dir, {p.predictions, p.annotations}, {svg},
         svg.stem().string() + ".manifest.json");
}

}  // namespace

const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names = {"generate", "train-mtfe", "extract", "train-tcm",
                                                 "infer",    "eval",       "ribbon"};
  return names;
}

void run_command(const std::string& command, const RunConfig& cfg, const CommandOptions& options, std::ostream& log) {
  cfg.validate();
  const fs::path workdir = options.workdir;
  Paths p = paths_of(cfg, workdir);
  // --out redirects the command's own output directory.
  auto redirect = [&](fs::path& dir) {
    if (options.out) dir = options.out->is_absolute() ? *options.out : workdir / *options.out;
  };
  if (command == "generate") {
    redirect(p.data);
    p.frames = p.data / "frames";
    p.annotations = p.data / "annotations.csv";
    fs::create_directories(p.data);
    cmd_generate(cfg, workdir, p, log);
  } else if (command == "train-mtfe") {
    redirect(p.mtfe_dir);
    p.mtfe_ckpt = p.mtfe_dir / "mtfe.ckpt";
    cmd_train_mtfe(cfg, workdir, p, log);
  } else if (command == "extract") {
    redirect(p.emb_dir);
    p.emb_bin = p.emb_dir / "embeddings.bin";
    p.emb_index = p.emb_dir / "index.json";
    cmd_extract(cfg, workdir, p, log);
  } else if (command == "train-tcm") {
    redirect(p.tcm_dir);
    p.tcm_ckpt = p.tcm_dir / "tcm.ckpt";
    p.tcm_meta = p.tcm_dir / "tcm.json";
    cmd_train_tcm(cfg, workdir, p, log);
  } else if (command == "infer") {
    redirect(p.pred_dir);
    p.predictions = p.pred_dir / "predictions.jsonl";
    p.baseline = p.pred_dir / "mtfe_baseline.jsonl";
    cmd_infer(cfg, workdir, p, log);
  } else if (command == "eval") {
    redirect(p.report_dir);
    cmd_eval(cfg, workdir, p, log);
  } else if (command == "ribbon") {
    redirect(p.report_dir);
    cmd_ribbon(cfg, workdir, p, options, log);
  } else {
    throw ConfigError("command", "unknown command '" + command + "'");
  }
}

int execute_command(const std::string& command, const RunConfig& cfg, const CommandOptions& options,
                    std::ostream& log, std::ostream& err) {
  try {
    run_command(command, cfg, options, log);
    return 0;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ContractError& e) {
    err << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return 4;
  } catch (const fs::filesystem_error& e) {
    err << "data error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace must
