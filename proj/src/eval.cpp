#include "must/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "must/error.hpp"

namespace must {

std::optional<double> average_precision(std::span<const double> scores, const std::vector<bool>& positives) {
  if (scores.size() != positives.size())
    throw ContractError("average_precision: " + std::to_string(scores.size()) + " scores for " +
                        std::to_string(positives.size()) + " labels");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  std::size_t hits = 0;
  double precision_sum = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (!positives[order[r]]) continue;
    ++hits;
    precision_sum += static_cast<double>(hits) / static_cast<double>(r + 1);
  }
  if (hits == 0) return std::nullopt;
  return precision_sum / static_cast<double>(hits);
}

F1Result f1_scores(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes) {
  if (preds.size() != labels.size())
    throw ContractError("f1_scores: " + std::to_string(preds.size()) + " predictions for " +
                        std::to_string(labels.size()) + " labels");
  std::vector<std::size_t> tp(num_classes), fp(num_classes), fn(num_classes);
  F1Result out;
  out.per_class.assign(num_classes, 0.0);
  out.present.assign(num_classes, false);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const auto p = static_cast<std::size_t>(preds[i]);
    const auto l = static_cast<std::size_t>(labels[i]);
    if (p >= num_classes || l >= num_classes) throw ContractError("f1_scores: class id out of range");
    out.present[l] = true;
    if (p == l) {
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[l];
    }
  }
  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    out.per_class[c] = denom ? static_cast<double>(2 * tp[c]) / static_cast<double>(denom) : 0.0;
    if (out.present[c]) {
      total += out.per_class[c];
      ++counted;
    }
  }
  out.mean = counted ? total / static_cast<double>(counted) : 0.0;
  return out;
}

std::size_t transition_count(std::span<const int> sequence) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < sequence.size(); ++i) n += sequence[i] != sequence[i - 1];
  return n;
}

std::vector<Segment> segments_of(std::span<const int> sequence) {
  std::vector<Segment> out;
  for (std::size_t i = 0; i < sequence.size(); ++i) {
    if (out.empty() || out.back().phase != sequence[i])
      out.push_back({sequence[i], i, 1});
    else
      ++out.back().length;
  }
  return out;
}

MetricsReport compute_report(std::span<const PhaseTimeline> timelines) {
  if (timelines.empty()) throw ContractError("compute_report: no timelines");
  const std::size_t classes = timelines.front().num_classes;
  MetricsReport r;
  r.videos = timelines.size();

  std::vector<int> all_pred, all_label;
  std::vector<std::vector<double>> class_scores(classes);
  std::vector<double> duration_sum(classes, 0.0);
  std::vector<std::size_t> duration_count(classes, 0);
  for (const auto& t : timelines) {
    if (t.num_classes != classes) throw ContractError("compute_report: timelines disagree on class count");
    if (t.labels.size() != t.frames())
      throw ContractError("compute_report: video " + t.video + " lacks ground truth for every frame");
    const std::vector<int> pred = t.argmax();
    r.transition_count += transition_count(pred);
    r.gt_transition_count += transition_count(t.labels);
    for (const auto& seg : segments_of(pred)) {
      duration_sum[static_cast<std::size_t>(seg.phase)] += static_cast<double>(seg.length) / t.fps;
      ++duration_count[static_cast<std::size_t>(seg.phase)];
    }
    all_pred.insert(all_pred.end(), pred.begin(), pred.end());
    all_label.insert(all_label.end(), t.labels.begin(), t.labels.end());
    for (std::size_t f = 0; f < t.frames(); ++f)
      for (std::size_t c = 0; c < classes; ++c) class_scores[c].push_back(t.row(f)[c]);
  }
  r.frames = all_label.size();

  double ap_sum = 0.0;
  std::size_t ap_count = 0;
  for (std::size_t c = 0; c < classes; ++c) {
    std::vector<bool> positives(all_label.size());
    for (std::size_t i = 0; i < all_label.size(); ++i) positives[i] = all_label[i] == static_cast<int>(c);
    r.per_class_ap.push_back(average_precision(class_scores[c], positives));
    if (r.per_class_ap.back()) {
      ap_sum += *r.per_class_ap.back();
      ++ap_count;
    }
    r.mean_phase_duration_s.push_back(duration_count[c] ? std::optional(duration_sum[c] / static_cast<double>(duration_count[c]))
                                                        : std::nullopt);
  }
  r.map = ap_count ? ap_sum / static_cast<double>(ap_count) : 0.0;

  const F1Result f1 = f1_scores(all_pred, all_label, classes);
  r.per_class_f1 = f1.per_class;
  r.mean_f1 = f1.mean;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < all_label.size(); ++i) correct += all_pred[i] == all_label[i];
  r.accuracy = r.frames ? static_cast<double>(correct) / static_cast<double>(r.frames) : 0.0;
  return r;
}

nlohmann::ordered_json report_to_json(const MetricsReport& r) {
  nlohmann::ordered_json j;
  j["videos"] = r.videos;
  j["frames"] = r.frames;
  j["accuracy"] = r.accuracy;
  j["mAP"] = r.map;
  j["mean_f1"] = r.mean_f1;
  j["per_class_ap"] = nlohmann::ordered_json::array();
  for (const auto& ap : r.per_class_ap) j["per_class_ap"].push_back(ap ? nlohmann::ordered_json(*ap) : nullptr);
  j["per_class_f1"] = r.per_class_f1;
  j["transition_count"] = r.transition_count;
  j["gt_transition_count"] = r.gt_transition_count;
  j["mean_phase_duration_s"] = nlohmann::ordered_json::array();
  for (const auto& d : r.mean_phase_duration_s)
    j["mean_phase_duration_s"].push_back(d ? nlohmann::ordered_json(*d) : nullptr);
  return j;
}

std::string report_table(const MetricsReport& r) {
  std::ostringstream out;
  char line[160];
  std::snprintf(line, sizeof line, "videos %zu, frames %zu\n", r.videos, r.frames);
  out << line;
  std::snprintf(line, sizeof line, "accuracy %.4f   mAP %.4f   mean F1 %.4f   transitions %zu (gt %zu)\n",
                r.accuracy, r.map, r.mean_f1, r.transition_count, r.gt_transition_count);
  out << line;
  out << "phase        AP        F1   mean dur (s)\n";
  for (std::size_t c = 0; c < r.per_class_f1.size(); ++c) {
    char ap[16] = "undef", dur[16] = "-";
    if (r.per_class_ap[c]) std::snprintf(ap, sizeof ap, "%.4f", *r.per_class_ap[c]);
    if (r.mean_phase_duration_s[c]) std::snprintf(dur, sizeof dur, "%.1f", *r.mean_phase_duration_s[c]);
    std::snprintf(line, sizeof line, "%5zu  %8s  %8.4f  %13s\n", c, ap, r.per_class_f1[c], dur);
    out << line;
  }
  return out.str();
}

// ---- ribbon ---------------------------------------------------------------

std::vector<RibbonRect> ribbon_rects(std::span<const int> sequence, double x0, double axis_width) {
  std::vector<RibbonRect> out;
  if (sequence.empty()) return out;
  const double scale = axis_width / static_cast<double>(sequence.size());
  for (const auto& seg : segments_of(sequence))
    out.push_back({seg.phase, x0 + static_cast<double>(seg.start) * scale, static_cast<double>(seg.length) * scale});
  return out;
}

std::string phase_color(int phase) {
  static const char* palette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948",
                                  "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac", "#1f77b4", "#2ca02c",
                                  "#d62728", "#9467bd", "#8c564b", "#17becf"};
  constexpr int n = sizeof palette / sizeof palette[0];
  return palette[((phase % n) + n) % n];
}

std::string render_ribbon(const PhaseTimeline& prediction, std::span<const int> ground_truth) {
  const std::vector<int> pred = prediction.argmax();
  if (pred.size() != ground_truth.size())
    throw ContractError("render_ribbon: prediction has " + std::to_string(pred.size()) + " frames, ground truth " +
                        std::to_string(ground_truth.size()));
  constexpr double x0 = 110.0, axis = 800.0, bar_h = 28.0;
  constexpr double gt_y = 30.0, pred_y = 70.0, axis_y = 108.0, legend_y = 140.0;
  const std::size_t frames = pred.size();
  const int classes = static_cast<int>(prediction.num_classes);

  std::ostringstream svg;
  char buf[256];
  auto emit_bar = [&](const char* label, std::span<const int> seq, double y) {
    std::snprintf(buf, sizeof buf, "  <text x=\"%.1f\" y=\"%.1f\" font-size=\"13\" text-anchor=\"end\">%s</text>\n",
                  x0 - 8.0, y + bar_h * 0.65, label);
    svg << buf;
    for (const auto& r : ribbon_rects(seq, x0, axis)) {
      std::snprintf(buf, sizeof buf,
                    "  <rect x=\"%.4f\" y=\"%.1f\" width=\"%.4f\" height=\"%.1f\" fill=\"%s\" data-phase=\"%d\"/>\n",
                    r.x, y, r.width, bar_h, phase_color(r.phase).c_str(), r.phase);
      svg << buf;
    }
  };

  std::snprintf(buf, sizeof buf,
                "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"%.0f\" height=\"%.0f\" font-family=\"sans-serif\">\n",
                x0 + axis + 30.0, legend_y + 30.0);
  svg << buf;
  std::snprintf(buf, sizeof buf, "  <title>%s</title>\n", prediction.video.c_str());
  svg << buf;
  emit_bar("ground truth", ground_truth, gt_y);
  emit_bar("prediction", pred, pred_y);

  std::snprintf(buf, sizeof buf, "  <line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#333\"/>\n", x0, axis_y,
                x0 + axis, axis_y);
  svg << buf;
  for (int tick = 0; tick <= 4; ++tick) {
    const double x = x0 + axis * tick / 4.0;
    const std::size_t frame = frames * static_cast<std::size_t>(tick) / 4;
    std::snprintf(buf, sizeof buf,
                  "  <line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#333\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"11\" text-anchor=\"middle\">%zu</text>\n",
                  x, axis_y, x, axis_y + 5.0, x, axis_y + 18.0, frame);
    svg << buf;
  }
  for (int c = 0; c < classes; ++c) {
    const double x = x0 + 110.0 * c;
    std::snprintf(buf, sizeof buf,
                  "  <rect x=\"%.1f\" y=\"%.1f\" width=\"14\" height=\"14\" fill=\"%s\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" font-size=\"12\">phase %d</text>\n",
                  x, legend_y, phase_color(c).c_str(), x + 20.0, legend_y + 12.0, c);
    svg << buf;
  }
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace must
