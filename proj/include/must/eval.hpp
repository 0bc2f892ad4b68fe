#pragma once

// Frame-level phase metrics and the phase-ribbon SVG.

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "must/tcm.hpp"

namespace must {

// Ranks frames by descending score (ties keep original order) and averages
// precision@rank over the positives. Undefined (nullopt) without positives.
std::optional<double> average_precision(std::span<const double> scores, const std::vector<bool>& positives);

struct F1Result {
  std::vector<double> per_class;
  std::vector<bool> present;  // class occurs in the labels
  double mean = 0.0;          // over present classes
};

// One-vs-rest F1 = 2·TP / (2·TP + FP + FN), 0 when the class is never
// predicted nor labelled.
F1Result f1_scores(std::span<const int> preds, std::span<const int> labels, std::size_t num_classes);

std::size_t transition_count(std::span<const int> sequence);

struct Segment {
  int phase = 0;
  std::size_t start = 0;
  std::size_t length = 0;
};

// Run-length encoding of a label sequence.
std::vector<Segment> segments_of(std::span<const int> sequence);

struct MetricsReport {
  std::vector<std::optional<double>> per_class_ap;
  double map = 0.0;
  std::vector<double> per_class_f1;
  double mean_f1 = 0.0;
  double accuracy = 0.0;
  std::size_t transition_count = 0;
  std::size_t gt_transition_count = 0;
  std::vector<std::optional<double>> mean_phase_duration_s;  // predicted segments
  std::size_t frames = 0;
  std::size_t videos = 0;
};

// Pools frames of all timelines (each must carry labels).
MetricsReport compute_report(std::span<const PhaseTimeline> timelines);

nlohmann::ordered_json report_to_json(const MetricsReport& report);
std::string report_table(const MetricsReport& report);

struct RibbonRect {
  int phase = 0;
  double x = 0.0;
  double width = 0.0;
};

// Rectangles for one bar spanning [x0, x0 + axis_width].
std::vector<RibbonRect> ribbon_rects(std::span<const int> sequence, double x0, double axis_width);

// Fixed colour per phase id.
std::string phase_color(int phase);

// Two bars (ground truth above prediction), a shared frame axis and a legend.
std::string render_ribbon(const PhaseTimeline& prediction, std::span<const int> ground_truth);

}  // namespace must
