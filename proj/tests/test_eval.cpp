#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <regex>

#include "must/error.hpp"
#include "must/eval.hpp"

using namespace must;

namespace {

// Precision at the rank of each positive, averaged, with an explicit
// descending-score / ascending-index ranking.
double brute_force_ap(const std::vector<double>& scores, const std::vector<bool>& pos) {
  std::vector<std::size_t> order(scores.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  for (std::size_t i = 0; i < order.size(); ++i)
    for (std::size_t j = i + 1; j < order.size(); ++j) {
      const auto a = order[i], b = order[j];
      if (scores[b] > scores[a] || (scores[b] == scores[a] && b < a)) std::swap(order[i], order[j]);
    }
  double sum = 0.0;
  std::size_t hits = 0;
  for (std::size_t r = 0; r < order.size(); ++r)
    if (pos[order[r]]) sum += static_cast<double>(++hits) / static_cast<double>(r + 1);
  return sum / static_cast<double>(hits);
}

PhaseTimeline timeline(const std::vector<std::vector<double>>& rows, std::vector<int> labels) {
  PhaseTimeline t;
  t.video = "v";
  t.num_classes = rows.front().size();
  for (const auto& r : rows) t.probs.insert(t.probs.end(), r.begin(), r.end());
  t.labels = std::move(labels);
  return t;
}

}  // namespace

TEST(AveragePrecision, WorkedExample) {
  const double scores[] = {0.9, 0.8, 0.7, 0.6};
  EXPECT_NEAR(*average_precision(scores, {true, false, true, false}), (1.0 + 2.0 / 3.0) / 2.0, 1e-15);
}

TEST(AveragePrecision, PerfectRankingIsOne) {
  const double scores[] = {0.1, 0.9, 0.8, 0.2};
  EXPECT_EQ(*average_precision(scores, {false, true, true, false}), 1.0);
}

TEST(AveragePrecision, SinglePositiveRankedLast) {
  const double scores[] = {0.9, 0.8, 0.7, 0.6, 0.5};
  EXPECT_NEAR(*average_precision(scores, {false, false, false, false, true}), 1.0 / 5.0, 1e-15);
}

TEST(AveragePrecision, UndefinedWithoutPositives) {
  const double scores[] = {0.9, 0.8};
  EXPECT_FALSE(average_precision(scores, {false, false}).has_value());
}

TEST(AveragePrecision, TiesBrokenByIndex) {
  const double scores[] = {0.5, 0.5, 0.5};
  EXPECT_NEAR(*average_precision(scores, {false, true, false}), 0.5, 1e-15);
}

TEST(AveragePrecision, MatchesBruteForceAndIsMonotoneInvariant) {
  std::mt19937_64 rng(41);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng() % 40;
    std::vector<double> s(n), t(n);
    std::vector<bool> pos(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = std::round(u(rng) * 10) / 10;  // coarse, so ties happen
      pos[i] = u(rng) < 0.4;
      t[i] = std::exp(3.0 * s[i]) - 7.0;
    }
    pos[rng() % n] = true;
    const double ap = *average_precision(s, pos);
    EXPECT_NEAR(ap, brute_force_ap(s, pos), 1e-14);
    EXPECT_EQ(*average_precision(t, pos), ap);
  }
}

TEST(AveragePrecision, RandomScoresApproachPositiveRate) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const std::size_t classes = 4, n = 400;
  double total = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) labels[i] = static_cast<int>(i % classes);
    double map = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      std::vector<double> s(n);
      std::vector<bool> pos(n);
      for (std::size_t i = 0; i < n; ++i) s[i] = u(rng), pos[i] = labels[i] == static_cast<int>(c);
      map += *average_precision(s, pos) / classes;
    }
    total += map;
  }
  EXPECT_NEAR(total / 1000.0, 0.25, 0.05);
}

TEST(F1, PerfectPredictions) {
  const int y[] = {0, 1, 2, 1, 0};
  const auto r = f1_scores(y, y, 3);
  for (double f : r.per_class) EXPECT_EQ(f, 1.0);
  EXPECT_EQ(r.mean, 1.0);
}

TEST(F1, AllOneClassAgainstHalfAndHalf) {
  const int preds[] = {0, 0, 0, 0}, labels[] = {0, 0, 1, 1};
  const auto r = f1_scores(preds, labels, 3);
  EXPECT_NEAR(r.per_class[0], 2.0 / 3.0, 1e-15);
  EXPECT_EQ(r.per_class[1], 0.0);
  EXPECT_FALSE(r.present[2]);
  EXPECT_NEAR(r.mean, 1.0 / 3.0, 1e-15);
}

TEST(F1, EqualsHarmonicMeanOfPrecisionAndRecall) {
  std::mt19937_64 rng(43);
  std::vector<int> p(300), l(300);
  for (std::size_t i = 0; i < 300; ++i) p[i] = static_cast<int>(rng() % 4), l[i] = static_cast<int>(rng() % 4);
  const auto r = f1_scores(p, l, 4);
  for (int c = 0; c < 4; ++c) {
    double tp = 0, fp = 0, fn = 0;
    for (std::size_t i = 0; i < 300; ++i) {
      tp += p[i] == c && l[i] == c;
      fp += p[i] == c && l[i] != c;
      fn += p[i] != c && l[i] == c;
    }
    const double prec = tp / (tp + fp), rec = tp / (tp + fn);
    EXPECT_NEAR(r.per_class[c], 2 * prec * rec / (prec + rec), 1e-14);
  }
}

TEST(Segments, RunLengthAndTransitions) {
  const int seq[] = {2, 2, 0, 0, 0, 1, 2, 2};
  const auto s = segments_of(seq);
  ASSERT_EQ(s.size(), 4u);
  EXPECT_EQ(s[1].phase, 0);
  EXPECT_EQ(s[1].start, 2u);
  EXPECT_EQ(s[1].length, 3u);
  EXPECT_EQ(transition_count(seq), 3u);
  EXPECT_EQ(transition_count(std::span<const int>{}), 0u);
}

TEST(Report, MetricsOnHandBuiltTimelines) {
  const auto t = timeline({{0.7, 0.3}, {0.6, 0.4}, {0.2, 0.8}, {0.55, 0.45}}, {0, 0, 1, 1});
  const PhaseTimeline ts[] = {t};
  const auto r = compute_report(ts);
  EXPECT_EQ(r.frames, 4u);
  EXPECT_NEAR(r.accuracy, 0.75, 1e-15);
  EXPECT_EQ(r.transition_count, 2u);
  EXPECT_EQ(r.gt_transition_count, 1u);
  EXPECT_NEAR(*r.per_class_ap[0], 1.0, 1e-15);
  EXPECT_NEAR(*r.per_class_ap[1], 1.0, 1e-15);
  EXPECT_NEAR(r.map, 1.0, 1e-15);
  for (double f : r.per_class_f1) {
    EXPECT_GE(f, 0.0);
    EXPECT_LE(f, 1.0);
  }
  const auto json = report_to_json(r);
  EXPECT_DOUBLE_EQ(json["accuracy"].get<double>(), 0.75);
  EXPECT_FALSE(report_table(r).empty());
}

TEST(Report, UndefinedClassExcludedFromMap) {
  const auto t = timeline({{0.7, 0.2, 0.1}, {0.2, 0.5, 0.3}}, {0, 1});
  const PhaseTimeline ts[] = {t};
  const auto r = compute_report(ts);
  EXPECT_FALSE(r.per_class_ap[2].has_value());
  EXPECT_NEAR(r.map, 1.0, 1e-15);
  EXPECT_TRUE(report_to_json(r)["per_class_ap"][2].is_null());
}

TEST(Report, RequiresLabels) {
  auto t = timeline({{0.5, 0.5}}, {});
  const PhaseTimeline ts[] = {t};
  EXPECT_THROW(compute_report(ts), ContractError);
}

TEST(Ribbon, RectsFollowSegmentsAndFillTheAxis) {
  const int seq[] = {0, 0, 1, 1};
  const auto rects = ribbon_rects(seq, 10.0, 400.0);
  ASSERT_EQ(rects.size(), 2u);
  EXPECT_EQ(rects[0].x, 10.0);
  EXPECT_NEAR(rects[0].width + rects[1].width, 400.0, 1e-12);
  std::mt19937_64 rng(44);
  std::vector<int> longer(137);
  for (auto& v : longer) v = static_cast<int>(rng() % 3);
  double w = 0.0;
  for (const auto& r : ribbon_rects(longer, 0.0, 640.0)) w += r.width;
  EXPECT_NEAR(w, 640.0, 1e-9);
}

TEST(Ribbon, SvgHasOneRectPerSegmentPerBar) {
  const auto pred = timeline({{0.9, 0.1}, {0.8, 0.2}, {0.3, 0.7}, {0.1, 0.9}}, {0, 0, 1, 1});
  const int gt[] = {0, 0, 1, 1};
  const std::string svg = render_ribbon(pred, gt);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  const std::regex rect("<rect[^>]*data-phase");
  const auto count = std::distance(std::sregex_iterator(svg.begin(), svg.end(), rect), std::sregex_iterator());
  EXPECT_EQ(count, 4);
  EXPECT_EQ(render_ribbon(pred, gt), svg);
  EXPECT_EQ(phase_color(1), phase_color(1));
  EXPECT_NE(phase_color(0), phase_color(1));
  const int short_gt[] = {0, 1};
  EXPECT_THROW(render_ribbon(pred, short_gt), ContractError);
}
