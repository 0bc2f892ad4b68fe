#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "must/data.hpp"
#include "must/error.hpp"
#include "must/eval.hpp"
#include "must/hash.hpp"
#include "must/train.hpp"
#include "support.hpp"

using namespace must;
using namespace must::testing;
namespace fs = std::filesystem;

namespace {

SyntheticSpec small_spec(double noise = 0.1) {
  SyntheticSpec s;
  s.num_videos = 3;
  s.frames_per_video = 60;
  s.num_phases = 4;
  s.min_segment = 5;
  s.max_segment = 15;
  s.noise_std = noise;
  s.frame_height = s.frame_width = 8;
  s.seed = 12;
  return s;
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("must_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST(Annotations, ParsesSingleRow) {
  const auto a = parse_annotations("video_id,frame_idx,phase_id\nv1,0,2\n", 4);
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a[0], (PhaseAnnotation{"v1", 0, 2}));
}

TEST(Annotations, EmptyAfterHeaderIsEmpty) {
  EXPECT_TRUE(parse_annotations("video_id,frame_idx,phase_id\n", 4).empty());
}

TEST(Annotations, SortsByVideoThenFrame) {
  const auto a = parse_annotations("video_id,frame_idx,phase_id\nb,1,0\na,0,1\nb,0,3\n", 4);
  EXPECT_EQ(a, (std::vector<PhaseAnnotation>{{"a", 0, 1}, {"b", 0, 3}, {"b", 1, 0}}));
}

TEST(Annotations, ErrorsNameTheRow) {
  auto expect_line = [](const std::string& csv, const std::string& needle) {
    try {
      parse_annotations(csv, 3);
      ADD_FAILURE() << "expected DataError for " << csv;
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
  };
  expect_line("video_id,frame_idx,phase_id\nv,0,0\nv,1,3\n", "line 3");
  expect_line("video_id,frame_idx,phase_id\nv,0,0\nv,2,1\n", "line 3");
  expect_line("video_id,frame_idx,phase_id\nv,0,0\nv,0,1\n", "duplicate");
  expect_line("video_id,frame_idx,phase_id\nv,x,0\n", "line 2");
  expect_line("video_id,frame_idx,phase_id\nv,0\n", "line 2");
  expect_line("frame,phase\n", "header");
}

TEST(Annotations, RoundTripIsByteIdentical) {
  const auto data = generate_synthetic(small_spec());
  const std::string csv = format_annotations(data.annotations);
  const auto dir = scratch_dir("annotations");
  write_annotations(dir / "a.csv", data.annotations);
  const auto back = load_annotations(dir / "a.csv", 4);
  EXPECT_EQ(back, data.annotations);
  EXPECT_EQ(format_annotations(back), csv);
  fs::remove_all(dir);
}

TEST(Annotations, MissingFileIsIoError) {
  EXPECT_THROW(load_annotations("/nonexistent/annotations.csv", 4), IoError);
}

TEST(Synthetic, ZeroNoiseFramesEqualTheirPattern) {
  const auto spec = small_spec(0.0);
  const auto data = generate_synthetic(spec);
  for (const auto& a : data.annotations) {
    const auto pattern = phase_pattern(spec, static_cast<std::size_t>(a.phase_id));
    const auto frame = data.store.frame(a.video_id, a.frame_idx);
    for (std::size_t i = 0; i < frame.size(); ++i) ASSERT_NEAR(frame[i] / 255.0, pattern[i], 0.5 / 255.0 + 1e-12);
  }
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  const auto a = generate_synthetic(small_spec()), b = generate_synthetic(small_spec());
  EXPECT_EQ(a.annotations, b.annotations);
  for (const auto& v : a.store.video_ids())
    for (std::size_t f = 0; f < a.store.frame_count(v); ++f) {
      const auto x = a.store.frame(v, f), y = b.store.frame(v, f);
      ASSERT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
    }
}

TEST(Synthetic, SegmentsWithinBoundsAndPhasesAlternate) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    SyntheticSpec spec = small_spec();
    spec.seed = seed;
    const auto data = generate_synthetic(spec);
    const auto labels = labels_by_video(data.annotations);
    ASSERT_EQ(labels.size(), spec.num_videos);
    for (const auto& [video, seq] : labels) {
      ASSERT_EQ(seq.size(), spec.frames_per_video);
      EXPECT_EQ(data.store.frame_count(video), seq.size());
      const auto segments = segments_of(seq);
      for (std::size_t i = 0; i < segments.size(); ++i) {
        EXPECT_GE(segments[i].length, spec.min_segment);
        EXPECT_LE(segments[i].length, spec.max_segment);
        if (i) EXPECT_NE(segments[i].phase, segments[i - 1].phase);
      }
    }
  }
}

TEST(Synthetic, PatternsAreDistinctAndSingleFrameSeparable) {
  const auto spec = small_spec(0.1);
  const auto data = generate_synthetic(spec);
  std::vector<std::vector<double>> patterns;
  for (std::size_t p = 0; p < spec.num_phases; ++p) patterns.push_back(phase_pattern(spec, p));
  std::size_t correct = 0;
  for (const auto& a : data.annotations) {
    const auto frame = data.store.frame(a.video_id, a.frame_idx);
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t p = 0; p < patterns.size(); ++p) {
      double d = 0.0;
      for (std::size_t i = 0; i < frame.size(); ++i) d += std::pow(frame[i] / 255.0 - patterns[p][i], 2);
      if (d < best_d) best_d = d, best = p;
    }
    correct += static_cast<int>(best) == a.phase_id;
  }
  EXPECT_EQ(correct, data.annotations.size());
}

TEST(Synthetic, InvalidSpecRejected) {
  SyntheticSpec s = small_spec();
  s.min_segment = 20;
  s.max_segment = 10;
  EXPECT_THROW(generate_synthetic(s), ContractError);
  s = small_spec();
  s.frame_height = 10;
  EXPECT_THROW(generate_synthetic(s), ContractError);
}

TEST(FrameStore, DirectoryRoundTrip) {
  const auto data = generate_synthetic(small_spec());
  const auto dir = scratch_dir("frames");
  write_frame_store(data.store, dir);
  DirectoryFrameStore disk(dir);
  EXPECT_EQ(disk.video_ids(), data.store.video_ids());
  for (const auto& v : disk.video_ids()) {
    ASSERT_EQ(disk.frame_count(v), data.store.frame_count(v));
    const auto x = disk.frame(v, 7), y = data.store.frame(v, 7);
    EXPECT_TRUE(std::equal(x.begin(), x.end(), y.begin()));
  }
  EXPECT_TRUE(fs::exists(dir / "v000" / "00000000.ppm"));
  fs::remove_all(dir);
}

TEST(EmbeddingStore, RoundTripAndLookup) {
  EmbeddingStore store;
  store.width = 3;
  store.append("a", {1, 2, 3, 4, 5, 6});
  store.append("b", {7, 8, 9});
  const auto dir = scratch_dir("emb");
  write_embedding_store(dir / "e.bin", dir / "e.json", store);
  const auto back = read_embedding_store(dir / "e.bin", dir / "e.json");
  EXPECT_EQ(back.width, 3u);
  EXPECT_EQ(back.rows, store.rows);
  EXPECT_EQ(back.entry("b").offset, 2u);
  EXPECT_EQ(back.video_embeddings("a").shape(), (Shape{2, 3}));
  EXPECT_EQ(back.video_embeddings("b").values()[2], 9.0);
  EXPECT_THROW(back.entry("c"), DataError);
  fs::remove_all(dir);
}

TEST(EmbeddingStore, WidthMismatchAndCorruptionRejected) {
  EmbeddingStore store;
  store.width = 3;
  EXPECT_THROW(store.append("a", {1, 2}), DataError);
  store.append("a", {1, 2, 3});
  const auto dir = scratch_dir("emb_bad");
  write_embedding_store(dir / "e.bin", dir / "e.json", store);
  {
    std::ofstream idx(dir / "e.json", std::ios::trunc);
    idx << R"({"width": 4, "videos": [{"video": "a", "offset": 0, "count": 1}]})";
  }
  EXPECT_THROW(read_embedding_store(dir / "e.bin", dir / "e.json"), DataError);
  {
    std::ofstream bin(dir / "e.bin", std::ios::binary | std::ios::trunc);
    bin << "JUNKJUNKJUNK";
  }
  EXPECT_THROW(read_embedding_store(dir / "e.bin", dir / "e.json"), DataError);
  fs::remove_all(dir);
}

TEST(ExtractEmbeddings, OnePerFrameDeterministicAndNdWide) {
  const MtfeConfig cfg = toy_mtfe_config();
  Mtfe model(cfg);
  SyntheticSpec spec = small_spec();
  spec.num_videos = 2;
  spec.frames_per_video = 20;
  const auto data = generate_synthetic(spec);
  PyramidSpec pyramid;
  pyramid.frames_per_seq = cfg.backbone.frames;
  pyramid.strides = {1, 2};
  const auto videos = data.store.video_ids();
  const auto a = extract_embeddings(model, data.store, videos, pyramid);
  const auto b = extract_embeddings(model, data.store, videos, pyramid);
  EXPECT_EQ(a.width, cfg.num_scales * cfg.backbone.embed_dim);
  EXPECT_EQ(a.count(), data.annotations.size());
  EXPECT_EQ(a.rows, b.rows);
  EXPECT_EQ(a.entry(videos[1]).offset, 20u);

  // Row f equals the model's fused embedding at keyframe f.
  const auto probe = mtfe_predict(model, data.store, videos[1], 13, pyramid);
  const Tensor rows = a.video_embeddings(videos[1]);
  for (std::size_t j = 0; j < a.width; ++j) EXPECT_EQ(rows.at(13, j), probe.embedding.values()[j]);
}

TEST(HeadTimeline, RowsAreSoftmaxOfHead) {
  const MtfeConfig cfg = toy_mtfe_config();
  Mtfe model(cfg);
  std::mt19937_64 rng(3);
  const Tensor emb = random_tensor({5, cfg.embedding_width()}, rng);
  const auto tl = head_timeline(model, emb);
  ASSERT_EQ(tl.frames(), 5u);
  const Tensor p = softmax_rows(model.mtam().head()(emb));
  for (std::size_t f = 0; f < 5; ++f)
    for (std::size_t c = 0; c < cfg.num_classes; ++c) EXPECT_NEAR(tl.row(f)[c], p.at(f, c), 1e-15);
}
