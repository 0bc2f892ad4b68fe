#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "must/checkpoint.hpp"
#include "must/data.hpp"
#include "must/error.hpp"
#include "must/pipeline.hpp"
#include "must/train.hpp"
#include "support.hpp"

using namespace must;
using namespace must::testing;

TEST(CrossEntropy, UniformLogitsGiveLogClassCount) {
  const int label[] = {2};
  EXPECT_NEAR(cross_entropy(Tensor::matrix({{0.3, 0.3, 0.3, 0.3}}), label).item(), std::log(4.0), 1e-15);
}

TEST(CrossEntropy, SaturatesToZero) {
  const int label[] = {1};
  EXPECT_LT(cross_entropy(Tensor::matrix({{0, 30, 0}}), label).item(), 1e-9);
  const Tensor huge = Tensor::matrix({{1000, -1000, 0}});
  const int wrong[] = {1};
  EXPECT_TRUE(std::isfinite(cross_entropy(huge, wrong).item()));
}

TEST(CrossEntropy, BatchIsMeanOfSingletons) {
  const Tensor a = Tensor::matrix({{1.0, -0.5, 2.0}}), b = Tensor::matrix({{0.2, 0.1, -3.0}});
  const int la[] = {0}, lb[] = {2}, both[] = {0, 2};
  const double mean = 0.5 * (cross_entropy(a, la).item() + cross_entropy(b, lb).item());
  EXPECT_NEAR(cross_entropy(concat_rows(std::vector{a, b}), both).item(), mean, 1e-15);
}

TEST(CrossEntropy, RejectsLabelOutOfRange) {
  const int bad[] = {3};
  EXPECT_THROW(cross_entropy(Tensor::matrix({{0, 0, 0}}), bad), ContractError);
  const int neg[] = {-1};
  EXPECT_THROW(cross_entropy(Tensor::matrix({{0, 0, 0}}), neg), ContractError);
}

TEST(CosineLr, Endpoints) {
  EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-3), 1e-3);
  EXPECT_NEAR(cosine_lr(50, 100, 1e-3), 5e-4, 1e-18);
  EXPECT_NEAR(cosine_lr(100, 100, 1e-3), 0.0, 1e-18);
  EXPECT_EQ(cosine_lr(150, 100, 1e-3), cosine_lr(100, 100, 1e-3));
}

TEST(CosineLr, MonotoneNonIncreasing) {
  for (std::size_t s = 1; s <= 64; ++s) EXPECT_LE(cosine_lr(s, 64, 1.0), cosine_lr(s - 1, 64, 1.0));
}

TEST(AdamW, ZeroGradientIsPureDecay) {
  TrainConfig cfg;
  cfg.weight_decay = 0.1;
  std::vector<double> w = {1.5, -2.0, 0.25};
  const std::vector<double> want = {1.5 * (1 - 0.01 * 0.1), -2.0 * (1 - 0.01 * 0.1), 0.25 * (1 - 0.01 * 0.1)};
  MomentBuffers m;
  adamw_update(w, std::vector<double>(3, 0.0), m, 1, 0.01, cfg);
  EXPECT_EQ(w, want);
}

TEST(AdamW, FirstStepMovesByLearningRateAgainstGradientSign) {
  TrainConfig cfg;
  cfg.weight_decay = 0.0;
  for (double g : {3.0, -0.002, 250.0}) {
    std::vector<double> w = {0.7};
    MomentBuffers m;
    adamw_update(w, std::vector<double>{g}, m, 1, 1e-3, cfg);
    EXPECT_NEAR(w[0] - 0.7, -1e-3 * (g > 0 ? 1 : -1), 1e-3 * cfg.eps / std::abs(g) + 1e-15);
  }
}

// Two AdamW steps on f(w) = w², against a scalar re-derivation of the update.
TEST(AdamW, TwoStepsOnSquareMatchScalarOracle) {
  TrainConfig cfg;
  cfg.weight_decay = 0.05;
  Tensor w = Tensor::scalar(0.8, true);
  AdamW opt({{"w", w}}, cfg);

  double ow = 0.8, m = 0.0, v = 0.0;
  const double lr[] = {0.1, 0.05};
  for (int t = 1; t <= 2; ++t) {
    opt.zero_grad();
    mul(w, w).backward();
    opt.step(lr[t - 1]);

    const double g = 2.0 * ow;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    const double mh = m / (1.0 - std::pow(0.9, t)), vh = v / (1.0 - std::pow(0.999, t));
    ow = ow - lr[t - 1] * cfg.weight_decay * ow - lr[t - 1] * mh / (std::sqrt(vh) + cfg.eps);
    EXPECT_NEAR(w.item(), ow, 1e-15) << "step " << t;
  }
  EXPECT_EQ(opt.state().step, 2u);
}

TEST(AdamW, NonFiniteGradientAborts) {
  Tensor w = Tensor::scalar(1.0, true);
  AdamW opt({{"layer.w", w}}, TrainConfig{});
  w.mutable_grad();
  w.node()->ensure_grad()[0] = std::nan("");
  try {
    opt.step(1e-3);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("layer.w"), std::string::npos) << e.what();
  }
}

namespace {

struct ToyStage1 {
  MtfeConfig model;
  SyntheticDataset data;
  LabelMap labels;
  MtfeDataset train;

  ToyStage1() {
    model = toy_mtfe_config();
    SyntheticSpec spec;
    spec.num_videos = 2;
    spec.frames_per_video = 24;
    spec.num_phases = 3;
    spec.min_segment = 4;
    spec.max_segment = 8;
    spec.frame_height = spec.frame_width = 8;
    spec.seed = 31;
    data = generate_synthetic(spec);
    labels = labels_by_video(data.annotations);
    PyramidSpec pyramid;
    pyramid.frames_per_seq = model.backbone.frames;
    pyramid.strides = {1, 3};
    train = make_mtfe_dataset(data.store, labels, data.store.video_ids(), pyramid, 2);
  }

  TrainConfig cfg(std::size_t epochs) const {
    TrainConfig c;
    c.lr = 3e-3;
    c.epochs = epochs;
    c.batch_size = 6;
    c.seed = 4;
    return c;
  }
};

}  // namespace

TEST(FitMtfe, LossStrictlyDecreasesOverFirstEpochs) {
  ToyStage1 toy;
  Mtfe model(toy.model);
  const auto history = fit_mtfe(model, toy.train, toy.cfg(3));
  ASSERT_EQ(history.epochs.size(), 3u);
  EXPECT_LT(history.epochs[1].loss, history.epochs[0].loss);
  EXPECT_LT(history.epochs[2].loss, history.epochs[1].loss);
}

TEST(FitMtfe, ZeroEpochsLeavesInitialisation) {
  ToyStage1 toy;
  Mtfe model(toy.model);
  const std::string before = parameters_hash(model.parameters());
  fit_mtfe(model, toy.train, toy.cfg(0));
  EXPECT_EQ(parameters_hash(model.parameters()), before);
}

TEST(FitMtfe, SameSeedReplaysIdentically) {
  ToyStage1 toy;
  Mtfe a(toy.model), b(toy.model);
  const auto ha = fit_mtfe(a, toy.train, toy.cfg(1));
  const auto hb = fit_mtfe(b, toy.train, toy.cfg(1));
  EXPECT_EQ(ha.step_losses, hb.step_losses);
  EXPECT_EQ(parameters_hash(a.parameters()), parameters_hash(b.parameters()));
}

TEST(FitMtfe, EmptyDatasetRejected) {
  ToyStage1 toy;
  Mtfe model(toy.model);
  MtfeDataset empty = toy.train;
  empty.samples.clear();
  EXPECT_THROW(fit_mtfe(model, empty, toy.cfg(1)), ContractError);
}

TEST(FitMtfe, KeyframeLabelsFollowTheKeyframe) {
  ToyStage1 toy;
  for (const auto& s : toy.train.samples) EXPECT_EQ(s.label, toy.labels.at(s.video).at(s.keyframe));
  EXPECT_EQ(toy.train.samples.size(), 24u);
}

namespace {

// Embedding streams whose phase is readable from a noisy one-hot block.
TcmDataset toy_embedding_streams(std::size_t width, std::size_t classes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, 0.8);
  TcmDataset data;
  data.window_length = 8;
  data.overlap = 6;
  for (int v = 0; v < 3; ++v) {
    EmbeddingSequence seq;
    seq.video = "v" + std::to_string(v);
    std::vector<double> rows;
    int phase = 0;
    for (std::size_t f = 0; f < 40; ++f) {
      if (f % 10 == 0 && f) phase = (phase + 1) % static_cast<int>(classes);
      seq.labels.push_back(phase);
      for (std::size_t j = 0; j < width; ++j) rows.push_back((j % classes == static_cast<std::size_t>(phase)) + noise(rng));
    }
    seq.embeddings = Tensor({40, width}, rows);
    data.videos.push_back(seq);
  }
  return data;
}

}  // namespace

TEST(FitTcm, LossDecreasesAndMtfeStaysFrozen) {
  ToyStage1 toy;
  Mtfe mtfe(toy.model);
  const std::string mtfe_before = parameters_hash(mtfe.parameters());
  Tcm tcm(toy_tcm_config());
  TrainConfig cfg;
  cfg.lr = 3e-3;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.seed = 2;
  const auto history = fit_tcm(tcm, toy_embedding_streams(16, 3, 9), cfg);
  ASSERT_EQ(history.epochs.size(), 4u);
  EXPECT_LT(history.epochs.back().loss, history.epochs.front().loss);
  EXPECT_EQ(parameters_hash(mtfe.parameters()), mtfe_before);
}

TEST(FitTcm, WindowsHonourOverlap) {
  TcmDataset data = toy_embedding_streams(16, 3, 10);
  data.window_length = 20;
  data.overlap = 18;
  const auto windows = training_windows(data);
  ASSERT_EQ(windows.size(), 3u * 11u);
  for (std::size_t i = 1; i < 11; ++i) EXPECT_EQ(windows[i].start - windows[i - 1].start, 2u);
}

TEST(FitTcm, MissingEmbeddingsAreDataErrors) {
  TcmDataset data = toy_embedding_streams(16, 3, 11);
  data.videos[1].embeddings = slice_rows(data.videos[1].embeddings, 0, 30);
  Tcm tcm(toy_tcm_config());
  EXPECT_THROW(fit_tcm(tcm, data, TrainConfig{}), DataError);
}
