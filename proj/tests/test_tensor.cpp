#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "must/checkpoint.hpp"
#include "must/error.hpp"
#include "must/grad_check.hpp"
#include "must/hash.hpp"
#include "must/kernels.hpp"
#include "must/tensor.hpp"
#include "support.hpp"

using namespace must;
using must::testing::random_tensor;

namespace {

void expect_values(const Tensor& t, const std::vector<double>& want, double tol = 0.0) {
  ASSERT_EQ(t.numel(), want.size());
  for (std::size_t i = 0; i < want.size(); ++i) EXPECT_NEAR(t.values()[i], want[i], tol) << "index " << i;
}

}  // namespace

TEST(Matmul, IdentityLeavesMatrixUnchanged) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  expect_values(matmul(a, Tensor::matrix({{1, 0}, {0, 1}})), {1, 2, 3, 4});
}

TEST(Matmul, MatchesNaiveTripleLoop) {
  expect_values(matmul(Tensor::matrix({{1, 2}, {3, 4}}), Tensor::matrix({{5, 6}, {7, 8}})), {19, 22, 43, 50});

  std::mt19937_64 rng(1);
  const Tensor a = random_tensor({5, 7}, rng), b = random_tensor({7, 3}, rng);
  const Tensor c = matmul(a, b);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < 7; ++p) s += a.at(i, p) * b.at(p, j);
      EXPECT_EQ(c.at(i, j), s);
    }
}

TEST(Matmul, ShapeArithmetic) {
  std::mt19937_64 rng(2);
  EXPECT_EQ(matmul(random_tensor({2, 3}, rng), random_tensor({3, 1}, rng)).shape(), (Shape{2, 1}));
}

TEST(Matmul, MismatchNamesBothShapes) {
  std::mt19937_64 rng(3);
  try {
    matmul(random_tensor({2, 3}, rng), random_tensor({4, 2}, rng));
    FAIL() << "expected DimensionError";
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("[2×3]"), std::string::npos) << msg;
    EXPECT_NE(msg.find("[4×2]"), std::string::npos) << msg;
  }
}

TEST(Matmul, AssociativeWithinTolerance) {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = random_tensor({3, 4}, rng), b = random_tensor({4, 5}, rng), c = random_tensor({5, 2}, rng);
    const Tensor l = matmul(matmul(a, b), c), r = matmul(a, matmul(b, c));
    for (std::size_t i = 0; i < l.numel(); ++i) EXPECT_NEAR(l.values()[i], r.values()[i], 1e-9);
  }
}

TEST(Softmax, WorkedRows) {
  expect_values(softmax_rows(Tensor::matrix({{0, 0}})), {0.5, 0.5}, 1e-15);
  expect_values(softmax_rows(Tensor::matrix({{std::log(3.0), 0}})), {0.75, 0.25}, 1e-15);
}

TEST(Softmax, ShiftInvariantAndRowStochastic) {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = random_tensor({4, 6}, rng, 10.0);
    const Tensor y = softmax_rows(x);
    const Tensor shifted = softmax_rows(add(x, Tensor::full({4, 6}, 123.0)));
    for (std::size_t i = 0; i < 4; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < 6; ++j) {
        EXPECT_GE(y.at(i, j), 0.0);
        EXPECT_LE(y.at(i, j), 1.0);
        EXPECT_NEAR(y.at(i, j), shifted.at(i, j), 1e-12);
        s += y.at(i, j);
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
  }
}

TEST(Softmax, LargeLogitsStayFinite) {
  const Tensor y = softmax_rows(Tensor::matrix({{1000, 999, -1000}}));
  for (double v : y.values()) EXPECT_TRUE(std::isfinite(v));
}

TEST(LayerNorm, ConstantRowMapsToBeta) {
  const Tensor y = layer_norm(Tensor::matrix({{3, 3, 3}}), Tensor::full({3}, 1.0), Tensor::zeros({3}));
  expect_values(y, {0, 0, 0});
}

TEST(LayerNorm, UnitVarianceRowUnchanged) {
  const Tensor y = layer_norm(Tensor::matrix({{1, -1}}), Tensor::full({2}, 1.0), Tensor::zeros({2}), 1e-14);
  expect_values(y, {1, -1}, 1e-12);
}

TEST(LayerNorm, RowMeanEqualsBetaMean) {
  std::mt19937_64 rng(6);
  const Tensor x = random_tensor({5, 8}, rng, 3.0);
  const Tensor beta = random_tensor({8}, rng);
  const Tensor y = layer_norm(x, Tensor::full({8}, 1.0), beta);
  double beta_mean = 0.0;
  for (double b : beta.values()) beta_mean += b / 8.0;
  for (std::size_t i = 0; i < 5; ++i) {
    double m = 0.0;
    for (std::size_t j = 0; j < 8; ++j) m += y.at(i, j) / 8.0;
    EXPECT_NEAR(m, beta_mean, 1e-10);
  }
}

TEST(GradCheck, SquareAtThree) {
  Tensor x = Tensor::scalar(3.0, true);
  Tensor params[] = {x};
  const auto r = grad_check([&] { return mul(x, x); }, params);
  EXPECT_NEAR(r.analytic, 6.0, 1e-12);
  EXPECT_LT(r.max_relative_error, 1e-8);
}

TEST(GradCheck, ConstantFunctionHasZeroGradient) {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor params[] = {x};
  const auto r = grad_check([&] { return Tensor::scalar(5.0); }, params);
  EXPECT_EQ(r.analytic, 0.0);
  EXPECT_EQ(r.numeric, 0.0);
  EXPECT_EQ(r.max_relative_error, 0.0);
}

TEST(GradCheck, RejectsNonScalarAndBadStep) {
  Tensor x = Tensor::full({2}, 1.0, true);
  Tensor params[] = {x};
  EXPECT_THROW(grad_check([&] { return x; }, params), ContractError);
  EXPECT_THROW(grad_check([&] { return sum(x); }, params, 1e-3), ContractError);
  EXPECT_THROW(grad_check([&] { return sum(x); }, params, 1e-7), ContractError);
}

// Every differentiable op, composed into a scalar through a fixed random
// projection so that no gradient is trivially uniform.
TEST(GradCheck, EveryOpOnRandomShapes) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    Tensor a = random_tensor({3, 4}, rng, 1.0, true);
    Tensor b = random_tensor({4, 5}, rng, 1.0, true);
    Tensor c = random_tensor({3, 5}, rng, 1.0, true);
    Tensor g = random_tensor({5}, rng, 0.3, true);
    Tensor be = random_tensor({5}, rng, 0.3, true);
    for (double& v : g.mutable_values()) v += 1.0;
    const Tensor w = random_tensor({6, 5}, rng);
    auto project = [](const Tensor& x, const Tensor& weights) { return sum(mul(x, weights)); };
    Tensor params[] = {a, b, c, g, be};

    const auto check = [&](const char* name, const std::function<Tensor()>& f) {
      const auto r = grad_check(f, params);
      EXPECT_LT(r.max_relative_error, 1e-5) << name << " param " << r.param_index << "[" << r.coordinate << "]";
    };
    check("matmul", [&] { return project(matmul(a, b), slice_rows(w, 0, 3)); });
    check("matmul_nt", [&] { return project(matmul_nt(a, transpose(b)), slice_rows(w, 0, 3)); });
    check("transpose", [&] { return project(transpose(transpose(c)), slice_rows(w, 0, 3)); });
    check("add/sub/mul/scale", [&] { return project(scale(mul(add(c, c), sub(c, matmul(a, b))), 0.7), slice_rows(w, 0, 3)); });
    check("add_row", [&] { return project(add_row(c, g), slice_rows(w, 0, 3)); });
    check("mean", [&] { return mean(mul(c, c)); });
    check("softmax", [&] { return project(softmax_rows(matmul(a, b)), slice_rows(w, 0, 3)); });
    check("layer_norm", [&] { return project(layer_norm(c, g, be), slice_rows(w, 0, 3)); });
    check("gelu", [&] { return project(gelu(c), slice_rows(w, 0, 3)); });
    check("reshape", [&] { return project(reshape(c, {5, 3}), reshape(slice_rows(w, 0, 3), {5, 3})); });
    check("concat/slice rows", [&] {
      const Tensor parts[] = {c, slice_rows(matmul(a, b), 1, 2), slice_rows(c, 0, 1)};
      return project(concat_rows(parts), w);
    });
    check("concat/slice cols", [&] {
      const Tensor parts[] = {slice_cols(c, 0, 2), slice_cols(c, 2, 3)};
      return project(concat_cols(parts), slice_rows(w, 0, 3));
    });
    check("mean_pool_rows", [&] { return project(mean_pool_rows(concat_rows(std::vector{c, c}), 2), slice_rows(w, 0, 3)); });
  }
}

TEST(Autodiff, DiamondGraphVisitsEachNodeOnce) {
  // y = (x·x) + (x·x) through a shared intermediate: dy/dx = 4x.
  Tensor x = Tensor::scalar(1.5, true);
  const Tensor s = mul(x, x);
  const Tensor y = add(s, s);
  y.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 6.0);
}

TEST(Autodiff, LeafGradientsAccumulateAcrossBackwardCalls) {
  Tensor x = Tensor::scalar(2.0, true);
  mul(x, x).backward();
  mul(x, x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 8.0);
  x.zero_grad();
  mul(x, x).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 4.0);
}

TEST(Autodiff, NoGradGuardRecordsNothing) {
  Tensor x = Tensor::scalar(2.0, true);
  Tensor y;
  {
    NoGradGuard guard;
    EXPECT_FALSE(grad_mode_enabled());
    y = mul(x, x);
  }
  EXPECT_TRUE(grad_mode_enabled());
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.node()->parents.empty());
}

TEST(Autodiff, GradShapeMatchesValues) {
  std::mt19937_64 rng(8);
  Tensor a = random_tensor({3, 4}, rng, 1.0, true);
  sum(gelu(a)).backward();
  EXPECT_EQ(a.grad().size(), a.numel());
}

TEST(Determinism, ReplayIsBitIdentical) {
  auto run = [] {
    std::mt19937_64 rng(9);
    Tensor a = random_tensor({6, 6}, rng, 1.0, true);
    const Tensor y = sum(softmax_rows(matmul(gelu(a), transpose(a))));
    y.backward();
    std::vector<double> out(a.grad().begin(), a.grad().end());
    out.push_back(y.item());
    return out;
  };
  EXPECT_EQ(run(), run());
}

TEST(Kernels, ParallelMatchesSerialBitwise) {
  std::mt19937_64 rng(10);
  for (auto [m, k, n] : {std::tuple{3, 4, 5}, std::tuple{64, 48, 80}, std::tuple{130, 70, 90}}) {
    const Tensor a = random_tensor({std::size_t(m), std::size_t(k)}, rng);
    const Tensor b = random_tensor({std::size_t(k), std::size_t(n)}, rng);
    const Tensor bt = random_tensor({std::size_t(n), std::size_t(k)}, rng);
    const Tensor at = random_tensor({std::size_t(k), std::size_t(m)}, rng);
    std::vector<double> c1(m * n, 0.5), c2(m * n, 0.5);
    kernels::matmul(a.values(), b.values(), c1, m, k, n, true);
    kernels::serial::matmul(a.values(), b.values(), c2, m, k, n, true);
    EXPECT_EQ(c1, c2);
    kernels::matmul_nt(a.values(), bt.values(), c1, m, k, n);
    kernels::serial::matmul_nt(a.values(), bt.values(), c2, m, k, n);
    EXPECT_EQ(c1, c2);
    kernels::matmul_tn(at.values(), b.values(), c1, m, k, n);
    kernels::serial::matmul_tn(at.values(), b.values(), c2, m, k, n);
    EXPECT_EQ(c1, c2);

    std::vector<double> y1(m * k), y2(m * k), mu1(m), mu2(m), r1(m), r2(m);
    kernels::softmax_rows(a.values(), y1, m, k);
    kernels::serial::softmax_rows(a.values(), y2, m, k);
    EXPECT_EQ(y1, y2);
    const std::vector<double> gamma(k, 1.5), beta(k, -0.25);
    kernels::layer_norm_rows(a.values(), gamma, beta, y1, mu1, r1, m, k, 1e-5);
    kernels::serial::layer_norm_rows(a.values(), gamma, beta, y2, mu2, r2, m, k, 1e-5);
    EXPECT_EQ(y1, y2);
    EXPECT_EQ(r1, r2);
  }
}

TEST(Checkpoint, RoundTripPreservesNamesShapesAndBits) {
  std::mt19937_64 rng(11);
  NamedParams params = {{"a.weight", random_tensor({3, 4}, rng)}, {"a.bias", random_tensor({4}, rng)},
                        {"clip", random_tensor({2, 2, 2, 3}, rng)}};
  const auto bytes = encode_checkpoint(params);
  ASSERT_GE(bytes.size(), 8u);
  EXPECT_EQ(std::string(bytes.begin(), bytes.begin() + 4), "MUST");
  const NamedParams back = decode_checkpoint(bytes);
  ASSERT_EQ(back.size(), params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    EXPECT_EQ(back[i].first, params[i].first);
    EXPECT_EQ(back[i].second.shape(), params[i].second.shape());
    EXPECT_TRUE(std::equal(back[i].second.values().begin(), back[i].second.values().end(),
                           params[i].second.values().begin()));
  }
  EXPECT_EQ(encode_checkpoint(back), bytes);

  const auto path = std::filesystem::temp_directory_path() / "must_test_roundtrip.ckpt";
  save_checkpoint(path, params);
  EXPECT_EQ(encode_checkpoint(load_checkpoint(path)), bytes);
  std::filesystem::remove(path);
}

TEST(Checkpoint, AssignRejectsMissingOrMisshapen) {
  std::mt19937_64 rng(12);
  NamedParams target = {{"w", random_tensor({2, 2}, rng)}};
  EXPECT_THROW(assign_parameters(target, {{"v", random_tensor({2, 2}, rng)}}), DataError);
  EXPECT_THROW(assign_parameters(target, {{"w", random_tensor({2, 3}, rng)}}), DataError);
  const Tensor src = random_tensor({2, 2}, rng);
  assign_parameters(target, {{"w", src}});
  EXPECT_TRUE(std::equal(src.values().begin(), src.values().end(), target[0].second.values().begin()));
}

TEST(Checkpoint, TruncatedBytesRejected) {
  std::mt19937_64 rng(13);
  auto bytes = encode_checkpoint({{"w", random_tensor({2, 2}, rng)}});
  bytes.resize(bytes.size() - 3);
  EXPECT_THROW(decode_checkpoint(bytes), DataError);
  EXPECT_THROW(decode_checkpoint({'N', 'O', 'P', 'E', 1, 0, 0, 0}), DataError);
}

TEST(Hash, MatchesGitBlobIds) {
  // `git hash-object` of an empty file and of "hello\n".
  EXPECT_EQ(git_blob_hash(std::string_view{}), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_hash(std::string_view{"hello\n"}), "ce013625030ba8dba906f756967f9e9ca394464a");
}
