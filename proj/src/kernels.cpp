#include "must/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace must::kernels {
namespace {

// Below this many multiply-adds the fork/join overhead dominates.
constexpr std::size_t kParallelWork = 1 << 15;

inline void softmax_row(const double* x, double* y, std::size_t cols) {
  double mx = x[0];
  for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
  double sum = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    y[j] = std::exp(x[j] - mx);
    sum += y[j];
  }
  const double inv = 1.0 / sum;
  for (std::size_t j = 0; j < cols; ++j) y[j] *= inv;
}

inline void layer_norm_row(const double* x, const double* gamma, const double* beta, double* y,
                           double& mean, double& rstd, std::size_t cols, double eps) {
  double s = 0.0;
  for (std::size_t j = 0; j < cols; ++j) s += x[j];
  const double mu = s / static_cast<double>(cols);
  double v = 0.0;
  for (std::size_t j = 0; j < cols; ++j) {
    const double d = x[j] - mu;
    v += d * d;
  }
  const double r = 1.0 / std::sqrt(v / static_cast<double>(cols) + eps);
  for (std::size_t j = 0; j < cols; ++j) y[j] = (x[j] - mu) * r * gamma[j] + beta[j];
  mean = mu;
  rstd = r;
}

}  // namespace

namespace serial {

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[j * k + p];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a[p * m + i] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + s : s;
    }
  }
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows,
                  std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i) softmax_row(&x[i * cols], &y[i * cols], cols);
}

void layer_norm_rows(std::span<const double> x, std::span<const double> gamma,
                     std::span<const double> beta, std::span<double> y, std::span<double> mean,
                     std::span<double> rstd, std::size_t rows, std::size_t cols, double eps) {
  for (std::size_t i = 0; i < rows; ++i)
    layer_norm_row(&x[i * cols], gamma.data(), beta.data(), &y[i * cols], mean[i], rstd[i], cols,
                   eps);
}

}  // namespace serial

// The parallel variants below split work by output row and, within a row,
// accumulate over the reduction index in the same order as the serial loops.

void matmul(std::span<const double> a, std::span<const double> b, std::span<double> c,
            std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const long rows = static_cast<long>(m);
#pragma omp parallel if (m * n * k >= kParallelWork)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (long ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double aip = pa[i * k + p];
        const double* brow = pb + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += aip * brow[j];
      }
      double* crow = pc + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
      } else {
        std::copy(acc.begin(), acc.end(), crow);
      }
    }
  }
}

void matmul_nt(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const long rows = static_cast<long>(m);
#pragma omp parallel for schedule(static) if (m * n * k >= kParallelWork)
  for (long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      pc[i * n + j] = accumulate ? pc[i * n + j] + s : s;
    }
  }
}

void matmul_tn(std::span<const double> a, std::span<const double> b, std::span<double> c,
               std::size_t m, std::size_t k, std::size_t n, bool accumulate) {
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  const long rows = static_cast<long>(m);
#pragma omp parallel if (m * n * k >= kParallelWork)
  {
    std::vector<double> acc(n);
#pragma omp for schedule(static)
    for (long ii = 0; ii < rows; ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t p = 0; p < k; ++p) {
        const double api = pa[p * m + i];
        const double* brow = pb + p * n;
        for (std::size_t j = 0; j < n; ++j) acc[j] += api * brow[j];
      }
      double* crow = pc + i * n;
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += acc[j];
      } else {
        std::copy(acc.begin(), acc.end(), crow);
      }
    }
  }
}

void softmax_rows(std::span<const double> x, std::span<double> y, std::size_t rows,
                  std::size_t cols) {
  const long r = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (long i = 0; i < r; ++i) {
    const auto row = static_cast<std::size_t>(i);
    softmax_row(&x[row * cols], &y[row * cols], cols);
  }
}

void layer_norm_rows(std::span<const double> x, std::span<const double> gamma,
                     std::span<const double> beta, std::span<double> y, std::span<double> mean,
                     std::span<double> rstd, std::size_t rows, std::size_t cols, double eps) {
  const long r = static_cast<long>(rows);
#pragma omp parallel for schedule(static) if (rows * cols >= kParallelWork)
  for (long i = 0; i < r; ++i) {
    const auto row = static_cast<std::size_t>(i);
    layer_norm_row(&x[row * cols], gamma.data(), beta.data(), &y[row * cols], mean[row],
                   rstd[row], cols, eps);
  }
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace must::kernels
