#include "must/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "must/error.hpp"
#include "must/kernels.hpp"

namespace must {
namespace {

thread_local bool g_grad_enabled = true;

using detail::Node;

void require(bool ok, const std::string& message) {
  if (!ok) throw ContractError(message);
}

void require_dims(bool ok, const std::string& op, const Shape& a, const Shape& b) {
  if (!ok)
    throw DimensionError(op + ": incompatible shapes " + shape_to_string(a) + " and " +
                         shape_to_string(b));
}

void require_matrix(const Tensor& t, const std::string& op) {
  if (t.rank() != 2) throw DimensionError(op + ": expected a matrix, got " + shape_to_string(t.shape()));
}

Node& parent(Node& self, std::size_t i) { return *self.parents[i]; }

void accumulate(std::vector<double>& dst, std::span<const double> src) {
  for (std::size_t i = 0; i < src.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "×" : "") << shape[i];
  out << ']';
  return out.str();
}

std::vector<double>& detail::Node::ensure_grad() {
  if (grad.size() != values.size()) grad.assign(values.size(), 0.0);
  return grad;
}

// ---- Tensor ---------------------------------------------------------------

Tensor::Tensor(Shape shape, std::vector<double> values, bool requires_grad) {
  for (std::size_t e : shape) require(e > 0, "tensor extents must be positive: " + shape_to_string(shape));
  require(!shape.empty(), "tensor rank must be at least 1");
  if (shape_numel(shape) != values.size())
    throw DimensionError("tensor " + shape_to_string(shape) + " needs " +
                         std::to_string(shape_numel(shape)) + " values, got " +
                         std::to_string(values.size()));
  node_ = std::make_shared<Node>();
  node_->shape = std::move(shape);
  node_->values = std::move(values);
  node_->requires_grad = requires_grad;
}

Tensor Tensor::zeros(Shape shape, bool requires_grad) { return full(std::move(shape), 0.0, requires_grad); }

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value), requires_grad);
}

Tensor Tensor::scalar(double value, bool requires_grad) { return Tensor({1}, {value}, requires_grad); }

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows, bool requires_grad) {
  require(rows.size() > 0, "matrix literal needs at least one row");
  const std::size_t cols = rows.begin()->size();
  std::vector<double> values;
  for (const auto& r : rows) {
    require(r.size() == cols, "matrix literal rows must have equal length");
    values.insert(values.end(), r.begin(), r.end());
  }
  return Tensor({rows.size(), cols}, std::move(values), requires_grad);
}

const Shape& Tensor::shape() const {
  require(defined(), "use of an undefined tensor");
  return node_->shape;
}
std::size_t Tensor::numel() const { return shape_numel(shape()); }
std::size_t Tensor::rows() const { return shape().front(); }
std::size_t Tensor::cols() const { return shape().back(); }
std::span<const double> Tensor::values() const { return node_->values; }
std::span<double> Tensor::mutable_values() { return node_->values; }

double Tensor::item() const {
  require(numel() == 1, "item() on a tensor of shape " + shape_to_string(shape()));
  return node_->values[0];
}

double Tensor::at(std::size_t row, std::size_t col) const {
  require(rank() == 2 && row < rows() && col < cols(), "at(): index out of range");
  return node_->values[row * cols() + col];
}

bool Tensor::requires_grad() const { return node_->requires_grad; }
void Tensor::set_requires_grad(bool on) { node_->requires_grad = on; }
bool Tensor::has_grad() const { return defined() && node_->grad.size() == node_->values.size(); }
std::span<const double> Tensor::grad() const { return node_->grad; }
std::span<double> Tensor::mutable_grad() { return node_->ensure_grad(); }
void Tensor::zero_grad() {
  if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

void Tensor::backward() const {
  if (numel() != 1)
    throw ContractError("backward() needs a scalar, got shape " + shape_to_string(shape()));

  // Iterative post-order DFS; each node is emitted once.
  std::vector<Node*> order;
  std::unordered_set<Node*> seen;
  std::vector<std::pair<Node*, std::size_t>> stack{{node_.get(), 0}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->requires_grad && seen.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  // Interior gradients are recomputed on every sweep; leaves accumulate.
  for (Node* n : order)
    if (n->backward) n->grad.assign(n->values.size(), 0.0);
  node_->ensure_grad()[0] += 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it)
    if ((*it)->backward) (*it)->backward(**it);
}

Tensor Tensor::detach() const { return Tensor(shape(), node_->values, false); }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }
bool grad_mode_enabled() { return g_grad_enabled; }

Tensor make_result(Shape shape, std::vector<double> values, std::vector<Tensor> parents,
                   std::function<void(Node&)> backward) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->values = std::move(values);
  if (g_grad_enabled) {
    const bool any = std::any_of(parents.begin(), parents.end(),
                                 [](const Tensor& t) { return t.requires_grad(); });
    if (any) {
      node->requires_grad = true;
      node->parents.reserve(parents.size());
      for (auto& p : parents) node->parents.push_back(p.node());
      node->backward = std::move(backward);
    }
  }
  return Tensor(std::move(node));
}

// ---- linear algebra -------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  require_dims(a.cols() == b.rows(), "matmul", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  std::vector<double> out(m * n);
  kernels::matmul(a.values(), b.values(), out, m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) kernels::matmul_nt(self.grad, pb.values, pa.ensure_grad(), m, n, k, true);
    if (pb.requires_grad) kernels::matmul_tn(pa.values, self.grad, pb.ensure_grad(), k, m, n, true);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_nt");
  require_matrix(b, "matmul_nt");
  require_dims(a.cols() == b.cols(), "matmul_nt", a.shape(), b.shape());
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  std::vector<double> out(m * n);
  kernels::matmul_nt(a.values(), b.values(), out, m, k, n);
  return make_result({m, n}, std::move(out), {a, b}, [m, k, n](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) kernels::matmul(self.grad, pb.values, pa.ensure_grad(), m, n, k, true);
    if (pb.requires_grad) kernels::matmul_tn(self.grad, pa.values, pb.ensure_grad(), n, m, k, true);
  });
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  std::vector<double> out(m * n);
  const auto v = a.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = v[i * n + j];
  return make_result({n, m}, std::move(out), {a}, [m, n](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

// ---- elementwise ----------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  require_dims(a.shape() == b.shape(), "add", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] + vb[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p)
      if (parent(self, p).requires_grad) accumulate(parent(self, p).ensure_grad(), self.grad);
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_dims(a.shape() == b.shape(), "sub", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] - vb[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    if (parent(self, 0).requires_grad) accumulate(parent(self, 0).ensure_grad(), self.grad);
    if (parent(self, 1).requires_grad) {
      auto& g = parent(self, 1).ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_dims(a.shape() == b.shape(), "mul", a.shape(), b.shape());
  std::vector<double> out(a.numel());
  const auto va = a.values(), vb = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = va[i] * vb[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node& self) {
    Node& pa = parent(self, 0);
    Node& pb = parent(self, 1);
    if (pa.requires_grad) {
      auto& g = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pb.values[i];
    }
    if (pb.requires_grad) {
      auto& g = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * pa.values[i];
    }
  });
}

Tensor scale(const Tensor& a, double factor) {
  std::vector<double> out(a.values().begin(), a.values().end());
  for (double& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {a}, [factor](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * factor;
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  require_matrix(x, "add_row");
  require_dims(row.numel() == x.cols(), "add_row", x.shape(), row.shape());
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(x.values().begin(), x.values().end());
  const auto r = row.values();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] += r[j];
  return make_result(x.shape(), std::move(out), {x, row}, [m, n](Node& self) {
    if (parent(self, 0).requires_grad) accumulate(parent(self, 0).ensure_grad(), self.grad);
    if (parent(self, 1).requires_grad) {
      auto& g = parent(self, 1).ensure_grad();
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) g[j] += self.grad[i * n + j];
    }
  });
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({1}, {s}, {a}, [](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (double& v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& a) {
  const double inv = 1.0 / static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({1}, {s * inv}, {a}, [inv](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (double& v : g) v += self.grad[0] * inv;
  });
}

// ---- normalisation / activations -----------------------------------------

Tensor softmax_rows(const Tensor& x) {
  require_matrix(x, "softmax_rows");
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n);
  kernels::softmax_rows(x.values(), out, m, n);
  return make_result(x.shape(), std::move(out), {x}, [m, n](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    const auto& y = self.values;
    for (std::size_t i = 0; i < m; ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += self.grad[i * n + j] * y[i * n + j];
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += y[i * n + j] * (self.grad[i * n + j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
  require_matrix(x, "layer_norm");
  require(eps > 0.0, "layer_norm: eps must be positive");
  require_dims(gamma.numel() == x.cols(), "layer_norm", x.shape(), gamma.shape());
  require_dims(beta.numel() == x.cols(), "layer_norm", x.shape(), beta.shape());
  const std::size_t m = x.rows(), n = x.cols();
  std::vector<double> out(m * n), mu(m), rstd(m);
  kernels::layer_norm_rows(x.values(), gamma.values(), beta.values(), out, mu, rstd, m, n, eps);
  return make_result(
      x.shape(), std::move(out), {x, gamma, beta},
      [m, n, mu = std::move(mu), rstd = std::move(rstd)](Node& self) {
        Node& px = parent(self, 0);
        Node& pg = parent(self, 1);
        Node& pb = parent(self, 2);
        const double inv_n = 1.0 / static_cast<double>(n);
        std::vector<double> xhat(n), dxhat(n);
        for (std::size_t i = 0; i < m; ++i) {
          const double* xi = &px.values[i * n];
          const double* gi = &self.grad[i * n];
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t j = 0; j < n; ++j) {
            xhat[j] = (xi[j] - mu[i]) * rstd[i];
            dxhat[j] = gi[j] * pg.values[j];
            s1 += dxhat[j];
            s2 += dxhat[j] * xhat[j];
          }
          if (px.requires_grad) {
            auto& gx = px.ensure_grad();
            for (std::size_t j = 0; j < n; ++j)
              gx[i * n + j] += rstd[i] * (dxhat[j] - s1 * inv_n - xhat[j] * s2 * inv_n);
          }
          if (pg.requires_grad) {
            auto& gg = pg.ensure_grad();
            for (std::size_t j = 0; j < n; ++j) gg[j] += gi[j] * xhat[j];
          }
          if (pb.requires_grad) {
            auto& gb = pb.ensure_grad();
            for (std::size_t j = 0; j < n; ++j) gb[j] += gi[j];
          }
        }
      });
}

Tensor gelu(const Tensor& x) {
  constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double a = 0.044715;
  std::vector<double> out(x.numel());
  const auto v = x.values();
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double u = v[i];
    out[i] = 0.5 * u * (1.0 + std::tanh(c * (u + a * u * u * u)));
  }
  return make_result(x.shape(), std::move(out), {x}, [](Node& self) {
    Node& px = parent(self, 0);
    auto& g = px.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double u = px.values[i];
      const double t = std::tanh(c * (u + a * u * u * u));
      const double d = 0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * c * (1.0 + 3.0 * a * u * u);
      g[i] += self.grad[i] * d;
    }
  });
}

// ---- shape plumbing -------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
  if (shape_numel(shape) != a.numel())
    throw DimensionError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                         shape_to_string(shape));
  std::vector<double> out(a.values().begin(), a.values().end());
  return make_result(std::move(shape), std::move(out), {a},
                     [](Node& self) { accumulate(parent(self, 0).ensure_grad(), self.grad); });
}

Tensor concat_rows(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_rows: nothing to concatenate");
  const std::size_t n = parts.front().cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_matrix(p, "concat_rows");
    require_dims(p.cols() == n, "concat_rows", parts.front().shape(), p.shape());
    total += p.rows();
  }
  std::vector<double> out;
  out.reserve(total * n);
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    offsets.push_back(out.size());
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return make_result({total, n}, std::move(out), {parts.begin(), parts.end()},
                     [offsets = std::move(offsets)](Node& self) {
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         Node& src = parent(self, p);
                         if (!src.requires_grad) continue;
                         auto& g = src.ensure_grad();
                         for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[offsets[p] + i];
                       }
                     });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_rows");
  require(count > 0 && begin + count <= x.rows(),
          "slice_rows: rows [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
              ") out of range for " + shape_to_string(x.shape()));
  const std::size_t n = x.cols();
  const auto v = x.values();
  std::vector<double> out(v.begin() + static_cast<std::ptrdiff_t>(begin * n),
                          v.begin() + static_cast<std::ptrdiff_t>((begin + count) * n));
  return make_result({count, n}, std::move(out), {x}, [begin, n](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * n + i] += self.grad[i];
  });
}

Tensor concat_cols(std::span<const Tensor> parts) {
  require(!parts.empty(), "concat_cols: nothing to concatenate");
  const std::size_t m = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    require_matrix(p, "concat_cols");
    require_dims(p.rows() == m, "concat_cols", parts.front().shape(), p.shape());
    offsets.push_back(total);
    total += p.cols();
  }
  std::vector<double> out(m * total);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const std::size_t w = parts[p].cols();
    const auto v = parts[p].values();
    for (std::size_t i = 0; i < m; ++i)
      std::copy_n(&v[i * w], w, &out[i * total + offsets[p]]);
  }
  return make_result({m, total}, std::move(out), {parts.begin(), parts.end()},
                     [m, total, offsets = std::move(offsets)](Node& self) {
                       for (std::size_t p = 0; p < self.parents.size(); ++p) {
                         Node& src = parent(self, p);
                         if (!src.requires_grad) continue;
                         const std::size_t w = src.shape.back();
                         auto& g = src.ensure_grad();
                         for (std::size_t i = 0; i < m; ++i)
                           for (std::size_t j = 0; j < w; ++j)
                             g[i * w + j] += self.grad[i * total + offsets[p] + j];
                       }
                     });
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  require_matrix(x, "slice_cols");
  require(count > 0 && begin + count <= x.cols(),
          "slice_cols: columns out of range for " + shape_to_string(x.shape()));
  const std::size_t m = x.rows(), n = x.cols();
  const auto v = x.values();
  std::vector<double> out(m * count);
  for (std::size_t i = 0; i < m; ++i) std::copy_n(&v[i * n + begin], count, &out[i * count]);
  return make_result({m, count}, std::move(out), {x}, [m, n, begin, count](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < count; ++j) g[i * n + begin + j] += self.grad[i * count + j];
  });
}

Tensor mean_pool_rows(const Tensor& x, std::size_t group) {
  require_matrix(x, "mean_pool_rows");
  require(group > 0 && x.rows() % group == 0,
          "mean_pool_rows: " + std::to_string(x.rows()) + " rows not divisible into groups of " +
              std::to_string(group));
  const std::size_t r = x.rows() / group, n = x.cols();
  const double inv = 1.0 / static_cast<double>(group);
  const auto v = x.values();
  std::vector<double> out(r * n, 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t k = 0; k < group; ++k)
      for (std::size_t j = 0; j < n; ++j) out[i * n + j] += v[(i * group + k) * n + j];
    for (std::size_t j = 0; j < n; ++j) out[i * n + j] *= inv;
  }
  return make_result({r, n}, std::move(out), {x}, [r, n, group, inv](Node& self) {
    auto& g = parent(self, 0).ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t k = 0; k < group; ++k)
        for (std::size_t j = 0; j < n; ++j) g[(i * group + k) * n + j] += self.grad[i * n + j] * inv;
  });
}

}  // namespace must
