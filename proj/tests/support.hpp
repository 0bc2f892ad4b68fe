#pragma once

// Shared fixtures for the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "must/checkpoint.hpp"
#include "must/mtfe.hpp"
#include "must/tcm.hpp"
#include "must/tensor.hpp"

namespace must::testing {

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double stddev = 1.0, bool requires_grad = false) {
  std::normal_distribution<double> nd(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = nd(rng);
  return Tensor(std::move(shape), std::move(v), requires_grad);
}

inline Tensor uniform_tensor(Shape shape, std::mt19937_64& rng, double lo = 0.0, double hi = 1.0) {
  std::uniform_real_distribution<double> ud(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (double& x : v) x = ud(rng);
  return Tensor(std::move(shape), std::move(v));
}

// Moves parameters to a well-conditioned probe point for finite differences:
// matrices get fan-in-scaled normal entries, layer-norm gains sit near one and
// everything else is small. At the 0.02 initialisation many gradients are so
// small that round-off in f(x ± h) swamps them.
inline void condition_for_grad_check(NamedParams& params, std::uint64_t seed, double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& [name, t] : params) {
    const bool gain = name.size() >= 6 && name.compare(name.size() - 6, 6, ".gamma") == 0;
    const double sd = t.rank() == 2 && t.rows() > 1 ? scale / std::sqrt(static_cast<double>(t.rows())) : 0.1;
    for (double& v : t.mutable_values()) v = (gain ? 1.0 : 0.0) + sd * nd(rng);
  }
}

// T=4, H=W=8, D=16 with two scales and three classes.
inline MtfeConfig toy_mtfe_config(std::uint64_t seed = 3) {
  MtfeConfig c;
  c.backbone.embed_dim = 16;
  c.backbone.depth = 1;
  c.backbone.heads = 2;
  c.backbone.patch = 4;
  c.backbone.temporal_pool = 2;
  c.backbone.frames = 4;
  c.backbone.frame_height = 8;
  c.backbone.frame_width = 8;
  c.num_scales = 2;
  c.num_classes = 3;
  c.seed = seed;
  return c;
}

inline std::vector<Tensor> toy_clips(const MtfeConfig& c, std::mt19937_64& rng) {
  std::vector<Tensor> clips;
  for (std::size_t i = 0; i < c.num_scales; ++i)
    clips.push_back(uniform_tensor({c.backbone.frames, c.backbone.frame_height, c.backbone.frame_width, 3}, rng));
  return clips;
}

// F′=6, N·D=16, three classes.
inline TcmConfig toy_tcm_config(std::uint64_t seed = 5) {
  TcmConfig c;
  c.width = 16;
  c.num_classes = 3;
  c.seed = seed;
  return c;
}

inline std::vector<Tensor> handles(const NamedParams& params) {
  std::vector<Tensor> out;
  for (const auto& [name, t] : params) out.push_back(t);
  return out;
}

}  // namespace must::testing
