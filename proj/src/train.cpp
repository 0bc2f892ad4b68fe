#include "must/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "must/error.hpp"
#include "must/parallel.hpp"

namespace must {

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ContractError("train config: lr must be positive");
  if (!(weight_decay >= 0.0)) throw ContractError("train config: weight_decay must be non-negative");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ContractError("train config: betas must lie in [0, 1)");
  if (!(eps > 0.0)) throw ContractError("train config: eps must be positive");
  if (batch_size == 0) throw ContractError("train config: batch_size must be positive");
}

Tensor cross_entropy(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.rows() != labels.size())
    throw ContractError("cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                        shape_to_string(logits.shape()));
  const std::size_t b = logits.rows(), c = logits.cols();
  for (std::size_t i = 0; i < b; ++i)
    if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= c)
      throw ContractError("cross_entropy: label " + std::to_string(labels[i]) + " at row " + std::to_string(i) +
                          " outside [0, " + std::to_string(c) + ")");

  const auto x = logits.values();
  std::vector<double> probs(b * c);
  double total = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = &x[i * c];
    const double mx = *std::max_element(row, row + c);
    double s = 0.0;
    for (std::size_t j = 0; j < c; ++j) s += std::exp(row[j] - mx);
    const double lse = mx + std::log(s);
    total += lse - row[labels[i]];
    for (std::size_t j = 0; j < c; ++j) probs[i * c + j] = std::exp(row[j] - lse);
  }
  const double inv_b = 1.0 / static_cast<double>(b);
  std::vector<int> targets(labels.begin(), labels.end());
  return make_result({1}, {total * inv_b}, {logits},
                     [b, c, inv_b, probs = std::move(probs), targets = std::move(targets)](detail::Node& self) {
                       auto& g = self.parents[0]->ensure_grad();
                       const double up = self.grad[0] * inv_b;
                       for (std::size_t i = 0; i < b; ++i)
                         for (std::size_t j = 0; j < c; ++j) {
                           const double onehot = static_cast<int>(j) == targets[i] ? 1.0 : 0.0;
                           g[i * c + j] += up * (probs[i * c + j] - onehot);
                         }
                     });
}

double cosine_lr(std::size_t step, std::size_t total_steps, double lr0) {
  if (total_steps == 0) return lr0;
  const double t = static_cast<double>(std::min(step, total_steps)) / static_cast<double>(total_steps);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

void adamw_update(std::span<double> weights, std::span<const double> grads, MomentBuffers& moments,
                  std::size_t step, double lr, const TrainConfig& cfg) {
  if (grads.size() != weights.size())
    throw ContractError("adamw: gradient length " + std::to_string(grads.size()) + " != parameter length " +
                        std::to_string(weights.size()));
  if (step == 0) throw ContractError("adamw: step count is 1-based");
  moments.first.resize(weights.size(), 0.0);
  moments.second.resize(weights.size(), 0.0);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
  const double decay = 1.0 - lr * cfg.weight_decay;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double g = grads[i];
    double& m = moments.first[i];
    double& v = moments.second[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    weights[i] = weights[i] * decay;
    weights[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.eps);
  }
}

AdamW::AdamW(NamedParams params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  state_.moments.resize(params_.size());
  for (std::size_t i = 0; i < params_.size(); ++i) {
    state_.moments[i].first.assign(params_[i].second.numel(), 0.0);
    state_.moments[i].second.assign(params_[i].second.numel(), 0.0);
  }
}

void AdamW::step(double lr) {
  double norm2 = 0.0;
  for (auto& [name, t] : params_) {
    if (!t.has_grad()) continue;
    const auto g = t.grad();
    for (std::size_t i = 0; i < g.size(); ++i) {
      if (!std::isfinite(g[i])) {
        std::ostringstream msg;
        msg << "non-finite gradient " << g[i] << " in parameter '" << name << "' at index " << i << " (step "
            << state_.step + 1 << ")";
        throw NumericalError(msg.str());
      }
      norm2 += g[i] * g[i];
    }
  }
  last_grad_norm_ = std::sqrt(norm2);

  ++state_.step;
  for (std::size_t p = 0; p < params_.size(); ++p) {
    Tensor& t = params_[p].second;
    if (t.has_grad()) {
      adamw_update(t.mutable_values(), t.grad(), state_.moments[p], state_.step, lr, cfg_);
    } else {
      const std::vector<double> zeros(t.numel(), 0.0);
      adamw_update(t.mutable_values(), zeros, state_.moments[p], state_.step, lr, cfg_);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& [_, t] : params_) t.zero_grad();
}

void write_training_log(const std::filesystem::path& path, const TrainHistory& history) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,split,loss,accuracy,lr\n" << std::setprecision(17);
  for (const auto& e : history.epochs)
    out << e.epoch << ',' << e.split << ',' << e.loss << ',' << e.accuracy << ',' << e.lr << '\n';
}

namespace {

void check_finite_loss(double loss, std::size_t step) {
  if (!std::isfinite(loss))
    throw NumericalError("non-finite training loss " + std::to_string(loss) + " at step " + std::to_string(step));
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  std::size_t correct = 0;
  const std::size_t c = logits.cols();
  const auto v = logits.values();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto row = v.subspan(i * c, c);
    if (std::max_element(row.begin(), row.end()) - row.begin() == labels[i]) ++correct;
  }
  return correct;
}

std::vector<Tensor> pyramid_clips(const FrameStore& store, const std::string& video, std::size_t keyframe,
                                  const PyramidSpec& pyramid) {
  return gather_frames(store, video, build_pyramid(store.frame_count(video), keyframe, pyramid));
}

EpochLog evaluate_mtfe(const Mtfe& model, const MtfeDataset& data, std::size_t epoch) {
  std::vector<Tensor> logits(data.samples.size());
  parallel_for(data.samples.size(), [&](std::size_t i) {
    const auto& s = data.samples[i];
    logits[i] = mtfe_predict(model, *data.store, s.video, s.keyframe, data.pyramid).logits;
  });
  EpochLog log;
  log.epoch = epoch;
  log.split = "val";
  if (logits.empty()) return log;
  NoGradGuard no_grad;
  std::vector<int> labels;
  for (const auto& s : data.samples) labels.push_back(s.label);
  const Tensor all = concat_rows(logits);
  log.loss = cross_entropy(all, labels).item();
  log.accuracy = static_cast<double>(count_correct(all, labels)) / static_cast<double>(labels.size());
  return log;
}

}  // namespace

FusionOutput mtfe_predict(const Mtfe& model, const FrameStore& store, const std::string& video, std::size_t keyframe,
                          const PyramidSpec& pyramid) {
  NoGradGuard no_grad;
  return model(pyramid_clips(store, video, keyframe, pyramid));
}

TrainHistory fit_mtfe(Mtfe& model, const MtfeDataset& train, const TrainConfig& cfg, const MtfeDataset* validation) {
  cfg.validate();
  if (train.samples.empty()) throw ContractError("fit_mtfe: empty training set");
  if (!train.store) throw ContractError("fit_mtfe: dataset has no frame store");
  if (train.pyramid.num_scales() != model.config().num_scales ||
      train.pyramid.frames_per_seq != model.config().backbone.frames)
    throw ContractError("fit_mtfe: pyramid shape does not match the model");

  AdamW opt(model.parameters(), cfg);
  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = train.samples.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * batches;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, lr = cfg.lr, max_norm = 0.0;
    std::size_t correct = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t count = std::min(cfg.batch_size, n - begin);
      std::vector<Tensor> logits(count);
      std::vector<int> labels(count);
      parallel_for(count, [&](std::size_t i) {
        const auto& s = train.samples[order[begin + i]];
        logits[i] = model(pyramid_clips(*train.store, s.video, s.keyframe, train.pyramid)).logits;
        labels[i] = s.label;
      });
      const Tensor batch_logits = concat_rows(logits);
      const Tensor loss = cross_entropy(batch_logits, labels);
      check_finite_loss(loss.item(), step);

      opt.zero_grad();
      loss.backward();
      lr = cosine_lr(step, total_steps, cfg.lr);
      opt.step(lr);
      ++step;

      history.step_losses.push_back(loss.item());
      loss_sum += loss.item() * static_cast<double>(count);
      correct += count_correct(batch_logits, labels);
      max_norm = std::max(max_norm, opt.last_grad_norm());
    }
    history.epochs.push_back(
        {epoch, "train", loss_sum / static_cast<double>(n), static_cast<double>(correct) / static_cast<double>(n), lr,
         max_norm});
    if (validation && !validation->samples.empty()) {
      EpochLog v = evaluate_mtfe(model, *validation, epoch);
      v.lr = lr;
      history.epochs.push_back(v);
    }
  }
  opt.zero_grad();
  return history;
}

std::vector<WindowRef> training_windows(const TcmDataset& data) {
  std::vector<WindowRef> out;
  for (std::size_t v = 0; v < data.videos.size(); ++v) {
    const auto& seq = data.videos[v];
    const std::size_t frames = seq.labels.size();
    if (!seq.embeddings.defined() || seq.embeddings.rows() < frames)
      throw DataError("video " + seq.video + ": embeddings missing for scheduled windows (" +
                      std::to_string(seq.embeddings.defined() ? seq.embeddings.rows() : 0) + " rows for " +
                      std::to_string(frames) + " labelled frames)");
    const WindowSchedule schedule = schedule_video(frames, data.window_length, data.overlap);
    for (std::size_t start : schedule.starts) out.push_back({v, start, schedule.window_length});
  }
  return out;
}

TrainHistory fit_tcm(Tcm& model, const TcmDataset& train, const TrainConfig& cfg) {
  cfg.validate();
  if (train.videos.empty()) throw ContractError("fit_tcm: empty training set");
  if (train.window_length == 0 || train.overlap >= train.window_length)
    throw ContractError("fit_tcm: need 0 <= overlap < window length");
  const std::vector<WindowRef> windows = training_windows(train);

  AdamW opt(model.parameters(), cfg);
  std::mt19937_64 rng(cfg.seed);
  const std::size_t n = windows.size();
  const std::size_t batches = (n + cfg.batch_size - 1) / cfg.batch_size;
  const std::size_t total_steps = cfg.epochs * batches;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainHistory history;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0, lr = cfg.lr, max_norm = 0.0;
    std::size_t correct = 0, positions = 0;
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * cfg.batch_size;
      const std::size_t count = std::min(cfg.batch_size, n - begin);
      std::vector<Tensor> logits(count);
      std::vector<std::vector<int>> labels(count);
      parallel_for(count, [&](std::size_t i) {
        const WindowRef& w = windows[order[begin + i]];
        const auto& seq = train.videos[w.video];
        logits[i] = model.encode_window(slice_rows(seq.embeddings, w.start, w.length));
        labels[i].assign(seq.labels.begin() + static_cast<std::ptrdiff_t>(w.start),
                         seq.labels.begin() + static_cast<std::ptrdiff_t>(w.start + w.length));
      });
      std::vector<int> flat;
      for (const auto& l : labels) flat.insert(flat.end(), l.begin(), l.end());
      const Tensor batch_logits = concat_rows(logits);
      const Tensor loss = cross_entropy(batch_logits, flat);
      check_finite_loss(loss.item(), step);

      opt.zero_grad();
      loss.backward();
      lr = cosine_lr(step, total_steps, cfg.lr);
      opt.step(lr);
      ++step;

      history.step_losses.push_back(loss.item());
      loss_sum += loss.item() * static_cast<double>(flat.size());
      positions += flat.size();
      correct += count_correct(batch_logits, flat);
      max_norm = std::max(max_norm, opt.last_grad_norm());
    }
    history.epochs.push_back({epoch, "train", loss_sum / static_cast<double>(positions),
                              static_cast<double>(correct) / static_cast<double>(positions), lr, max_norm});
  }
  opt.zero_grad();
  return history;
}

}  // namespace must
