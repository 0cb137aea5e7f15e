#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "regunc/estimators.hpp"
#include "regunc/prediction_set.hpp"

namespace regunc::trainer {

/// Gaussian NLL in the (mean, variance) parameterization, constant included.
inline double nll_standard(double mu, double sigma2, double y) {
  if (!(sigma2 > 0.0)) throw DomainError("nll_standard: sigma2 must be > 0");
  const double r = y - mu;
  return 0.5 * (kLog2Pi + std::log(sigma2)) + r * r / (2.0 * sigma2);
}

/// Gaussian NLL in natural parameters eta1 = mu/s2, eta2 = -1/(2 s2):
///   -(eta1 y + eta2 y^2) - eta1^2/(4 eta2) - log(-2 eta2)/2 + log(2 pi)/2
inline double nll_natural(double eta1, double eta2, double y) {
  if (!(eta2 < 0.0)) throw DomainError("nll_natural: eta2 must be < 0");
  return -(eta1 * y + eta2 * y * y) - eta1 * eta1 / (4.0 * eta2) - 0.5 * std::log(-2.0 * eta2) + 0.5 * kLog2Pi;
}

struct NaturalGradient {
  double d_eta1;  // = mu - y
  double d_eta2;  // = mu^2 + s2 - y^2
};

inline NaturalGradient nll_natural_gradient(double eta1, double eta2, double y) {
  return {-y - eta1 / (2.0 * eta2), -y * y + eta1 * eta1 / (4.0 * eta2 * eta2) - 1.0 / (2.0 * eta2)};
}

struct MeanVariance {
  double mean;
  double variance;
};

inline MeanVariance from_natural(double eta1, double eta2) {
  const double s2 = -1.0 / (2.0 * eta2);
  return {eta1 * s2, s2};
}

enum class Activation { ReLU, SiLU };

struct MlpSpec {
  std::size_t input_dim = 1;
  std::vector<std::size_t> hidden_widths = {8, 8};
  Activation activation = Activation::SiLU;

  void validate() const {
    if (input_dim == 0) throw UsageError("MlpSpec: input_dim must be >= 1");
    for (auto w : hidden_widths)
      if (w == 0) throw UsageError("MlpSpec: hidden widths must be positive");
  }
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t epochs = 100;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  AdamConfig adam{};
  // Training continues past `epochs` (whole epochs) until at least this
  // many optimizer steps have been taken; 0 disables.
  std::size_t min_steps = 0;

  void validate() const {
    if (!(learning_rate > 0.0)) throw UsageError("TrainConfig: learning_rate must be > 0");
    if (batch_size == 0) throw UsageError("TrainConfig: batch_size must be >= 1");
  }
};

/// Row-major inputs (n x dim) with scalar targets.
struct Dataset {
  std::size_t dim = 1;
  std::vector<double> x;
  std::vector<double> y;

  std::size_t size() const noexcept { return y.size(); }
  std::span<const double> row(std::size_t i) const { return {x.data() + i * dim, dim}; }

  void push_back(std::span<const double> xi, double yi) {
    if (xi.size() != dim) throw UsageError("Dataset: input dimension mismatch");
    x.insert(x.end(), xi.begin(), xi.end());
    y.push_back(yi);
  }

  Dataset subset(std::span<const std::size_t> idx) const {
    Dataset d{dim, {}, {}};
    for (auto i : idx) d.push_back(row(i), y[i]);
    return d;
  }
};

// eta2 = -softplus(raw) - kEta2Floor keeps eta2 < 0 and s2 <= 1/(2 kEta2Floor).
inline constexpr double kEta2Floor = 1e-6;

inline double softplus(double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); }
inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

/// Fully connected network with two outputs read as natural parameters.
/// Parameters live in one flat vector: per layer W (out x in, row-major)
/// then b.
class Mlp {
 public:
  Mlp() = default;

  explicit Mlp(MlpSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    sizes_.push_back(spec_.input_dim);
    for (auto w : spec_.hidden_widths) sizes_.push_back(w);
    sizes_.push_back(2);
    std::size_t total = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      offsets_.push_back(total);
      total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
    }
    params_.assign(total, 0.0);
  }

  const MlpSpec& spec() const noexcept { return spec_; }
  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }
  std::size_t layers() const noexcept { return offsets_.size(); }

  /// Glorot-uniform weights, zero biases, and an eta2 bias giving unit
  /// variance at initialization.
  void initialize(std::mt19937_64& rng) {
    for (std::size_t l = 0; l < layers(); ++l) {
      const double fan_in = static_cast<double>(sizes_[l]);
      const double fan_out = static_cast<double>(sizes_[l + 1]);
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      std::uniform_real_distribution<double> u(-limit, limit);
      double* w = weights(l);
      for (std::size_t k = 0; k < sizes_[l] * sizes_[l + 1]; ++k) w[k] = u(rng);
      std::fill_n(bias(l), sizes_[l + 1], 0.0);
    }
    // softplus(b) + floor = 1/2  =>  s2 = 1
    bias(layers() - 1)[1] = std::log(std::expm1(0.5 - kEta2Floor));
  }

  struct Natural {
    double eta1;
    double eta2;
  };

  Natural forward(std::span<const double> x) const {
    Workspace ws;
    return forward(x, ws);
  }

  MeanVariance predict(std::span<const double> x) const {
    const auto n = forward(x);
    return from_natural(n.eta1, n.eta2);
  }

  /// Mean natural NLL over the rows `idx` of `data`; accumulates d(loss)/d(params)
  /// into `grad` when non-empty.
  double loss_and_gradient(const Dataset& data, std::span<const std::size_t> idx, std::span<double> grad) const {
    Workspace ws;
    double loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(idx.size());
    for (auto i : idx) {
      const auto out = forward(data.row(i), ws);
      const double y = data.y[i];
      loss += nll_natural(out.eta1, out.eta2, y);
      if (grad.empty()) continue;
      const auto g = nll_natural_gradient(out.eta1, out.eta2, y);
      // d eta2 / d raw = -sigmoid(raw)
      std::vector<double> delta = {g.d_eta1 * inv_n, -g.d_eta2 * sigmoid(ws.z.back()[1]) * inv_n};
      backward(ws, delta, grad);
    }
    return loss * inv_n;
  }

 private:
  struct Workspace {
    std::vector<std::vector<double>> a;  // layer inputs (a[0] = x)
    std::vector<std::vector<double>> z;  // pre-activations per layer
  };

  double* weights(std::size_t l) { return params_.data() + offsets_[l]; }
  double* bias(std::size_t l) { return weights(l) + sizes_[l] * sizes_[l + 1]; }
  const double* weights(std::size_t l) const { return params_.data() + offsets_[l]; }
  const double* bias(std::size_t l) const { return weights(l) + sizes_[l] * sizes_[l + 1]; }

  double activate(double v) const {
    if (spec_.activation == Activation::ReLU) return v > 0.0 ? v : 0.0;
    return v * sigmoid(v);
  }

  double activate_grad(double v) const {
    if (spec_.activation == Activation::ReLU) return v > 0.0 ? 1.0 : 0.0;
    const double s = sigmoid(v);
    return s + v * s * (1.0 - s);
  }

  Natural forward(std::span<const double> x, Workspace& ws) const {
    if (x.size() != spec_.input_dim) throw UsageError("Mlp: input dimension mismatch");
    ws.a.assign(1, std::vector<double>(x.begin(), x.end()));
    ws.z.clear();
    for (std::size_t l = 0; l < layers(); ++l) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const double* w = weights(l);
      const double* b = bias(l);
      const auto& prev = ws.a.back();
      std::vector<double> z(out);
      for (std::size_t o = 0; o < out; ++o) {
        double s = b[o];
        for (std::size_t i = 0; i < in; ++i) s += w[o * in + i] * prev[i];
        z[o] = s;
      }
      if (l + 1 < layers()) {
        std::vector<double> a(out);
        for (std::size_t o = 0; o < out; ++o) a[o] = activate(z[o]);
        ws.a.push_back(std::move(a));
      }
      ws.z.push_back(std::move(z));
    }
    const auto& raw = ws.z.back();
    return {raw[0], -softplus(raw[1]) - kEta2Floor};
  }

  // delta: d(loss)/d(z of the output layer).
  void backward(const Workspace& ws, std::vector<double> delta, std::span<double> grad) const {
    for (std::size_t l = layers(); l-- > 0;) {
      const std::size_t in = sizes_[l];
      const std::size_t out = sizes_[l + 1];
      const auto& input = ws.a[l];
      double* gw = grad.data() + offsets_[l];
      double* gb = gw + in * out;
      for (std::size_t o = 0; o < out; ++o) {
        gb[o] += delta[o];
        for (std::size_t i = 0; i < in; ++i) gw[o * in + i] += delta[o] * input[i];
      }
      if (l == 0) break;
      const double* w = weights(l);
      std::vector<double> prev(in, 0.0);
      for (std::size_t i = 0; i < in; ++i) {
        double s = 0.0;
        for (std::size_t o = 0; o < out; ++o) s += w[o * in + i] * delta[o];
        prev[i] = s * activate_grad(ws.z[l - 1][i]);
      }
      delta = std::move(prev);
    }
  }

  MlpSpec spec_;
  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// z-score statistics of the training split; inputs are standardized
/// before the network and predictions are mapped back to target units.
struct Standardizer {
  std::vector<double> x_mean;
  std::vector<double> x_scale;
  double y_mean = 0.0;
  double y_scale = 1.0;

  static Standardizer fit(const Dataset& d) {
    Standardizer s;
    const double n = static_cast<double>(d.size());
    s.x_mean.assign(d.dim, 0.0);
    s.x_scale.assign(d.dim, 0.0);
    for (std::size_t i = 0; i < d.size(); ++i)
      for (std::size_t k = 0; k < d.dim; ++k) s.x_mean[k] += d.row(i)[k] / n;
    for (std::size_t i = 0; i < d.size(); ++i)
      for (std::size_t k = 0; k < d.dim; ++k) {
        const double r = d.row(i)[k] - s.x_mean[k];
        s.x_scale[k] += r * r / n;
      }
    for (auto& v : s.x_scale) v = v > 0.0 ? std::sqrt(v) : 1.0;
    s.y_mean = std::accumulate(d.y.begin(), d.y.end(), 0.0) / n;
    double var = 0.0;
    for (double y : d.y) var += (y - s.y_mean) * (y - s.y_mean) / n;
    s.y_scale = var > 0.0 ? std::sqrt(var) : 1.0;
    return s;
  }

  std::vector<double> input(std::span<const double> x) const {
    std::vector<double> z(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) z[k] = (x[k] - x_mean[k]) / x_scale[k];
    return z;
  }

  Dataset apply(const Dataset& d) const {
    Dataset out{d.dim, {}, {}};
    for (std::size_t i = 0; i < d.size(); ++i) out.push_back(input(d.row(i)), (d.y[i] - y_mean) / y_scale);
    return out;
  }
};

/// Trained ensemble plus the standardization it was trained under.
struct EnsemblePredictor {
  MlpSpec spec;
  Standardizer standardizer;
  std::vector<Mlp> members;
  std::vector<std::vector<double>> epoch_losses;  // per member, per epoch (standardized units)

  std::size_t size() const noexcept { return members.size(); }

  GaussianEnsemble predict_one(std::span<const double> x) const {
    const auto z = standardizer.input(x);
    std::vector<GaussianComponent> comps;
    comps.reserve(members.size());
    const double ys = standardizer.y_scale;
    for (const auto& m : members) {
      const auto mv = m.predict(z);
      comps.emplace_back(mv.mean * ys + standardizer.y_mean, mv.variance * ys * ys);
    }
    return GaussianEnsemble(std::move(comps));
  }
};

inline double adam_step_size(const TrainConfig& cfg, std::size_t t) {
  const double b1t = 1.0 - std::pow(cfg.adam.beta1, static_cast<double>(t));
  const double b2t = 1.0 - std::pow(cfg.adam.beta2, static_cast<double>(t));
  return cfg.learning_rate * std::sqrt(b2t) / b1t;
}

/// Trains one network with Adam on already-standardized data; returns the
/// per-epoch mean training loss.
inline std::vector<double> train_member(Mlp& net, const Dataset& data, const TrainConfig& cfg, std::uint64_t seed,
                                        std::size_t member_index) {
  std::mt19937_64 rng(seed);
  net.initialize(rng);
  const std::size_t np = net.params().size();
  std::vector<double> m1(np, 0.0), m2(np, 0.0), grad(np);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> history;
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs || step < cfg.min_steps; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + start, stop - start);
      std::fill(grad.begin(), grad.end(), 0.0);
      double loss = 0.0;
      try {
        loss = net.loss_and_gradient(data, batch, grad);
      } catch (const DomainError&) {
        loss = std::numeric_limits<double>::quiet_NaN();  // non-finite network output
      }
      if (!std::isfinite(loss))
        throw TrainingError("training diverged (non-finite loss) in member " + std::to_string(member_index),
                            member_index);
      epoch_loss += loss * static_cast<double>(batch.size());
      ++step;
      const double lr = adam_step_size(cfg, step);
      auto p = net.params();
      for (std::size_t k = 0; k < np; ++k) {
        m1[k] = cfg.adam.beta1 * m1[k] + (1.0 - cfg.adam.beta1) * grad[k];
        m2[k] = cfg.adam.beta2 * m2[k] + (1.0 - cfg.adam.beta2) * grad[k] * grad[k];
        p[k] -= lr * m1[k] / (std::sqrt(m2[k]) + cfg.adam.eps);
      }
    }
    history.push_back(epoch_loss / static_cast<double>(data.size()));
  }
  return history;
}

/// M members from independent initializations (member i seeded with
/// cfg.seed + i). Deterministic for a fixed config.
inline EnsemblePredictor train_ensemble(const Dataset& data, std::size_t members, const MlpSpec& spec,
                                        const TrainConfig& cfg) {
  cfg.validate();
  spec.validate();
  if (data.size() == 0) throw UsageError("train_ensemble: empty dataset");
  if (members == 0) throw UsageError("train_ensemble: need at least one member");
  if (data.dim != spec.input_dim) throw UsageError("train_ensemble: data dimension does not match spec");
  for (double v : data.x)
    if (!std::isfinite(v)) throw DomainError("train_ensemble: non-finite input");
  for (double v : data.y)
    if (!std::isfinite(v)) throw DomainError("train_ensemble: non-finite target");

  EnsemblePredictor pred;
  pred.spec = spec;
  pred.standardizer = Standardizer::fit(data);
  const Dataset z = pred.standardizer.apply(data);
  for (std::size_t i = 0; i < members; ++i) {
    Mlp net(spec);
    pred.epoch_losses.push_back(train_member(net, z, cfg, cfg.seed + i, i));
    pred.members.push_back(std::move(net));
  }
  return pred;
}

/// Per-point ensembles for the rows of `xs` (row-major, spec.input_dim wide).
inline PredictionSet predict(const EnsemblePredictor& pred, std::span<const double> xs,
                             std::span<const double> targets = {}) {
  const std::size_t dim = pred.spec.input_dim;
  if (xs.size() % dim != 0) throw UsageError("predict: input size is not a multiple of the dimension");
  const std::size_t n = xs.size() / dim;
  if (!targets.empty() && targets.size() != n) throw UsageError("predict: targets/input length mismatch");
  PredictionSet out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    PredictionPoint p{std::to_string(i), pred.predict_one(xs.subspan(i * dim, dim)), std::nullopt, std::nullopt};
    if (!targets.empty()) p.target = targets[i];
    out.push_back(std::move(p));
  }
  return out;
}

/// Held-out NLL of the ensemble's mixture predictive, averaged over points.
inline double mixture_nll(const EnsemblePredictor& pred, const Dataset& data) {
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto ens = pred.predict_one(data.row(i));
    // log-sum-exp over members
    std::vector<double> logs;
    logs.reserve(ens.size());
    for (const auto& c : ens) logs.push_back(-nll_standard(c.mean(), c.variance(), data.y[i]));
    const double mx = *std::max_element(logs.begin(), logs.end());
    double s = 0.0;
    for (double l : logs) s += std::exp(l - mx);
    total += -(mx + std::log(s / static_cast<double>(ens.size())));
  }
  return total / static_cast<double>(data.size());
}

/// An uncertainty measure used for acquisition; std::nullopt means Random.
struct Acquisition {
  std::optional<ScoringRule> rule;
  std::optional<EstimatorId> estimator;

  static Acquisition random() { return {}; }
  static Acquisition measure(ScoringRule r, EstimatorId e) { return {r, e}; }
  bool is_random() const noexcept { return !rule.has_value(); }
};

struct ActiveLearningConfig {
  std::size_t iterations = 5;
  std::size_t batch = 20;
  std::size_t members = 5;
  MlpSpec spec{};
  TrainConfig train{};
  std::uint64_t seed = 0;  // acquisition sampling
};

struct ActiveLearningResult {
  std::vector<double> nll;              // held-out NLL after each training round (iterations + 1 entries unless truncated)
  std::vector<std::size_t> acquired;    // pool indices in acquisition order
  bool truncated = false;               // pool ran out before all iterations finished
};

/// Draws k distinct indices with probabilities softmax(scores), one at a
/// time, renormalizing over what is left.
inline std::vector<std::size_t> softmax_sample_without_replacement(std::span<const double> scores, std::size_t k,
                                                                   std::mt19937_64& rng) {
  k = std::min(k, scores.size());
  const double mx = *std::max_element(scores.begin(), scores.end());
  std::vector<double> w(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) w[i] = std::exp(scores[i] - mx);
  std::vector<std::size_t> picked;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (std::size_t n = 0; n < k; ++n) {
    const double total = std::accumulate(w.begin(), w.end(), 0.0);
    double u = unit(rng) * total;
    std::size_t chosen = w.size();
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] <= 0.0) continue;
      chosen = i;
      if (u < w[i]) break;
      u -= w[i];
    }
    picked.push_back(chosen);
    w[chosen] = 0.0;
  }
  return picked;
}

/// Pool-based active learning: each round trains a fresh ensemble on the
/// current training set, records the held-out NLL, scores the remaining pool
/// and moves `batch` points sampled from softmax(score) into the training
/// set. A final round trains on everything acquired.
inline ActiveLearningResult active_learning_loop(const Dataset& pool, std::span<const std::size_t> initial,
                                                 const Dataset& test, const Acquisition& acq,
                                                 const ActiveLearningConfig& cfg) {
  if (!acq.is_random() && availability(*acq.rule, *acq.estimator) != Availability::ClosedForm &&
      availability(*acq.rule, *acq.estimator) != Availability::IdenticallyZero)
    throw UsageError("active_learning_loop: acquisition measure must be available in closed form");
  if (cfg.batch == 0) throw UsageError("active_learning_loop: batch must be >= 1");

  std::vector<char> used(pool.size(), 0);
  std::vector<std::size_t> train_idx(initial.begin(), initial.end());
  for (auto i : train_idx) {
    if (i >= pool.size()) throw UsageError("active_learning_loop: initial index out of range");
    used[i] = 1;
  }
  std::mt19937_64 rng(cfg.seed);
  ActiveLearningResult res;

  auto fit = [&](std::size_t round) {
    TrainConfig tc = cfg.train;
    tc.seed = cfg.train.seed + 7919 * round;
    return train_ensemble(pool.subset(train_idx), cfg.members, cfg.spec, tc);
  };

  for (std::size_t round = 0; round < cfg.iterations; ++round) {
    const auto model = fit(round);
    res.nll.push_back(mixture_nll(model, test));

    std::vector<std::size_t> remaining;
    for (std::size_t i = 0; i < pool.size(); ++i)
      if (!used[i]) remaining.push_back(i);
    if (remaining.empty()) {
      res.truncated = true;
      return res;
    }
    std::vector<double> scores(remaining.size(), 0.0);
    if (!acq.is_random()) {
      for (std::size_t j = 0; j < remaining.size(); ++j) {
        const auto ens = model.predict_one(pool.row(remaining[j]));
        scores[j] = *evaluate_risk(*acq.rule, ens, *acq.estimator);
      }
    }
    if (remaining.size() < cfg.batch) res.truncated = true;
    for (auto j : softmax_sample_without_replacement(scores, cfg.batch, rng)) {
      used[remaining[j]] = 1;
      train_idx.push_back(remaining[j]);
      res.acquired.push_back(remaining[j]);
    }
    if (res.truncated) {
      res.nll.push_back(mixture_nll(fit(round + 1), test));
      return res;
    }
  }
  res.nll.push_back(mixture_nll(fit(cfg.iterations), test));
  return res;
}

}  // namespace regunc::trainer
