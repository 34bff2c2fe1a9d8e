#pragma once

// Supervised (QCL) and physics-informed (DQC) training.
//
// DQC minimises L = a1 L1 + a2 L2 + a3 L3 + a4 L4 with
//   L1  MSE of psi~ against psi at t = 0 on the data grid
//   L2  MSE of zeta~ (from the model's own second derivatives) at t = 0
//   L3  MSE of psi~ on the equator rows for t = 0.1, 0.2, ..., t_max
//   L4  mean squared BVE residual at points drawn from the continuum
// All batches are redrawn every iteration.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qsciml/bve.hpp"
#include "qsciml/data.hpp"
#include "qsciml/diff.hpp"
#include "qsciml/errors.hpp"
#include "qsciml/parallel.hpp"
#include "qsciml/qnn.hpp"

namespace qsciml::train {

using diff::Engine;
using qnn::CollocationPoint;
using qnn::ModelParams;

enum class Mode { qcl, dqc };

inline const char* to_string(Mode m) { return m == Mode::qcl ? "qcl" : "dqc"; }
inline Mode mode_from_string(const std::string& s) {
  if (s == "qcl") return Mode::qcl;
  if (s == "dqc") return Mode::dqc;
  throw ConfigError("unknown training mode '" + s + "'");
}

struct LossWeights {
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double alpha3 = 1.0;
  double alpha4 = 0.1;

  std::array<double, 4> as_array() const { return {alpha1, alpha2, alpha3, alpha4}; }

  void validate() const {
    for (double a : as_array()) {
      if (!(a >= 0.0) || !std::isfinite(a)) {
        throw ConfigError("loss weights must be finite and non-negative");
      }
    }
  }
};

struct TrainConfig {
  Mode mode = Mode::dqc;
  long iterations = 30000;
  double learning_rate = 1e-2;
  std::array<int, 4> batch_sizes{350, 300, 25, 350};  // DQC terms L1..L4
  int qcl_batch = 1602;
  std::uint64_t rng_seed = 0;
  double pole_cutoff_deg = 88.0;
  long checkpoint_interval = 1000;  // 0: only at the end
  double t_max = 3.0;               // time range of L3 and L4
  double equator_dt = 0.1;          // L3 time spacing
  bool auto_weight = true;          // alpha1..3 from the data
  LossWeights weights{};
  qnn::ModelConfig model{};
  bve::PhysicsConstants consts{};
  bool strict_r_scaling = false;
  Execution exec{};

  void validate() const {
    model.validate();
    consts.validate();
    weights.validate();
    if (iterations < 0) throw ConfigError("iterations must be >= 0");
    if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
    for (int b : batch_sizes) {
      if (b <= 0) throw ConfigError("batch sizes must be positive");
    }
    if (qcl_batch <= 0) throw ConfigError("QCL batch must be positive");
    if (!(pole_cutoff_deg > 0.0 && pole_cutoff_deg < 90.0)) {
      throw ConfigError("pole cutoff must lie in (0, 90) degrees");
    }
    if (checkpoint_interval < 0) {
      throw ConfigError("checkpoint interval must be >= 0");
    }
    if (!(t_max > 0.0) || !(equator_dt > 0.0)) {
      throw ConfigError("t_max and equator_dt must be positive");
    }
  }
};

// A point with its target value.
struct Sample {
  CollocationPoint point;
  double target = 0.0;
};

// Reference data: stream function and vorticity on a common grid.
struct Reference {
  data::Field psi;
  data::Field zeta;
};

namespace detail {
inline std::vector<Sample> grid_samples(const data::Field& f, std::size_t t) {
  std::vector<Sample> s;
  s.reserve(f.slice_size());
  for (std::size_t i = 0; i < f.n_lat(); ++i) {
    for (std::size_t j = 0; j < f.n_lon(); ++j) {
      s.push_back({{f.lat_rad(i), f.lon_rad(j), f.times[t]}, f.at(t, i, j)});
    }
  }
  return s;
}

inline std::size_t t0_index(const data::Field& f, const char* name) {
  const long k = f.find_time(0.0);
  if (k < 0) {
    throw ContractError(std::string("reference ") + name + " lacks t=0");
  }
  return static_cast<std::size_t>(k);
}

inline double mean_square(const std::vector<Sample>& s) {
  double acc = 0.0;
  for (const auto& x : s) acc += x.target * x.target;
  return acc / static_cast<double>(s.size());
}
}  // namespace detail

// Latitude rows nearest the equator (both, when two are equally near).
inline std::vector<std::size_t> equator_rows(const data::Field& f) {
  double best = 1e300;
  for (std::size_t i = 0; i < f.n_lat(); ++i) {
    best = std::min(best, std::abs(f.lat_rad(i)));
  }
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < f.n_lat(); ++i) {
    if (std::abs(f.lat_rad(i)) <= best * (1.0 + 1e-9) + 1e-15) rows.push_back(i);
  }
  return rows;
}

// Candidate sets for the data terms.
struct DqcData {
  std::vector<Sample> psi0;     // L1
  std::vector<Sample> zeta0;    // L2
  std::vector<Sample> equator;  // L3
};

inline DqcData build_dqc_data(const Reference& ref, const TrainConfig& cfg) {
  ref.psi.validate();
  ref.zeta.validate();
  DqcData d;
  d.psi0 = detail::grid_samples(ref.psi, detail::t0_index(ref.psi, "psi"));
  d.zeta0 = detail::grid_samples(ref.zeta, detail::t0_index(ref.zeta, "zeta"));
  const auto rows = equator_rows(ref.psi);
  const long n_times = std::lround(cfg.t_max / cfg.equator_dt);
  for (long k = 1; k <= n_times; ++k) {
    const double t = k * cfg.equator_dt;
    const long ti = ref.psi.find_time(t);
    if (ti < 0) {
      throw ContractError("reference psi lacks equator time " +
                          std::to_string(t));
    }
    for (std::size_t i : rows) {
      for (std::size_t j = 0; j < ref.psi.n_lon(); ++j) {
        d.equator.push_back({{ref.psi.lat_rad(i), ref.psi.lon_rad(j), t},
                             ref.psi.at(ti, i, j)});
      }
    }
  }
  return d;
}

// Every point of the psi reference at every time.
inline std::vector<Sample> build_qcl_data(const Reference& ref) {
  ref.psi.validate();
  std::vector<Sample> all;
  for (std::size_t t = 0; t < ref.psi.n_times(); ++t) {
    const auto s = detail::grid_samples(ref.psi, t);
    all.insert(all.end(), s.begin(), s.end());
  }
  return all;
}

// alpha_i = 1 / mean(data_i^2); alpha4 is kept from `base`.
inline LossWeights auto_weights(const DqcData& d, LossWeights base = {}) {
  auto inv = [](const std::vector<Sample>& s, const char* name) {
    if (s.empty()) throw DegenerateError(std::string("empty ") + name + " data");
    const double ms = detail::mean_square(s);
    if (!(ms > 0.0)) {
      throw DegenerateError(std::string(name) + " data are all zero");
    }
    return 1.0 / ms;
  };
  base.alpha1 = inv(d.psi0, "psi(t=0)");
  base.alpha2 = inv(d.zeta0, "zeta(t=0)");
  base.alpha3 = inv(d.equator, "equator psi");
  return base;
}

enum class Term { psi0, zeta0, equator, pde };

// Uniform draw without replacement from a candidate set.
inline std::vector<Sample> sample_without_replacement(
    const std::vector<Sample>& from, std::size_t n, std::mt19937_64& rng) {
  if (n > from.size()) {
    throw ContractError("batch of " + std::to_string(n) + " exceeds the " +
                        std::to_string(from.size()) + " available points");
  }
  // Partial Fisher-Yates over an index vector.
  std::vector<std::size_t> idx(from.size());
  for (std::size_t k = 0; k < idx.size(); ++k) idx[k] = k;
  std::vector<Sample> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    std::uniform_int_distribution<std::size_t> pick(k, idx.size() - 1);
    std::swap(idx[k], idx[pick(rng)]);
    out.push_back(from[idx[k]]);
  }
  return out;
}

// L4 collocation: lambda in [0, 2pi), |phi| < cutoff, t in [0, t_max].
inline std::vector<CollocationPoint> sample_pde_points(const TrainConfig& cfg,
                                                       std::size_t n,
                                                       std::mt19937_64& rng) {
  const double c = cfg.pole_cutoff_deg * std::numbers::pi / 180.0;
  std::uniform_real_distribution<double> lam(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> phi(-c, c);
  std::uniform_real_distribution<double> t(0.0, cfg.t_max);
  std::vector<CollocationPoint> out(n);
  for (auto& p : out) {
    p.phi = phi(rng);
    p.lambda = lam(rng);
    p.t = t(rng);
    if (p.phi <= -c) p.phi = std::nextafter(-c, 0.0);
  }
  return out;
}

struct DqcBatches {
  std::vector<Sample> psi0, zeta0, equator;
  std::vector<CollocationPoint> pde;
};

inline DqcBatches sample_dqc_batches(const DqcData& d, const TrainConfig& cfg,
                                     std::mt19937_64& rng) {
  DqcBatches b;
  b.psi0 = sample_without_replacement(d.psi0, cfg.batch_sizes[0], rng);
  b.zeta0 = sample_without_replacement(d.zeta0, cfg.batch_sizes[1], rng);
  b.equator = sample_without_replacement(d.equator, cfg.batch_sizes[2], rng);
  b.pde = sample_pde_points(cfg, cfg.batch_sizes[3], rng);
  return b;
}

// ------------------------------------------------------------------ losses

namespace detail {
template <int D, class PointLoss>
diff::LossGradient mean_term(const Engine& e, const ModelParams& params,
                             const std::vector<CollocationPoint>& points,
                             PointLoss&& f, const Execution& exec) {
  if (points.empty()) throw ContractError("empty batch");
  const double inv_n = 1.0 / static_cast<double>(points.size());
  return diff::param_gradient<D>(
      e, params, points,
      [&](std::size_t i, const auto& d, const CollocationPoint& p) {
        return f(i, d, p) * inv_n;
      },
      exec);
}

inline std::vector<CollocationPoint> points_of(const std::vector<Sample>& s) {
  std::vector<CollocationPoint> p;
  p.reserve(s.size());
  for (const auto& x : s) p.push_back(x.point);
  return p;
}
}  // namespace detail

// Mean squared error of psi~ against the targets, with its gradient.
inline diff::LossGradient qcl_loss_gradient(const Engine& e,
                                            const ModelParams& params,
                                            const std::vector<Sample>& batch,
                                            const Execution& exec = {}) {
  if (batch.empty()) throw ContractError("empty batch");
  return detail::mean_term<0>(
      e, params, detail::points_of(batch),
      [&](std::size_t i, const auto& d, const CollocationPoint&) {
        auto r = d.value() - batch[i].target;
        return r * r;
      },
      exec);
}

inline double qcl_loss(const qnn::ModelConfig& cfg, const ModelParams& params,
                       const std::vector<Sample>& batch) {
  if (batch.empty()) throw ContractError("empty batch");
  double acc = 0.0;
  for (const auto& s : batch) {
    const double r = qnn::forward(cfg, params, s.point) - s.target;
    acc += r * r;
  }
  return acc / static_cast<double>(batch.size());
}

struct DqcLoss {
  double total = 0.0;
  std::array<double, 4> components{};
  std::vector<double> gradient;  // of total
};

inline DqcLoss dqc_loss(const Engine& e, const ModelParams& params,
                        const DqcBatches& b, const LossWeights& w,
                        const bve::PhysicsConstants& consts,
                        bool strict_r_scaling = false,
                        const Execution& exec = {}) {
  w.validate();
  auto data_term = [&](const std::vector<Sample>& s) {
    return detail::mean_term<0>(
        e, params, detail::points_of(s),
        [&](std::size_t i, const auto& d, const CollocationPoint&) {
          auto r = d.value() - s[i].target;
          return r * r;
        },
        exec);
  };
  std::array<diff::LossGradient, 4> terms;
  terms[0] = data_term(b.psi0);
  terms[1] = detail::mean_term<2>(
      e, params, detail::points_of(b.zeta0),
      [&](std::size_t i, const auto& d, const CollocationPoint& p) {
        using T = std::decay_t<decltype(d.value())>;
        auto r = bve::vorticity_of<T>(d, p.phi, consts) - b.zeta0[i].target;
        return r * r;
      },
      exec);
  terms[2] = data_term(b.equator);
  terms[3] = detail::mean_term<3>(
      e, params, b.pde,
      [&](std::size_t, const auto& d, const CollocationPoint& p) {
        using T = std::decay_t<decltype(d.value())>;
        auto r = bve::residual_of<T>(d, p.phi, consts, strict_r_scaling);
        return r * r;
      },
      exec);
  const auto a = w.as_array();
  DqcLoss out;
  out.gradient.assign(terms[0].gradient.size(), 0.0);
  for (int k = 0; k < 4; ++k) {
    out.components[k] = terms[k].value;
    out.total += a[k] * terms[k].value;
    for (std::size_t j = 0; j < out.gradient.size(); ++j) {
      out.gradient[j] += a[k] * terms[k].gradient[j];
    }
  }
  return out;
}

// --------------------------------------------------------------------- Adam

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  explicit AdamState(std::size_t n = 0) : m(n, 0.0), v(n, 0.0) {}
};

inline void adam_step(AdamState& s, std::span<double> params,
                      std::span<const double> grads, double lr) {
  if (grads.size() != params.size() || s.m.size() != params.size() ||
      s.v.size() != params.size()) {
    throw ContractError("optimizer, parameter and gradient sizes differ");
  }
  for (std::size_t k = 0; k < grads.size(); ++k) {
    if (!std::isfinite(grads[k])) {
      throw NumericalError("non-finite gradient", "parameter " + std::to_string(k));
    }
  }
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    s.m[k] = s.beta1 * s.m[k] + (1.0 - s.beta1) * grads[k];
    s.v[k] = s.beta2 * s.v[k] + (1.0 - s.beta2) * grads[k] * grads[k];
    const double mh = s.m[k] / c1;
    const double vh = s.v[k] / c2;
    params[k] -= lr * mh / (std::sqrt(vh) + s.eps);
  }
}

// ------------------------------------------------------------------ driver

struct HistoryRow {
  long iter = 0;
  double total = 0.0;
  std::array<double, 4> components{};  // DQC only
  double lr = 0.0;
};

inline std::string format_history(const HistoryRow& r, Mode mode) {
  char buf[256];
  if (mode == Mode::qcl) {
    std::snprintf(buf, sizeof buf, "%ld %.17g\n", r.iter, r.total);
  } else {
    std::snprintf(buf, sizeof buf, "%ld %.17g %.17g %.17g %.17g %.17g %.17g\n",
                  r.iter, r.total, r.components[0], r.components[1],
                  r.components[2], r.components[3], r.lr);
  }
  return buf;
}

struct TrainState {
  ModelParams params;
  AdamState adam;
  LossWeights weights;
  long iteration = 0;
};

struct TrainHooks {
  // Receives each history row as soon as the iteration finishes.
  std::function<void(const HistoryRow&)> on_history;
  // Called every checkpoint_interval iterations, at the end, and with the
  // last good state before a numerical failure propagates.
  std::function<void(const TrainState&)> on_checkpoint;
  // Called after every optimizer step.
  std::function<void(const TrainState&)> on_step;
};

inline TrainState initial_state(const TrainConfig& cfg) {
  qnn::ModelConfig mc = cfg.model;
  mc.rng_seed = cfg.rng_seed;
  TrainState s;
  s.params = qnn::init_params(mc);
  s.adam = AdamState(mc.trainable_count());
  s.weights = cfg.weights;
  return s;
}

inline TrainState train(const TrainConfig& cfg, const Reference& ref,
                        const TrainHooks& hooks = {}) {
  cfg.validate();
  const Engine engine(cfg.model);
  TrainState state = initial_state(cfg);
  std::mt19937_64 rng(cfg.rng_seed ^ 0x9e3779b97f4a7c15ULL);

  DqcData dqc;
  std::vector<Sample> qcl;
  if (cfg.mode == Mode::dqc) {
    dqc = build_dqc_data(ref, cfg);
    if (cfg.auto_weight) state.weights = auto_weights(dqc, cfg.weights);
  } else {
    qcl = build_qcl_data(ref);
  }

  TrainState last_good = state;
  try {
    for (long it = 1; it <= cfg.iterations; ++it) {
      HistoryRow row;
      row.iter = it;
      row.lr = cfg.learning_rate;
      std::vector<double> grad;
      if (cfg.mode == Mode::dqc) {
        const auto b = sample_dqc_batches(dqc, cfg, rng);
        auto l = dqc_loss(engine, state.params, b, state.weights, cfg.consts,
                          cfg.strict_r_scaling, cfg.exec);
        row.total = l.total;
        row.components = l.components;
        grad = std::move(l.gradient);
      } else {
        const auto b = sample_without_replacement(
            qcl, static_cast<std::size_t>(cfg.qcl_batch), rng);
        auto l = qcl_loss_gradient(engine, state.params, b, cfg.exec);
        row.total = l.value;
        grad = std::move(l.gradient);
      }
      if (!std::isfinite(row.total)) {
        throw NumericalError("non-finite loss", "iteration " + std::to_string(it));
      }
      auto flat = state.params.flatten();
      adam_step(state.adam, flat, grad, cfg.learning_rate);
      state.params = ModelParams::unflatten(cfg.model, flat);
      state.iteration = it;
      last_good = state;
      if (hooks.on_history) hooks.on_history(row);
      if (hooks.on_step) hooks.on_step(state);
      if (hooks.on_checkpoint && cfg.checkpoint_interval > 0 &&
          it % cfg.checkpoint_interval == 0 && it != cfg.iterations) {
        hooks.on_checkpoint(state);
      }
    }
  } catch (const NumericalError&) {
    if (hooks.on_checkpoint) hooks.on_checkpoint(last_good);
    throw;
  }
  if (hooks.on_checkpoint) hooks.on_checkpoint(state);
  return state;
}

// ---------------------------------------------------------------- predict

// psi~ on the grid of `like` (times, lats, lons copied).
inline data::Field predict_psi(const qnn::ModelConfig& cfg,
                               const ModelParams& params,
                               const data::Field& like) {
  const Engine e(cfg);
  data::Field out = like;
  out.quantity = data::Quantity::psi;
  out.values.assign(like.n_times() * like.slice_size(), 0.0);
  for (std::size_t t = 0; t < like.n_times(); ++t) {
    for (std::size_t i = 0; i < like.n_lat(); ++i) {
      for (std::size_t j = 0; j < like.n_lon(); ++j) {
        out.at(t, i, j) = e.output_jet<0>(
            params, {like.lat_rad(i), like.lon_rad(j), like.times[t]}).value();
      }
    }
  }
  return out;
}

// zeta~ = laplacian of the model output, from its exact second derivatives.
inline data::Field predict_zeta(const qnn::ModelConfig& cfg,
                                const ModelParams& params,
                                const data::Field& like,
                                const bve::PhysicsConstants& consts) {
  const Engine e(cfg);
  const std::vector<diff::MultiIndex> req{{1, 0, 0}, {2, 0, 0}, {0, 2, 0}};
  data::Field out = like;
  out.quantity = data::Quantity::zeta;
  out.values.assign(like.n_times() * like.slice_size(), 0.0);
  for (std::size_t t = 0; t < like.n_times(); ++t) {
    for (std::size_t i = 0; i < like.n_lat(); ++i) {
      for (std::size_t j = 0; j < like.n_lon(); ++j) {
        const auto jet = diff::feature_jet(
            e, params, {like.lat_rad(i), like.lon_rad(j), like.times[t]}, req);
        out.at(t, i, j) = bve::vorticity_from_jet(jet, consts);
      }
    }
  }
  return out;
}

// Mean squared error of psi~ over a full sample set.
inline double full_mse(const Engine& e, const ModelParams& params,
                       const std::vector<Sample>& all) {
  double acc = 0.0;
  for (const auto& s : all) {
    const double r = e.output_jet<0>(params, s.point).value() - s.target;
    acc += r * r;
  }
  return acc / static_cast<double>(all.size());
}

}  // namespace qsciml::train
