#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "qsciml/checkpoint.hpp"
#include "qsciml/train.hpp"

using namespace qsciml;
using namespace qsciml::train;

namespace {

constexpr double kPi = std::numbers::pi;

// Exact Rossby-Haurwitz reference on an equiangular grid, 0.1-spaced times.
Reference exact_reference(std::size_t n_lat, std::size_t n_lon, int n_times) {
  const auto u = bve::PhysicsConstants::unit();
  Reference r;
  r.psi.lats = data::equiangular_lats(n_lat);
  r.psi.lons = data::equiangular_lons(n_lon);
  for (int k = 0; k < n_times; ++k) r.psi.times.push_back(0.1 * k);
  r.zeta = r.psi;
  r.zeta.quantity = data::Quantity::zeta;
  for (int k = 0; k < n_times; ++k) {
    for (std::size_t i = 0; i < n_lat; ++i) {
      for (std::size_t j = 0; j < n_lon; ++j) {
        const CollocationPoint p{r.psi.lat_rad(i), r.psi.lon_rad(j), r.psi.times[k]};
        const double a = bve::analytic_psi({1, 1}, u, p);
        const double b = bve::analytic_psi({1, 2}, u, p);
        r.psi.values.push_back(a + b);
        r.zeta.values.push_back(-2 * a - 6 * b);
      }
    }
  }
  return r;
}

std::vector<double> fd_gradient(const std::function<double(const std::vector<double>&)>& f,
                                std::vector<double> x, double h = 1e-6) {
  std::vector<double> g(x.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double x0 = x[k];
    x[k] = x0 + h;
    const double fp = f(x);
    x[k] = x0 - h;
    const double fm = f(x);
    x[k] = x0;
    g[k] = (fp - fm) / (2 * h);
  }
  return g;
}

ModelParams jittered(const qnn::ModelConfig& cfg, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.4, 0.4);
  auto p = qnn::init_params(cfg);
  for (auto& g : p.gamma) g += u(rng);
  for (auto& a : p.input_affine) {
    a.scale += u(rng);
    a.shift = u(rng);
  }
  p.output_affine = {0.6 + u(rng), u(rng)};
  return p;
}

}  // namespace

TEST(Train, EquatorRows) {
  const auto r = exact_reference(14, 25, 1);
  EXPECT_EQ(equator_rows(r.psi), (std::vector<std::size_t>{6, 7}));
  const auto odd = exact_reference(15, 4, 1);
  EXPECT_EQ(equator_rows(odd.psi), (std::vector<std::size_t>{7}));
}

TEST(Train, DqcDataSizes) {
  const auto r = exact_reference(14, 25, 31);
  TrainConfig cfg;
  const auto d = build_dqc_data(r, cfg);
  EXPECT_EQ(d.psi0.size(), 350u);
  EXPECT_EQ(d.zeta0.size(), 350u);
  EXPECT_EQ(d.equator.size(), 1500u);
  for (const auto& s : d.equator) {
    EXPECT_GT(s.point.t, 0.05);
    EXPECT_LT(std::abs(s.point.phi), 7 * kPi / 180);
  }
  EXPECT_EQ(build_qcl_data(r).size(), 31u * 350u);
  // Missing equator times are a contract violation.
  const auto short_ref = exact_reference(14, 25, 11);
  EXPECT_THROW(build_dqc_data(short_ref, cfg), ContractError);
  cfg.t_max = 1.0;
  EXPECT_EQ(build_dqc_data(short_ref, cfg).equator.size(), 500u);
}

TEST(Train, AutoWeights) {
  DqcData d;
  d.psi0 = {{{}, 2.0}, {{}, -2.0}};
  d.zeta0 = {{{}, 1.0}, {{}, -1.0}};
  d.equator = {{{}, 2.0}};
  auto w = auto_weights(d, {9, 9, 9, 0.3});
  EXPECT_DOUBLE_EQ(w.alpha1, 0.25);
  EXPECT_DOUBLE_EQ(w.alpha2, 1.0);
  EXPECT_DOUBLE_EQ(w.alpha3, 0.25);
  EXPECT_DOUBLE_EQ(w.alpha4, 0.3);

  const auto r = exact_reference(14, 25, 31);
  const auto full = build_dqc_data(r, TrainConfig{});
  double s = 0;
  for (std::size_t i = 0; i < r.psi.slice_size(); ++i) s += r.psi.values[i] * r.psi.values[i];
  EXPECT_NEAR(auto_weights(full).alpha1, r.psi.slice_size() / s, 1e-12);

  d.zeta0 = {{{}, 0.0}};
  EXPECT_THROW(auto_weights(d), DegenerateError);
  d.zeta0.clear();
  EXPECT_THROW(auto_weights(d), DegenerateError);
}

TEST(Train, SamplingWithoutReplacement) {
  std::vector<Sample> from;
  for (int k = 0; k < 50; ++k) from.push_back({{0.0, 0.0, 0.0}, double(k)});
  std::mt19937_64 a(7), b(7);
  const auto x = sample_without_replacement(from, 20, a);
  const auto y = sample_without_replacement(from, 20, b);
  std::set<double> seen;
  for (std::size_t k = 0; k < x.size(); ++k) {
    EXPECT_EQ(x[k].target, y[k].target);
    seen.insert(x[k].target);
  }
  EXPECT_EQ(seen.size(), 20u);
  EXPECT_EQ(sample_without_replacement(from, 50, a).size(), 50u);
  EXPECT_THROW(sample_without_replacement(from, 51, a), ContractError);
}

TEST(TrainProperty, PdePointsStayInDomain) {
  TrainConfig cfg;
  std::mt19937_64 rng(3);
  const double c = cfg.pole_cutoff_deg * kPi / 180;
  for (const auto& p : sample_pde_points(cfg, 20000, rng)) {
    EXPECT_LT(std::abs(p.phi), c);
    EXPECT_GE(p.lambda, 0.0);
    EXPECT_LT(p.lambda, 2 * kPi);
    EXPECT_GE(p.t, 0.0);
    EXPECT_LE(p.t, cfg.t_max);
  }
}

TEST(Train, QclLossExamples) {
  const qnn::ModelConfig cfg{2, 1};
  const auto p = qnn::identity_params(cfg);
  EXPECT_DOUBLE_EQ(qcl_loss(cfg, p, {{{0.1, 0.2, 0.3}, 0.0}, {{0.5, 1.0, 2.0}, 0.0}}), 4.0);
  EXPECT_DOUBLE_EQ(qcl_loss(cfg, p, {{{0.1, 0.2, 0.3}, 1.0}, {{0.5, 1.0, 2.0}, 3.0}}), 1.0);
  EXPECT_THROW(qcl_loss(cfg, p, {}), ContractError);
}

TEST(TrainProperty, QclGradientMatchesFiniteDifferences) {
  const qnn::ModelConfig cfg{3, 2};
  const auto p = jittered(cfg, 1);
  const auto r = exact_reference(6, 8, 2);
  auto batch = build_qcl_data(r);
  batch.resize(20);
  const auto g = qcl_loss_gradient(Engine(cfg), p, batch);
  EXPECT_NEAR(g.value, qcl_loss(cfg, p, batch), 1e-12);
  const auto fd = fd_gradient(
      [&](const std::vector<double>& v) {
        return qcl_loss(cfg, ModelParams::unflatten(cfg, v), batch);
      },
      p.flatten());
  for (std::size_t k = 0; k < fd.size(); ++k)
    EXPECT_NEAR(g.gradient[k], fd[k], 1e-6 * (1 + std::abs(fd[k]))) << "k=" << k;
}

TEST(TrainProperty, DqcGradientMatchesFiniteDifferences) {
  const qnn::ModelConfig cfg{2, 1};
  const auto p = jittered(cfg, 2);
  const Engine e(cfg);
  const auto r = exact_reference(14, 25, 31);
  TrainConfig tc;
  tc.batch_sizes = {4, 3, 2, 5};
  std::mt19937_64 rng(4);
  const auto b = sample_dqc_batches(build_dqc_data(r, tc), tc, rng);
  const LossWeights w{0.7, 0.2, 1.3, 0.4};
  const bve::PhysicsConstants c{1.0, 1.0};
  const auto l = dqc_loss(e, p, b, w, c);
  const auto fd = fd_gradient(
      [&](const std::vector<double>& v) {
        return dqc_loss(e, ModelParams::unflatten(cfg, v), b, w, c).total;
      },
      p.flatten());
  for (std::size_t k = 0; k < fd.size(); ++k)
    EXPECT_NEAR(l.gradient[k], fd[k], 1e-5 * (1 + std::abs(fd[k]))) << "k=" << k;

  // Components against independent evaluations.
  EXPECT_NEAR(l.components[0], qcl_loss(cfg, p, b.psi0), 1e-12);
  EXPECT_NEAR(l.components[2], qcl_loss(cfg, p, b.equator), 1e-12);
  double pde = 0;
  for (const auto& q : b.pde) {
    const double res = bve::residual(diff::feature_jet(e, p, q, diff::residual_partials()), c);
    pde += res * res;
  }
  EXPECT_NEAR(l.components[3], pde / b.pde.size(), 1e-10 * (1 + pde));
}

TEST(TrainProperty, DqcLossIsLinearInWeights) {
  const qnn::ModelConfig cfg{2, 1};
  const auto p = jittered(cfg, 3);
  const Engine e(cfg);
  const auto r = exact_reference(14, 25, 31);
  TrainConfig tc;
  tc.batch_sizes = {5, 5, 5, 5};
  std::mt19937_64 rng(5);
  const auto b = sample_dqc_batches(build_dqc_data(r, tc), tc, rng);
  const auto c = bve::PhysicsConstants::unit();
  const auto l = dqc_loss(e, p, b, {1, 2, 3, 4}, c);
  for (double x : l.components) EXPECT_GE(x, 0.0);
  EXPECT_NEAR(l.total,
              l.components[0] + 2 * l.components[1] + 3 * l.components[2] +
                  4 * l.components[3],
              1e-12 * l.total);
  const auto z = dqc_loss(e, p, b, {0, 0, 0, 0}, c);
  EXPECT_EQ(z.total, 0.0);
  for (double g : z.gradient) EXPECT_EQ(g, 0.0);
  const auto scaled = dqc_loss(e, p, b, {2, 4, 6, 8}, c);
  for (std::size_t k = 0; k < l.gradient.size(); ++k)
    EXPECT_NEAR(scaled.gradient[k], 2 * l.gradient[k], 1e-12 * (1 + std::abs(l.gradient[k])));
  EXPECT_THROW(dqc_loss(e, p, b, {1, -1, 1, 1}, c), ConfigError);
}

TEST(Train, ReferenceVorticityMatchesAnalyticModes) {
  const auto r = exact_reference(14, 25, 31);
  const auto d = build_dqc_data(r, TrainConfig{});
  for (const auto& s : d.zeta0) {
    const auto j1 = bve::analytic_jet({1, 1}, bve::PhysicsConstants::unit(), s.point);
    const auto j2 = bve::analytic_jet({1, 2}, bve::PhysicsConstants::unit(), s.point);
    EXPECT_NEAR(-2 * j1.value - 6 * j2.value, s.target, 1e-12);
  }
}

TEST(Adam, FirstStepsByHand) {
  AdamState s(2);
  std::vector<double> x{1.0, -2.0};
  adam_step(s, x, std::vector<double>{0.5, -3.0}, 0.01);
  // bias-corrected first step is lr * g / (|g| + eps)
  const double x1 = 1.0 - 0.01 * 0.5 / (0.5 + 1e-8);
  EXPECT_NEAR(x[0], x1, 1e-15);
  EXPECT_NEAR(x[1], -2.0 + 0.01 * 3.0 / (3.0 + 1e-8), 1e-15);
  // second step with g = 0.1: m = 0.9*0.05 + 0.01, v = 0.999*0.00025 + 0.001*0.01
  adam_step(s, x, std::vector<double>{0.1, 0.0}, 0.01);
  const double m = 0.9 * 0.05 + 0.1 * 0.1, v = 0.999 * 0.00025 + 0.001 * 0.01;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(x[0], x1 - 0.01 * mh / (std::sqrt(vh) + 1e-8), 1e-14);
  EXPECT_EQ(s.step, 2);
}

TEST(Adam, ZeroGradientAndErrors) {
  AdamState s(3);
  std::vector<double> x{1, 2, 3};
  adam_step(s, x, std::vector<double>(3, 0.0), 0.1);
  EXPECT_EQ(x, (std::vector<double>{1, 2, 3}));
  EXPECT_THROW(adam_step(s, x, std::vector<double>{0, std::nan(""), 0}, 0.1), NumericalError);
  EXPECT_THROW(adam_step(s, x, std::vector<double>(2, 0.0), 0.1), ContractError);
}

TEST(Adam, MinimisesAQuadratic) {
  AdamState s(2);
  std::vector<double> x{0.0, 5.0};
  for (int k = 0; k < 3000; ++k) {
    adam_step(s, x, std::vector<double>{2 * (x[0] - 3), 2 * (x[1] + 1)}, 0.05);
  }
  EXPECT_NEAR(x[0], 3.0, 1e-3);
  EXPECT_NEAR(x[1], -1.0, 1e-3);
}

TEST(Train, ZeroIterationsReturnsInitialParameters) {
  TrainConfig cfg;
  cfg.model = {2, 1};
  cfg.iterations = 0;
  cfg.rng_seed = 17;
  const auto r = exact_reference(14, 25, 31);
  int checkpoints = 0;
  TrainHooks hooks;
  hooks.on_checkpoint = [&](const TrainState&) { ++checkpoints; };
  const auto s = train::train(cfg, r, hooks);
  auto mc = cfg.model;
  mc.rng_seed = 17;
  EXPECT_EQ(s.params, qnn::init_params(mc));
  EXPECT_EQ(s.iteration, 0);
  EXPECT_EQ(checkpoints, 1);
}

TEST(TrainProperty, TrainingIsReproducible) {
  for (const Mode mode : {Mode::qcl, Mode::dqc}) {
    TrainConfig cfg;
    cfg.mode = mode;
    cfg.model = {2, 1};
    cfg.iterations = 4;
    cfg.qcl_batch = 30;
    cfg.batch_sizes = {10, 10, 5, 10};
    cfg.checkpoint_interval = 2;
    const auto r = exact_reference(14, 25, 31);
    std::vector<std::string> h1, h2;
    int ck = 0;
    TrainHooks a, b;
    a.on_history = [&](const HistoryRow& row) { h1.push_back(format_history(row, mode)); };
    a.on_checkpoint = [&](const TrainState&) { ++ck; };
    b.on_history = [&](const HistoryRow& row) { h2.push_back(format_history(row, mode)); };
    const auto s1 = train::train(cfg, r, a);
    const auto s2 = train::train(cfg, r, b);
    EXPECT_EQ(h1, h2);
    EXPECT_EQ(h1.size(), 4u);
    EXPECT_EQ(s1.params, s2.params);
    EXPECT_EQ(ck, 2);  // iteration 2 and the end
    cfg.rng_seed = 1;
    EXPECT_NE(train::train(cfg, r).params, s1.params);
  }
}

TEST(TrainProperty, QclTrainingReducesLoss) {
  TrainConfig cfg;
  cfg.mode = Mode::qcl;
  cfg.model = {3, 2};
  cfg.iterations = 150;
  cfg.qcl_batch = 40;
  cfg.learning_rate = 0.05;
  const auto r = exact_reference(6, 8, 4);
  const auto all = build_qcl_data(r);
  auto mc = cfg.model;
  mc.rng_seed = cfg.rng_seed;
  const Engine e(cfg.model);
  const double before = full_mse(e, qnn::init_params(mc), all);
  const auto s = train::train(cfg, r);
  EXPECT_LT(full_mse(e, s.params, all), 0.5 * before);
}

TEST(Checkpoint, RoundTrip) {
  checkpoint::Checkpoint c;
  c.model = {3, 2};
  c.model.closed_ring = true;
  c.params = jittered(c.model, 9);
  c.adam = AdamState(c.model.trainable_count());
  c.adam.m[3] = 0.25;
  c.adam.step = 12;
  c.weights = {0.1, 0.2, 0.3, 0.4};
  c.consts = {7.292e-5, 6.371e6};
  c.seed = 99;
  c.iteration = 12;
  const auto dir = std::filesystem::temp_directory_path() / "qsciml_test_train";
  std::filesystem::create_directories(dir);
  const auto path = dir / "ck.json";
  checkpoint::save(c, path);
  const auto d = checkpoint::load(path);
  EXPECT_EQ(d.params, c.params);
  EXPECT_EQ(d.model.closed_ring, true);
  EXPECT_EQ(d.adam.m, c.adam.m);
  EXPECT_EQ(d.adam.step, 12);
  EXPECT_EQ(d.weights.alpha3, 0.3);
  EXPECT_EQ(d.consts.radius, 6.371e6);
  EXPECT_EQ(d.seed, 99u);
  EXPECT_EQ(checkpoint::to_json(d), checkpoint::to_json(c));

  std::ofstream(dir / "bad.json") << "{\"format\": \"qsciml-checkpoint\", \"version\": 1";
  EXPECT_THROW(checkpoint::load(dir / "bad.json"), ConfigError);
  auto j = checkpoint::to_json(c);
  j["params"].erase(0);
  EXPECT_THROW(checkpoint::from_json(j), ConfigError);
  j = checkpoint::to_json(c);
  j["format"] = "other";
  EXPECT_THROW(checkpoint::from_json(j), ConfigError);
  EXPECT_THROW(checkpoint::load(dir / "absent.json"), FileError);
}

TEST(TrainProperty, PredictedVorticityMatchesFiniteDifferenceLaplacian) {
  const qnn::ModelConfig cfg{3, 2};
  const auto p = jittered(cfg, 11);
  const bve::PhysicsConstants c{1.0, 1.7};
  data::Field like;
  like.times = {0.0, 0.5};
  like.lats = {-50.0, -10.0, 20.0, 70.0};
  like.lons = {0.0, 100.0, 250.0};
  like.values.assign(24, 0.0);
  const auto z = predict_zeta(cfg, p, like, c);
  const auto psi = predict_psi(cfg, p, like);
  EXPECT_EQ(z.quantity, data::Quantity::zeta);
  const double h = 1e-3;
  for (std::size_t t = 0; t < 2; ++t) {
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 3; ++j) {
        const double phi = like.lat_rad(i), lam = like.lon_rad(j), tt = like.times[t];
        auto f = [&](double a, double b) { return qnn::forward(cfg, p, {a, b, tt}); };
        const double f0 = f(phi, lam);
        EXPECT_NEAR(psi.at(t, i, j), f0, 1e-13);
        const double fpp = (f(phi + h, lam) - 2 * f0 + f(phi - h, lam)) / (h * h);
        const double fp = (f(phi + h, lam) - f(phi - h, lam)) / (2 * h);
        const double fll = (f(phi, lam + h) - 2 * f0 + f(phi, lam - h)) / (h * h);
        const double cp = std::cos(phi);
        const double want =
            (fpp - std::tan(phi) * fp + fll / (cp * cp)) / (c.radius * c.radius);
        EXPECT_NEAR(z.at(t, i, j), want, 1e-5 * (1 + std::abs(want)));
      }
    }
  }
}
