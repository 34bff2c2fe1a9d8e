#pragma once

// Spherical-harmonic transform solver for the barotropic vorticity equation.
//
// Vorticity is held as complex coefficients zeta_n^m, 0 <= m <= n <= L, of
// 4pi-normalised harmonics Pbar_n^m(sin phi) e^{i m lambda}, where
// int_{-1}^{1} Pbar^2 d mu = 2. A real field is
//
//   f = sum_n [ c_n^0 Pbar_n^0 + 2 sum_{m>=1} Re(c_n^m e^{i m lambda}) Pbar_n^m ]
//
// Tendencies are evaluated by the transform method: derivatives are taken
// spectrally, the Jacobian is formed on a Gaussian grid and analysed back.
// Time stepping is leapfrog with a forward-Euler start and a Robert-Asselin
// filter.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "qsciml/bve.hpp"
#include "qsciml/data.hpp"
#include "qsciml/errors.hpp"

namespace qsciml::sem {

using complex_t = std::complex<double>;
using bve::PhysicsConstants;

inline int coeff_count(int L) { return (L + 1) * (L + 2) / 2; }

// Position of (n, m) in the m-major packed layout.
inline int coeff_index(int L, int n, int m) {
  return m * (L + 1) - m * (m - 1) / 2 + (n - m);
}

// Gauss-Legendre nodes (descending, so north first) and weights on [-1, 1].
inline void gauss_legendre(int n, std::vector<double>& nodes,
                           std::vector<double>& weights) {
  nodes.assign(n, 0.0);
  weights.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 1.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0, p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
      }
      dp = n * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    nodes[i] = x;
    weights[i] = 2.0 / ((1.0 - x * x) * dp * dp);
  }
}

struct Grid {
  std::vector<double> latitudes;   // radians, north to south
  std::vector<double> weights;     // Gauss weights, empty if not a quadrature grid
  std::vector<double> longitudes;  // radians

  std::size_t n_lat() const { return latitudes.size(); }
  std::size_t n_lon() const { return longitudes.size(); }
  bool is_quadrature() const { return !weights.empty(); }
};

inline Grid gaussian_grid(int n_lat, int n_lon) {
  if (n_lat < 2 || n_lon < 2) throw ConfigError("Gaussian grid too small");
  Grid g;
  std::vector<double> mu;
  gauss_legendre(n_lat, mu, g.weights);
  for (double x : mu) g.latitudes.push_back(std::asin(x));
  for (int k = 0; k < n_lon; ++k) {
    g.longitudes.push_back(2.0 * std::numbers::pi * k / n_lon);
  }
  return g;
}

struct SpectralState {
  int truncation = 0;
  std::vector<complex_t> coeffs;
  PhysicsConstants consts{};
  double time = 0.0;

  SpectralState() = default;
  explicit SpectralState(int L, PhysicsConstants c = {})
      : truncation(L), coeffs(coeff_count(L)), consts(c) {}

  complex_t& at(int n, int m) { return coeffs[coeff_index(truncation, n, m)]; }
  complex_t at(int n, int m) const {
    return coeffs[coeff_index(truncation, n, m)];
  }
};

// Mean-square vorticity over the sphere, sum |c|^2 with m > 0 counted twice.
inline double enstrophy(int L, std::span<const complex_t> c) {
  double e = 0.0;
  for (int m = 0; m <= L; ++m) {
    for (int n = m; n <= L; ++n) {
      e += (m == 0 ? 1.0 : 2.0) * std::norm(c[coeff_index(L, n, m)]);
    }
  }
  return e;
}

// Drops every coefficient above degree L_new.
inline std::vector<complex_t> truncate(int L, std::span<const complex_t> c,
                                       int L_new) {
  std::vector<complex_t> out(coeff_count(L_new));
  for (int m = 0; m <= std::min(L, L_new); ++m) {
    for (int n = m; n <= std::min(L, L_new); ++n) {
      out[coeff_index(L_new, n, m)] = c[coeff_index(L, n, m)];
    }
  }
  return out;
}

// psi_n^m = -r^2 zeta_n^m / (n (n + 1)), psi_0^0 = 0
inline std::vector<complex_t> invert_laplacian(int L,
                                               std::span<const complex_t> zeta,
                                               double radius = 1.0) {
  std::vector<complex_t> psi(zeta.size());
  for (int m = 0; m <= L; ++m) {
    for (int n = std::max(m, 1); n <= L; ++n) {
      const int k = coeff_index(L, n, m);
      psi[k] = -radius * radius * zeta[k] / (n * (n + 1.0));
    }
  }
  return psi;
}

inline std::vector<complex_t> apply_laplacian(int L,
                                              std::span<const complex_t> psi,
                                              double radius = 1.0) {
  std::vector<complex_t> zeta(psi.size());
  for (int m = 0; m <= L; ++m) {
    for (int n = m; n <= L; ++n) {
      const int k = coeff_index(L, n, m);
      zeta[k] = -n * (n + 1.0) * psi[k] / (radius * radius);
    }
  }
  return zeta;
}

// 4pi-normalised Pbar_n^m(sin phi) for all 0 <= m <= n <= L, packed.
inline std::vector<double> normalized_legendre(int L, double phi) {
  std::vector<double> p(coeff_count(L), 0.0);
  const double mu = std::sin(phi), cp = std::cos(phi);
  double pmm = 1.0;
  for (int m = 0; m <= L; ++m) {
    if (m > 0) pmm *= std::sqrt((2.0 * m + 1.0) / (2.0 * m)) * cp;
    p[coeff_index(L, m, m)] = pmm;
    if (m == L) break;
    double p1 = pmm;
    double p2 = std::sqrt(2.0 * m + 3.0) * mu * pmm;
    p[coeff_index(L, m + 1, m)] = p2;
    for (int n = m + 2; n <= L; ++n) {
      const double nn = n, mm = m;
      const double a = std::sqrt((4.0 * nn * nn - 1.0) / (nn * nn - mm * mm));
      const double b =
          std::sqrt((2.0 * nn + 1.0) * ((nn - 1.0) * (nn - 1.0) - mm * mm) /
                    ((2.0 * nn - 3.0) * (nn * nn - mm * mm)));
      const double pn = a * mu * p2 - b * p1;
      p[coeff_index(L, n, m)] = pn;
      p1 = p2;
      p2 = pn;
    }
  }
  return p;
}

// Analysis and synthesis between packed coefficients and a lat-lon grid.
// Synthesis works on any grid; analysis needs a Gaussian grid with
// equally spaced longitudes.
class Transform {
 public:
  Transform(int L, Grid grid) : L_(L), grid_(std::move(grid)) {
    if (L < 0) throw ConfigError("truncation must be >= 0");
    if (grid_.is_quadrature() &&
        grid_.n_lon() < static_cast<std::size_t>(2 * L + 1)) {
      throw ConfigError("n_lon = " + std::to_string(grid_.n_lon()) +
                        " is below 2L+1 = " + std::to_string(2 * L + 1));
    }
    const int cnt = coeff_count(L_);
    const int cnt1 = coeff_count(L_ + 1);
    p_.resize(grid_.n_lat() * cnt);
    dp_.resize(grid_.n_lat() * cnt);
    for (std::size_t j = 0; j < grid_.n_lat(); ++j) {
      const double phi = grid_.latitudes[j];
      const auto p = normalized_legendre(L_ + 1, phi);
      const double cp = std::cos(phi);
      for (int m = 0; m <= L_; ++m) {
        for (int n = m; n <= L_; ++n) {
          const double pn = p[coeff_index(L_ + 1, n, m)];
          const double up = p[coeff_index(L_ + 1, n + 1, m)];
          const double down = n > m ? p[coeff_index(L_ + 1, n - 1, m)] : 0.0;
          // cos(phi) dP/dphi = -n eps_{n+1} P_{n+1} + (n+1) eps_n P_{n-1}
          const double dpc = -n * eps(n + 1, m) * up + (n + 1.0) * eps(n, m) * down;
          p_[j * cnt + coeff_index(L_, n, m)] = pn;
          dp_[j * cnt + coeff_index(L_, n, m)] = dpc / cp;
        }
      }
      (void)cnt1;
    }
    cos_.resize(grid_.n_lon() * (L_ + 1));
    sin_.resize(grid_.n_lon() * (L_ + 1));
    for (std::size_t k = 0; k < grid_.n_lon(); ++k) {
      for (int m = 0; m <= L_; ++m) {
        cos_[k * (L_ + 1) + m] = std::cos(m * grid_.longitudes[k]);
        sin_[k * (L_ + 1) + m] = std::sin(m * grid_.longitudes[k]);
      }
    }
  }

  int truncation() const { return L_; }
  const Grid& grid() const { return grid_; }

  std::vector<complex_t> analyze(std::span<const double> field) const {
    if (!grid_.is_quadrature()) {
      throw StructuralError("analysis needs a Gaussian quadrature grid");
    }
    check_size(field.size());
    const std::size_t nl = grid_.n_lon();
    const int cnt = coeff_count(L_);
    std::vector<complex_t> c(cnt);
    std::vector<complex_t> fm(L_ + 1);
    for (std::size_t j = 0; j < grid_.n_lat(); ++j) {
      std::fill(fm.begin(), fm.end(), complex_t{});
      const double* row = field.data() + j * nl;
      for (std::size_t k = 0; k < nl; ++k) {
        const double* ck = cos_.data() + k * (L_ + 1);
        const double* sk = sin_.data() + k * (L_ + 1);
        for (int m = 0; m <= L_; ++m) fm[m] += complex_t(row[k] * ck[m], -row[k] * sk[m]);
      }
      const double w = 0.5 * grid_.weights[j] / nl;
      const double* pj = p_.data() + j * cnt;
      for (int m = 0; m <= L_; ++m) {
        const complex_t f = fm[m] * w;
        for (int n = m; n <= L_; ++n) {
          const int idx = coeff_index(L_, n, m);
          c[idx] += f * pj[idx];
        }
      }
    }
    return c;
  }

  std::vector<double> synthesize(std::span<const complex_t> c) const {
    return synth(c, p_, false);
  }
  std::vector<double> synthesize_dlambda(std::span<const complex_t> c) const {
    return synth(c, p_, true);
  }
  std::vector<double> synthesize_dphi(std::span<const complex_t> c) const {
    return synth(c, dp_, false);
  }

 private:
  static double eps(int n, int m) {
    if (n <= m) return 0.0;
    return std::sqrt((double(n) * n - double(m) * m) / (4.0 * n * n - 1.0));
  }

  void check_size(std::size_t n) const {
    if (n != grid_.n_lat() * grid_.n_lon()) {
      throw StructuralError("field has " + std::to_string(n) +
                            " values, grid has " +
                            std::to_string(grid_.n_lat() * grid_.n_lon()));
    }
  }

  std::vector<double> synth(std::span<const complex_t> c,
                            const std::vector<double>& table,
                            bool dlambda) const {
    if (c.size() != static_cast<std::size_t>(coeff_count(L_))) {
      throw StructuralError("coefficient count does not match truncation");
    }
    const std::size_t nl = grid_.n_lon();
    const int cnt = coeff_count(L_);
    std::vector<double> out(grid_.n_lat() * nl, 0.0);
    std::vector<complex_t> fm(L_ + 1);
    for (std::size_t j = 0; j < grid_.n_lat(); ++j) {
      const double* pj = table.data() + j * cnt;
      for (int m = 0; m <= L_; ++m) {
        complex_t s{};
        for (int n = m; n <= L_; ++n) {
          const int idx = coeff_index(L_, n, m);
          s += c[idx] * pj[idx];
        }
        if (dlambda) s *= complex_t(0.0, m);
        fm[m] = (m == 0 ? 1.0 : 2.0) * s;
      }
      double* row = out.data() + j * nl;
      for (std::size_t k = 0; k < nl; ++k) {
        const double* ck = cos_.data() + k * (L_ + 1);
        const double* sk = sin_.data() + k * (L_ + 1);
        double v = fm[0].real();
        for (int m = 1; m <= L_; ++m) {
          v += fm[m].real() * ck[m] - fm[m].imag() * sk[m];
        }
        row[k] = v;
      }
    }
    return out;
  }

  int L_;
  Grid grid_;
  std::vector<double> p_;   // [lat][coeff]
  std::vector<double> dp_;  // d/dphi
  std::vector<double> cos_, sin_;
};

// d zeta / dt = -(2 Omega / r^2) d psi / d lambda - J(psi, zeta), with
// J = (psi_lambda zeta_phi - psi_phi zeta_lambda) / (r^2 cos phi).
inline std::vector<complex_t> tendency(const Transform& tr,
                                       std::span<const complex_t> zeta,
                                       const PhysicsConstants& c) {
  const int L = tr.truncation();
  const auto psi = invert_laplacian(L, zeta, c.radius);
  const auto psi_l = tr.synthesize_dlambda(psi);
  const auto psi_p = tr.synthesize_dphi(psi);
  const auto z_l = tr.synthesize_dlambda(zeta);
  const auto z_p = tr.synthesize_dphi(zeta);
  const auto& g = tr.grid();
  const double inv_r2 = 1.0 / (c.radius * c.radius);
  std::vector<double> jac(psi_l.size());
  for (std::size_t j = 0; j < g.n_lat(); ++j) {
    const double f = inv_r2 / std::cos(g.latitudes[j]);
    for (std::size_t k = 0; k < g.n_lon(); ++k) {
      const std::size_t i = j * g.n_lon() + k;
      jac[i] = f * (psi_l[i] * z_p[i] - psi_p[i] * z_l[i]);
    }
  }
  auto out = tr.analyze(jac);
  const double beta = 2.0 * c.omega * inv_r2;
  for (int m = 0; m <= L; ++m) {
    for (int n = m; n <= L; ++n) {
      const int k = coeff_index(L, n, m);
      out[k] = -beta * complex_t(0.0, m) * psi[k] - out[k];
    }
  }
  return out;
}

struct SemConfig {
  int truncation = 42;
  double dt = 1e-3;
  double robert_coeff = 0.02;
  double total_time = 3.0;
  double snapshot_interval = 0.3;
  PhysicsConstants consts{};
  int n_lat = 0;  // 0: (3L+1)/2 rounded up
  int n_lon = 0;  // 0: 3L+1
  // Enstrophy growth beyond this factor over its initial value counts as
  // blow-up; the exact dynamics conserve it.
  double blowup_factor = 1e8;

  int grid_lat() const { return n_lat > 0 ? n_lat : (3 * truncation + 2) / 2; }
  int grid_lon() const { return n_lon > 0 ? n_lon : 3 * truncation + 1; }

  void validate() const {
    consts.validate();
    if (truncation < 1) throw ConfigError("truncation must be >= 1");
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be > 0");
    if (!(robert_coeff >= 0.0 && robert_coeff < 1.0)) {
      throw ConfigError("robert coefficient must lie in [0, 1)");
    }
    if (!(total_time >= 0.0)) throw ConfigError("total time must be >= 0");
    if (total_time > 0.0 && !(snapshot_interval > 0.0)) {
      throw ConfigError("snapshot interval must be > 0");
    }
    if (grid_lon() < 2 * truncation + 1) {
      throw ConfigError("n_lon must be >= 2L+1");
    }
    if (grid_lat() < truncation + 1) {
      throw ConfigError("n_lat must be >= L+1");
    }
  }

  std::size_t steps_per_snapshot() const { return whole_steps(snapshot_interval, "snapshot interval"); }
  std::size_t total_steps() const { return whole_steps(total_time, "total time"); }

 private:
  std::size_t whole_steps(double span, const char* what) const {
    const double r = span / dt;
    const double k = std::round(r);
    if (std::abs(r - k) > 1e-6 * std::max(1.0, r)) {
      throw ConfigError(std::string(what) + " is not a whole number of steps");
    }
    return static_cast<std::size_t>(k);
  }
};

// Leapfrog integrator with Robert-Asselin filtering.
class Solver {
 public:
  Solver(const SemConfig& cfg, SpectralState initial)
      : cfg_(cfg),
        tr_(cfg.truncation, gaussian_grid(cfg.grid_lat(), cfg.grid_lon())),
        curr_(std::move(initial)) {
    cfg_.validate();
    if (curr_.truncation != cfg.truncation) {
      curr_.coeffs = truncate(curr_.truncation, curr_.coeffs, cfg.truncation);
      curr_.truncation = cfg.truncation;
    }
    curr_.consts = cfg.consts;
    initial_enstrophy_ = enstrophy(cfg.truncation, curr_.coeffs);
  }

  const SemConfig& config() const { return cfg_; }
  const Transform& transform() const { return tr_; }
  const SpectralState& state() const { return curr_; }
  std::size_t steps_taken() const { return steps_; }

  void step() {
    const int L = cfg_.truncation;
    const auto tend = tendency(tr_, curr_.coeffs, cfg_.consts);
    std::vector<complex_t> next(curr_.coeffs.size());
    if (steps_ == 0) {
      for (std::size_t k = 0; k < next.size(); ++k) {
        next[k] = curr_.coeffs[k] + cfg_.dt * tend[k];
      }
      prev_ = curr_.coeffs;
    } else {
      for (std::size_t k = 0; k < next.size(); ++k) {
        next[k] = prev_[k] + 2.0 * cfg_.dt * tend[k];
      }
      const double a = cfg_.robert_coeff;
      for (std::size_t k = 0; k < next.size(); ++k) {
        prev_[k] = curr_.coeffs[k] +
                   a * (next[k] - 2.0 * curr_.coeffs[k] + prev_[k]);
      }
    }
    curr_.coeffs = std::move(next);
    ++steps_;
    curr_.time = steps_ * cfg_.dt;

    const double e = enstrophy(L, curr_.coeffs);
    if (!std::isfinite(e)) {
      throw InstabilityError("non-finite spectral vorticity", steps_);
    }
    if (initial_enstrophy_ > 0.0 &&
        e > cfg_.blowup_factor * initial_enstrophy_) {
      throw InstabilityError("enstrophy blow-up", steps_);
    }
  }

 private:
  SemConfig cfg_;
  Transform tr_;
  SpectralState curr_;
  std::vector<complex_t> prev_;
  std::size_t steps_ = 0;
  double initial_enstrophy_ = 0.0;
};

// Bilinear interpolation of one lat-lon slice onto a grid. Longitudes wrap
// around; latitudes outside the input range take the nearest edge row.
inline std::vector<double> interpolate(const data::Field& f, std::size_t t,
                                       const Grid& g) {
  std::vector<double> lat(f.n_lat()), lon(f.n_lon());
  for (std::size_t i = 0; i < f.n_lat(); ++i) lat[i] = f.lat_rad(i);
  for (std::size_t j = 0; j < f.n_lon(); ++j) lon[j] = f.lon_rad(j);
  const double two_pi = 2.0 * std::numbers::pi;
  std::vector<double> out(g.n_lat() * g.n_lon());
  for (std::size_t a = 0; a < g.n_lat(); ++a) {
    const double phi = g.latitudes[a];
    std::size_t i0 = 0, i1 = 0;
    double wi = 0.0;
    if (phi <= lat.front()) {
      i0 = i1 = 0;
    } else if (phi >= lat.back()) {
      i0 = i1 = lat.size() - 1;
    } else {
      i1 = std::upper_bound(lat.begin(), lat.end(), phi) - lat.begin();
      i0 = i1 - 1;
      wi = (phi - lat[i0]) / (lat[i1] - lat[i0]);
    }
    for (std::size_t b = 0; b < g.n_lon(); ++b) {
      double x = std::fmod(g.longitudes[b] - lon.front(), two_pi);
      if (x < 0) x += two_pi;
      x += lon.front();
      std::size_t j1 = std::upper_bound(lon.begin(), lon.end(), x) - lon.begin();
      std::size_t j0;
      double span;
      if (j1 == lon.size()) {
        j0 = lon.size() - 1;
        j1 = 0;
        span = lon.front() + two_pi - lon.back();
      } else {
        j0 = j1 - 1;
        span = lon[j1] - lon[j0];
      }
      const double wj = (x - lon[j0]) / span;
      auto v = [&](std::size_t i, std::size_t j) { return f.at(t, i, j); };
      const double r0 = (1 - wj) * v(i0, j0) + wj * v(i0, j1);
      const double r1 = (1 - wj) * v(i1, j0) + wj * v(i1, j1);
      out[a * g.n_lon() + b] = (1 - wi) * r0 + wi * r1;
    }
  }
  return out;
}

// Vorticity and stream function on the input grid at every snapshot.
struct Evolution {
  data::Field zeta;
  data::Field psi;
  std::vector<double> enstrophy;       // per snapshot
  std::vector<double> mean_vorticity;  // zeta_0^0 per snapshot
};

// Evolves the first time slice of a vorticity field. on_snapshot, when set,
// sees the evolution after every appended snapshot so callers can keep the
// last stable output if a later step blows up.
inline Evolution evolve(
    const data::Field& initial_zeta, const SemConfig& cfg,
    const std::function<void(const Evolution&)>& on_snapshot = {}) {
  cfg.validate();
  initial_zeta.validate();
  if (initial_zeta.n_times() == 0) throw ContractError("empty initial field");
  if (initial_zeta.quantity != data::Quantity::zeta) {
    throw ContractError("initial field must hold vorticity");
  }
  const std::size_t per_snap =
      cfg.total_time > 0.0 ? cfg.steps_per_snapshot() : 1;
  const std::size_t total = cfg.total_time > 0.0 ? cfg.total_steps() : 0;
  if (per_snap == 0) throw ConfigError("snapshot interval shorter than dt");

  const Grid gauss = gaussian_grid(cfg.grid_lat(), cfg.grid_lon());
  const Transform analysis(cfg.truncation, gauss);
  SpectralState s0(cfg.truncation, cfg.consts);
  s0.coeffs = analysis.analyze(interpolate(initial_zeta, 0, gauss));
  s0.time = initial_zeta.times.front();

  Grid out_grid;
  for (std::size_t i = 0; i < initial_zeta.n_lat(); ++i) {
    out_grid.latitudes.push_back(initial_zeta.lat_rad(i));
  }
  for (std::size_t j = 0; j < initial_zeta.n_lon(); ++j) {
    out_grid.longitudes.push_back(initial_zeta.lon_rad(j));
  }
  const Transform out_tr(cfg.truncation, out_grid);

  Evolution ev;
  for (auto* f : {&ev.zeta, &ev.psi}) {
    f->units = initial_zeta.units;
    f->angles = initial_zeta.angles;
    f->lats = initial_zeta.lats;
    f->lons = initial_zeta.lons;
  }
  ev.zeta.quantity = data::Quantity::zeta;
  ev.psi.quantity = data::Quantity::psi;

  const double t0 = s0.time;
  Solver solver(cfg, std::move(s0));
  auto record = [&] {
    const auto& st = solver.state();
    const auto z = out_tr.synthesize(st.coeffs);
    const auto p =
        out_tr.synthesize(invert_laplacian(cfg.truncation, st.coeffs,
                                           cfg.consts.radius));
    const double t = t0 + solver.steps_taken() * cfg.dt;
    ev.zeta.times.push_back(t);
    ev.psi.times.push_back(t);
    ev.zeta.values.insert(ev.zeta.values.end(), z.begin(), z.end());
    ev.psi.values.insert(ev.psi.values.end(), p.begin(), p.end());
    ev.enstrophy.push_back(enstrophy(cfg.truncation, st.coeffs));
    ev.mean_vorticity.push_back(st.coeffs[0].real());
    if (on_snapshot) on_snapshot(ev);
  };
  record();
  for (std::size_t k = 1; k <= total; ++k) {
    solver.step();
    if (k % per_snap == 0) record();
  }
  return ev;
}

}  // namespace qsciml::sem
