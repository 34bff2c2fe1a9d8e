#pragma once

// Barotropic vorticity equation in stream-function form, the vorticity
// relation zeta = laplacian(psi), and the single-mode Rossby-Haurwitz
// solution.

#include <cmath>
#include <string>
#include <vector>

#include "qsciml/errors.hpp"
#include "qsciml/diff.hpp"
#include "qsciml/jet.hpp"

namespace qsciml::bve {

using diff::DerivativeJet;
using diff::MultiIndex;
using qnn::CollocationPoint;

struct PhysicsConstants {
  double omega = 1.0;   // rad per time unit
  double radius = 1.0;  // length unit

  static PhysicsConstants earth() { return {7.292e-5, 6.371e6}; }
  static PhysicsConstants unit() { return {1.0, 1.0}; }

  void validate() const {
    if (!(omega > 0.0) || !(radius > 0.0) || !std::isfinite(omega) ||
        !std::isfinite(radius)) {
      throw ConfigError("omega and radius must be finite and positive");
    }
  }
};

struct ModeSpec {
  int m = 1;
  int l = 1;

  void validate() const {
    if (m < 0 || l < m) {
      throw ConfigError("invalid mode (m=" + std::to_string(m) +
                        ", l=" + std::to_string(l) + "), need l >= m >= 0");
    }
  }
};

inline constexpr double kMinCosPhi = 1e-6;

inline void check_pole(double phi) {
  if (!(std::abs(std::cos(phi)) >= kMinCosPhi)) {
    throw NumericalError("cos(phi) below 1e-6, pole singularity",
                         "phi=" + std::to_string(phi));
  }
}

// Residual of the streamline-form BVE. d(a, b, c) returns the partial of
// psi of orders (a, b, c) in (phi, lambda, t); T may be double or a dual
// number so that the same expression is differentiated in training.
//
// With strict_r_scaling the result is divided by r^2, giving the residual of
// d zeta/dt + (2 Omega / r^2) d psi/d lambda + J(psi, zeta). The default
// evaluates the printed form, which is r^2 times that.
template <class T, class Get>
T residual_of(Get&& d, double phi, const PhysicsConstants& c,
              bool strict_r_scaling = false) {
  check_pole(phi);
  const double cp = std::cos(phi);
  const double tp = std::tan(phi);
  const double sec2 = 1.0 / (cp * cp);
  const double pre = 1.0 / (c.radius * c.radius * cp);

  const T& p_l = d(0, 1, 0);
  const T& p_p = d(1, 0, 0);

  T f = -tp * d(1, 0, 1) + d(2, 0, 1) + sec2 * d(0, 2, 1) +
        2.0 * c.omega * p_l;
  f += pre * p_l *
       (-sec2 * p_p - tp * d(2, 0, 0) + d(3, 0, 0) +
        2.0 * tp * sec2 * d(0, 2, 0) + sec2 * d(1, 2, 0));
  f -= pre * p_p *
       (-tp * d(1, 1, 0) + d(2, 1, 0) + sec2 * d(0, 3, 0));
  if (strict_r_scaling) f = f * (1.0 / (c.radius * c.radius));
  return f;
}

// zeta = (-tan(phi) psi_phi + psi_phiphi + psi_lamlam / cos^2(phi)) / r^2
template <class T, class Get>
T vorticity_of(Get&& d, double phi, const PhysicsConstants& c) {
  check_pole(phi);
  const double cp = std::cos(phi);
  const double inv_r2 = 1.0 / (c.radius * c.radius);
  return inv_r2 * (-std::tan(phi) * d(1, 0, 0) + d(2, 0, 0) +
                   (1.0 / (cp * cp)) * d(0, 2, 0));
}

namespace detail {
struct JetGetter {
  const DerivativeJet& jet;
  double operator()(int a, int b, int c) const {
    return jet.at(MultiIndex{a, b, c});
  }
};
}  // namespace detail

inline double residual(const DerivativeJet& jet, const PhysicsConstants& c,
                       bool strict_r_scaling = false) {
  return residual_of<double>(detail::JetGetter{jet}, jet.point.phi, c,
                             strict_r_scaling);
}

inline double vorticity_from_jet(const DerivativeJet& jet,
                                 const PhysicsConstants& c) {
  return vorticity_of<double>(detail::JetGetter{jet}, jet.point.phi, c);
}

// Unnormalised Ferrers function P_l^m(sin phi) with the Condon-Shortley
// phase, by upward recurrence in l. cos(phi) >= 0 is assumed, which holds
// for latitudes. Generic so Taylor jets can pass through.
template <class T>
T legendre_sin(int l, int m, const T& sin_phi, const T& cos_phi) {
  if (m < 0 || l < m) {
    throw ConfigError("invalid Legendre indices l=" + std::to_string(l) +
                      ", m=" + std::to_string(m));
  }
  T pmm(1.0);
  for (int k = 1; k <= m; ++k) pmm = pmm * cos_phi * (-(2.0 * k - 1.0));
  if (l == m) return pmm;
  T pm1 = sin_phi * pmm * (2.0 * m + 1.0);
  if (l == m + 1) return pm1;
  for (int n = m + 2; n <= l; ++n) {
    T p = (sin_phi * pm1 * (2.0 * n - 1.0) - pmm * (n + m - 1.0)) *
          (1.0 / (n - m));
    pmm = pm1;
    pm1 = p;
  }
  return pm1;
}

inline double legendre(int l, int m, double x) {
  return legendre_sin(l, m, x, std::sqrt(std::max(0.0, 1.0 - x * x)));
}

inline double dispersion(const ModeSpec& mode, const PhysicsConstants& c) {
  mode.validate();
  if (mode.l == 0) throw ContractError("dispersion needs l >= 1");
  return -2.0 * c.omega * mode.m / (mode.l * (mode.l + 1.0));
}

// psi = P_l^m(sin phi) cos(m lambda - sigma t)
template <class T>
T analytic_psi_of(const ModeSpec& mode, double sigma, const T& phi,
                  const T& lambda, const T& t) {
  using std::cos;
  using std::sin;
  return legendre_sin(mode.l, mode.m, sin(phi), cos(phi)) *
         cos(lambda * static_cast<double>(mode.m) - t * sigma);
}

inline double analytic_psi(const ModeSpec& mode, const PhysicsConstants& c,
                           const CollocationPoint& p) {
  const double sigma = mode.l == 0 ? 0.0 : dispersion(mode, c);
  return analytic_psi_of(mode, sigma, p.phi, p.lambda, p.t);
}

// Every partial of the analytic solution up to order 3, exact to rounding.
inline DerivativeJet analytic_jet(const ModeSpec& mode,
                                  const PhysicsConstants& c,
                                  const CollocationPoint& p) {
  using J = diff::Jet<3>;
  const double sigma = mode.l == 0 ? 0.0 : dispersion(mode, c);
  const J psi = analytic_psi_of(mode, sigma, J::variable(p.phi, 0),
                                J::variable(p.lambda, 1), J::variable(p.t, 2));
  DerivativeJet out;
  out.point = p;
  out.value = psi.value();
  for (int k = 1; k < J::size; ++k) {
    out.partials[J::Table::index[k]] = psi.partial(J::Table::index[k]);
  }
  return out;
}

}  // namespace qsciml::bve
