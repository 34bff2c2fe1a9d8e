#pragma once

// Truncated multivariate Taylor arithmetic in the three raw coordinates
// (phi, lambda, t).
//
// A Jet<D> stores the Taylor coefficients c_a of f around a point for every
// multi-index a with |a| <= D, so that the partial derivative d^a f equals
// a! * c_a. Products are truncated at total degree D, which makes the set of
// jets a commutative ring; composing analytic functions with jets is exact
// up to that degree.
//
// Monomials are stored in graded order, so the first monomial_count(D')
// entries of a degree-D jet form the degree-D' jet of the same function.

#include <array>
#include <cmath>
#include <compare>
#include <cstdint>
#include <string>

namespace qsciml::diff {

// Derivative orders in (phi, lambda, t).
struct MultiIndex {
  int phi = 0;
  int lam = 0;
  int t = 0;

  constexpr int order() const { return phi + lam + t; }
  friend constexpr auto operator<=>(const MultiIndex&,
                                    const MultiIndex&) = default;
};

inline std::string to_string(const MultiIndex& m) {
  return "(" + std::to_string(m.phi) + "," + std::to_string(m.lam) + "," +
         std::to_string(m.t) + ")";
}

inline constexpr int kMaxOrder = 3;

constexpr int monomial_count(int degree) {
  return (degree + 1) * (degree + 2) * (degree + 3) / 6;
}

namespace detail {

template <int D>
constexpr auto make_monomials() {
  std::array<MultiIndex, monomial_count(D)> out{};
  int k = 0;
  for (int d = 0; d <= D; ++d) {
    for (int p = d; p >= 0; --p) {
      for (int l = d - p; l >= 0; --l) out[k++] = MultiIndex{p, l, d - p - l};
    }
  }
  return out;
}

constexpr double factorial(int n) {
  double f = 1.0;
  for (int i = 2; i <= n; ++i) f *= i;
  return f;
}

}  // namespace detail

struct ProductTerm {
  std::uint8_t out;
  std::uint8_t a;
  std::uint8_t b;
};

template <int D>
struct Monomials {
  static_assert(D >= 0 && D <= kMaxOrder);
  static constexpr int size = monomial_count(D);
  static constexpr std::array<MultiIndex, size> index =
      detail::make_monomials<D>();

  static constexpr int find(const MultiIndex& m) {
    for (int k = 0; k < size; ++k) {
      if (index[k] == m) return k;
    }
    return -1;
  }

  // a! for every monomial
  static constexpr std::array<double, size> factorials = [] {
    std::array<double, size> f{};
    for (int k = 0; k < size; ++k) {
      f[k] = detail::factorial(index[k].phi) * detail::factorial(index[k].lam) *
             detail::factorial(index[k].t);
    }
    return f;
  }();

  static constexpr int product_count = [] {
    int n = 0;
    for (int a = 0; a < size; ++a) {
      for (int b = 0; b < size; ++b) {
        if (index[a].order() + index[b].order() <= D) ++n;
      }
    }
    return n;
  }();

  // Every ordered pair (a, b) whose product monomial survives truncation.
  static constexpr std::array<ProductTerm, product_count> products = [] {
    std::array<ProductTerm, product_count> p{};
    int n = 0;
    for (int a = 0; a < size; ++a) {
      for (int b = 0; b < size; ++b) {
        if (index[a].order() + index[b].order() > D) continue;
        const MultiIndex s{index[a].phi + index[b].phi,
                           index[a].lam + index[b].lam,
                           index[a].t + index[b].t};
        p[n++] = ProductTerm{static_cast<std::uint8_t>(find(s)),
                             static_cast<std::uint8_t>(a),
                             static_cast<std::uint8_t>(b)};
      }
    }
    return p;
  }();
};

// Real-valued jet of total degree D.
template <int D>
struct Jet {
  using Table = Monomials<D>;
  static constexpr int size = Table::size;

  std::array<double, size> c{};

  constexpr Jet() = default;
  constexpr Jet(double value) { c[0] = value; }  // NOLINT: implicit constant

  // The coordinate `var` (0 = phi, 1 = lambda, 2 = t) evaluated at `value`.
  static constexpr Jet variable(double value, int var) {
    Jet j(value);
    if constexpr (D >= 1) j.c[1 + var] = 1.0;
    return j;
  }

  constexpr double value() const { return c[0]; }

  // d^m f, zero for multi-indices above the degree.
  constexpr double partial(const MultiIndex& m) const {
    const int k = Table::find(m);
    return k < 0 ? 0.0 : c[k] * Table::factorials[k];
  }

  Jet& operator+=(const Jet& o) {
    for (int k = 0; k < size; ++k) c[k] += o.c[k];
    return *this;
  }
  Jet& operator-=(const Jet& o) {
    for (int k = 0; k < size; ++k) c[k] -= o.c[k];
    return *this;
  }
  Jet& operator*=(double s) {
    for (auto& v : c) v *= s;
    return *this;
  }

  friend Jet operator+(Jet a, const Jet& b) { return a += b; }
  friend Jet operator-(Jet a, const Jet& b) { return a -= b; }
  friend Jet operator-(Jet a) {
    for (auto& v : a.c) v = -v;
    return a;
  }
  friend Jet operator*(Jet a, double s) { return a *= s; }
  friend Jet operator*(double s, Jet a) { return a *= s; }

  friend Jet operator*(const Jet& a, const Jet& b) {
    Jet r;
    r.c[0] = 0.0;
    for (const auto& p : Table::products) r.c[p.out] += a.c[p.a] * b.c[p.b];
    return r;
  }
};

// sin and cos of a jet by Taylor expansion around its constant term.
template <int D>
void sincos(const Jet<D>& x, Jet<D>& s, Jet<D>& c) {
  const double s0 = std::sin(x.c[0]);
  const double c0 = std::cos(x.c[0]);
  Jet<D> h = x;
  h.c[0] = 0.0;
  // derivatives of sin: s0, c0, -s0, -c0, ...; of cos: c0, -s0, -c0, s0, ...
  const std::array<double, 4> ds{s0, c0, -s0, -c0};
  const std::array<double, 4> dc{c0, -s0, -c0, s0};
  s = Jet<D>(s0);
  c = Jet<D>(c0);
  Jet<D> hk(1.0);
  double inv_fact = 1.0;
  for (int k = 1; k <= D; ++k) {
    hk = hk * h;
    inv_fact /= k;
    for (int i = 0; i < Jet<D>::size; ++i) {
      s.c[i] += ds[k % 4] * inv_fact * hk.c[i];
      c.c[i] += dc[k % 4] * inv_fact * hk.c[i];
    }
  }
}

template <int D>
Jet<D> sin(const Jet<D>& x) {
  Jet<D> s, c;
  sincos(x, s, c);
  return s;
}

template <int D>
Jet<D> cos(const Jet<D>& x) {
  Jet<D> s, c;
  sincos(x, s, c);
  return c;
}

}  // namespace qsciml::diff
