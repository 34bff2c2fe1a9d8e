#pragma once

// Gridded fields, the artificial two-mode initial state, block-mean
// downsampling and the plain-text field file format.
//
// File layout (values printed with 17 significant digits):
//
//   quantity psi
//   units nondimensional
//   angles degrees
//   times: 0 0.3 0.6
//   lats: -81 -63 ...
//   lons: 0 45 ...
//   t 0
//   <n_lat rows of n_lon values>
//   t 1
//   ...

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "qsciml/bve.hpp"
#include "qsciml/errors.hpp"

namespace qsciml::data {

enum class Quantity { psi, zeta };
enum class AngleUnit { degrees, radians };

inline const char* to_string(Quantity q) {
  return q == Quantity::psi ? "psi" : "zeta";
}
inline const char* to_string(AngleUnit a) {
  return a == AngleUnit::degrees ? "degrees" : "radians";
}

struct Field {
  Quantity quantity = Quantity::psi;
  std::string units = "nondimensional";
  AngleUnit angles = AngleUnit::degrees;
  std::vector<double> times;
  std::vector<double> lats;
  std::vector<double> lons;
  std::vector<double> values;  // [time][lat][lon], row-major

  std::size_t n_times() const { return times.size(); }
  std::size_t n_lat() const { return lats.size(); }
  std::size_t n_lon() const { return lons.size(); }
  std::size_t slice_size() const { return n_lat() * n_lon(); }

  double& at(std::size_t t, std::size_t i, std::size_t j) {
    return values[(t * n_lat() + i) * n_lon() + j];
  }
  double at(std::size_t t, std::size_t i, std::size_t j) const {
    return values[(t * n_lat() + i) * n_lon() + j];
  }

  double lat_rad(std::size_t i) const { return to_rad(lats[i]); }
  double lon_rad(std::size_t j) const { return to_rad(lons[j]); }
  double to_rad(double a) const {
    return angles == AngleUnit::degrees ? a * std::numbers::pi / 180.0 : a;
  }

  std::vector<double> slice(std::size_t t) const {
    return {values.begin() + t * slice_size(),
            values.begin() + (t + 1) * slice_size()};
  }

  // Index of time t, or -1 when absent (matched to 1e-9 relative).
  long find_time(double t) const {
    for (std::size_t k = 0; k < times.size(); ++k) {
      if (std::abs(times[k] - t) <= 1e-9 * std::max(1.0, std::abs(t))) {
        return static_cast<long>(k);
      }
    }
    return -1;
  }

  void validate() const {
    if (values.size() != n_times() * slice_size()) {
      throw StructuralError("field has " + std::to_string(values.size()) +
                            " values for " + std::to_string(n_times()) + "x" +
                            std::to_string(n_lat()) + "x" +
                            std::to_string(n_lon()) + " coordinates");
    }
    auto monotone = [](const std::vector<double>& v, const char* name) {
      for (std::size_t k = 1; k < v.size(); ++k) {
        if (!(v[k] > v[k - 1])) {
          throw StructuralError(std::string(name) +
                                " coordinates are not strictly increasing");
        }
      }
    };
    monotone(times, "time");
    monotone(lats, "latitude");
    monotone(lons, "longitude");
  }

  bool same_grid(const Field& o) const {
    return times == o.times && lats == o.lats && lons == o.lons &&
           angles == o.angles;
  }
};

// Equiangular cell-centred grid in degrees: latitudes ascend from
// -90 + half a cell, longitudes start at 0.
inline std::vector<double> equiangular_lats(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = -90.0 + (i + 0.5) * 180.0 / n;
  return v;
}
inline std::vector<double> equiangular_lons(std::size_t n) {
  std::vector<double> v(n);
  for (std::size_t j = 0; j < n; ++j) v[j] = j * 360.0 / n;
  return v;
}

// (m, l) = (1, 1) and (1, 2)
inline const std::vector<bve::ModeSpec>& artificial_modes() {
  static const std::vector<bve::ModeSpec> modes{{1, 1}, {1, 2}};
  return modes;
}

inline double mode_sum(const std::vector<bve::ModeSpec>& modes, double phi,
                       double lambda) {
  double s = 0.0;
  for (const auto& m : modes) {
    s += bve::legendre(m.l, m.m, std::sin(phi)) * std::cos(m.m * lambda);
  }
  return s;
}

// psi(t=0) = sum over modes of P_l^m(sin phi) cos(m lambda).
inline Field gen_artificial_initial(
    std::size_t n_lat = 100, std::size_t n_lon = 200,
    const std::vector<bve::ModeSpec>& modes = artificial_modes()) {
  if (n_lat < 4 || n_lon < 4) {
    throw ConfigError("artificial grid needs n_lat, n_lon >= 4");
  }
  for (const auto& m : modes) m.validate();
  Field f;
  f.quantity = Quantity::psi;
  f.times = {0.0};
  f.lats = equiangular_lats(n_lat);
  f.lons = equiangular_lons(n_lon);
  f.values.resize(n_lat * n_lon);
  for (std::size_t i = 0; i < n_lat; ++i) {
    for (std::size_t j = 0; j < n_lon; ++j) {
      f.at(0, i, j) = mode_sum(modes, f.lat_rad(i), f.lon_rad(j));
    }
  }
  return f;
}

// zeta from psi for a field built from known modes, using the Laplacian
// eigenvalue -l(l+1)/r^2 per mode. The field must hold exactly that mode sum.
inline Field zeta_of_initial(
    const Field& psi,
    const std::vector<bve::ModeSpec>& modes = artificial_modes(),
    double radius = 1.0) {
  psi.validate();
  if (psi.quantity != Quantity::psi) throw ContractError("expected a psi field");
  Field z = psi;
  z.quantity = Quantity::zeta;
  const double inv_r2 = 1.0 / (radius * radius);
  for (std::size_t t = 0; t < psi.n_times(); ++t) {
    for (std::size_t i = 0; i < psi.n_lat(); ++i) {
      const double phi = psi.lat_rad(i);
      for (std::size_t j = 0; j < psi.n_lon(); ++j) {
        const double lam = psi.lon_rad(j);
        double sum = 0.0, lap = 0.0;
        for (const auto& m : modes) {
          const double v =
              bve::legendre(m.l, m.m, std::sin(phi)) * std::cos(m.m * lam);
          sum += v;
          lap -= m.l * (m.l + 1.0) * v;
        }
        if (std::abs(sum - psi.at(t, i, j)) > 1e-9 * (1.0 + std::abs(sum))) {
          throw ContractError("psi field does not match the given modes");
        }
        z.at(t, i, j) = lap * inv_r2;
      }
    }
  }
  return z;
}

namespace detail {
// Member index ranges [begin, end) of each output cell along one axis.
inline std::vector<std::pair<std::size_t, std::size_t>> blocks(
    std::size_t n, std::size_t factor, std::size_t trim_front,
    std::size_t count) {
  std::vector<std::pair<std::size_t, std::size_t>> out(count);
  for (std::size_t k = 0; k < count; ++k) {
    const std::size_t b = trim_front + k * factor;
    out[k] = {b, std::min(n, b + factor)};
  }
  return out;
}

inline Field reduce(const Field& f,
                    const std::vector<std::pair<std::size_t, std::size_t>>& bi,
                    const std::vector<std::pair<std::size_t, std::size_t>>& bj) {
  Field out;
  out.quantity = f.quantity;
  out.units = f.units;
  out.angles = f.angles;
  out.times = f.times;
  auto coord_means = [](const std::vector<double>& c, const auto& b) {
    std::vector<double> m;
    for (const auto& [lo, hi] : b) {
      double s = 0.0;
      for (std::size_t k = lo; k < hi; ++k) s += c[k];
      m.push_back(s / (hi - lo));
    }
    return m;
  };
  out.lats = coord_means(f.lats, bi);
  out.lons = coord_means(f.lons, bj);
  out.values.resize(out.n_times() * out.slice_size());
  for (std::size_t t = 0; t < f.n_times(); ++t) {
    for (std::size_t a = 0; a < bi.size(); ++a) {
      for (std::size_t b = 0; b < bj.size(); ++b) {
        double s = 0.0;
        for (std::size_t i = bi[a].first; i < bi[a].second; ++i) {
          for (std::size_t j = bj[b].first; j < bj[b].second; ++j) {
            s += f.at(t, i, j);
          }
        }
        const double cells = static_cast<double>(
            (bi[a].second - bi[a].first) * (bj[b].second - bj[b].first));
        out.at(t, a, b) = s / cells;
      }
    }
  }
  return out;
}
}  // namespace detail

// Mean over lat_factor x lon_factor blocks. Output sizes are ceil(n/factor);
// trailing partial blocks average the cells they contain.
inline Field block_reduce_mean(const Field& f, long lat_factor,
                               long lon_factor) {
  if (lat_factor <= 0 || lon_factor <= 0) {
    throw ConfigError("block factor must be positive");
  }
  f.validate();
  const std::size_t fi = lat_factor, fj = lon_factor;
  const std::size_t ni = (f.n_lat() + fi - 1) / fi;
  const std::size_t nj = (f.n_lon() + fj - 1) / fj;
  return detail::reduce(f, detail::blocks(f.n_lat(), fi, 0, ni),
                        detail::blocks(f.n_lon(), fj, 0, nj));
}

inline Field block_reduce_mean(const Field& f, long factor) {
  return block_reduce_mean(f, factor, factor);
}

// Reduce to exactly n_lat x n_lon with full blocks only. Each axis uses the
// factor floor(n / target); leftover rows or columns are dropped, split
// evenly between both ends (extra one at the far end).
inline Field downsample_to(const Field& f, std::size_t n_lat,
                           std::size_t n_lon) {
  f.validate();
  if (n_lat == 0 || n_lon == 0 || n_lat > f.n_lat() || n_lon > f.n_lon()) {
    throw ConfigError("cannot downsample " + std::to_string(f.n_lat()) + "x" +
                      std::to_string(f.n_lon()) + " to " +
                      std::to_string(n_lat) + "x" + std::to_string(n_lon));
  }
  const std::size_t fi = f.n_lat() / n_lat, fj = f.n_lon() / n_lon;
  const std::size_t ti = (f.n_lat() - fi * n_lat) / 2;
  const std::size_t tj = (f.n_lon() - fj * n_lon) / 2;
  return detail::reduce(f, detail::blocks(f.n_lat(), fi, ti, n_lat),
                        detail::blocks(f.n_lon(), fj, tj, n_lon));
}

// Keep every time whose index is a multiple of stride.
inline Field select_times(const Field& f, std::size_t stride) {
  if (stride == 0) throw ConfigError("time stride must be positive");
  Field out = f;
  out.times.clear();
  out.values.clear();
  for (std::size_t t = 0; t < f.n_times(); t += stride) {
    out.times.push_back(f.times[t]);
    const auto s = f.slice(t);
    out.values.insert(out.values.end(), s.begin(), s.end());
  }
  return out;
}

// ---------------------------------------------------------------- file I/O

namespace detail {
inline std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_row(std::ostream& os, const std::vector<double>& v) {
  for (std::size_t k = 0; k < v.size(); ++k) {
    if (k) os << ' ';
    os << fmt17(v[k]);
  }
}

inline std::vector<double> parse_numbers(const std::string& text,
                                         std::size_t line) {
  std::vector<double> v;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) {
    std::size_t used = 0;
    double x = 0.0;
    try {
      x = std::stod(tok, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != tok.size() || !std::isfinite(x)) {
      throw ParseError("bad number '" + tok + "'", line);
    }
    v.push_back(x);
  }
  return v;
}
}  // namespace detail

// Writes to a temporary sibling and renames it into place.
inline void save_field(const Field& f, const std::filesystem::path& path) {
  f.validate();
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp);
    if (!os) throw FileError("cannot write " + tmp.string());
    os << "quantity " << to_string(f.quantity) << '\n'
       << "units " << f.units << '\n'
       << "angles " << to_string(f.angles) << '\n'
       << "times: ";
    detail::write_row(os, f.times);
    os << "\nlats: ";
    detail::write_row(os, f.lats);
    os << "\nlons: ";
    detail::write_row(os, f.lons);
    os << '\n';
    std::vector<double> row(f.n_lon());
    for (std::size_t t = 0; t < f.n_times(); ++t) {
      os << "t " << t << '\n';
      for (std::size_t i = 0; i < f.n_lat(); ++i) {
        for (std::size_t j = 0; j < f.n_lon(); ++j) row[j] = f.at(t, i, j);
        detail::write_row(os, row);
        os << '\n';
      }
    }
    if (!os) throw FileError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Field load_field(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FileError("cannot open " + path.string());
  Field f;
  std::string line;
  std::size_t lineno = 0;

  auto next = [&](const std::string& what) -> std::string {
    while (std::getline(is, line)) {
      ++lineno;
      if (line.find_first_not_of(" \t\r") != std::string::npos) return line;
    }
    throw ParseError("unexpected end of file, expected " + what, lineno + 1);
  };
  auto expect_key = [&](const std::string& l, const std::string& key) {
    if (l.rfind(key, 0) != 0) {
      throw ParseError("expected '" + key + "' line", lineno);
    }
    return l.substr(key.size());
  };
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };

  const std::string q = trim(expect_key(next("quantity"), "quantity"));
  if (q == "psi") {
    f.quantity = Quantity::psi;
  } else if (q == "zeta") {
    f.quantity = Quantity::zeta;
  } else {
    throw ParseError("unknown quantity '" + q + "'", lineno);
  }
  f.units = trim(expect_key(next("units"), "units"));

  std::string l = next("times:");
  if (l.rfind("angles", 0) == 0) {
    const std::string a = trim(l.substr(6));
    if (a == "degrees") {
      f.angles = AngleUnit::degrees;
    } else if (a == "radians") {
      f.angles = AngleUnit::radians;
    } else {
      throw ParseError("unknown angle unit '" + a + "'", lineno);
    }
    l = next("times:");
  }
  auto coords = [&](const std::string& text, const std::string& key) {
    const std::size_t at = lineno;
    auto v = detail::parse_numbers(expect_key(text, key), at);
    if (v.empty()) throw ParseError("empty " + key + " line", at);
    for (std::size_t k = 1; k < v.size(); ++k) {
      if (!(v[k] > v[k - 1])) {
        throw ParseError(key + " values are not strictly increasing", at);
      }
    }
    return v;
  };
  f.times = coords(l, "times:");
  f.lats = coords(next("lats:"), "lats:");
  f.lons = coords(next("lons:"), "lons:");

  f.values.reserve(f.n_times() * f.slice_size());
  for (std::size_t t = 0; t < f.n_times(); ++t) {
    const std::string header = trim(next("t " + std::to_string(t)));
    if (header != "t " + std::to_string(t)) {
      throw ParseError("expected 't " + std::to_string(t) + "'", lineno);
    }
    for (std::size_t i = 0; i < f.n_lat(); ++i) {
      const std::string text = next("value row");
      const auto row = detail::parse_numbers(text, lineno);
      if (row.size() != f.n_lon()) {
        throw ParseError("row has " + std::to_string(row.size()) +
                             " values, expected " + std::to_string(f.n_lon()),
                         lineno);
      }
      f.values.insert(f.values.end(), row.begin(), row.end());
    }
  }
  while (std::getline(is, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") != std::string::npos) {
      throw ParseError("trailing content after last time block", lineno);
    }
  }
  return f;
}

}  // namespace qsciml::data
