#pragma once

// Figures of merit: mean relative error normalised by the spatial median of
// the reference magnitude, and per-gridpoint Pearson correlation over time.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "qsciml/data.hpp"
#include "qsciml/errors.hpp"

namespace qsciml::fom {

inline double median(std::vector<double> v) {
  if (v.empty()) throw ContractError("median of an empty set");
  const std::size_t h = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + h, v.end());
  const double hi = v[h];
  if (v.size() % 2) return hi;
  const double lo = *std::max_element(v.begin(), v.begin() + h);
  return 0.5 * (lo + hi);
}

struct MreStats {
  std::vector<double> mean;    // per time
  std::vector<double> median;  // per time
};

inline void check_grids(const data::Field& pred, const data::Field& ref) {
  pred.validate();
  ref.validate();
  if (!pred.same_grid(ref)) {
    throw StructuralError("prediction and reference grids differ");
  }
}

inline MreStats mre(const data::Field& pred, const data::Field& ref) {
  check_grids(pred, ref);
  MreStats s;
  const std::size_t n = ref.slice_size();
  for (std::size_t t = 0; t < ref.n_times(); ++t) {
    std::vector<double> mag(n), err(n);
    for (std::size_t k = 0; k < n; ++k) {
      mag[k] = std::abs(ref.values[t * n + k]);
    }
    const double denom = median(mag);
    if (!(denom > 0.0)) {
      throw DegenerateError("median |reference| is zero at time index " +
                            std::to_string(t));
    }
    double sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      err[k] = std::abs(pred.values[t * n + k] - ref.values[t * n + k]) / denom;
      sum += err[k];
    }
    s.mean.push_back(sum / n);
    s.median.push_back(median(std::move(err)));
  }
  return s;
}

struct PpmccStats {
  std::vector<double> per_point;  // [lat][lon], NaN where excluded
  double median = 0.0;
  std::size_t excluded = 0;
};

inline PpmccStats ppmcc(const data::Field& pred, const data::Field& ref) {
  check_grids(pred, ref);
  const std::size_t nt = ref.n_times();
  if (nt < 2) throw ContractError("correlation needs at least two times");
  const std::size_t n = ref.slice_size();
  PpmccStats s;
  s.per_point.assign(n, std::nan(""));
  std::vector<double> kept;
  for (std::size_t k = 0; k < n; ++k) {
    double mp = 0.0, mr = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      mp += pred.values[t * n + k];
      mr += ref.values[t * n + k];
    }
    mp /= nt;
    mr /= nt;
    double cpp = 0.0, crr = 0.0, cpr = 0.0;
    for (std::size_t t = 0; t < nt; ++t) {
      const double a = pred.values[t * n + k] - mp;
      const double b = ref.values[t * n + k] - mr;
      cpp += a * a;
      crr += b * b;
      cpr += a * b;
    }
    if (!(cpp > 0.0) || !(crr > 0.0)) {
      ++s.excluded;
      continue;
    }
    const double r = std::clamp(cpr / std::sqrt(cpp * crr), -1.0, 1.0);
    s.per_point[k] = r;
    kept.push_back(r);
  }
  if (kept.empty()) {
    throw DegenerateError("every grid point has zero variance in time");
  }
  s.median = median(std::move(kept));
  return s;
}

struct FomReport {
  std::vector<double> times;
  MreStats mre;
  PpmccStats ppmcc;
};

inline FomReport evaluate(const data::Field& pred, const data::Field& ref) {
  FomReport r;
  r.times = ref.times;
  r.mre = mre(pred, ref);
  r.ppmcc = ppmcc(pred, ref);
  return r;
}

// One row per time, then a summary row.
inline std::string format_report(const FomReport& r, const std::string& name) {
  std::string out = "# " + name + "\n# time mre_mean mre_median\n";
  char buf[128];
  for (std::size_t t = 0; t < r.times.size(); ++t) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", r.times[t],
                  r.mre.mean[t], r.mre.median[t]);
    out += buf;
  }
  std::snprintf(buf, sizeof buf, "ppmcc_median %.17g excluded %zu\n",
                r.ppmcc.median, r.ppmcc.excluded);
  out += buf;
  return out;
}

}  // namespace qsciml::fom
