#pragma once

// Exact derivatives of the model output.
//
// Feature derivatives: the raw coordinates (phi, lambda, t) are seeded as
// degree-D Taylor jets and pushed through the spherical map, the input
// affines and every gate. Constant rotations act linearly on the jet
// coefficients; encoding rotations have jet-valued angles and act through
// the truncated ring product. The readout sum_i w_i conj(psi_i) psi_i is a
// jet whose coefficients are the mixed partials of the output up to order D.
//
// Parameter gradients: reverse accumulation over the same jet computation.
// The sweep runs the circuit backwards, uncomputing the state gate by gate
// (every gate is invertible inside the jet ring) while propagating the
// adjoint. For a rotation exp(-i a P / 2) the derivative of its output is
// -(i/2) P psi_out, so no forward history has to be stored.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "qsciml/dual.hpp"
#include "qsciml/errors.hpp"
#include "qsciml/jet.hpp"
#include "qsciml/parallel.hpp"
#include "qsciml/qnn.hpp"
#include "qsciml/qsim.hpp"

namespace qsciml::diff {

using qnn::CollocationPoint;
using qnn::ModelConfig;
using qnn::ModelParams;

// Model output and a set of its partials in (phi, lambda, t).
struct DerivativeJet {
  CollocationPoint point{};
  double value = 0.0;
  std::map<MultiIndex, double> partials;

  bool has(const MultiIndex& m) const {
    return m.order() == 0 || partials.contains(m);
  }
  double at(const MultiIndex& m) const {
    if (m.order() == 0) return value;
    const auto it = partials.find(m);
    if (it == partials.end()) {
      throw ContractError("derivative jet lacks partial " + to_string(m));
    }
    return it->second;
  }
};

// Partials entering the streamline-form BVE residual, plus psi_t and
// psi_lambda_t.
inline const std::vector<MultiIndex>& residual_partials() {
  static const std::vector<MultiIndex> list{
      {0, 1, 0}, {1, 0, 0}, {0, 0, 1},                         // first order
      {2, 0, 0}, {0, 2, 0}, {1, 1, 0}, {1, 0, 1}, {0, 1, 1},   // second
      {3, 0, 0}, {0, 3, 0}, {2, 0, 1}, {0, 2, 1}, {1, 2, 0}, {2, 1, 0}};
  return list;
}

// Read access to the partial derivatives (not Taylor coefficients) of a
// degree-D output jet, with entries of type T.
template <class T, int D>
class Partials {
 public:
  using Table = Monomials<D>;
  explicit Partials(const std::array<T, Table::size>& d) : d_(d) {}

  const T& value() const { return d_[0]; }
  const T& operator()(int phi, int lam, int t) const {
    const int k = Table::find(MultiIndex{phi, lam, t});
    if (k < 0) {
      throw ContractError("partial " + to_string(MultiIndex{phi, lam, t}) +
                          " exceeds jet degree " + std::to_string(D));
    }
    return d_[k];
  }

 private:
  const std::array<T, Table::size>& d_;
};

namespace detail {

template <int D>
class JetStatevector {
 public:
  static constexpr int K = monomial_count(D);

  explicit JetStatevector(int n_qubits)
      : n_(n_qubits),
        dim_(std::size_t{1} << n_qubits),
        re_(dim_ * K, 0.0),
        im_(dim_ * K, 0.0) {}

  void set_basis_zero() {
    std::fill(re_.begin(), re_.end(), 0.0);
    std::fill(im_.begin(), im_.end(), 0.0);
    re_[0] = 1.0;
  }
  void set_zero() {
    std::fill(re_.begin(), re_.end(), 0.0);
    std::fill(im_.begin(), im_.end(), 0.0);
  }

  int n_qubits() const { return n_; }
  std::size_t dim() const { return dim_; }
  double* re(std::size_t i) { return re_.data() + i * K; }
  double* im(std::size_t i) { return im_.data() + i * K; }
  const double* re(std::size_t i) const { return re_.data() + i * K; }
  const double* im(std::size_t i) const { return im_.data() + i * K; }

 private:
  int n_;
  std::size_t dim_;
  std::vector<double> re_;
  std::vector<double> im_;
};

// Calls fn(i0, i1) for every basis pair differing only in qubit q.
template <class Fn>
inline void for_each_pair(int n, int q, Fn&& fn) {
  const std::size_t mask = qsim::qubit_mask(n, q);
  const std::size_t dim = std::size_t{1} << n;
  for (std::size_t i = 0; i < dim; ++i) {
    if (!(i & mask)) fn(i, i | mask);
  }
}

// Rotation by a constant angle with cos/sin of the half angle given.
// Passing -s applies the inverse (= adjoint) rotation.
template <qsim::GateKind G, int D>
void rotate_const_kind(JetStatevector<D>& st, int q, double c, double s) {
  constexpr int K = JetStatevector<D>::K;
  for_each_pair(st.n_qubits(), q, [&](std::size_t i0, std::size_t i1) {
    double* __restrict r0 = st.re(i0);
    double* __restrict m0 = st.im(i0);
    double* __restrict r1 = st.re(i1);
    double* __restrict m1 = st.im(i1);
    for (int k = 0; k < K; ++k) {
      const double a = r0[k], b = m0[k], e = r1[k], f = m1[k];
      if constexpr (G == qsim::GateKind::RY) {
        r0[k] = c * a - s * e;
        m0[k] = c * b - s * f;
        r1[k] = s * a + c * e;
        m1[k] = s * b + c * f;
      } else if constexpr (G == qsim::GateKind::RX) {
        r0[k] = c * a + s * f;
        m0[k] = c * b - s * e;
        r1[k] = s * b + c * e;
        m1[k] = -s * a + c * f;
      } else {
        r0[k] = c * a + s * b;
        m0[k] = c * b - s * a;
        r1[k] = c * e - s * f;
        m1[k] = c * f + s * e;
      }
    }
  });
}

template <int D>
void rotate_const(JetStatevector<D>& st, qsim::GateKind g, int q, double c,
                  double s) {
  switch (g) {
    case qsim::GateKind::RX: return rotate_const_kind<qsim::GateKind::RX>(st, q, c, s);
    case qsim::GateKind::RY: return rotate_const_kind<qsim::GateKind::RY>(st, q, c, s);
    case qsim::GateKind::RZ: return rotate_const_kind<qsim::GateKind::RZ>(st, q, c, s);
    case qsim::GateKind::CNOT: break;
  }
}

template <int D>
void apply_cnot(JetStatevector<D>& st, int control, int target) {
  constexpr int K = JetStatevector<D>::K;
  const int n = st.n_qubits();
  const std::size_t cmask = qsim::qubit_mask(n, control);
  const std::size_t tmask = qsim::qubit_mask(n, target);
  for (std::size_t i = 0; i < st.dim(); ++i) {
    if ((i & cmask) && !(i & tmask)) {
      std::swap_ranges(st.re(i), st.re(i) + K, st.re(i | tmask));
      std::swap_ranges(st.im(i), st.im(i) + K, st.im(i | tmask));
    }
  }
}

// (1/2) Im <x, P psi> summed over all amplitudes and coefficients, where P
// is the Pauli generator of the rotation acting on qubit q.
template <qsim::GateKind G, int D>
double generator_overlap_kind(const JetStatevector<D>& x,
                              const JetStatevector<D>& psi, int q) {
  constexpr int K = JetStatevector<D>::K;
  double acc = 0.0;
  for_each_pair(psi.n_qubits(), q, [&](std::size_t i0, std::size_t i1) {
    const double* xr0 = x.re(i0);
    const double* xi0 = x.im(i0);
    const double* xr1 = x.re(i1);
    const double* xi1 = x.im(i1);
    const double* pr0 = psi.re(i0);
    const double* pi0 = psi.im(i0);
    const double* pr1 = psi.re(i1);
    const double* pi1 = psi.im(i1);
    double part = 0.0;
    for (int k = 0; k < K; ++k) {
      if constexpr (G == qsim::GateKind::RZ) {
        part += (xr0[k] * pi0[k] - xi0[k] * pr0[k]) -
                (xr1[k] * pi1[k] - xi1[k] * pr1[k]);
      } else if constexpr (G == qsim::GateKind::RX) {
        part += (xr0[k] * pi1[k] - xi0[k] * pr1[k]) +
                (xr1[k] * pi0[k] - xi1[k] * pr0[k]);
      } else {
        part += (xr1[k] * pr0[k] + xi1[k] * pi0[k]) -
                (xr0[k] * pr1[k] + xi0[k] * pi1[k]);
      }
    }
    acc += part;
  });
  return 0.5 * acc;
}

template <int D>
double generator_overlap(const JetStatevector<D>& x,
                         const JetStatevector<D>& psi, qsim::GateKind g,
                         int q) {
  switch (g) {
    case qsim::GateKind::RX: return generator_overlap_kind<qsim::GateKind::RX>(x, psi, q);
    case qsim::GateKind::RY: return generator_overlap_kind<qsim::GateKind::RY>(x, psi, q);
    case qsim::GateKind::RZ: return generator_overlap_kind<qsim::GateKind::RZ>(x, psi, q);
    case qsim::GateKind::CNOT: break;
  }
  return 0.0;
}

// RY with jet-valued half-angle cosine c and sine s. Passing -s inverts.
template <int D>
void rotate_jet(JetStatevector<D>& st, int q, const Jet<D>& c,
                const Jet<D>& s) {
  constexpr int K = JetStatevector<D>::K;
  for_each_pair(st.n_qubits(), q, [&](std::size_t i0, std::size_t i1) {
    const double* a0 = st.re(i0);
    const double* b0 = st.im(i0);
    const double* a1 = st.re(i1);
    const double* b1 = st.im(i1);
    std::array<double, K> r0{}, m0{}, r1{}, m1{};
    for (const auto& p : Monomials<D>::products) {
      const double cc = c.c[p.a], ss = s.c[p.a];
      r0[p.out] += cc * a0[p.b] - ss * a1[p.b];
      m0[p.out] += cc * b0[p.b] - ss * b1[p.b];
      r1[p.out] += ss * a0[p.b] + cc * a1[p.b];
      m1[p.out] += ss * b0[p.b] + cc * b1[p.b];
    }
    std::copy(r0.begin(), r0.end(), st.re(i0));
    std::copy(m0.begin(), m0.end(), st.im(i0));
    std::copy(r1.begin(), r1.end(), st.re(i1));
    std::copy(m1.begin(), m1.end(), st.im(i1));
  });
}

// Adjoint of rotate_jet(c, s) applied to an adjoint vector: multiplication
// by a jet is adjoint to correlation with it.
template <int D>
void rotate_jet_adjoint(JetStatevector<D>& x, int q, const Jet<D>& c,
                        const Jet<D>& s) {
  constexpr int K = JetStatevector<D>::K;
  for_each_pair(x.n_qubits(), q, [&](std::size_t i0, std::size_t i1) {
    const double* a0 = x.re(i0);
    const double* b0 = x.im(i0);
    const double* a1 = x.re(i1);
    const double* b1 = x.im(i1);
    std::array<double, K> r0{}, m0{}, r1{}, m1{};
    for (const auto& p : Monomials<D>::products) {
      const double cc = c.c[p.b], ss = s.c[p.b];
      r0[p.a] += cc * a0[p.out] + ss * a1[p.out];
      m0[p.a] += cc * b0[p.out] + ss * b1[p.out];
      r1[p.a] += -ss * a0[p.out] + cc * a1[p.out];
      m1[p.a] += -ss * b0[p.out] + cc * b1[p.out];
    }
    std::copy(r0.begin(), r0.end(), x.re(i0));
    std::copy(m0.begin(), m0.end(), x.im(i0));
    std::copy(r1.begin(), r1.end(), x.re(i1));
    std::copy(m1.begin(), m1.end(), x.im(i1));
  });
}

// Jet adjoint of the angle a of an RY(a) whose output state is psi:
// abar_p += Re sum conj(x_{p+q}) v_q with v = -(i/2) Y psi.
template <int D>
void angle_adjoint(const JetStatevector<D>& x, const JetStatevector<D>& psi,
                   int q, Jet<D>& abar) {
  for_each_pair(psi.n_qubits(), q, [&](std::size_t i0, std::size_t i1) {
    // v0 = -psi1 / 2, v1 = psi0 / 2
    for (const auto& p : Monomials<D>::products) {
      abar.c[p.a] += 0.5 * (x.re(i1)[p.out] * psi.re(i0)[p.b] +
                            x.im(i1)[p.out] * psi.im(i0)[p.b] -
                            x.re(i0)[p.out] * psi.re(i1)[p.b] -
                            x.im(i0)[p.out] * psi.im(i1)[p.b]);
    }
  });
}

template <int D>
Jet<D> total_z_jet(const JetStatevector<D>& st) {
  Jet<D> e(0.0);
  const int n = st.n_qubits();
  for (std::size_t i = 0; i < st.dim(); ++i) {
    const double w = qsim::total_z_eigenvalue(n, i);
    if (w == 0.0) continue;
    const double* r = st.re(i);
    const double* m = st.im(i);
    for (const auto& p : Monomials<D>::products) {
      e.c[p.out] += w * (r[p.a] * r[p.b] + m[p.a] * m[p.b]);
    }
  }
  return e;
}

// Adjoint state seeded from dL/dE for E = total_z_jet(st).
template <int D>
void seed_readout_adjoint(const JetStatevector<D>& st, const Jet<D>& ebar,
                          JetStatevector<D>& x) {
  x.set_zero();
  const int n = st.n_qubits();
  for (std::size_t i = 0; i < st.dim(); ++i) {
    const double w = qsim::total_z_eigenvalue(n, i);
    if (w == 0.0) continue;
    for (const auto& p : Monomials<D>::products) {
      x.re(i)[p.b] += 2.0 * w * ebar.c[p.out] * st.re(i)[p.a];
      x.im(i)[p.b] += 2.0 * w * ebar.c[p.out] * st.im(i)[p.a];
    }
  }
}

}  // namespace detail

// Differentiable evaluation of one model configuration.
class Engine {
 public:
  explicit Engine(const ModelConfig& cfg)
      : cfg_(cfg), layout_(qnn::circuit_layout(cfg)) {
    for (const auto& op : layout_) {
      if (op.kind == qnn::LayoutOp::Kind::encode) ++n_encode_;
    }
  }

  const ModelConfig& config() const { return cfg_; }
  const std::vector<qnn::LayoutOp>& layout() const { return layout_; }

  // Output jet psi~ of degree D at a point.
  template <int D>
  Jet<D> output_jet(const ModelParams& params,
                    const CollocationPoint& p) const {
    Forward<D> fw(cfg_.n_qubits);
    run_forward(params, p, fw);
    return output_of(params, fw.readout);
  }

  // Adds weight * dLoss/dparams to grad and returns weight * Loss, where
  // Loss = loss(partials, point) is any smooth expression of the output
  // partials up to order D. loss is called with Partials<Dual<K>, D>.
  template <int D, class Loss>
  double accumulate(const ModelParams& params, const CollocationPoint& p,
                    Loss&& loss, double weight, std::span<double> grad) const {
    constexpr int K = monomial_count(D);
    using Table = Monomials<D>;
    Forward<D> fw(cfg_.n_qubits);
    run_forward(params, p, fw);
    const Jet<D> out = output_of(params, fw.readout);

    std::array<Dual<K>, K> seeded;
    for (int k = 0; k < K; ++k) {
      seeded[k] = Dual<K>::seed(out.c[k] * Table::factorials[k], k);
    }
    const Dual<K> l = loss(Partials<Dual<K>, D>(seeded), p);
    if (!std::isfinite(l.v)) {
      throw NumericalError("non-finite loss", qnn::to_string(p));
    }
    // dL/d(output Taylor coefficient)
    Jet<D> obar;
    for (int k = 0; k < K; ++k) {
      obar.c[k] = weight * l.d[k] * Table::factorials[k];
      if (!std::isfinite(obar.c[k])) {
        throw NumericalError("non-finite loss gradient", qnn::to_string(p));
      }
    }
    const int out_off = cfg_.output_affine_offset();
    double dscale = 0.0;
    for (int k = 0; k < K; ++k) dscale += obar.c[k] * fw.readout.c[k];
    grad[out_off] += dscale;
    grad[out_off + 1] += obar.c[0];

    Jet<D> ebar = obar * params.output_affine.scale;
    run_backward(params, ebar, fw, grad);
    return weight * l.v;
  }

 private:
  template <int D>
  struct Forward {
    explicit Forward(int n) : state(n), adjoint(n) {}
    detail::JetStatevector<D> state;
    detail::JetStatevector<D> adjoint;
    std::array<Jet<D>, qnn::kFeatures> features;
    std::vector<Jet<D>> half_cos;  // per encode op
    std::vector<Jet<D>> half_sin;
    Jet<D> readout;
  };

  template <int D>
  Jet<D> output_of(const ModelParams& params, const Jet<D>& readout) const {
    Jet<D> out = readout * params.output_affine.scale;
    out.c[0] += params.output_affine.shift;
    return out;
  }

  template <int D>
  void run_forward(const ModelParams& params, const CollocationPoint& p,
                   Forward<D>& fw) const {
    fw.features = qnn::spherical_features(Jet<D>::variable(p.phi, 0),
                                          Jet<D>::variable(p.lambda, 1),
                                          Jet<D>::variable(p.t, 2),
                                          cfg_.sphere_map);
    fw.half_cos.resize(n_encode_);
    fw.half_sin.resize(n_encode_);
    fw.state.set_basis_zero();
    int e = 0;
    for (const auto& op : layout_) {
      switch (op.kind) {
        case qnn::LayoutOp::Kind::encode: {
          const auto& aff = params.input_affine[op.feature];
          Jet<D> angle = fw.features[op.feature] * aff.scale;
          angle.c[0] += aff.shift;
          angle *= 0.5 * params.gamma[op.param];
          sincos(angle, fw.half_sin[e], fw.half_cos[e]);
          detail::rotate_jet(fw.state, op.qubit, fw.half_cos[e],
                             fw.half_sin[e]);
          ++e;
          break;
        }
        case qnn::LayoutOp::Kind::rotation: {
          const double h = 0.5 * params.theta[op.param];
          detail::rotate_const(fw.state, op.gate, op.qubit, std::cos(h),
                               std::sin(h));
          break;
        }
        case qnn::LayoutOp::Kind::cnot:
          detail::apply_cnot(fw.state, op.control, op.qubit);
          break;
      }
    }
    fw.readout = detail::total_z_jet(fw.state);
  }

  template <int D>
  void run_backward(const ModelParams& params, const Jet<D>& ebar,
                    Forward<D>& fw, std::span<double> grad) const {
    auto& psi = fw.state;
    auto& x = fw.adjoint;
    detail::seed_readout_adjoint(psi, ebar, x);
    const int gamma_off = cfg_.gamma_offset();
    const int in_off = cfg_.input_affine_offset();
    int e = n_encode_;
    for (auto it = layout_.rbegin(); it != layout_.rend(); ++it) {
      const auto& op = *it;
      switch (op.kind) {
        case qnn::LayoutOp::Kind::rotation: {
          grad[op.param] += detail::generator_overlap(x, psi, op.gate, op.qubit);
          const double h = 0.5 * params.theta[op.param];
          const double c = std::cos(h), s = std::sin(h);
          detail::rotate_const(psi, op.gate, op.qubit, c, -s);
          detail::rotate_const(x, op.gate, op.qubit, c, -s);
          break;
        }
        case qnn::LayoutOp::Kind::cnot:
          detail::apply_cnot(psi, op.control, op.qubit);
          detail::apply_cnot(x, op.control, op.qubit);
          break;
        case qnn::LayoutOp::Kind::encode: {
          --e;
          Jet<D> abar;
          detail::angle_adjoint(x, psi, op.qubit, abar);
          // angle = gamma * (scale * f + shift)
          const auto& aff = params.input_affine[op.feature];
          const auto& f = fw.features[op.feature];
          const double g = params.gamma[op.param];
          double dot_f = 0.0;
          for (int k = 0; k < Jet<D>::size; ++k) dot_f += abar.c[k] * f.c[k];
          grad[gamma_off + op.param] += aff.scale * dot_f + aff.shift * abar.c[0];
          grad[in_off + 2 * op.feature] += g * dot_f;
          grad[in_off + 2 * op.feature + 1] += g * abar.c[0];
          detail::rotate_jet_adjoint(x, op.qubit, fw.half_cos[e],
                                     fw.half_sin[e]);
          detail::rotate_jet(psi, op.qubit, fw.half_cos[e], -fw.half_sin[e]);
          break;
        }
      }
    }
  }

  ModelConfig cfg_;
  std::vector<qnn::LayoutOp> layout_;
  int n_encode_ = 0;
};

inline int max_order(const std::vector<MultiIndex>& requested) {
  int d = 0;
  for (const auto& m : requested) {
    if (m.phi < 0 || m.lam < 0 || m.t < 0 || m.order() > kMaxOrder) {
      throw ContractError("unsupported derivative order " + to_string(m));
    }
    d = std::max(d, m.order());
  }
  return d;
}

namespace detail {
template <int D>
DerivativeJet to_derivative_jet(const Jet<D>& j, const CollocationPoint& p,
                                const std::vector<MultiIndex>& requested) {
  DerivativeJet out;
  out.point = p;
  out.value = j.c[0];
  for (const auto& m : requested) {
    if (m.order() > 0) out.partials[m] = j.partial(m);
  }
  return out;
}
}  // namespace detail

inline DerivativeJet feature_jet(const Engine& engine, const ModelParams& params,
                                 const CollocationPoint& p,
                                 const std::vector<MultiIndex>& requested) {
  switch (max_order(requested)) {
    case 0:
      return detail::to_derivative_jet(engine.output_jet<0>(params, p), p,
                                       requested);
    case 1:
      return detail::to_derivative_jet(engine.output_jet<1>(params, p), p,
                                       requested);
    case 2:
      return detail::to_derivative_jet(engine.output_jet<2>(params, p), p,
                                       requested);
    default:
      return detail::to_derivative_jet(engine.output_jet<3>(params, p), p,
                                       requested);
  }
}

inline DerivativeJet feature_jet(const ModelConfig& cfg,
                                 const ModelParams& params,
                                 const CollocationPoint& p,
                                 const std::vector<MultiIndex>& requested) {
  params.validate(cfg);
  return feature_jet(Engine(cfg), params, p, requested);
}

struct LossGradient {
  double value = 0.0;
  std::vector<double> gradient;

  LossGradient& operator+=(const LossGradient& o) {
    value += o.value;
    if (gradient.empty()) gradient.assign(o.gradient.size(), 0.0);
    for (std::size_t i = 0; i < o.gradient.size(); ++i) {
      gradient[i] += o.gradient[i];
    }
    return *this;
  }
};

// Sum over points of loss(i, partials, point), and its exact gradient with
// respect to every trainable in ModelParams::flatten() order. loss receives
// Partials<Dual<K>, D> and must return Dual<K>.
template <int D, class Loss>
LossGradient param_gradient(const Engine& engine, const ModelParams& params,
                            std::span<const CollocationPoint> points,
                            Loss&& loss, const Execution& exec = {}) {
  const std::size_t n_params =
      static_cast<std::size_t>(engine.config().trainable_count());
  LossGradient out;
  out.gradient.assign(n_params, 0.0);
  const int threads = exec.resolved_threads();
  auto point_term = [&](std::size_t i, std::span<double> grad) {
    return engine.accumulate<D>(
        params, points[i],
        [&](const auto& d, const CollocationPoint& p) { return loss(i, d, p); },
        1.0, grad);
  };
  if (threads <= 1 || points.size() <= 1) {
    // Per-point buffer, so the rounding matches the threaded ordered sum.
    std::vector<double> g(n_params);
    for (std::size_t i = 0; i < points.size(); ++i) {
      std::fill(g.begin(), g.end(), 0.0);
      out.value += point_term(i, g);
      for (std::size_t k = 0; k < n_params; ++k) out.gradient[k] += g[k];
    }
    return out;
  }
  if (exec.deterministic) {
    std::vector<double> values(points.size());
    std::vector<double> grads(points.size() * n_params, 0.0);
    parallel_for(points.size(), threads, [&](std::size_t i, int) {
      values[i] = point_term(
          i, std::span<double>(grads.data() + i * n_params, n_params));
    });
    for (std::size_t i = 0; i < points.size(); ++i) {
      out.value += values[i];
      for (std::size_t k = 0; k < n_params; ++k) {
        out.gradient[k] += grads[i * n_params + k];
      }
    }
    return out;
  }
  const int workers = std::min<int>(threads, static_cast<int>(points.size()));
  std::vector<double> values(workers, 0.0);
  std::vector<double> grads(workers * n_params, 0.0);
  parallel_for(points.size(), workers, [&](std::size_t i, int w) {
    values[w] += point_term(
        i, std::span<double>(grads.data() + w * n_params, n_params));
  });
  for (int w = 0; w < workers; ++w) {
    out.value += values[w];
    for (std::size_t k = 0; k < n_params; ++k) {
      out.gradient[k] += grads[w * n_params + k];
    }
  }
  return out;
}

// Central finite-difference estimate of d^m psi~ built from forward()
// evaluations only: a tensor product of per-axis central stencils of the
// given accuracy order (2 or 4). Test oracle, never used for training.
inline double fd_oracle(const ModelConfig& cfg, const ModelParams& params,
                        const CollocationPoint& p, const MultiIndex& m,
                        double step, int accuracy = 4) {
  if (!(step > 0.0)) throw ContractError("finite-difference step must be > 0");
  if (m.phi < 0 || m.lam < 0 || m.t < 0 || m.phi > 3 || m.lam > 3 || m.t > 3) {
    throw ContractError("unsupported stencil order " + to_string(m));
  }
  if (accuracy != 2 && accuracy != 4) {
    throw ContractError("stencil accuracy must be 2 or 4");
  }
  struct Tap {
    int offset;
    double weight;
  };
  auto stencil = [accuracy](int order) -> std::vector<Tap> {
    if (order == 0) return {{0, 1.0}};
    if (accuracy == 2) {
      switch (order) {
        case 1: return {{-1, -0.5}, {1, 0.5}};
        case 2: return {{-1, 1.0}, {0, -2.0}, {1, 1.0}};
        default: return {{-2, -0.5}, {-1, 1.0}, {1, -1.0}, {2, 0.5}};
      }
    }
    switch (order) {
      case 1:
        return {{-2, 1.0 / 12}, {-1, -8.0 / 12}, {1, 8.0 / 12}, {2, -1.0 / 12}};
      case 2:
        return {{-2, -1.0 / 12}, {-1, 16.0 / 12}, {0, -30.0 / 12},
                {1, 16.0 / 12},  {2, -1.0 / 12}};
      default:
        return {{-3, 1.0 / 8},  {-2, -8.0 / 8}, {-1, 13.0 / 8},
                {1, -13.0 / 8}, {2, 8.0 / 8},   {3, -1.0 / 8}};
    }
  };
  const auto sp = stencil(m.phi), sl = stencil(m.lam), st = stencil(m.t);
  double acc = 0.0;
  for (const auto& a : sp) {
    for (const auto& b : sl) {
      for (const auto& c : st) {
        const CollocationPoint q{p.phi + a.offset * step,
                                 p.lambda + b.offset * step,
                                 p.t + c.offset * step};
        acc += a.weight * b.weight * c.weight * qnn::forward(cfg, params, q);
      }
    }
  }
  return acc / std::pow(step, m.order());
}

// Stencil steps per total order, balancing truncation and cancellation.
inline double fd_step_for_order(int order) {
  switch (order) {
    case 1: return 1e-4;
    case 2: return 1e-3;
    default: return 5e-3;
  }
}

}  // namespace qsciml::diff
