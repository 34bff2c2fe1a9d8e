#pragma once

// Dense statevector simulation of the RX/RY/RZ/CNOT gate set.
//
// Qubit 0 is the most significant bit of the basis index, so on two qubits
// |10> is index 2.

#include <array>
#include <bit>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qsciml/errors.hpp"

namespace qsciml::qsim {

using complex_t = std::complex<double>;

inline constexpr int kMaxQubits = 24;

enum class GateKind { RX, RY, RZ, CNOT };

inline const char* to_string(GateKind kind) {
  switch (kind) {
    case GateKind::RX: return "RX";
    case GateKind::RY: return "RY";
    case GateKind::RZ: return "RZ";
    case GateKind::CNOT: return "CNOT";
  }
  return "?";
}

struct Gate {
  GateKind kind = GateKind::RY;
  int target = 0;
  std::optional<int> control;
  double angle = 0.0;

  static Gate rx(int q, double a) { return {GateKind::RX, q, std::nullopt, a}; }
  static Gate ry(int q, double a) { return {GateKind::RY, q, std::nullopt, a}; }
  static Gate rz(int q, double a) { return {GateKind::RZ, q, std::nullopt, a}; }
  static Gate cnot(int c, int t) { return {GateKind::CNOT, t, c, 0.0}; }

  bool is_rotation() const { return kind != GateKind::CNOT; }
};

// Bit mask of qubit q in an n-qubit basis index.
constexpr std::size_t qubit_mask(int n_qubits, int q) {
  return std::size_t{1} << (n_qubits - 1 - q);
}

inline void validate(const Gate& g, int n_qubits) {
  auto in_range = [&](int q) { return q >= 0 && q < n_qubits; };
  if (!in_range(g.target)) {
    throw StructuralError("gate target " + std::to_string(g.target) +
                          " out of range for " + std::to_string(n_qubits) +
                          " qubits");
  }
  if (g.kind == GateKind::CNOT) {
    if (!g.control) throw StructuralError("CNOT without control qubit");
    if (!in_range(*g.control)) {
      throw StructuralError("CNOT control " + std::to_string(*g.control) +
                            " out of range");
    }
    if (*g.control == g.target) {
      throw StructuralError("CNOT control equals target");
    }
  } else if (g.control) {
    throw StructuralError(std::string(to_string(g.kind)) +
                          " must not carry a control qubit");
  }
}

struct Circuit {
  int n_qubits = 1;
  std::vector<Gate> gates;

  void validate() const {
    for (const auto& g : gates) qsim::validate(g, n_qubits);
  }
};

class QuantumState {
 public:
  explicit QuantumState(int n_qubits) : n_qubits_(n_qubits) {
    if (n_qubits < 1 || n_qubits > kMaxQubits) {
      throw ConfigError("n_qubits must lie in [1, " +
                        std::to_string(kMaxQubits) + "], got " +
                        std::to_string(n_qubits));
    }
    amps_.assign(std::size_t{1} << n_qubits, complex_t{0.0, 0.0});
    amps_[0] = 1.0;
  }

  int n_qubits() const noexcept { return n_qubits_; }
  std::size_t dim() const noexcept { return amps_.size(); }
  const std::vector<complex_t>& amplitudes() const noexcept { return amps_; }
  std::vector<complex_t>& amplitudes() noexcept { return amps_; }
  complex_t operator[](std::size_t i) const { return amps_[i]; }

  double norm_squared() const {
    double s = 0.0;
    for (const auto& a : amps_) s += std::norm(a);
    return s;
  }

 private:
  int n_qubits_;
  std::vector<complex_t> amps_;
};

inline QuantumState init_zero(int n_qubits) { return QuantumState(n_qubits); }

// 2x2 matrix of a single-qubit rotation, row-major.
inline std::array<complex_t, 4> rotation_matrix(GateKind kind, double angle) {
  const double c = std::cos(0.5 * angle);
  const double s = std::sin(0.5 * angle);
  switch (kind) {
    case GateKind::RX:
      return {complex_t{c, 0}, complex_t{0, -s}, complex_t{0, -s},
              complex_t{c, 0}};
    case GateKind::RY:
      return {complex_t{c, 0}, complex_t{-s, 0}, complex_t{s, 0},
              complex_t{c, 0}};
    case GateKind::RZ:
      return {complex_t{c, -s}, complex_t{0, 0}, complex_t{0, 0},
              complex_t{c, s}};
    case GateKind::CNOT: break;
  }
  throw StructuralError("rotation_matrix called on CNOT");
}

inline void apply_gate_inplace(QuantumState& state, const Gate& gate) {
  validate(gate, state.n_qubits());
  auto& a = state.amplitudes();
  const int n = state.n_qubits();
  const std::size_t tmask = qubit_mask(n, gate.target);
  if (gate.kind == GateKind::CNOT) {
    const std::size_t cmask = qubit_mask(n, *gate.control);
    for (std::size_t i = 0; i < a.size(); ++i) {
      if ((i & cmask) && !(i & tmask)) std::swap(a[i], a[i | tmask]);
    }
    return;
  }
  const auto u = rotation_matrix(gate.kind, gate.angle);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (i & tmask) continue;
    const complex_t a0 = a[i];
    const complex_t a1 = a[i | tmask];
    a[i] = u[0] * a0 + u[1] * a1;
    a[i | tmask] = u[2] * a0 + u[3] * a1;
  }
}

inline QuantumState apply_gate(QuantumState state, const Gate& gate) {
  apply_gate_inplace(state, gate);
  return state;
}

inline QuantumState run_circuit(const Circuit& circuit) {
  QuantumState state = init_zero(circuit.n_qubits);
  for (const auto& g : circuit.gates) apply_gate_inplace(state, g);
  return state;
}

// Eigenvalue of sum_m Z_m on basis index i: N - 2 * popcount(i).
inline double total_z_eigenvalue(int n_qubits, std::size_t index) {
  return static_cast<double>(n_qubits) -
         2.0 * static_cast<double>(std::popcount(index));
}

// <state| sum_m Z_m |state>
inline double expect_total_z(const QuantumState& state) {
  double e = 0.0;
  const auto& a = state.amplitudes();
  for (std::size_t i = 0; i < a.size(); ++i) {
    e += std::norm(a[i]) * total_z_eigenvalue(state.n_qubits(), i);
  }
  return e;
}

}  // namespace qsciml::qsim
