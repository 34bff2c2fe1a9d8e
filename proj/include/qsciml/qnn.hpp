#pragma once

// The quantum model: spherical pre-processing, serial trainable-frequency
// feature map with interleaved ansatz blocks, hardware-efficient ansatz
// layers, total-magnetisation readout and learnable affine transforms.
//
// Circuit layout for features (t, x, y, z):
//
//   [encode t] [block] [encode x] [block] [encode y] [block] [encode z]
//   [ansatz layer] x ell
//
// Every block and layer applies RZ, RY, RZ on each qubit followed by a CNOT
// chain m -> m+1. Encoding of feature r on qubit m is RY(gamma_{r,m} * r~)
// with r~ = scale_r * r + shift_r.

#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "qsciml/errors.hpp"
#include "qsciml/qsim.hpp"

namespace qsciml::qnn {

inline constexpr int kFeatures = 4;  // t, x, y, z
inline constexpr std::array<const char*, kFeatures> kFeatureNames{"t", "x", "y",
                                                                  "z"};

// How (phi, lambda) are lifted onto the sphere.
//   printed:    x = sin(phi) cos(lambda), y = sin(phi) sin(lambda), z = cos(phi)
//   geographic: the same formula evaluated at colatitude pi/2 - phi, i.e.
//               x = cos(phi) cos(lambda), y = cos(phi) sin(lambda), z = sin(phi)
//
// With phi a latitude, the printed map sends (phi, lambda) and
// (-phi, lambda + pi) to the same point, so any model built on it is even
// under that reflection and cannot represent odd fields such as
// P_1^1(sin phi) cos(lambda).
enum class SphereMap { printed, geographic };

inline const char* to_string(SphereMap m) {
  return m == SphereMap::printed ? "printed" : "geographic";
}

inline SphereMap sphere_map_from_string(const std::string& s) {
  if (s == "printed") return SphereMap::printed;
  if (s == "geographic") return SphereMap::geographic;
  throw ConfigError("unknown sphere map '" + s + "'");
}

struct ModelConfig {
  int n_qubits = 4;
  int ansatz_layers = 4;
  // Total number of ansatz blocks inside the feature map, spread evenly over
  // the three gaps between encoded features.
  int fm_interleave_layers = 3;
  bool closed_ring = false;
  SphereMap sphere_map = SphereMap::geographic;
  std::uint64_t rng_seed = 0;

  int blocks() const { return fm_interleave_layers + ansatz_layers; }
  int theta_count() const { return 3 * n_qubits * blocks(); }
  int gamma_count() const { return kFeatures * n_qubits; }
  // Rotation-gate parameters: N * (3 ell + 13) for the default layout.
  int circuit_parameter_count() const { return theta_count() + gamma_count(); }
  int trainable_count() const {
    return circuit_parameter_count() + 2 * kFeatures + 2;
  }

  int gamma_offset() const { return theta_count(); }
  int input_affine_offset() const { return circuit_parameter_count(); }
  int output_affine_offset() const {
    return circuit_parameter_count() + 2 * kFeatures;
  }

  void validate() const {
    if (n_qubits < 1 || n_qubits > qsim::kMaxQubits) {
      throw ConfigError("n_qubits out of range: " + std::to_string(n_qubits));
    }
    if (ansatz_layers < 1) {
      throw ConfigError("ansatz_layers must be positive");
    }
    if (fm_interleave_layers < kFeatures - 1 ||
        fm_interleave_layers % (kFeatures - 1) != 0) {
      throw ConfigError(
          "fm_interleave_layers must be a positive multiple of 3, got " +
          std::to_string(fm_interleave_layers));
    }
  }
};

struct Affine {
  double scale = 1.0;
  double shift = 0.0;
  friend bool operator==(const Affine&, const Affine&) = default;
};

struct ModelParams {
  std::vector<double> theta;
  std::vector<double> gamma;
  std::array<Affine, kFeatures> input_affine{};
  Affine output_affine{};

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

  // Optimiser view: theta, gamma, input (scale, shift) per feature, output
  // (scale, shift).
  std::vector<double> flatten() const {
    std::vector<double> v;
    v.reserve(theta.size() + gamma.size() + 2 * kFeatures + 2);
    v.insert(v.end(), theta.begin(), theta.end());
    v.insert(v.end(), gamma.begin(), gamma.end());
    for (const auto& a : input_affine) {
      v.push_back(a.scale);
      v.push_back(a.shift);
    }
    v.push_back(output_affine.scale);
    v.push_back(output_affine.shift);
    return v;
  }

  static ModelParams unflatten(const ModelConfig& cfg,
                               std::span<const double> v) {
    if (static_cast<int>(v.size()) != cfg.trainable_count()) {
      throw ConfigError("parameter vector has " + std::to_string(v.size()) +
                        " entries, model expects " +
                        std::to_string(cfg.trainable_count()));
    }
    ModelParams p;
    auto it = v.begin();
    p.theta.assign(it, it + cfg.theta_count());
    it += cfg.theta_count();
    p.gamma.assign(it, it + cfg.gamma_count());
    it += cfg.gamma_count();
    for (auto& a : p.input_affine) {
      a.scale = *it++;
      a.shift = *it++;
    }
    p.output_affine.scale = *it++;
    p.output_affine.shift = *it++;
    return p;
  }

  void validate(const ModelConfig& cfg) const {
    if (static_cast<int>(theta.size()) != cfg.theta_count() ||
        static_cast<int>(gamma.size()) != cfg.gamma_count()) {
      throw ConfigError("parameter sizes (" + std::to_string(theta.size()) +
                        ", " + std::to_string(gamma.size()) +
                        ") do not match config (" +
                        std::to_string(cfg.theta_count()) + ", " +
                        std::to_string(cfg.gamma_count()) + ")");
    }
    for (double x : flatten()) {
      if (!std::isfinite(x)) throw ConfigError("non-finite model parameter");
    }
  }
};

// theta ~ U[0, 2 pi), gamma = 1, identity affines.
inline ModelParams init_params(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.rng_seed);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  ModelParams p;
  p.theta.resize(cfg.theta_count());
  for (auto& x : p.theta) x = angle(rng);
  p.gamma.assign(cfg.gamma_count(), 1.0);
  return p;
}

// All angles and frequencies zero, identity affines: the circuit is the
// identity and the output is N everywhere.
inline ModelParams identity_params(const ModelConfig& cfg) {
  cfg.validate();
  ModelParams p;
  p.theta.assign(cfg.theta_count(), 0.0);
  p.gamma.assign(cfg.gamma_count(), 0.0);
  return p;
}

// phi latitude (rad), lambda longitude (rad), t time.
struct CollocationPoint {
  double phi = 0.0;
  double lambda = 0.0;
  double t = 0.0;
};

inline std::string to_string(const CollocationPoint& p) {
  return "(phi=" + std::to_string(p.phi) + ", lambda=" +
         std::to_string(p.lambda) + ", t=" + std::to_string(p.t) + ")";
}

// Feature tuple (t, x, y, z). Generic so the derivative engine can push
// Taylor jets through the same code.
template <class T>
std::array<T, kFeatures> spherical_features(const T& phi, const T& lambda,
                                            const T& t, SphereMap map) {
  using std::cos;
  using std::sin;
  const T sp = sin(phi);
  const T cp = cos(phi);
  const T sl = sin(lambda);
  const T cl = cos(lambda);
  if (map == SphereMap::printed) return {t, sp * cl, sp * sl, cp};
  return {t, cp * cl, cp * sl, sp};
}

inline std::array<double, kFeatures> preprocess(
    const CollocationPoint& p, SphereMap map = SphereMap::printed) {
  return spherical_features(p.phi, p.lambda, p.t, map);
}

// One step of the circuit template, with indices into the parameter vectors.
struct LayoutOp {
  enum class Kind { encode, rotation, cnot };
  Kind kind = Kind::rotation;
  qsim::GateKind gate = qsim::GateKind::RY;
  int qubit = 0;    // target
  int control = 0;  // CNOT only
  int feature = 0;  // encode only
  int param = 0;    // index into theta (rotation) or gamma (encode)
};

inline std::vector<LayoutOp> circuit_layout(const ModelConfig& cfg) {
  cfg.validate();
  const int n = cfg.n_qubits;
  std::vector<LayoutOp> ops;
  int theta = 0;
  auto block = [&] {
    for (int q = 0; q < n; ++q) {
      for (auto g : {qsim::GateKind::RZ, qsim::GateKind::RY,
                     qsim::GateKind::RZ}) {
        ops.push_back({LayoutOp::Kind::rotation, g, q, 0, 0, theta++});
      }
    }
    for (int q = 0; q + 1 < n; ++q) {
      ops.push_back({LayoutOp::Kind::cnot, qsim::GateKind::CNOT, q + 1, q});
    }
    if (cfg.closed_ring && n > 2) {
      ops.push_back({LayoutOp::Kind::cnot, qsim::GateKind::CNOT, 0, n - 1});
    }
  };
  const int per_gap = cfg.fm_interleave_layers / (kFeatures - 1);
  for (int r = 0; r < kFeatures; ++r) {
    for (int q = 0; q < n; ++q) {
      ops.push_back({LayoutOp::Kind::encode, qsim::GateKind::RY, q, 0, r,
                     r * n + q});
    }
    if (r + 1 < kFeatures) {
      for (int b = 0; b < per_gap; ++b) block();
    }
  }
  for (int l = 0; l < cfg.ansatz_layers; ++l) block();
  return ops;
}

inline double encoded_feature(const ModelParams& params, int feature,
                              double value) {
  const auto& a = params.input_affine[feature];
  return a.scale * value + a.shift;
}

inline qsim::Circuit build_circuit(const ModelConfig& cfg,
                                   const ModelParams& params,
                                   const std::array<double, kFeatures>& f) {
  params.validate(cfg);
  qsim::Circuit c{cfg.n_qubits, {}};
  for (const auto& op : circuit_layout(cfg)) {
    switch (op.kind) {
      case LayoutOp::Kind::encode:
        c.gates.push_back(qsim::Gate::ry(
            op.qubit, params.gamma[op.param] *
                          encoded_feature(params, op.feature, f[op.feature])));
        break;
      case LayoutOp::Kind::rotation:
        c.gates.push_back(
            {op.gate, op.qubit, std::nullopt, params.theta[op.param]});
        break;
      case LayoutOp::Kind::cnot:
        c.gates.push_back(qsim::Gate::cnot(op.control, op.qubit));
        break;
    }
  }
  return c;
}

// <Phi(x)| sum Z |Phi(x)> before the output transform.
inline double raw_expectation(const ModelConfig& cfg, const ModelParams& params,
                              const CollocationPoint& p) {
  const auto f = preprocess(p, cfg.sphere_map);
  return qsim::expect_total_z(qsim::run_circuit(build_circuit(cfg, params, f)));
}

inline double forward(const ModelConfig& cfg, const ModelParams& params,
                      const CollocationPoint& p) {
  return params.output_affine.scale * raw_expectation(cfg, params, p) +
         params.output_affine.shift;
}

}  // namespace qsciml::qnn
