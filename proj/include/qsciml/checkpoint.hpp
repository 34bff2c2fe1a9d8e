#pragma once

// JSON checkpoints: model configuration, trainables, optimizer state and the
// physics constants a checkpoint was trained with. Doubles round-trip
// exactly through nlohmann::json.

#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "qsciml/errors.hpp"
#include "qsciml/qnn.hpp"
#include "qsciml/train.hpp"

namespace qsciml::checkpoint {

inline constexpr const char* kFormat = "qsciml-checkpoint";
inline constexpr int kVersion = 1;

struct Checkpoint {
  train::Mode mode = train::Mode::dqc;
  qnn::ModelConfig model{};
  qnn::ModelParams params{};
  train::AdamState adam{};
  train::LossWeights weights{};
  bve::PhysicsConstants consts{};
  std::uint64_t seed = 0;
  long iteration = 0;
};

inline nlohmann::json model_to_json(const qnn::ModelConfig& m) {
  return {{"n_qubits", m.n_qubits},
          {"ansatz_layers", m.ansatz_layers},
          {"fm_interleave_layers", m.fm_interleave_layers},
          {"closed_ring", m.closed_ring},
          {"sphere_map", qnn::to_string(m.sphere_map)},
          {"rng_seed", m.rng_seed}};
}

inline qnn::ModelConfig model_from_json(const nlohmann::json& j) {
  qnn::ModelConfig m;
  m.n_qubits = j.at("n_qubits").get<int>();
  m.ansatz_layers = j.at("ansatz_layers").get<int>();
  m.fm_interleave_layers = j.at("fm_interleave_layers").get<int>();
  m.closed_ring = j.at("closed_ring").get<bool>();
  m.sphere_map = qnn::sphere_map_from_string(j.at("sphere_map").get<std::string>());
  m.rng_seed = j.at("rng_seed").get<std::uint64_t>();
  m.validate();
  return m;
}

inline nlohmann::json to_json(const Checkpoint& c) {
  return {{"format", kFormat},
          {"version", kVersion},
          {"mode", train::to_string(c.mode)},
          {"model", model_to_json(c.model)},
          {"params", c.params.flatten()},
          {"seed", c.seed},
          {"iteration", c.iteration},
          {"physics", {{"omega", c.consts.omega}, {"radius", c.consts.radius}}},
          {"weights",
           {c.weights.alpha1, c.weights.alpha2, c.weights.alpha3,
            c.weights.alpha4}},
          {"adam",
           {{"m", c.adam.m},
            {"v", c.adam.v},
            {"step", c.adam.step},
            {"beta1", c.adam.beta1},
            {"beta2", c.adam.beta2},
            {"eps", c.adam.eps}}}};
}

inline Checkpoint from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != kFormat) {
    throw ConfigError("not a checkpoint file");
  }
  if (j.at("version").get<int>() != kVersion) {
    throw ConfigError("unsupported checkpoint version");
  }
  Checkpoint c;
  c.mode = train::mode_from_string(j.at("mode").get<std::string>());
  c.model = model_from_json(j.at("model"));
  c.params = qnn::ModelParams::unflatten(
      c.model, j.at("params").get<std::vector<double>>());
  c.params.validate(c.model);
  c.seed = j.at("seed").get<std::uint64_t>();
  c.iteration = j.at("iteration").get<long>();
  c.consts.omega = j.at("physics").at("omega").get<double>();
  c.consts.radius = j.at("physics").at("radius").get<double>();
  const auto w = j.at("weights").get<std::vector<double>>();
  if (w.size() != 4) throw ConfigError("checkpoint needs four loss weights");
  c.weights = {w[0], w[1], w[2], w[3]};
  const auto& a = j.at("adam");
  c.adam.m = a.at("m").get<std::vector<double>>();
  c.adam.v = a.at("v").get<std::vector<double>>();
  c.adam.step = a.at("step").get<long>();
  c.adam.beta1 = a.at("beta1").get<double>();
  c.adam.beta2 = a.at("beta2").get<double>();
  c.adam.eps = a.at("eps").get<double>();
  const std::size_t n = c.model.trainable_count();
  if (c.adam.m.size() != n || c.adam.v.size() != n) {
    throw ConfigError("optimizer state does not match the model");
  }
  return c;
}

inline void save(const Checkpoint& c, const std::filesystem::path& path) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp);
    if (!os) throw FileError("cannot write " + tmp.string());
    os << to_json(c).dump(1) << '\n';
    if (!os) throw FileError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline Checkpoint load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw FileError("cannot open checkpoint " + path.string());
  nlohmann::json j;
  try {
    is >> j;
    return from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("malformed checkpoint " + path.string() + ": " + e.what());
  }
}

}  // namespace qsciml::checkpoint
