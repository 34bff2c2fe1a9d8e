#pragma once

// The `qsciml` command line: gen-artificial, sem, reduce, train, predict and
// evaluate. Every subcommand writes manifest.json next to its outputs.
//
// Exit codes: 0 success, 2 configuration / input error, 3 numerical failure
// or instability, 4 evaluation gate violated, 1 anything unexpected.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "qsciml/checkpoint.hpp"
#include "qsciml/data.hpp"
#include "qsciml/errors.hpp"
#include "qsciml/fom.hpp"
#include "qsciml/sem.hpp"
#include "qsciml/train.hpp"

namespace qsciml::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kOk = 0,
  kUnexpected = 1,
  kConfig = 2,
  kNumerical = 3,
  kGate = 4,
};

// Thrown when an evaluation gate is violated.
class GateFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// ----------------------------------------------------------------- manifest

class Manifest {
 public:
  Manifest(std::string subcommand, std::vector<std::string> argv)
      : start_(std::chrono::steady_clock::now()) {
    j_["subcommand"] = std::move(subcommand);
    j_["command_line"] = std::move(argv);
    j_["version"] = kVersion;
    j_["config"] = json::object();
    j_["inputs"] = json::array();
    j_["outputs"] = json::array();
    j_["seed"] = nullptr;
    j_["status"] = "ok";
  }

  json& config() { return j_["config"]; }
  json& root() { return j_; }
  void input(const fs::path& p) { j_["inputs"].push_back(p.string()); }
  void output(const fs::path& p) { j_["outputs"].push_back(p.string()); }
  void seed(std::uint64_t s) { j_["seed"] = s; }
  void fail(const std::string& why) {
    j_["status"] = "failed";
    j_["error"] = why;
  }

  // Temporary file plus rename, so readers never see a partial manifest.
  void write(const fs::path& dir) {
    j_["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_)
            .count();
    fs::create_directories(dir);
    const fs::path target = dir / "manifest.json";
    const fs::path tmp = dir / "manifest.json.tmp";
    {
      std::ofstream os(tmp);
      if (!os) throw FileError("cannot write " + tmp.string());
      os << j_.dump(2) << '\n';
    }
    fs::rename(tmp, target);
  }

 private:
  json j_;
  std::chrono::steady_clock::time_point start_;
};

// -------------------------------------------------------------------- gates

struct Gate {
  std::string metric;
  std::string op;  // <=, >=, <, >
  double threshold = 0.0;
};

inline Gate parse_gate(const std::string& text) {
  for (const char* op : {"<=", ">=", "<", ">"}) {
    const auto at = text.find(op);
    if (at == std::string::npos) continue;
    Gate g;
    g.metric = text.substr(0, at);
    g.op = op;
    const std::string rhs = text.substr(at + std::string(op).size());
    std::size_t used = 0;
    try {
      g.threshold = std::stod(rhs, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (g.metric.empty() || used == 0 || used != rhs.size()) {
      throw ConfigError("malformed gate '" + text + "'");
    }
    return g;
  }
  throw ConfigError("gate '" + text + "' has no comparison operator");
}

inline bool gate_holds(const Gate& g, double v) {
  if (g.op == "<=") return v <= g.threshold;
  if (g.op == ">=") return v >= g.threshold;
  if (g.op == "<") return v < g.threshold;
  return v > g.threshold;
}

// Metric names: {q}_mre_mean_t{time}, {q}_mre_median_t{time},
// {q}_mre_median_max, {q}_ppmcc_median, {q}_ppmcc_excluded with q = psi|zeta
// and time printed with %g.
inline std::map<std::string, double> metrics(const fom::FomReport& r,
                                             const std::string& q) {
  std::map<std::string, double> m;
  double worst = 0.0;
  for (std::size_t t = 0; t < r.times.size(); ++t) {
    char ts[32];
    std::snprintf(ts, sizeof ts, "%g", r.times[t]);
    m[q + "_mre_mean_t" + ts] = r.mre.mean[t];
    m[q + "_mre_median_t" + ts] = r.mre.median[t];
    worst = std::max(worst, r.mre.median[t]);
  }
  m[q + "_mre_median_max"] = worst;
  m[q + "_ppmcc_median"] = r.ppmcc.median;
  m[q + "_ppmcc_excluded"] = static_cast<double>(r.ppmcc.excluded);
  return m;
}

// ------------------------------------------------------------------ options

struct Physics {
  std::string preset = "unit";
  std::optional<double> omega;
  std::optional<double> radius;

  void add(CLI::App* app) {
    app->add_option("--preset", preset, "Physics preset: unit (omega=1, r=1) "
                                        "or earth (omega=7.292e-5, r=6.371e6)")
        ->check(CLI::IsMember({"unit", "earth"}));
    app->add_option("--omega", omega, "Angular velocity, overrides the preset");
    app->add_option("--radius", radius, "Sphere radius, overrides the preset");
  }

  bve::PhysicsConstants resolve() const {
    bve::PhysicsConstants c = preset == "earth" ? bve::PhysicsConstants::earth()
                                                : bve::PhysicsConstants::unit();
    if (omega) c.omega = *omega;
    if (radius) c.radius = *radius;
    c.validate();
    return c;
  }
};

struct GlobalOptions {
  int threads = 1;
  bool deterministic = true;
  Execution exec() const { return {threads, deterministic}; }
};

inline json physics_json(const bve::PhysicsConstants& c) {
  return {{"omega", c.omega}, {"radius", c.radius}};
}

inline std::vector<double> parse_list(const std::string& s) {
  std::vector<double> v;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      std::size_t used = 0;
      v.push_back(std::stod(tok, &used));
      if (used != tok.size()) throw std::invalid_argument(tok);
    } catch (const std::exception&) {
      throw ConfigError("bad number '" + tok + "' in list '" + s + "'");
    }
  }
  return v;
}

// ---------------------------------------------------------------- commands

struct GenArtificialArgs {
  int nlat = 100;
  int nlon = 200;
  std::string out_dir = ".";
  double radius = 1.0;
};

inline void cmd_gen_artificial(const GenArtificialArgs& a, Manifest& man) {
  man.config() = {{"nlat", a.nlat}, {"nlon", a.nlon}, {"radius", a.radius}};
  if (a.nlat < 4 || a.nlon < 4) {
    throw ConfigError("--nlat and --nlon must be >= 4");
  }
  fs::create_directories(a.out_dir);
  const auto psi = data::gen_artificial_initial(a.nlat, a.nlon);
  const auto zeta = data::zeta_of_initial(psi, data::artificial_modes(), a.radius);
  const fs::path pp = fs::path(a.out_dir) / "psi.field";
  const fs::path zp = fs::path(a.out_dir) / "zeta.field";
  data::save_field(psi, pp);
  data::save_field(zeta, zp);
  man.output(pp);
  man.output(zp);
}

struct SemArgs {
  std::string in;
  std::string out_dir = ".";
  double dt = 1e-3;
  double total_time = 3.0;
  double snapshot_interval = 0.3;
  int truncation = 42;
  double robert = 0.02;
  int grid_lat = 0;
  int grid_lon = 0;
  Physics physics;
};

inline void cmd_sem(const SemArgs& a, Manifest& man) {
  sem::SemConfig cfg;
  cfg.dt = a.dt;
  cfg.total_time = a.total_time;
  cfg.snapshot_interval = a.snapshot_interval;
  cfg.truncation = a.truncation;
  cfg.robert_coeff = a.robert;
  cfg.n_lat = a.grid_lat;
  cfg.n_lon = a.grid_lon;
  cfg.consts = a.physics.resolve();
  man.config() = {{"dt", cfg.dt},
                  {"total_time", cfg.total_time},
                  {"snapshot_interval", cfg.snapshot_interval},
                  {"truncation", cfg.truncation},
                  {"robert", cfg.robert_coeff},
                  {"gaussian_grid", {cfg.grid_lat(), cfg.grid_lon()}},
                  {"physics", physics_json(cfg.consts)}};
  cfg.validate();
  man.input(a.in);
  auto init = data::load_field(a.in);
  init.validate();
  if (init.quantity != data::Quantity::zeta) {
    throw ConfigError("--in must be a vorticity field");
  }
  fs::create_directories(a.out_dir);
  const fs::path pp = fs::path(a.out_dir) / "psi.field";
  const fs::path zp = fs::path(a.out_dir) / "zeta.field";

  sem::Evolution last;
  auto diagnostics = [&](const sem::Evolution& ev) {
    json d = json::array();
    for (std::size_t k = 0; k < ev.zeta.times.size(); ++k) {
      d.push_back({{"time", ev.zeta.times[k]},
                   {"enstrophy", ev.enstrophy[k]},
                   {"mean_vorticity", ev.mean_vorticity[k]}});
    }
    man.root()["diagnostics"] = d;
  };
  try {
    last = sem::evolve(init, cfg, [&](const sem::Evolution& ev) { last = ev; });
  } catch (const InstabilityError& e) {
    // Keep whatever was stable.
    if (!last.zeta.times.empty()) {
      data::save_field(last.psi, pp);
      data::save_field(last.zeta, zp);
      man.output(pp);
      man.output(zp);
      man.root()["last_stable_time"] = last.zeta.times.back();
      diagnostics(last);
    }
    man.root()["unstable_step"] = e.step();
    throw InstabilityError(
        std::string(e.what()) + "; last stable snapshot t=" +
            (last.zeta.times.empty() ? std::string("none")
                                     : std::to_string(last.zeta.times.back())),
        e.step());
  }
  data::save_field(last.psi, pp);
  data::save_field(last.zeta, zp);
  man.output(pp);
  man.output(zp);
  diagnostics(last);
}

struct ReduceArgs {
  std::string in;
  std::string out;
  long factor = 0;
  int nlat = 0;
  int nlon = 0;
  int time_stride = 1;
};

inline void cmd_reduce(const ReduceArgs& a, Manifest& man) {
  man.config() = {{"factor", a.factor},
                  {"nlat", a.nlat},
                  {"nlon", a.nlon},
                  {"time_stride", a.time_stride}};
  const bool spatial = a.factor > 0 || a.nlat > 0 || a.nlon > 0;
  if (a.factor > 0 && (a.nlat > 0 || a.nlon > 0)) {
    throw ConfigError("give either --factor or both --nlat and --nlon");
  }
  if (spatial && a.factor <= 0 && (a.nlat <= 0 || a.nlon <= 0)) {
    throw ConfigError("--nlat and --nlon must both be positive");
  }
  if (!spatial && a.time_stride == 1) {
    throw ConfigError("nothing to do: give --factor, --nlat/--nlon or --time-stride");
  }
  if (a.time_stride < 1) throw ConfigError("--time-stride must be >= 1");
  man.input(a.in);
  auto f = data::load_field(a.in);
  f.validate();
  f = data::select_times(f, a.time_stride);
  if (a.factor > 0) {
    f = data::block_reduce_mean(f, a.factor);
  } else if (spatial) {
    f = data::downsample_to(f, a.nlat, a.nlon);
  }
  if (fs::path(a.out).has_parent_path()) {
    fs::create_directories(fs::path(a.out).parent_path());
  }
  data::save_field(f, a.out);
  man.output(a.out);
}

struct TrainArgs {
  std::string mode = "dqc";
  int qubits = 4;
  int layers = 4;
  int fm_layers = 3;
  bool closed_ring = false;
  std::string sphere_map = "geographic";
  long iters = 30000;
  double lr = 1e-2;
  int batch = 1602;
  std::string batches = "350,300,25,350";
  double alpha4 = 0.1;
  std::string alphas;  // a1,a2,a3 overrides auto weighting
  std::uint64_t seed = 0;
  std::string ref_dir;
  std::string out_dir = ".";
  double pole_cutoff_deg = 88.0;
  long checkpoint_interval = 1000;
  double t_max = 3.0;
  double equator_dt = 0.1;
  bool strict_r_scaling = false;
  Physics physics;
};

inline train::TrainConfig train_config(const TrainArgs& a,
                                       const GlobalOptions& g) {
  train::TrainConfig c;
  c.mode = train::mode_from_string(a.mode);
  c.model.n_qubits = a.qubits;
  c.model.ansatz_layers = a.layers;
  c.model.fm_interleave_layers = a.fm_layers;
  c.model.closed_ring = a.closed_ring;
  c.model.sphere_map = qnn::sphere_map_from_string(a.sphere_map);
  c.model.rng_seed = a.seed;
  c.iterations = a.iters;
  c.learning_rate = a.lr;
  c.qcl_batch = a.batch;
  const auto b = parse_list(a.batches);
  if (b.size() != 4) throw ConfigError("--batches needs four sizes");
  for (int k = 0; k < 4; ++k) {
    if (b[k] != std::floor(b[k]) || b[k] <= 0) {
      throw ConfigError("--batches entries must be positive integers");
    }
    c.batch_sizes[k] = static_cast<int>(b[k]);
  }
  c.weights.alpha4 = a.alpha4;
  if (!a.alphas.empty()) {
    const auto w = parse_list(a.alphas);
    if (w.size() != 3) throw ConfigError("--alphas needs three weights");
    c.weights.alpha1 = w[0];
    c.weights.alpha2 = w[1];
    c.weights.alpha3 = w[2];
    c.auto_weight = false;
  }
  c.rng_seed = a.seed;
  c.pole_cutoff_deg = a.pole_cutoff_deg;
  c.checkpoint_interval = a.checkpoint_interval;
  c.t_max = a.t_max;
  c.equator_dt = a.equator_dt;
  c.strict_r_scaling = a.strict_r_scaling;
  c.consts = a.physics.resolve();
  c.exec = g.exec();
  c.validate();
  return c;
}

inline json train_config_json(const train::TrainConfig& c) {
  return {{"mode", train::to_string(c.mode)},
          {"model", checkpoint::model_to_json(c.model)},
          {"iterations", c.iterations},
          {"learning_rate", c.learning_rate},
          {"batches", c.batch_sizes},
          {"qcl_batch", c.qcl_batch},
          {"auto_weight", c.auto_weight},
          {"weights", c.weights.as_array()},
          {"pole_cutoff_deg", c.pole_cutoff_deg},
          {"checkpoint_interval", c.checkpoint_interval},
          {"t_max", c.t_max},
          {"equator_dt", c.equator_dt},
          {"strict_r_scaling", c.strict_r_scaling},
          {"physics", physics_json(c.consts)},
          {"threads", c.exec.threads},
          {"deterministic", c.exec.deterministic}};
}

inline train::Reference load_reference(const fs::path& dir, Manifest& man) {
  const fs::path pp = dir / "psi.field";
  const fs::path zp = dir / "zeta.field";
  man.input(pp);
  man.input(zp);
  train::Reference r{data::load_field(pp), data::load_field(zp)};
  if (r.psi.quantity != data::Quantity::psi ||
      r.zeta.quantity != data::Quantity::zeta) {
    throw ConfigError("reference directory must hold psi.field and zeta.field");
  }
  return r;
}

inline void cmd_train(const TrainArgs& a, const GlobalOptions& g,
                      Manifest& man) {
  const auto cfg = train_config(a, g);
  man.config() = train_config_json(cfg);
  man.seed(cfg.rng_seed);
  if (a.ref_dir.empty()) throw ConfigError("--ref-dir is required");
  const auto ref = load_reference(a.ref_dir, man);

  fs::create_directories(a.out_dir);
  const fs::path ckpt = fs::path(a.out_dir) / "checkpoint.json";
  const fs::path hist = fs::path(a.out_dir) / "history.txt";
  std::ofstream hs(hist);
  if (!hs) throw FileError("cannot write " + hist.string());
  hs << (cfg.mode == train::Mode::qcl ? "# iter total\n"
                                      : "# iter total L1 L2 L3 L4 lr\n");
  train::TrainHooks hooks;
  hooks.on_history = [&](const train::HistoryRow& r) {
    hs << train::format_history(r, cfg.mode);
    hs.flush();
  };
  hooks.on_checkpoint = [&](const train::TrainState& s) {
    checkpoint::Checkpoint c;
    c.mode = cfg.mode;
    c.model = cfg.model;
    c.params = s.params;
    c.adam = s.adam;
    c.weights = s.weights;
    c.consts = cfg.consts;
    c.seed = cfg.rng_seed;
    c.iteration = s.iteration;
    checkpoint::save(c, ckpt);
  };
  man.output(ckpt);
  man.output(hist);
  const auto st = train::train(cfg, ref, hooks);
  man.root()["weights_used"] = st.weights.as_array();
}

struct PredictArgs {
  std::string checkpoint;
  std::string like;  // template field file
  int nlat = 0;
  int nlon = 0;
  std::string times = "0,0.3,0.6,0.9,1.2,1.5,1.8,2.1,2.4,2.7,3";
  std::string out_dir = ".";
  bool zeta = false;  // also for QCL checkpoints
};

inline void cmd_predict(const PredictArgs& a, Manifest& man) {
  man.input(a.checkpoint);
  const auto c = checkpoint::load(a.checkpoint);
  data::Field grid;
  if (!a.like.empty()) {
    man.input(a.like);
    grid = data::load_field(a.like);
    grid.validate();
  } else {
    if (a.nlat < 1 || a.nlon < 1) {
      throw ConfigError("give --like or positive --nlat and --nlon");
    }
    grid.lats = data::equiangular_lats(a.nlat);
    grid.lons = data::equiangular_lons(a.nlon);
    grid.times = parse_list(a.times);
    grid.values.assign(grid.n_times() * grid.slice_size(), 0.0);
    grid.validate();
  }
  const bool with_zeta = a.zeta || c.mode == train::Mode::dqc;
  man.config() = {{"checkpoint_iteration", c.iteration},
                  {"model", checkpoint::model_to_json(c.model)},
                  {"physics", physics_json(c.consts)},
                  {"n_lat", grid.n_lat()},
                  {"n_lon", grid.n_lon()},
                  {"times", grid.times},
                  {"zeta", with_zeta}};
  man.seed(c.seed);
  fs::create_directories(a.out_dir);
  const fs::path pp = fs::path(a.out_dir) / "psi.field";
  data::save_field(train::predict_psi(c.model, c.params, grid), pp);
  man.output(pp);
  if (with_zeta) {
    const fs::path zp = fs::path(a.out_dir) / "zeta.field";
    data::save_field(train::predict_zeta(c.model, c.params, grid, c.consts), zp);
    man.output(zp);
  }
}

struct EvaluateArgs {
  std::vector<std::string> pred;
  std::vector<std::string> ref;
  std::string out = "report.txt";
  std::vector<std::string> gates;
};

inline void cmd_evaluate(const EvaluateArgs& a, Manifest& man) {
  if (a.pred.size() != a.ref.size() || a.pred.empty()) {
    throw ConfigError("give matching --pred and --ref files");
  }
  std::vector<Gate> gates;
  for (const auto& g : a.gates) gates.push_back(parse_gate(g));
  std::map<std::string, double> all;
  std::string text;
  for (std::size_t k = 0; k < a.pred.size(); ++k) {
    man.input(a.pred[k]);
    man.input(a.ref[k]);
    const auto pred = data::load_field(a.pred[k]);
    const auto ref = data::load_field(a.ref[k]);
    const std::string q = data::to_string(ref.quantity);
    const auto rep = fom::evaluate(pred, ref);
    text += fom::format_report(rep, q);
    for (const auto& [name, v] : metrics(rep, q)) all[name] = v;
  }
  if (fs::path(a.out).has_parent_path()) {
    fs::create_directories(fs::path(a.out).parent_path());
  }
  {
    std::ofstream os(a.out);
    if (!os) throw FileError("cannot write " + a.out);
    os << text;
  }
  man.output(a.out);
  json m = json::object();
  for (const auto& [name, v] : all) m[name] = v;
  man.root()["metrics"] = m;
  man.config() = {{"gates", a.gates}};
  std::string failed;
  json gj = json::array();
  for (const auto& g : gates) {
    const auto it = all.find(g.metric);
    if (it == all.end()) throw ConfigError("unknown gate metric '" + g.metric + "'");
    const bool ok = gate_holds(g, it->second);
    gj.push_back({{"metric", g.metric}, {"op", g.op}, {"threshold", g.threshold},
                  {"value", it->second}, {"pass", ok}});
    if (!ok) failed += (failed.empty() ? "" : ", ") + g.metric;
  }
  man.root()["gates"] = gj;
  std::cout << text;
  if (!failed.empty()) throw GateFailure("gate failed: " + failed);
}

// ---------------------------------------------------------------- dispatch

inline int run(int argc, const char* const* argv, std::ostream& err = std::cerr) {
  CLI::App app{"Quantum scientific machine learning for the barotropic "
               "vorticity equation"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  GlobalOptions g;
  app.add_option("--threads", g.threads,
                 "Worker threads (<= 0: all hardware threads)");
  app.add_flag("--deterministic,!--no-deterministic", g.deterministic,
               "Ordered reductions, bit-reproducible across thread counts");

  GenArtificialArgs ga;
  auto* gen = app.add_subcommand("gen-artificial",
                                 "Write the two-mode artificial psi and zeta at t=0");
  gen->add_option("--nlat", ga.nlat, "Latitude points");
  gen->add_option("--nlon", ga.nlon, "Longitude points");
  gen->add_option("--out-dir", ga.out_dir, "Output directory");
  gen->add_option("--radius", ga.radius, "Sphere radius for zeta");

  SemArgs sa;
  auto* semc = app.add_subcommand("sem", "Evolve an initial vorticity field "
                                         "with the spectral solver");
  semc->add_option("--in", sa.in, "Initial vorticity field file")->required();
  semc->add_option("--out-dir", sa.out_dir, "Output directory");
  semc->add_option("--dt", sa.dt, "Time step");
  semc->add_option("--total-time", sa.total_time, "Evolution time");
  semc->add_option("--snapshot-interval", sa.snapshot_interval,
                   "Time between snapshots, a whole number of steps");
  semc->add_option("--truncation", sa.truncation, "Triangular truncation L");
  semc->add_option("--robert", sa.robert, "Robert-Asselin filter coefficient");
  semc->add_option("--grid-lat", sa.grid_lat,
                   "Gaussian latitudes (0: (3L+1)/2 rounded up)");
  semc->add_option("--grid-lon", sa.grid_lon, "Transform longitudes (0: 3L+1)");
  sa.physics.add(semc);

  ReduceArgs ra;
  auto* red = app.add_subcommand("reduce", "Block-mean downsampling and time "
                                           "subsetting of a field file");
  red->add_option("--in", ra.in, "Input field file")->required();
  red->add_option("--out", ra.out, "Output field file")->required();
  red->add_option("--factor", ra.factor,
                  "Square block factor, partial edge blocks averaged (0: unused)");
  red->add_option("--nlat", ra.nlat, "Target latitudes with full blocks (0: unused)");
  red->add_option("--nlon", ra.nlon, "Target longitudes with full blocks (0: unused)");
  red->add_option("--time-stride", ra.time_stride, "Keep every k-th time");

  TrainArgs ta;
  auto* tr = app.add_subcommand("train", "Train the quantum model (qcl or dqc)");
  tr->add_option("--mode", ta.mode, "qcl (data only) or dqc (physics-informed)")
      ->check(CLI::IsMember({"qcl", "dqc"}));
  tr->add_option("--qubits", ta.qubits, "Number of qubits N");
  tr->add_option("--layers", ta.layers, "Ansatz layers after the feature map");
  tr->add_option("--fm-layers", ta.fm_layers,
                 "Ansatz blocks inside the feature map (multiple of 3)");
  tr->add_flag("--closed-ring", ta.closed_ring, "Close the CNOT chain into a ring");
  tr->add_option("--sphere-map", ta.sphere_map,
                 "geographic or printed spherical encoding")
      ->check(CLI::IsMember({"geographic", "printed"}));
  tr->add_option("--iters", ta.iters, "Training iterations");
  tr->add_option("--lr", ta.lr, "Adam learning rate");
  tr->add_option("--batch", ta.batch, "QCL batch size");
  tr->add_option("--batches", ta.batches, "DQC batch sizes for L1,L2,L3,L4");
  tr->add_option("--alpha4", ta.alpha4, "Weight of the PDE loss");
  tr->add_option("--alphas", ta.alphas,
                 "Fixed a1,a2,a3 (default: inverse mean square of the data)");
  tr->add_option("--seed", ta.seed, "Seed for initialisation and sampling");
  tr->add_option("--ref-dir", ta.ref_dir,
                 "Directory with reference psi.field and zeta.field")
      ->required();
  tr->add_option("--out-dir", ta.out_dir, "Output directory");
  tr->add_option("--pole-cutoff-deg", ta.pole_cutoff_deg,
                 "PDE collocation latitude bound in degrees");
  tr->add_option("--checkpoint-interval", ta.checkpoint_interval,
                 "Iterations between checkpoints (0: end only)");
  tr->add_option("--t-max", ta.t_max, "Time range of the equator and PDE terms");
  tr->add_option("--equator-dt", ta.equator_dt,
                 "Spacing of the equator times; the reference must hold them");
  tr->add_flag("--strict-r-scaling", ta.strict_r_scaling,
               "Divide the residual by r^2 (vorticity-equation units)");
  ta.physics.add(tr);

  PredictArgs pa;
  auto* pr = app.add_subcommand("predict", "Evaluate a checkpoint on a grid");
  pr->add_option("--checkpoint", pa.checkpoint, "Checkpoint file")->required();
  pr->add_option("--like", pa.like, "Field file whose grid and times are used");
  pr->add_option("--nlat", pa.nlat, "Equiangular latitudes when --like is absent");
  pr->add_option("--nlon", pa.nlon, "Equiangular longitudes when --like is absent");
  pr->add_option("--times", pa.times, "Comma-separated times when --like is absent");
  pr->add_option("--out-dir", pa.out_dir, "Output directory");
  pr->add_flag("--zeta", pa.zeta, "Also predict zeta for QCL checkpoints");

  EvaluateArgs ea;
  auto* ev = app.add_subcommand("evaluate", "Figures of merit against a reference");
  ev->add_option("--pred", ea.pred, "Predicted field file (repeatable)")
      ->required()
      ->default_str("");
  ev->add_option("--ref", ea.ref, "Reference field file (repeatable)")
      ->required()
      ->default_str("");
  ev->add_option("--out", ea.out, "Report file");
  ev->add_option("--gate", ea.gates,
                 "Threshold such as psi_mre_median_t3<=0.25 (repeatable)")
      ->default_str("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e, std::cout, err);
    return kConfig;
  }

  CLI::App* sub = app.get_subcommands().front();
  Manifest man(sub->get_name(), std::vector<std::string>(argv, argv + argc));
  man.root()["threads"] = g.threads;
  man.root()["deterministic"] = g.deterministic;
  std::string out_dir = ".";
  if (sub == gen) out_dir = ga.out_dir;
  if (sub == semc) out_dir = sa.out_dir;
  if (sub == red) out_dir = fs::path(ra.out).has_parent_path()
                                ? fs::path(ra.out).parent_path().string()
                                : ".";
  if (sub == tr) out_dir = ta.out_dir;
  if (sub == pr) out_dir = pa.out_dir;
  if (sub == ev) out_dir = fs::path(ea.out).has_parent_path()
                               ? fs::path(ea.out).parent_path().string()
                               : ".";

  int code = kOk;
  try {
    if (sub == gen) cmd_gen_artificial(ga, man);
    if (sub == semc) cmd_sem(sa, man);
    if (sub == red) cmd_reduce(ra, man);
    if (sub == tr) cmd_train(ta, g, man);
    if (sub == pr) cmd_predict(pa, man);
    if (sub == ev) cmd_evaluate(ea, man);
  } catch (const GateFailure& e) {
    err << "qsciml: " << e.what() << '\n';
    man.fail(e.what());
    code = kGate;
  } catch (const NumericalError& e) {
    err << "qsciml: numerical error: " << e.what() << '\n';
    man.fail(e.what());
    code = kNumerical;
  } catch (const ConfigError& e) {
    err << "qsciml: configuration error: " << e.what() << '\n';
    man.fail(e.what());
    code = kConfig;
  } catch (const StructuralError& e) {
    err << "qsciml: structural error: " << e.what() << '\n';
    man.fail(e.what());
    code = kConfig;
  } catch (const ContractError& e) {
    err << "qsciml: contract error: " << e.what() << '\n';
    man.fail(e.what());
    code = kConfig;
  } catch (const ParseError& e) {
    err << "qsciml: parse error: " << e.what() << '\n';
    man.fail(e.what());
    code = kConfig;
  } catch (const FileError& e) {
    err << "qsciml: file error: " << e.what() << '\n';
    man.fail(e.what());
    code = kConfig;
  } catch (const DegenerateError& e) {
    err << "qsciml: degenerate data: " << e.what() << '\n';
    man.fail(e.what());
    code = kConfig;
  } catch (const std::exception& e) {
    err << "qsciml: unexpected error: " << e.what() << '\n';
    man.fail(e.what());
    code = kUnexpected;
  }
  try {
    man.write(out_dir);
  } catch (const std::exception& e) {
    err << "qsciml: cannot write manifest: " << e.what() << '\n';
    if (code == kOk) code = kConfig;
  }
  return code;
}

}  // namespace qsciml::cli
