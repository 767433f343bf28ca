#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "json.hpp"

#include "vidyn/estimator/run.hpp"
#include "vidyn/eval/metrics.hpp"
#include "vidyn/eval/report.hpp"
#include "vidyn/resmodel/train.hpp"
#include "vidyn/sim/dataset_io.hpp"
#include "vidyn/sim/sensors.hpp"

namespace vidyn {

// ---------------------------------------------------------------------------
// experiment configuration
// ---------------------------------------------------------------------------

// One experiment: what to simulate, how to train, which estimator modes to
// run, and where everything lives on disk.
struct RunConfig {
  std::string name = "experiment";

  std::string traj_kind = "circle";
  double duration = 20.0;
  double sim_dt = 0.01;
  TrajectoryParams traj;

  WorldConfig world;
  AeroConfig aero;
  WindField wind = WindField::none();
  SensorNoiseConfig sensors;
  double thrust_bias = 1.0;

  int landmark_count = 300;
  Vec3 room_min{-5, -5, 0};
  Vec3 room_max{5, 5, 3};

  TrainConfig train;
  double train_interval = 0.2;  // s of data per training sample
  std::vector<std::string> train_datasets;  // defaults to {dataset_dir}

  SolverConfig solver;
  ImuNoiseParams imu_noise;
  DynamicsNoiseParams dyn_noise;
  std::vector<std::string> modes{"vio"};

  uint64_t seed = 0;
  std::string dataset_dir;  // defaults to <out>/dataset
  std::string model_file;   // defaults to <out>/model.json
  std::string out_dir;      // defaults to $VIDYN_OUT_ROOT/<name> or ./out/<name>

  std::string dataset() const { return dataset_dir.empty() ? out_dir + "/dataset" : dataset_dir; }
  std::string model() const { return model_file.empty() ? out_dir + "/model.json" : model_file; }
};

namespace detail {

inline std::vector<double> as_vec(const Vec3& v) { return {v.x(), v.y(), v.z()}; }
inline Vec3 to_vec3(const nlohmann::json& j) {
  return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& c) {
  using detail::as_vec;
  nlohmann::json j;
  j["name"] = c.name;
  j["trajectory"] = {{"kind", c.traj_kind},
                     {"duration", c.duration},
                     {"dt", c.sim_dt},
                     {"radius_x", c.traj.radius_x},
                     {"radius_y", c.traj.radius_y},
                     {"period", c.traj.period},
                     {"height", c.traj.height},
                     {"z_amplitude", c.traj.z_amplitude},
                     {"z_period", c.traj.z_period},
                     {"amp_x", c.traj.amp_x},
                     {"amp_y", c.traj.amp_y},
                     {"gp_length_scale", c.traj.gp_length_scale},
                     {"gp_sigma", c.traj.gp_sigma},
                     {"gp_center", as_vec(c.traj.gp_center)},
                     {"yaw_follow_tangent", c.traj.yaw_follow_tangent},
                     {"yaw_fixed", c.traj.yaw_fixed},
                     {"ramp_time", c.traj.ramp_time}};
  j["world"] = {{"gravity", as_vec(c.world.gravity)},
                {"mass", c.world.mass},
                {"air_density", c.world.air_density}};
  j["aero"] = {{"fuselage_area", c.aero.fuselage_area},
               {"fuselage_cd", c.aero.fuselage_cd},
               {"induced_drag_k", c.aero.induced_drag_k},
               {"board_area", c.aero.board_area},
               {"board_normal", as_vec(c.aero.board_normal)}};
  switch (c.wind.kind) {
    case WindField::Kind::None: j["wind"] = {{"kind", "none"}}; break;
    case WindField::Kind::Constant:
      j["wind"] = {{"kind", "constant"},
                   {"velocity", as_vec(c.wind.constant)},
                   {"ramp_time", c.wind.ramp_time}};
      break;
    case WindField::Kind::SmoothedGrid: {
      // grids are only built from the "patch" shorthand; serialize the nodes
      std::vector<double> flat;
      for (const auto& s : c.wind.grid.samples)
        for (int a = 0; a < 3; ++a) flat.push_back(s[a]);
      j["wind"] = {{"kind", "grid"},
                   {"box_min", as_vec(c.wind.grid.box_min)},
                   {"box_max", as_vec(c.wind.grid.box_max)},
                   {"n", {c.wind.grid.nx, c.wind.grid.ny, c.wind.grid.nz}},
                   {"fade_margin", c.wind.grid.fade_margin},
                   {"ramp_time", c.wind.ramp_time},
                   {"samples", flat}};
      break;
    }
  }
  j["sensors"] = {{"sigma_w", c.sensors.sigma_w},   {"sigma_bw", c.sensors.sigma_bw},
                  {"sigma_a", c.sensors.sigma_a},   {"sigma_ba", c.sensors.sigma_ba},
                  {"sigma_ft", c.sensors.sigma_ft}, {"pixel_sigma", c.sensors.pixel_sigma},
                  {"imu_rate", c.sensors.imu_rate}, {"thrust_rate", c.sensors.thrust_rate},
                  {"cam_rate", c.sensors.cam_rate}};
  j["thrust_bias"] = c.thrust_bias;
  j["landmarks"] = {{"count", c.landmark_count},
                    {"room_min", as_vec(c.room_min)},
                    {"room_max", as_vec(c.room_max)}};
  j["train"] = {{"learning_rate", c.train.learning_rate},
                {"batch_size", c.train.batch_size},
                {"epochs", c.train.epochs},
                {"bias_augmentation_sigma", c.train.bias_augmentation_sigma},
                {"train_split", c.train.train_split},
                {"interval", c.train_interval},
                {"datasets", c.train_datasets}};
  j["solver"] = {{"max_iterations", c.solver.max_iterations},
                 {"huber_px", c.solver.huber_px},
                 {"pixel_sigma", c.solver.pixel_sigma},
                 {"w_f", c.solver.w_f},
                 {"keyframes", c.solver.keyframes},
                 {"recent_states", c.solver.recent_states},
                 {"keyframe_every", c.solver.keyframe_every},
                 {"parallax_px", c.solver.parallax_px},
                 {"min_baseline", c.solver.min_baseline},
                 {"max_landmark_px", c.solver.max_landmark_px}};
  j["imu_noise"] = {{"sigma_a", c.imu_noise.sigma_a},
                    {"sigma_w", c.imu_noise.sigma_w},
                    {"sigma_bw", c.imu_noise.sigma_bw},
                    {"sigma_ba", c.imu_noise.sigma_ba},
                    {"integration_error_scale", c.imu_noise.integration_error_scale}};
  j["dyn_noise"] = {{"sigma_ft", c.dyn_noise.sigma_ft},
                    {"sigma_w", c.dyn_noise.sigma_w},
                    {"sigma_bw", c.dyn_noise.sigma_bw},
                    {"w_f", c.dyn_noise.w_f},
                    {"integration_error_scale", c.dyn_noise.integration_error_scale}};
  j["modes"] = c.modes;
  j["seed"] = c.seed;
  j["paths"] = {{"dataset", c.dataset_dir}, {"model", c.model_file}, {"out", c.out_dir}};
  return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::to_vec3;
  RunConfig c;
  c.name = j.value("name", c.name);
  if (j.contains("trajectory")) {
    const auto& t = j.at("trajectory");
    c.traj_kind = t.value("kind", c.traj_kind);
    c.duration = t.value("duration", c.duration);
    c.sim_dt = t.value("dt", c.sim_dt);
    c.traj.radius_x = t.value("radius_x", c.traj.radius_x);
    c.traj.radius_y = t.value("radius_y", c.traj.radius_y);
    c.traj.period = t.value("period", c.traj.period);
    c.traj.height = t.value("height", c.traj.height);
    c.traj.z_amplitude = t.value("z_amplitude", c.traj.z_amplitude);
    c.traj.z_period = t.value("z_period", c.traj.z_period);
    c.traj.amp_x = t.value("amp_x", c.traj.amp_x);
    c.traj.amp_y = t.value("amp_y", c.traj.amp_y);
    c.traj.gp_length_scale = t.value("gp_length_scale", c.traj.gp_length_scale);
    c.traj.gp_sigma = t.value("gp_sigma", c.traj.gp_sigma);
    if (t.contains("gp_center")) c.traj.gp_center = to_vec3(t.at("gp_center"));
    c.traj.yaw_follow_tangent = t.value("yaw_follow_tangent", c.traj.yaw_follow_tangent);
    c.traj.yaw_fixed = t.value("yaw_fixed", c.traj.yaw_fixed);
    c.traj.ramp_time = t.value("ramp_time", c.traj.ramp_time);
  }
  if (j.contains("world")) {
    const auto& w = j.at("world");
    if (w.contains("gravity")) c.world.gravity = to_vec3(w.at("gravity"));
    c.world.mass = w.value("mass", c.world.mass);
    c.world.air_density = w.value("air_density", c.world.air_density);
  }
  if (j.contains("aero")) {
    const auto& a = j.at("aero");
    c.aero.fuselage_area = a.value("fuselage_area", c.aero.fuselage_area);
    c.aero.fuselage_cd = a.value("fuselage_cd", c.aero.fuselage_cd);
    c.aero.induced_drag_k = a.value("induced_drag_k", c.aero.induced_drag_k);
    c.aero.board_area = a.value("board_area", c.aero.board_area);
    if (a.contains("board_normal")) c.aero.board_normal = to_vec3(a.at("board_normal"));
  }
  if (j.contains("wind")) {
    const auto& w = j.at("wind");
    const std::string kind = w.value("kind", "none");
    if (kind == "none") {
      c.wind = WindField::none();
    } else if (kind == "constant") {
      c.wind = WindField::constant_wind(to_vec3(w.at("velocity")), w.value("ramp_time", 0.0));
    } else if (kind == "patch") {
      // gaussian bump of wind inside a box: peak `velocity` at `center`,
      // length scale `radius`
      const Vec3 center = to_vec3(w.at("center"));
      const Vec3 vel = to_vec3(w.at("velocity"));
      const double radius = w.at("radius");
      c.wind = WindField::from_function(
          to_vec3(w.at("box_min")), to_vec3(w.at("box_max")), 15, 15, 7,
          [center, vel, radius](const Vec3& p) -> Vec3 {
            return std::exp(-0.5 * (p - center).squaredNorm() / (radius * radius)) * vel;
          },
          w.value("fade_margin", 0.5));
      c.wind.ramp_time = w.value("ramp_time", 0.0);
    } else if (kind == "grid") {
      c.wind.kind = WindField::Kind::SmoothedGrid;
      c.wind.grid.box_min = to_vec3(w.at("box_min"));
      c.wind.grid.box_max = to_vec3(w.at("box_max"));
      c.wind.grid.nx = w.at("n").at(0);
      c.wind.grid.ny = w.at("n").at(1);
      c.wind.grid.nz = w.at("n").at(2);
      c.wind.grid.fade_margin = w.value("fade_margin", 0.5);
      c.wind.ramp_time = w.value("ramp_time", 0.0);
      const auto& flat = w.at("samples");
      const size_t n = static_cast<size_t>(c.wind.grid.nx) * c.wind.grid.ny * c.wind.grid.nz;
      if (flat.size() != 3 * n) throw std::invalid_argument("wind grid sample count mismatch");
      c.wind.grid.samples.resize(n);
      for (size_t i = 0; i < n; ++i)
        c.wind.grid.samples[i] = Vec3(flat[3 * i], flat[3 * i + 1], flat[3 * i + 2]);
    } else {
      throw std::invalid_argument("unknown wind kind: " + kind);
    }
  }
  if (j.contains("sensors")) {
    const auto& s = j.at("sensors");
    c.sensors.sigma_w = s.value("sigma_w", c.sensors.sigma_w);
    c.sensors.sigma_bw = s.value("sigma_bw", c.sensors.sigma_bw);
    c.sensors.sigma_a = s.value("sigma_a", c.sensors.sigma_a);
    c.sensors.sigma_ba = s.value("sigma_ba", c.sensors.sigma_ba);
    c.sensors.sigma_ft = s.value("sigma_ft", c.sensors.sigma_ft);
    c.sensors.pixel_sigma = s.value("pixel_sigma", c.sensors.pixel_sigma);
    c.sensors.imu_rate = s.value("imu_rate", c.sensors.imu_rate);
    c.sensors.thrust_rate = s.value("thrust_rate", c.sensors.thrust_rate);
    c.sensors.cam_rate = s.value("cam_rate", c.sensors.cam_rate);
  }
  c.thrust_bias = j.value("thrust_bias", c.thrust_bias);
  if (j.contains("landmarks")) {
    const auto& l = j.at("landmarks");
    c.landmark_count = l.value("count", c.landmark_count);
    if (l.contains("room_min")) c.room_min = to_vec3(l.at("room_min"));
    if (l.contains("room_max")) c.room_max = to_vec3(l.at("room_max"));
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
    c.train.batch_size = t.value("batch_size", c.train.batch_size);
    c.train.epochs = t.value("epochs", c.train.epochs);
    c.train.bias_augmentation_sigma =
        t.value("bias_augmentation_sigma", c.train.bias_augmentation_sigma);
    c.train.train_split = t.value("train_split", c.train.train_split);
    c.train_interval = t.value("interval", c.train_interval);
    c.train_datasets = t.value("datasets", c.train_datasets);
  }
  if (j.contains("solver")) {
    const auto& s = j.at("solver");
    c.solver.max_iterations = s.value("max_iterations", c.solver.max_iterations);
    c.solver.huber_px = s.value("huber_px", c.solver.huber_px);
    c.solver.pixel_sigma = s.value("pixel_sigma", c.solver.pixel_sigma);
    c.solver.w_f = s.value("w_f", c.solver.w_f);
    c.solver.keyframes = s.value("keyframes", c.solver.keyframes);
    c.solver.recent_states = s.value("recent_states", c.solver.recent_states);
    c.solver.keyframe_every = s.value("keyframe_every", c.solver.keyframe_every);
    c.solver.parallax_px = s.value("parallax_px", c.solver.parallax_px);
    c.solver.min_baseline = s.value("min_baseline", c.solver.min_baseline);
    c.solver.max_landmark_px = s.value("max_landmark_px", c.solver.max_landmark_px);
  }
  if (j.contains("imu_noise")) {
    const auto& n = j.at("imu_noise");
    c.imu_noise.sigma_a = n.value("sigma_a", c.imu_noise.sigma_a);
    c.imu_noise.sigma_w = n.value("sigma_w", c.imu_noise.sigma_w);
    c.imu_noise.sigma_bw = n.value("sigma_bw", c.imu_noise.sigma_bw);
    c.imu_noise.sigma_ba = n.value("sigma_ba", c.imu_noise.sigma_ba);
    c.imu_noise.integration_error_scale =
        n.value("integration_error_scale", c.imu_noise.integration_error_scale);
  }
  if (j.contains("dyn_noise")) {
    const auto& n = j.at("dyn_noise");
    c.dyn_noise.sigma_ft = n.value("sigma_ft", c.dyn_noise.sigma_ft);
    c.dyn_noise.sigma_w = n.value("sigma_w", c.dyn_noise.sigma_w);
    c.dyn_noise.sigma_bw = n.value("sigma_bw", c.dyn_noise.sigma_bw);
    c.dyn_noise.w_f = n.value("w_f", c.dyn_noise.w_f);
    c.dyn_noise.integration_error_scale =
        n.value("integration_error_scale", c.dyn_noise.integration_error_scale);
  }
  c.modes = j.value("modes", c.modes);
  c.seed = j.value("seed", c.seed);
  if (j.contains("paths")) {
    const auto& p = j.at("paths");
    c.dataset_dir = p.value("dataset", c.dataset_dir);
    c.model_file = p.value("model", c.model_file);
    c.out_dir = p.value("out", c.out_dir);
  }
  for (const auto& m : c.modes) parse_mode(m);  // validate early
  return c;
}

// Short hash of the canonical config serialization; recorded in every output
// so artifacts can be traced back to the exact configuration. Disk locations
// are excluded so relocating outputs does not change the experiment identity.
inline std::string config_hash(const RunConfig& c) {
  nlohmann::json j = config_to_json(c);
  j.erase("paths");
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(detail::fnv1a(j.dump())));
  return buf;
}

// `--set a.b.c=value` applied to the raw JSON before parsing; the value is
// itself parsed as JSON, falling back to a plain string.
inline void apply_override(nlohmann::json& j, const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos) throw std::invalid_argument("--set expects key=value: " + kv);
  std::string key = kv.substr(0, eq);
  for (auto& ch : key)
    if (ch == '.') ch = '/';
  nlohmann::json val;
  try {
    val = nlohmann::json::parse(kv.substr(eq + 1));
  } catch (const nlohmann::json::parse_error&) {
    val = kv.substr(eq + 1);
  }
  j[nlohmann::json::json_pointer("/" + key)] = val;
}

inline RunConfig load_config(const std::string& path, const std::vector<std::string>& overrides,
                             const std::optional<uint64_t>& seed,
                             const std::string& out_override) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file " + path);
  nlohmann::json j = nlohmann::json::parse(in);
  for (const auto& kv : overrides) apply_override(j, kv);
  RunConfig c = config_from_json(j);
  if (seed) c.seed = *seed;
  if (!out_override.empty()) c.out_dir = out_override;
  if (c.out_dir.empty()) {
    const char* root = std::getenv("VIDYN_OUT_ROOT");
    c.out_dir = (root ? std::string(root) : std::string("out")) + "/" + c.name;
  }
  return c;
}

// ---------------------------------------------------------------------------
// commands
// ---------------------------------------------------------------------------

namespace detail {

inline uint64_t hash_file(const std::string& path, uint64_t h) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return h;
  std::ostringstream ss;
  ss << in.rdbuf();
  for (unsigned char ch : ss.str()) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string dataset_hash(const std::string& dir) {
  uint64_t h = 1469598103934665603ull;
  for (const char* f : {"imu.csv", "thrust.csv", "features.csv", "landmarks.csv", "gt.csv",
                        "calib.json"})
    h = hash_file(dir + "/" + f, h);
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline void write_manifest(const std::string& path, const RunConfig& cfg,
                           nlohmann::json extra = {}) {
  nlohmann::json j = std::move(extra);
  j["config_hash"] = config_hash(cfg);
  j["seed"] = cfg.seed;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1) << "\n";
}

}  // namespace detail

// Simulates the configured flight and writes the sensor dataset directory.
inline std::string cmd_simulate(const RunConfig& cfg) {
  TrajectoryParams prm = cfg.traj;
  prm.seed = cfg.seed;
  const auto ref = generate_trajectory(cfg.traj_kind, prm, cfg.duration, cfg.sim_dt);
  const auto sim = simulate(ref, cfg.world, cfg.aero, cfg.wind);
  const auto landmarks =
      make_landmark_cloud(cfg.landmark_count, cfg.room_min, cfg.room_max, cfg.seed ^ 0x51ul);
  const auto rig = default_camera_rig(cfg.sensors);
  const auto log =
      synthesize_sensors(sim, cfg.sensors, landmarks, rig, cfg.thrust_bias, cfg.seed);
  const std::string dir = cfg.dataset();
  export_dataset(log, &sim.truth, dir);
  detail::write_manifest(dir + "/manifest.json", cfg,
                         {{"dataset_hash", detail::dataset_hash(dir)}});
  return dir;
}

// Trains the residual-force model on disturbance-free datasets and writes the
// model file plus a loss-curve CSV next to it.
inline std::string cmd_train(const RunConfig& cfg) {
  std::vector<std::string> dirs = cfg.train_datasets;
  if (dirs.empty()) dirs.push_back(cfg.dataset());

  std::vector<TrainingSample> samples;
  for (const auto& dir : dirs) {
    const auto ds = import_dataset(dir);
    if (!ds.truth) throw std::runtime_error("training dataset has no ground truth: " + dir);
    auto s = make_training_samples(ds.log, *ds.truth, cfg.world.gravity, cfg.train_interval);
    samples.insert(samples.end(), std::make_move_iterator(s.begin()),
                   std::make_move_iterator(s.end()));
  }
  if (samples.empty()) throw std::runtime_error("no training samples extracted");

  TrainConfig tc = cfg.train;
  tc.seed = cfg.seed;
  auto result = train(std::move(samples), tc, ResidualForceModel::make_tcn(cfg.seed));
  result.model.config_hash = config_hash(cfg);

  const std::string path = cfg.model();
  std::filesystem::create_directories(std::filesystem::path(path).parent_path());
  save_model(result.model, path);

  std::vector<std::vector<double>> rows;
  for (size_t e = 0; e < result.train_loss.size(); ++e)
    rows.push_back({double(e), result.train_loss[e], result.val_loss[e]});
  write_csv(std::filesystem::path(path).parent_path().string() + "/loss_curve.csv",
            {"epoch", "train_loss", "val_loss"}, rows);
  return path;
}

namespace detail {

inline void write_bias_csv(const std::vector<DroneState>& traj, const std::string& path) {
  std::vector<std::vector<double>> rows;
  for (const auto& x : traj)
    rows.push_back({x.t, x.b_w.x(), x.b_w.y(), x.b_w.z(), x.b_a.x(), x.b_a.y(), x.b_a.z()});
  write_csv(path, {"t", "bwx", "bwy", "bwz", "bax", "bay", "baz"}, rows);
}

}  // namespace detail

// Runs every configured estimator mode on the dataset; each mode gets its own
// output directory with trajectory/force/bias CSVs and solver diagnostics.
inline std::vector<std::string> cmd_run(const RunConfig& cfg) {
  const auto ds = import_dataset(cfg.dataset());

  bool need_model = false;
  for (const auto& m : cfg.modes)
    if (parse_mode(m) == EstimatorMode::Hybrid) need_model = true;
  ResidualForceModel model;
  if (need_model) {
    model = load_model(cfg.model());
    if (!model.config_hash.empty() && model.config_hash != config_hash(cfg))
      std::cerr << "warning: model " << cfg.model() << " was trained under config "
                << model.config_hash << ", current config is " << config_hash(cfg) << "\n";
  }

  std::vector<std::string> out_dirs;
  for (const auto& m : cfg.modes) {
    SolverConfig sc = cfg.solver;
    sc.mode = parse_mode(m);
    const auto res =
        run_sequence(ds, sc, sc.mode == EstimatorMode::Hybrid ? &model : nullptr,
                     cfg.imu_noise, cfg.dyn_noise, cfg.world.gravity);
    const std::string dir = cfg.out_dir + "/" + m;
    std::filesystem::create_directories(dir);
    write_trajectory_csv(res.traj, dir + "/traj_est.csv");
    detail::write_bias_csv(res.traj, dir + "/bias.csv");
    if (sc.mode != EstimatorMode::Vio) write_force_csv(res.force, dir + "/force_est.csv");
    write_diag_json(res, dir + "/diag.json");
    detail::write_manifest(dir + "/manifest.json", cfg, {{"mode", m}});
    out_dirs.push_back(dir);
  }
  return out_dirs;
}

// Scores every mode's run output against ground truth and writes report.md,
// metrics.csv, relative_errors.csv, and per-mode plot CSVs.
inline std::string cmd_evaluate(const RunConfig& cfg) {
  const auto ds = import_dataset(cfg.dataset());
  if (!ds.truth || ds.truth->empty())
    throw std::runtime_error("evaluation requires ground truth in " + cfg.dataset());
  const auto& truth = *ds.truth;

  std::vector<PoseSample> gt;
  for (const auto& g : truth) gt.push_back({g.t, g.p, g.q});
  std::vector<ForceSample> gt_force;
  for (const auto& g : truth) gt_force.push_back({g.t, g.f_e_true});
  double path_length = 0;
  for (size_t i = 1; i < truth.size(); ++i)
    path_length += (truth[i].p - truth[i - 1].p).norm();

  const std::string plots = cfg.out_dir + "/plots";
  std::filesystem::create_directories(plots);

  std::vector<ModeRunMetrics> cells;
  std::vector<std::vector<double>> rel_rows;
  for (const auto& m : cfg.modes) {
    const std::string dir = cfg.out_dir + "/" + m;
    const auto traj = read_trajectory_csv(dir + "/traj_est.csv");
    std::vector<PoseSample> est;
    for (const auto& x : traj) est.push_back({x.t, x.p, x.q});
    const auto pair = align_posyaw(est, gt);

    ModeRunMetrics cell;
    cell.dataset = cfg.name;
    cell.mode = m;
    cell.ate_t = ate_translation(pair);
    cell.ate_r_deg = ate_rotation(pair);
    for (const auto& row : relative_errors(pair, default_relative_lengths(path_length)))
      rel_rows.push_back({double(cells.size()), row.length, double(row.count), row.trans_rmse,
                          row.rot_rmse_deg});

    if (parse_mode(m) != EstimatorMode::Vio) {
      const auto force = read_force_csv(dir + "/force_est.csv");
      std::vector<ForceSample> fe;
      for (const auto& f : force) fe.push_back({f.t, f.f_e_body});
      // force estimates live on the camera-rate grid; associate within half a
      // frame instead of the 5 ms pose tolerance
      const double half_frame = 0.5 / ds.log.rig.cam_rate;
      const auto fr = force_rmse(fe, gt_force, gt, cfg.world.mass, half_frame);
      cell.force_rmse_N = fr.total_N;
      cell.has_force = true;

      // plot CSV: estimated vs true disturbance force over time (body frame)
      std::vector<std::vector<double>> rows;
      size_t j = 0;
      for (const auto& f : force) {
        while (j + 1 < truth.size() &&
               std::abs(truth[j + 1].t - f.t) <= std::abs(truth[j].t - f.t))
          ++j;
        rows.push_back({f.t, f.f_e_body.x(), f.f_e_body.y(), f.f_e_body.z(),
                        truth[j].f_e_true.x(), truth[j].f_e_true.y(), truth[j].f_e_true.z()});
      }
      write_csv(plots + "/force_" + m + ".csv",
                {"t", "fex_est", "fey_est", "fez_est", "fex_true", "fey_true", "fez_true"},
                rows);
    }
    std::filesystem::copy_file(dir + "/bias.csv", plots + "/bias_" + m + ".csv",
                               std::filesystem::copy_options::overwrite_existing);
    cells.push_back(cell);
  }

  // mode index refers to the row order of metrics.csv
  write_csv(cfg.out_dir + "/relative_errors.csv",
            {"mode_index", "length_m", "count", "trans_rmse_m", "rot_rmse_deg"}, rel_rows);
  compare_modes(cells, cfg.out_dir + "/report.md", cfg.out_dir + "/metrics.csv");
  detail::write_manifest(cfg.out_dir + "/manifest.json", cfg,
                         {{"path_length_m", path_length}});
  return cfg.out_dir + "/report.md";
}

// ---------------------------------------------------------------------------
// named end-to-end experiments
// ---------------------------------------------------------------------------

// Built-in experiment configurations for `repro <name>`. Each is fully seeded
// so a rerun reproduces every output bit-identically.
inline RunConfig repro_config(const std::string& name, const std::string& out_root) {
  RunConfig c;
  c.name = name;
  c.out_dir = out_root.empty() ? "" : out_root + "/" + name;
  c.sensors.sigma_w = 1e-4;
  c.sensors.sigma_a = 5e-3;
  c.sensors.sigma_bw = 1e-5;
  c.sensors.sigma_ba = 1e-4;
  c.sensors.sigma_ft = 5e-3;
  c.sensors.pixel_sigma = 0.3;
  c.imu_noise.sigma_a = 5e-3;
  c.imu_noise.sigma_w = 1e-4;
  c.imu_noise.sigma_bw = 1e-5;
  c.imu_noise.sigma_ba = 1e-4;
  c.dyn_noise.sigma_ft = 5e-3;
  c.dyn_noise.sigma_w = 1e-4;
  c.dyn_noise.sigma_bw = 1e-5;
  c.solver.pixel_sigma = 0.3;
  c.train.epochs = 6;
  c.train.learning_rate = 3e-4;

  if (name == "wind-circle") {
    // circle through a localized wind patch; the estimator modes that carry
    // an external-force state should localize the gust
    c.traj_kind = "circle";
    c.duration = 18.0;
    c.traj.radius_x = c.traj.radius_y = 1.5;
    c.traj.period = 6.0;
    c.aero.induced_drag_k = 0.3;
    c.wind = WindField::from_function(
        Vec3(-3, 0.2, 0), Vec3(3, 3.2, 3), 15, 15, 7,
        [](const Vec3& p) -> Vec3 {
          const Vec3 center(0, 1.7, 1.5);
          return std::exp(-0.5 * (p - center).squaredNorm() / (0.8 * 0.8)) * Vec3(2.2, 0, 0);
        });
    c.modes = {"vio", "dynamics", "hybrid"};
    return c;
  }
  if (name == "drag-lemniscate") {
    // strong quadratic drag, no wind: the learned residual model should absorb
    // the drag the point-mass thrust model misses
    c.traj_kind = "lemniscate";
    c.duration = 18.0;
    c.traj.amp_x = 2.0;
    c.traj.amp_y = 1.0;
    c.traj.period = 5.0;
    c.aero.fuselage_cd = 2.0;
    c.aero.fuselage_area = 0.01;
    c.modes = {"vio", "dynamics", "hybrid"};
    return c;
  }
  throw std::invalid_argument("unknown experiment: " + name +
                              " (available: wind-circle, drag-lemniscate)");
}

// End-to-end pipeline for a named experiment: simulate a disturbance-free
// training flight, train the residual model, simulate the test flight, run
// all modes, evaluate. Returns the report path.
inline std::string cmd_repro(const std::string& name, const std::string& out_root,
                             std::optional<uint64_t> seed) {
  RunConfig cfg = repro_config(name, out_root);
  if (seed) cfg.seed = *seed;
  if (cfg.out_dir.empty()) {
    const char* root = std::getenv("VIDYN_OUT_ROOT");
    cfg.out_dir = (root ? std::string(root) : std::string("out")) + "/" + cfg.name;
  }

  // disturbance-free training flight: same vehicle, no wind, different path
  RunConfig train_cfg = cfg;
  train_cfg.name = cfg.name + "-train";
  train_cfg.wind = WindField::none();
  train_cfg.traj_kind = "gp-random";
  train_cfg.traj.gp_sigma = 0.8;
  train_cfg.traj.gp_length_scale = 2.0;
  train_cfg.duration = 24.0;
  train_cfg.seed = cfg.seed + 1;
  train_cfg.dataset_dir = cfg.out_dir + "/train-dataset";
  train_cfg.out_dir = cfg.out_dir;
  train_cfg.model_file = cfg.model();
  cmd_simulate(train_cfg);
  cmd_train(train_cfg);

  cmd_simulate(cfg);
  cmd_run(cfg);
  return cmd_evaluate(cfg);
}

}  // namespace vidyn
