#pragma once

#include <chrono>
#include <cmath>

#include "vidyn/estimator/solver.hpp"
#include "vidyn/sim/dataset_io.hpp"

namespace vidyn {

struct FrameDiag {
  double t = 0;
  double cost = 0;
  int iterations = 0;
  double time_ms = 0;
  int n_features = 0;
};

struct ForceEstimate {
  double t = 0;
  Vec3 f_e_body = Vec3::Zero();
  Vec3 f_e_world = Vec3::Zero();
};

struct RunResult {
  std::vector<DroneState> traj;      // newest state after each frame
  std::vector<ForceEstimate> force;  // one per inter-frame interval (at its start)
  std::vector<FrameDiag> diag;
  double total_time_ms = 0;
};

namespace detail {

// Roll/pitch from a static interval: rotate the averaged accelerometer onto
// the upward axis; yaw is unobservable and left at zero.
inline DroneState bootstrap_from_imu(const SensorLog& log, const Vec3& gravity) {
  Vec3 a_mean = Vec3::Zero(), w_mean = Vec3::Zero();
  int n = 0;
  for (const auto& m : log.imu) {
    if (m.t > 0.2) break;
    a_mean += m.a;
    w_mean += m.w;
    ++n;
  }
  if (n == 0) throw std::invalid_argument("empty imu stream");
  a_mean /= n;
  DroneState x;
  x.b_w = w_mean / n;
  const Vec3 up = -gravity.normalized();
  x.q = Quat::FromTwoVectors(a_mean.normalized(), up).conjugate().normalized();
  return x;
}

}  // namespace detail

// Streams camera-rate frames through add/optimize/marginalize. The first
// state comes from ground truth when available, otherwise from a gravity
// alignment on the first 200 ms of IMU data.
inline RunResult run_sequence(const Dataset& ds, SolverConfig cfg,
                              const ResidualForceModel* model = nullptr,
                              const ImuNoiseParams& imu_noise = {},
                              const DynamicsNoiseParams& dyn_noise = {},
                              const Vec3& gravity = Vec3(0, 0, -9.81)) {
  cfg.validate();
  if (cfg.mode == EstimatorMode::Hybrid && !model)
    throw std::invalid_argument("hybrid mode requires a residual-force model");
  const auto& log = ds.log;
  if (log.imu.empty()) throw std::invalid_argument("dataset has no imu data");

  // group features onto the camera-rate frame grid
  const double cam_dt = 1.0 / log.rig.cam_rate;
  std::map<long, std::map<int, Vec2>> frames_obs;
  for (const auto& f : log.features)
    frames_obs[std::lround(f.t / cam_dt)][f.landmark_id] = f.px;
  const double t_end = log.imu.back().t;
  const long last_k = std::lround(t_end / cam_dt);

  SlidingWindow win;
  win.cfg = cfg;
  win.rig = log.rig;
  win.gravity = gravity;
  win.imu_noise = imu_noise;
  win.dyn_noise = dyn_noise;
  win.model = model;

  DroneState x0;
  if (ds.truth && !ds.truth->empty()) {
    const auto& g = ds.truth->front();
    x0.p = g.p;
    x0.q = g.q;
    x0.v = g.v;
  } else {
    x0 = detail::bootstrap_from_imu(log, gravity);
  }

  RunResult out;
  const auto t_start = std::chrono::steady_clock::now();
  double t_prev = 0;
  for (long k = 0; k <= last_k; ++k) {
    const double t = k * cam_dt;
    const auto obs_it = frames_obs.find(k);
    const std::map<int, Vec2> obs =
        obs_it != frames_obs.end() ? obs_it->second : std::map<int, Vec2>{};
    const auto f_start = std::chrono::steady_clock::now();
    FrameDiag d;
    d.t = t;
    d.n_features = static_cast<int>(obs.size());
    if (k == 0) {
      initialize_window(win, t, x0, obs);
      d.cost = evaluate_cost(win);
    } else {
      const auto buf = MeasurementBuffer::from_log(log, t_prev, t);
      add_measurements(win, t, obs, buf);
      auto opt = optimize(win);
      if (prune_landmarks(win) > 0) opt = optimize(win);
      d.iterations = opt.iterations;
      d.cost = opt.cost_trace.back();
      marginalize(win);
    }
    d.time_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - f_start)
                    .count();
    out.diag.push_back(d);
    out.traj.push_back(win.frames.back().x);
    out.traj.back().t = t;
    if (win.frames.size() >= 2) {
      // the state one behind the newest already carries a dynamics factor
      const Frame& f = win.frames[win.frames.size() - 2];
      if (f.has_ext) {
        ForceEstimate fe;
        fe.t = f.t;
        fe.f_e_body = f.x.f_e;
        fe.f_e_world = f.x.q.toRotationMatrix() * f.x.f_e;
        if (out.force.empty() || fe.t > out.force.back().t + 1e-9) out.force.push_back(fe);
      }
    }
    t_prev = t;
  }
  out.total_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start)
          .count();
  return out;
}

// ---------------------------------------------------------------------------
// output files
// ---------------------------------------------------------------------------

inline void write_trajectory_csv(const std::vector<DroneState>& traj, const std::string& path) {
  std::vector<std::vector<double>> rows;
  for (const auto& x : traj)
    rows.push_back({x.t, x.p.x(), x.p.y(), x.p.z(), x.q.w(), x.q.x(), x.q.y(), x.q.z(),
                    x.v.x(), x.v.y(), x.v.z()});
  write_csv(path, {"t", "px", "py", "pz", "qw", "qx", "qy", "qz", "vx", "vy", "vz"}, rows);
}

inline std::vector<DroneState> read_trajectory_csv(const std::string& path) {
  auto t = read_csv(path);
  const int ct = t.column("t"), cpx = t.column("px"), cpy = t.column("py"),
            cpz = t.column("pz"), cqw = t.column("qw"), cqx = t.column("qx"),
            cqy = t.column("qy"), cqz = t.column("qz"), cvx = t.column("vx"),
            cvy = t.column("vy"), cvz = t.column("vz");
  std::vector<DroneState> out;
  for (const auto& r : t.rows) {
    DroneState x;
    x.t = r[ct];
    x.p = {r[cpx], r[cpy], r[cpz]};
    x.q = Quat(r[cqw], r[cqx], r[cqy], r[cqz]);
    x.v = {r[cvx], r[cvy], r[cvz]};
    out.push_back(x);
  }
  return out;
}

inline void write_force_csv(const std::vector<ForceEstimate>& force, const std::string& path) {
  std::vector<std::vector<double>> rows;
  for (const auto& f : force)
    rows.push_back({f.t, f.f_e_body.x(), f.f_e_body.y(), f.f_e_body.z(), f.f_e_world.x(),
                    f.f_e_world.y(), f.f_e_world.z()});
  write_csv(path, {"t", "fex", "fey", "fez", "fex_w", "fey_w", "fez_w"}, rows);
}

inline std::vector<ForceEstimate> read_force_csv(const std::string& path) {
  auto t = read_csv(path);
  const int ct = t.column("t"), cx = t.column("fex"), cy = t.column("fey"),
            cz = t.column("fez"), cwx = t.column("fex_w"), cwy = t.column("fey_w"),
            cwz = t.column("fez_w");
  std::vector<ForceEstimate> out;
  for (const auto& r : t.rows)
    out.push_back({r[ct], {r[cx], r[cy], r[cz]}, {r[cwx], r[cwy], r[cwz]}});
  return out;
}

inline void write_diag_json(const RunResult& res, const std::string& path) {
  nlohmann::json j;
  j["total_time_ms"] = res.total_time_ms;
  j["frames"] = nlohmann::json::array();
  for (const auto& d : res.diag)
    j["frames"].push_back({{"t", d.t},
                           {"cost", d.cost},
                           {"iterations", d.iterations},
                           {"time_ms", d.time_ms},
                           {"n_features", d.n_features}});
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(1) << "\n";
}

}  // namespace vidyn
