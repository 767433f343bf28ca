#pragma once

#include <random>

#include "vidyn/core/types.hpp"
#include "vidyn/sim/config.hpp"
#include "vidyn/sim/simulate.hpp"

namespace vidyn {

// Random landmark cloud on the walls/ceiling of a box room around the scene.
inline std::map<int, Vec3> make_landmark_cloud(int count, const Vec3& room_min,
                                               const Vec3& room_max, uint64_t seed) {
  std::map<int, Vec3> out;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> face(0, 4);  // 4 walls + ceiling
  const Vec3 ext = room_max - room_min;
  for (int i = 0; i < count; ++i) {
    Vec3 p;
    switch (face(rng)) {
      case 0: p = {room_min.x(), room_min.y() + u01(rng) * ext.y(), room_min.z() + u01(rng) * ext.z()}; break;
      case 1: p = {room_max.x(), room_min.y() + u01(rng) * ext.y(), room_min.z() + u01(rng) * ext.z()}; break;
      case 2: p = {room_min.x() + u01(rng) * ext.x(), room_min.y(), room_min.z() + u01(rng) * ext.z()}; break;
      case 3: p = {room_min.x() + u01(rng) * ext.x(), room_max.y(), room_min.z() + u01(rng) * ext.z()}; break;
      default: p = {room_min.x() + u01(rng) * ext.x(), room_min.y() + u01(rng) * ext.y(), room_max.z()}; break;
    }
    out[i] = p;
  }
  return out;
}

inline CameraRig default_camera_rig(const SensorNoiseConfig& noise) {
  CameraRig rig;
  rig.cam = PinholeCamera{};
  // camera looks along body x: camera z -> body x, camera x -> body -y, camera y -> body -z
  Mat3 R_bc;
  R_bc.col(0) = Vec3(0, -1, 0);
  R_bc.col(1) = Vec3(0, 0, -1);
  R_bc.col(2) = Vec3(1, 0, 0);
  rig.q_bc = Quat(R_bc);
  rig.p_bc = Vec3(0.05, 0, 0);
  rig.imu_rate = noise.imu_rate;
  rig.thrust_rate = noise.thrust_rate;
  rig.cam_rate = noise.cam_rate;
  return rig;
}

// Corrupts the ideal sensor streams: gyro/accel white noise + random-walk
// biases, multiplicative systematic scale plus noise on the thrust, pixel
// noise on the landmark projections. Deterministic given the seed.
inline SensorLog synthesize_sensors(const SimResult& sim, const SensorNoiseConfig& noise,
                                    const std::map<int, Vec3>& landmarks, const CameraRig& rig,
                                    double thrust_bias, uint64_t seed) {
  noise.validate();
  if (sim.truth.empty()) throw std::invalid_argument("empty simulation result");
  SensorLog log;
  log.rig = rig;
  log.landmarks = landmarks;
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::normal_distribution<double> nd(0.0, 1.0);
  auto nvec = [&]() { return Vec3(nd(rng), nd(rng), nd(rng)); };

  const double t_end = sim.truth.back().t;
  const double dt_sim = sim.ideal.size() > 1 ? sim.ideal[1].t - sim.ideal[0].t : 0.01;

  auto ideal_at = [&](double t) {
    int i = std::clamp(static_cast<int>(std::round(t / dt_sim)), 0,
                       static_cast<int>(sim.ideal.size()) - 1);
    return sim.ideal[static_cast<size_t>(i)];
  };
  auto truth_at = [&](double t) {
    int i = std::clamp(static_cast<int>(std::round(t / dt_sim)), 0,
                       static_cast<int>(sim.truth.size()) - 1);
    return sim.truth[static_cast<size_t>(i)];
  };

  // IMU stream with bias random walks
  const double imu_dt = 1.0 / noise.imu_rate;
  Vec3 b_w = Vec3::Zero(), b_a = Vec3::Zero();
  for (long k = 0; k * imu_dt <= t_end + 1e-9; ++k) {
    const double t = k * imu_dt;
    const auto s = ideal_at(t);
    ImuSample m;
    m.t = t;
    m.w = s.omega + b_w + noise.sigma_w * nvec();
    m.a = s.specific_force + b_a + noise.sigma_a * nvec();
    log.imu.push_back(m);
    b_w += noise.sigma_bw * std::sqrt(imu_dt) * nvec();
    b_a += noise.sigma_ba * std::sqrt(imu_dt) * nvec();
  }

  const double th_dt = 1.0 / noise.thrust_rate;
  for (long k = 0; k * th_dt <= t_end + 1e-9; ++k) {
    const double t = k * th_dt;
    const auto s = ideal_at(t);
    log.thrust.push_back({t, thrust_bias * s.thrust + noise.sigma_ft * nd(rng)});
  }

  const double cam_dt = 1.0 / noise.cam_rate;
  int frame_id = 0;
  bool any_visible = false;
  for (long k = 0; k * cam_dt <= t_end + 1e-9; ++k, ++frame_id) {
    const double t = k * cam_dt;
    const auto g = truth_at(t);
    const Mat3 R_wb = g.q.toRotationMatrix();
    const Mat3 R_bc = rig.q_bc.toRotationMatrix();
    for (const auto& [id, lw] : landmarks) {
      const Vec3 pb = R_wb.transpose() * (lw - g.p);
      const Vec3 pc = R_bc.transpose() * (pb - rig.p_bc);
      if (pc.z() < 0.2) continue;
      Vec2 px = rig.cam.project(pc) + noise.pixel_sigma * Vec2(nd(rng), nd(rng));
      if (!rig.cam.in_image(px)) continue;
      log.features.push_back({t, frame_id, id, px});
      any_visible = true;
    }
  }
  if (!landmarks.empty() && !any_visible)
    throw std::runtime_error("no landmark ever visible: scene/camera mismatch");
  return log;
}

}  // namespace vidyn
