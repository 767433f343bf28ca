#pragma once

#include <map>
#include <vector>

#include "vidyn/core/so3.hpp"

namespace vidyn {

// Per-node unknown of the sliding-window optimizer: pose, velocity, IMU
// biases and mass-normalized external specific force (body frame).
struct DroneState {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
  Vec3 v = Vec3::Zero();
  Vec3 b_a = Vec3::Zero();
  Vec3 b_w = Vec3::Zero();
  Vec3 f_e = Vec3::Zero();
};

struct GroundTruthSample {
  double t = 0.0;
  Vec3 p = Vec3::Zero();
  Vec3 v = Vec3::Zero();
  Quat q = Quat::Identity();  // body -> world
  Vec3 f_e_true = Vec3::Zero();    // wind-induced force, body, m/s^2
  Vec3 f_aero_true = Vec3::Zero(); // wind-off aero force, body, m/s^2
};

struct ImuSample {
  double t;
  Vec3 w;  // rad/s
  Vec3 a;  // m/s^2
};

struct ThrustSample {
  double t;
  double T;  // mass-normalized collective thrust, m/s^2
};

struct FeatureObs {
  double t;
  int frame_id;
  int landmark_id;
  Vec2 px;
};

struct PinholeCamera {
  double fx = 300, fy = 300, cx = 320, cy = 240;
  int width = 640, height = 480;

  Vec2 project(const Vec3& pc) const {
    return {fx * pc.x() / pc.z() + cx, fy * pc.y() / pc.z() + cy};
  }
  bool in_image(const Vec2& px) const {
    return px.x() >= 0 && px.x() < width && px.y() >= 0 && px.y() < height;
  }
};

struct CameraRig {
  PinholeCamera cam;
  Quat q_bc = Quat::Identity();  // camera -> body
  Vec3 p_bc = Vec3::Zero();
  double imu_rate = 100.0, thrust_rate = 100.0, cam_rate = 10.0;
};

struct SensorLog {
  std::vector<ImuSample> imu;
  std::vector<ThrustSample> thrust;
  std::vector<FeatureObs> features;
  std::map<int, Vec3> landmarks;
  CameraRig rig;
};

}  // namespace vidyn
