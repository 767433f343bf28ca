#pragma once

#include <stdexcept>

#include "vidyn/core/types.hpp"

namespace vidyn {

// Pinhole reprojection residual r = project(l in camera) - z with Jacobians
// w.r.t. body pose (right-multiplicative rotation perturbation) and landmark.
struct ReprojectionResidual {
  Vec2 e;
  Eigen::Matrix<double, 2, 3> J_p, J_th, J_l;
  bool behind_camera = false;
};

inline ReprojectionResidual reprojection_residual(const CameraRig& rig, const Vec3& p,
                                                  const Quat& q, const Vec3& landmark,
                                                  const Vec2& z) {
  ReprojectionResidual r;
  const Mat3 Rwb_t = q.toRotationMatrix().transpose();
  const Mat3 Rbc_t = rig.q_bc.toRotationMatrix().transpose();
  const Vec3 pb = Rwb_t * (landmark - p);
  Vec3 pc = Rbc_t * (pb - rig.p_bc);
  if (pc.z() < 1e-3) {
    // clamp the depth instead of dropping the factor: the residual stays
    // defined so an optimizer step cannot lower the cost by pushing a point
    // behind the camera
    r.behind_camera = true;
    pc.z() = 1e-3;
  }
  r.e = rig.cam.project(pc) - z;
  Eigen::Matrix<double, 2, 3> dpi;
  const double iz = 1.0 / pc.z();
  dpi << rig.cam.fx * iz, 0, -rig.cam.fx * pc.x() * iz * iz,
         0, rig.cam.fy * iz, -rig.cam.fy * pc.y() * iz * iz;
  const Eigen::Matrix<double, 2, 3> dpc = dpi * Rbc_t;
  r.J_l = dpc * Rwb_t;
  r.J_p = -dpc * Rwb_t;
  r.J_th = dpc * skew(pb);
  return r;
}

// Midpoint triangulation from two views (body poses), throws when the point
// lands behind either camera.
inline Vec3 triangulate_midpoint(const CameraRig& rig, const Vec3& p0, const Quat& q0,
                                 const Vec2& z0, const Vec3& p1, const Quat& q1,
                                 const Vec2& z1) {
  auto ray = [&](const Vec3& p, const Quat& q, const Vec2& z, Vec3& origin, Vec3& dir) {
    const Mat3 Rwb = q.toRotationMatrix();
    const Mat3 Rbc = rig.q_bc.toRotationMatrix();
    origin = p + Rwb * rig.p_bc;
    const Vec3 dc((z.x() - rig.cam.cx) / rig.cam.fx, (z.y() - rig.cam.cy) / rig.cam.fy, 1.0);
    dir = (Rwb * Rbc * dc).normalized();
  };
  Vec3 o0, d0, o1, d1;
  ray(p0, q0, z0, o0, d0);
  ray(p1, q1, z1, o1, d1);
  // closest points on the two rays
  const double a = d0.dot(d1);
  const Vec3 dO = o1 - o0;
  const double denom = 1.0 - a * a;
  if (denom < 1e-10) throw std::runtime_error("triangulation rays nearly parallel");
  const double t0 = (dO.dot(d0) - a * dO.dot(d1)) / denom;
  const double t1 = (a * dO.dot(d0) - dO.dot(d1)) / denom;
  if (t0 <= 0 || t1 <= 0) throw std::runtime_error("triangulation behind camera");
  return 0.5 * (o0 + t0 * d0 + o1 + t1 * d1);
}

}  // namespace vidyn
