#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>
#include <cmath>

namespace vidyn {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

inline Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0, -v.z(), v.y(), v.z(), 0, -v.x(), -v.y(), v.x(), 0;
  return m;
}

// Rotation-vector exponential map, returns a unit quaternion.
inline Quat quat_exp(const Vec3& phi) {
  const double theta = phi.norm();
  if (theta < 1e-12) {
    Quat q(1.0, 0.5 * phi.x(), 0.5 * phi.y(), 0.5 * phi.z());
    q.normalize();
    return q;
  }
  const Vec3 axis = phi / theta;
  return Quat(Eigen::AngleAxisd(theta, axis));
}

inline Mat3 so3_exp(const Vec3& phi) { return quat_exp(phi).toRotationMatrix(); }

// Logarithm map of a unit quaternion to a rotation vector.
inline Vec3 quat_log(const Quat& q_in) {
  Quat q = q_in.normalized();
  if (q.w() < 0) q.coeffs() *= -1.0;
  const Vec3 v(q.x(), q.y(), q.z());
  const double sin_half = v.norm();
  if (sin_half < 1e-12) return 2.0 * v;
  const double half = std::atan2(sin_half, q.w());
  return (2.0 * half / sin_half) * v;
}

inline Vec3 so3_log(const Mat3& R) { return quat_log(Quat(R)); }

// Right Jacobian of SO(3).
inline Mat3 so3_right_jacobian(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 W = skew(phi);
  if (theta < 1e-7) return Mat3::Identity() - 0.5 * W + (1.0 / 6.0) * W * W;
  const double t2 = theta * theta;
  return Mat3::Identity() - (1.0 - std::cos(theta)) / t2 * W +
         (theta - std::sin(theta)) / (t2 * theta) * W * W;
}

// Inverse of the right Jacobian.
inline Mat3 so3_right_jacobian_inv(const Vec3& phi) {
  const double theta = phi.norm();
  const Mat3 W = skew(phi);
  if (theta < 1e-7) return Mat3::Identity() + 0.5 * W + (1.0 / 12.0) * W * W;
  const double t2 = theta * theta;
  return Mat3::Identity() + 0.5 * W +
         (1.0 / t2 - (1.0 + std::cos(theta)) / (2.0 * theta * std::sin(theta))) * W * W;
}

inline Mat3 so3_left_jacobian_inv(const Vec3& phi) { return so3_right_jacobian_inv(-phi); }

// Quaternion integration step used by the gyro kinematics: q <- q (x) [1, 0.5*w*dt].
inline Quat quat_integrate(const Quat& q, const Vec3& omega, double dt) {
  Quat dq(1.0, 0.5 * omega.x() * dt, 0.5 * omega.y() * dt, 0.5 * omega.z() * dt);
  Quat out = q * dq;
  out.normalize();
  return out;
}

}  // namespace vidyn
