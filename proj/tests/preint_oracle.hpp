// Test-only oracle: a direct step-by-step transcription of the Euler
// preintegration recursion, kept independent of the library implementation.
#pragma once

#include "vidyn/core/so3.hpp"
#include "vidyn/preint/buffer.hpp"

namespace vidyn::testing {

struct OracleDelta {
  Vec3 alpha = Vec3::Zero();
  Vec3 beta = Vec3::Zero();
  Quat gamma = Quat::Identity();
};

// alpha_{i+1} = alpha_i + beta_i dt + 1/2 R(gamma_i) f_i dt^2
// beta_{i+1}  = beta_i + R(gamma_i) f_i dt
// gamma_{i+1} = gamma_i (x) [1, 1/2 (w_i - b_w) dt]
inline OracleDelta oracle_preintegrate(const MeasurementBuffer& buf, const Vec3& b_w,
                                       const std::vector<Vec3>& forces) {
  OracleDelta d;
  for (size_t i = 0; i < buf.size(); ++i) {
    const double dt = buf.step(i);
    const Mat3 R = d.gamma.toRotationMatrix();
    d.alpha = d.alpha + d.beta * dt + 0.5 * R * forces[i] * dt * dt;
    d.beta = d.beta + R * forces[i] * dt;
    const Vec3 w = buf.gyro[i] - b_w;
    Quat dq(1.0, 0.5 * w.x() * dt, 0.5 * w.y() * dt, 0.5 * w.z() * dt);
    d.gamma = d.gamma * dq;
    d.gamma.normalize();
  }
  return d;
}

}  // namespace vidyn::testing
