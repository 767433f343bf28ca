#pragma once

#include <functional>

#include "vidyn/core/so3.hpp"
#include "vidyn/preint/buffer.hpp"

namespace vidyn {

struct DynamicsNoiseParams {
  double sigma_ft = 0.1;   // m/s^2, per axis, per sample
  double sigma_w = 1e-3;   // rad/s, per sample
  double sigma_bw = 1e-4;  // rad/s/sqrt(s)
  double w_f = 1.0 / 25.0; // weight on the external-force zero prior (1/sigma_fe^2)
  // scale of the data-driven forward-Euler discretization-error term added to
  // the per-sample sigmas (0 = pure white-noise propagation)
  double integration_error_scale = 1.0;
};

struct ImuNoiseParams {
  double sigma_a = 1e-2;
  double sigma_w = 1e-3;
  double sigma_bw = 1e-4;
  double sigma_ba = 1e-3;
  double integration_error_scale = 1.0;
};

// Accumulated relative position/velocity/rotation over one interval, with
// covariance and the first-order bias Jacobians. Immutable once built; bias
// correction returns new values.
//
// Error-state ordering: (d_alpha, d_beta, d_theta, d_bw[, d_ba]), so the
// dynamics covariance is 12x12 and the IMU covariance is 15x15. The dynamics
// weight reads the top-left 6x6 block.
struct PreintegratedDelta {
  enum class Kind { Dynamics, Imu };
  Kind kind = Kind::Dynamics;
  Vec3 alpha = Vec3::Zero();
  Vec3 beta = Vec3::Zero();
  Quat gamma = Quat::Identity();
  double Dt = 0;
  Eigen::MatrixXd P;  // 12x12 (dynamics) or 15x15 (imu)
  Mat3 J_alpha_bw = Mat3::Zero();
  Mat3 J_beta_bw = Mat3::Zero();
  Mat3 J_gamma_bw = Mat3::Zero();
  Mat3 J_alpha_ba = Mat3::Zero();  // imu only
  Mat3 J_beta_ba = Mat3::Zero();   // imu only
  Vec3 bw_lin = Vec3::Zero();
  Vec3 ba_lin = Vec3::Zero();
};

using ResidualForceProvider = std::function<Vec3(double t)>;

inline ResidualForceProvider zero_residual_force() {
  return [](double) { return Vec3::Zero(); };
}

// Euler preintegration of the thrust-driven point-mass model, with
// first-order covariance propagation and bias-Jacobian accumulation.
inline PreintegratedDelta preintegrate_dynamics(const MeasurementBuffer& buf,
                                                const Vec3& bw_lin,
                                                const DynamicsNoiseParams& noise,
                                                const ResidualForceProvider& f_res =
                                                    zero_residual_force()) {
  buf.validate();
  if (!bw_lin.allFinite()) throw std::invalid_argument("non-finite bias linearization point");

  PreintegratedDelta d;
  d.kind = PreintegratedDelta::Kind::Dynamics;
  d.bw_lin = bw_lin;
  d.P = Eigen::MatrixXd::Zero(12, 12);

  Eigen::Matrix<double, 12, 12> P = Eigen::Matrix<double, 12, 12>::Zero();
  Vec3 prev_Rf = Vec3::Zero(), prev_w = Vec3::Zero();
  for (size_t i = 0; i < buf.size(); ++i) {
    const double dt = buf.step(i);
    const Vec3 w = buf.gyro[i] - bw_lin;
    const Vec3 f = Vec3(0, 0, buf.thrust[i]) + f_res(buf.ts[i]);
    const Mat3 R = d.gamma.toRotationMatrix();
    const Mat3 Rf_skew = R * skew(f);
    const Mat3 A = so3_exp(w * dt).transpose();
    const Mat3 Jr = so3_right_jacobian(w * dt);

    // forward-Euler truncation error, estimated from the sample-to-sample
    // change of the (rotated) inputs
    double s_f = noise.sigma_ft, s_w = noise.sigma_w;
    if (i > 0 && noise.integration_error_scale > 0) {
      const double ef = 0.5 * noise.integration_error_scale * (R * f - prev_Rf).norm();
      const double ew = 0.5 * noise.integration_error_scale * (w - prev_w).norm();
      s_f = std::sqrt(s_f * s_f + ef * ef);
      s_w = std::sqrt(s_w * s_w + ew * ew);
    }
    prev_Rf = R * f;
    prev_w = w;

    // covariance: P <- F P F' + G Q G'
    Eigen::Matrix<double, 12, 12> F = Eigen::Matrix<double, 12, 12>::Identity();
    F.block<3, 3>(0, 3) = Mat3::Identity() * dt;
    F.block<3, 3>(0, 6) = -0.5 * Rf_skew * dt * dt;
    F.block<3, 3>(3, 6) = -Rf_skew * dt;
    F.block<3, 3>(6, 6) = A;
    F.block<3, 3>(6, 9) = -Jr * dt;
    Eigen::Matrix<double, 12, 9> G = Eigen::Matrix<double, 12, 9>::Zero();
    G.block<3, 3>(0, 0) = 0.5 * R * dt * dt;
    G.block<3, 3>(3, 0) = R * dt;
    G.block<3, 3>(6, 3) = -Jr * dt;
    G.block<3, 3>(9, 6) = Mat3::Identity();
    Eigen::Matrix<double, 9, 9> Q = Eigen::Matrix<double, 9, 9>::Zero();
    Q.block<3, 3>(0, 0) = Mat3::Identity() * s_f * s_f;
    Q.block<3, 3>(3, 3) = Mat3::Identity() * s_w * s_w;
    Q.block<3, 3>(6, 6) = Mat3::Identity() * noise.sigma_bw * noise.sigma_bw * dt;
    P = F * P * F.transpose() + G * Q * G.transpose();
    P = 0.5 * (P + P.transpose());

    // bias Jacobians
    d.J_alpha_bw += d.J_beta_bw * dt - 0.5 * Rf_skew * d.J_gamma_bw * dt * dt;
    d.J_beta_bw += -Rf_skew * d.J_gamma_bw * dt;
    d.J_gamma_bw = A * d.J_gamma_bw - Jr * dt;

    // Euler recursion
    d.alpha += d.beta * dt + 0.5 * R * f * dt * dt;
    d.beta += R * f * dt;
    d.gamma = quat_integrate(d.gamma, w, dt);
    d.Dt += dt;
  }
  d.P = P;
  return d;
}

// Standard on-manifold IMU preintegration with the same Euler discretization.
inline PreintegratedDelta preintegrate_imu(const MeasurementBuffer& buf, const Vec3& bw_lin,
                                           const Vec3& ba_lin, const ImuNoiseParams& noise) {
  buf.validate();
  if (!buf.has_accel) throw std::invalid_argument("buffer has no accelerometer stream");

  PreintegratedDelta d;
  d.kind = PreintegratedDelta::Kind::Imu;
  d.bw_lin = bw_lin;
  d.ba_lin = ba_lin;

  Eigen::Matrix<double, 15, 15> P = Eigen::Matrix<double, 15, 15>::Zero();
  Vec3 prev_Rf = Vec3::Zero(), prev_w = Vec3::Zero();
  for (size_t i = 0; i < buf.size(); ++i) {
    const double dt = buf.step(i);
    const Vec3 w = buf.gyro[i] - bw_lin;
    const Vec3 f = buf.accel[i] - ba_lin;
    const Mat3 R = d.gamma.toRotationMatrix();
    const Mat3 Rf_skew = R * skew(f);
    const Mat3 A = so3_exp(w * dt).transpose();
    const Mat3 Jr = so3_right_jacobian(w * dt);

    double s_a = noise.sigma_a, s_w = noise.sigma_w;
    if (i > 0 && noise.integration_error_scale > 0) {
      const double ef = 0.5 * noise.integration_error_scale * (R * f - prev_Rf).norm();
      const double ew = 0.5 * noise.integration_error_scale * (w - prev_w).norm();
      s_a = std::sqrt(s_a * s_a + ef * ef);
      s_w = std::sqrt(s_w * s_w + ew * ew);
    }
    prev_Rf = R * f;
    prev_w = w;

    Eigen::Matrix<double, 15, 15> F = Eigen::Matrix<double, 15, 15>::Identity();
    F.block<3, 3>(0, 3) = Mat3::Identity() * dt;
    F.block<3, 3>(0, 6) = -0.5 * Rf_skew * dt * dt;
    F.block<3, 3>(3, 6) = -Rf_skew * dt;
    F.block<3, 3>(6, 6) = A;
    F.block<3, 3>(6, 9) = -Jr * dt;
    F.block<3, 3>(0, 12) = -0.5 * R * dt * dt;
    F.block<3, 3>(3, 12) = -R * dt;
    Eigen::Matrix<double, 15, 12> G = Eigen::Matrix<double, 15, 12>::Zero();
    G.block<3, 3>(0, 0) = 0.5 * R * dt * dt;
    G.block<3, 3>(3, 0) = R * dt;
    G.block<3, 3>(6, 3) = -Jr * dt;
    G.block<3, 3>(9, 6) = Mat3::Identity();
    G.block<3, 3>(12, 9) = Mat3::Identity();
    Eigen::Matrix<double, 12, 12> Q = Eigen::Matrix<double, 12, 12>::Zero();
    Q.block<3, 3>(0, 0) = Mat3::Identity() * s_a * s_a;
    Q.block<3, 3>(3, 3) = Mat3::Identity() * s_w * s_w;
    Q.block<3, 3>(6, 6) = Mat3::Identity() * noise.sigma_bw * noise.sigma_bw * dt;
    Q.block<3, 3>(9, 9) = Mat3::Identity() * noise.sigma_ba * noise.sigma_ba * dt;
    P = F * P * F.transpose() + G * Q * G.transpose();
    P = 0.5 * (P + P.transpose());

    d.J_alpha_bw += d.J_beta_bw * dt - 0.5 * Rf_skew * d.J_gamma_bw * dt * dt;
    d.J_beta_bw += -Rf_skew * d.J_gamma_bw * dt;
    d.J_gamma_bw = A * d.J_gamma_bw - Jr * dt;
    d.J_alpha_ba += d.J_beta_ba * dt - 0.5 * R * dt * dt;
    d.J_beta_ba += -R * dt;

    d.alpha += d.beta * dt + 0.5 * R * f * dt * dt;
    d.beta += R * f * dt;
    d.gamma = quat_integrate(d.gamma, w, dt);
    d.Dt += dt;
  }
  d.P = P;
  return d;
}

struct CorrectedDelta {
  Vec3 alpha, beta;
  Quat gamma;
};

// First-order correction of the preintegrated terms for a bias update away
// from the linearization point.
inline CorrectedDelta correct_bias_change(const PreintegratedDelta& d, const Vec3& bw_new,
                                          const Vec3& ba_new = Vec3::Zero()) {
  const Vec3 dbw = bw_new - d.bw_lin;
  CorrectedDelta c;
  c.alpha = d.alpha + d.J_alpha_bw * dbw;
  c.beta = d.beta + d.J_beta_bw * dbw;
  if (d.kind == PreintegratedDelta::Kind::Imu) {
    const Vec3 dba = ba_new - d.ba_lin;
    c.alpha += d.J_alpha_ba * dba;
    c.beta += d.J_beta_ba * dba;
  }
  c.gamma = d.gamma * quat_exp(d.J_gamma_bw * dbw);
  c.gamma.normalize();
  return c;
}

// Caller-side threshold: beyond this gyro-bias change the first-order
// correction is replaced by a full re-preintegration.
constexpr double kRepreintegrationThreshold = 0.02;  // rad/s

}  // namespace vidyn
