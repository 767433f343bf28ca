#pragma once

#include <iostream>

#include "vidyn/core/types.hpp"
#include "vidyn/preint/preintegrate.hpp"

namespace vidyn {

// Dynamics residual between two states: stacked [alpha - alpha_hat;
// beta - beta_hat; f_e] with the information weight from the top-left 6x6
// covariance block plus the external-force zero-prior weight w_f.
// The preintegrated terms are bias-corrected to x_k's current gyro bias.
struct DynamicsResidual {
  Eigen::Matrix<double, 9, 1> e;
  Eigen::Matrix<double, 9, 9> W;
  // Jacobians on the tangent space (right-multiplicative rotation perturbation)
  Eigen::Matrix<double, 9, 3> J_p0, J_th0, J_v0, J_bw0, J_fe0, J_p1, J_v1;
};

// fe_mean recenters the external-force prior row (zero for the plain
// dynamics factor, the averaged accel-minus-thrust discrepancy for the
// prior-centered baseline mode).
inline DynamicsResidual dynamics_residual(const PreintegratedDelta& d, const DroneState& x0,
                                          const DroneState& x1, const Vec3& gravity,
                                          double w_f, const Vec3& fe_mean = Vec3::Zero()) {
  if (d.kind != PreintegratedDelta::Kind::Dynamics)
    throw std::invalid_argument("dynamics_residual needs a dynamics-kind delta");
  const double Dt = d.Dt;
  const CorrectedDelta c = correct_bias_change(d, x0.b_w);
  const Mat3 R0t = x0.q.toRotationMatrix().transpose();

  const Vec3 dp = x1.p - x0.p - x0.v * Dt - 0.5 * gravity * Dt * Dt;
  const Vec3 dv = x1.v - x0.v - gravity * Dt;
  const Vec3 alpha = R0t * dp - 0.5 * x0.f_e * Dt * Dt;
  const Vec3 beta = R0t * dv - x0.f_e * Dt;

  DynamicsResidual r;
  r.e.segment<3>(0) = alpha - c.alpha;
  r.e.segment<3>(3) = beta - c.beta;
  r.e.segment<3>(6) = x0.f_e - fe_mean;

  r.W.setZero();
  const Mat3 P_aa = d.P.block<3, 3>(0, 0), P_ab = d.P.block<3, 3>(0, 3),
             P_bb = d.P.block<3, 3>(3, 3);
  Eigen::Matrix<double, 6, 6> P6;
  P6 << P_aa, P_ab, P_ab.transpose(), P_bb;
  Eigen::LDLT<Eigen::Matrix<double, 6, 6>> ldlt(P6);
  if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
      ldlt.vectorD().minCoeff() > 1e-18) {
    r.W.topLeftCorner<6, 6>() =
        ldlt.solve(Eigen::Matrix<double, 6, 6>::Identity());
  } else {
    std::cerr << "warning: singular preintegration covariance, using pseudo-inverse\n";
    r.W.topLeftCorner<6, 6>() = P6.completeOrthogonalDecomposition().pseudoInverse();
  }
  r.W.bottomRightCorner<3, 3>() = w_f * Mat3::Identity();
  r.W = 0.5 * (r.W + r.W.transpose()).eval();

  r.J_p0.setZero();
  r.J_th0.setZero();
  r.J_v0.setZero();
  r.J_bw0.setZero();
  r.J_fe0.setZero();
  r.J_p1.setZero();
  r.J_v1.setZero();

  r.J_p0.block<3, 3>(0, 0) = -R0t;
  r.J_p1.block<3, 3>(0, 0) = R0t;
  r.J_v0.block<3, 3>(0, 0) = -R0t * Dt;
  r.J_v0.block<3, 3>(3, 0) = -R0t;
  r.J_v1.block<3, 3>(3, 0) = R0t;
  r.J_th0.block<3, 3>(0, 0) = skew(R0t * dp);
  r.J_th0.block<3, 3>(3, 0) = skew(R0t * dv);
  r.J_bw0.block<3, 3>(0, 0) = -d.J_alpha_bw;
  r.J_bw0.block<3, 3>(3, 0) = -d.J_beta_bw;
  r.J_fe0.block<3, 3>(0, 0) = -0.5 * Dt * Dt * Mat3::Identity();
  r.J_fe0.block<3, 3>(3, 0) = -Dt * Mat3::Identity();
  r.J_fe0.block<3, 3>(6, 0) = Mat3::Identity();
  return r;
}

// Full IMU preintegration residual with rotational error and bias random-walk
// rows, ordered (alpha, beta, theta, b_w, b_a).
struct ImuResidual {
  Eigen::Matrix<double, 15, 1> e;
  Eigen::Matrix<double, 15, 15> W;
  Eigen::Matrix<double, 15, 3> J_p0, J_th0, J_v0, J_bw0, J_ba0, J_p1, J_th1, J_v1, J_bw1,
      J_ba1;
};

inline ImuResidual imu_residual(const PreintegratedDelta& d, const DroneState& x0,
                                const DroneState& x1, const Vec3& gravity) {
  if (d.kind != PreintegratedDelta::Kind::Imu)
    throw std::invalid_argument("imu_residual needs an imu-kind delta");
  const double Dt = d.Dt;
  const CorrectedDelta c = correct_bias_change(d, x0.b_w, x0.b_a);
  const Mat3 R0t = x0.q.toRotationMatrix().transpose();

  const Vec3 dp = x1.p - x0.p - x0.v * Dt - 0.5 * gravity * Dt * Dt;
  const Vec3 dv = x1.v - x0.v - gravity * Dt;
  const Quat q_err = c.gamma.conjugate() * x0.q.conjugate() * x1.q;
  const Vec3 r_theta = quat_log(q_err);

  ImuResidual r;
  r.e.segment<3>(0) = R0t * dp - c.alpha;
  r.e.segment<3>(3) = R0t * dv - c.beta;
  r.e.segment<3>(6) = r_theta;
  r.e.segment<3>(9) = x1.b_w - x0.b_w;
  r.e.segment<3>(12) = x1.b_a - x0.b_a;

  Eigen::Matrix<double, 15, 15> P = d.P;
  Eigen::LDLT<Eigen::Matrix<double, 15, 15>> ldlt(P);
  if (ldlt.info() == Eigen::Success && ldlt.vectorD().minCoeff() > 1e-20) {
    r.W = ldlt.solve(Eigen::Matrix<double, 15, 15>::Identity());
  } else {
    std::cerr << "warning: singular IMU covariance, using pseudo-inverse\n";
    r.W = P.completeOrthogonalDecomposition().pseudoInverse();
  }
  r.W = 0.5 * (r.W + r.W.transpose()).eval();

  r.J_p0.setZero();
  r.J_th0.setZero();
  r.J_v0.setZero();
  r.J_bw0.setZero();
  r.J_ba0.setZero();
  r.J_p1.setZero();
  r.J_th1.setZero();
  r.J_v1.setZero();
  r.J_bw1.setZero();
  r.J_ba1.setZero();

  r.J_p0.block<3, 3>(0, 0) = -R0t;
  r.J_p1.block<3, 3>(0, 0) = R0t;
  r.J_v0.block<3, 3>(0, 0) = -R0t * Dt;
  r.J_v0.block<3, 3>(3, 0) = -R0t;
  r.J_v1.block<3, 3>(3, 0) = R0t;
  r.J_th0.block<3, 3>(0, 0) = skew(R0t * dp);
  r.J_th0.block<3, 3>(3, 0) = skew(R0t * dv);

  const Mat3 Jl_inv = so3_left_jacobian_inv(r_theta);
  r.J_th1.block<3, 3>(6, 0) = so3_right_jacobian_inv(r_theta);
  r.J_th0.block<3, 3>(6, 0) = -Jl_inv * c.gamma.toRotationMatrix().transpose();
  r.J_bw0.block<3, 3>(6, 0) =
      -Jl_inv * so3_right_jacobian(d.J_gamma_bw * (x0.b_w - d.bw_lin)) * d.J_gamma_bw;

  r.J_bw0.block<3, 3>(0, 0) = -d.J_alpha_bw;
  r.J_bw0.block<3, 3>(3, 0) = -d.J_beta_bw;
  r.J_ba0.block<3, 3>(0, 0) = -d.J_alpha_ba;
  r.J_ba0.block<3, 3>(3, 0) = -d.J_beta_ba;

  r.J_bw0.block<3, 3>(9, 0) = -Mat3::Identity();
  r.J_bw1.block<3, 3>(9, 0) = Mat3::Identity();
  r.J_ba0.block<3, 3>(12, 0) = -Mat3::Identity();
  r.J_ba1.block<3, 3>(12, 0) = Mat3::Identity();
  return r;
}

}  // namespace vidyn
