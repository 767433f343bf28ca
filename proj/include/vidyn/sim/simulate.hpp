#pragma once

#include <functional>
#include <vector>

#include "vidyn/core/types.hpp"
#include "vidyn/sim/aero.hpp"
#include "vidyn/sim/config.hpp"
#include "vidyn/sim/trajectory.hpp"
#include "vidyn/sim/wind.hpp"

namespace vidyn {

struct VehicleState {
  Vec3 p, v;
  Quat q;  // body -> world
};

// Point-mass translational dynamics with gyro-driven attitude kinematics.
// Inputs: collective thrust T (mass-normalized) and body rates omega.
inline void state_derivative(const VehicleState& s, double T, const Vec3& omega,
                             const WorldConfig& world, const AeroConfig& aero,
                             const WindField& wind, double t, Vec3& dp, Vec3& dv,
                             Vec3& dq_omega) {
  const Mat3 R = s.q.toRotationMatrix();
  const Vec3 v_rel_w = s.v - wind.velocity(s.p, t);
  const Vec3 f_aero_b = aero_force_body(aero, world.air_density, R.transpose() * v_rel_w) /
                        world.mass;
  dp = s.v;
  dv = R * (Vec3(0, 0, T) + f_aero_b) + world.gravity;
  dq_omega = omega;
}

// One RK4 step with inputs sampled at t, t+dt/2, t+dt (T0/Tm/T1, w0/wm/w1).
// The quaternion is integrated component-wise (q_dot = 1/2 q (x) [0, w]) so
// the full step keeps 4th-order accuracy; stages are renormalized before the
// rotation matrix is read.
inline VehicleState rk4_step(const VehicleState& s, double t, double dt, double T0, double Tm,
                             double T1, const Vec3& w0, const Vec3& wm, const Vec3& w1,
                             const WorldConfig& world, const AeroConfig& aero,
                             const WindField& wind) {
  auto q_dot = [](const Quat& q, const Vec3& w) {
    const Quat wq(0.0, w.x(), w.y(), w.z());
    Quat d = q * wq;
    d.coeffs() *= 0.5;
    return d;
  };
  auto advance = [](const VehicleState& base, const Vec3& dp, const Vec3& dv, const Quat& dq,
                    double h) {
    VehicleState n;
    n.p = base.p + dp * h;
    n.v = base.v + dv * h;
    n.q.coeffs() = base.q.coeffs() + h * dq.coeffs();
    n.q.normalize();
    return n;
  };
  Vec3 dp1, dv1, om, dp2, dv2, dp3, dv3, dp4, dv4;
  state_derivative(s, T0, w0, world, aero, wind, t, dp1, dv1, om);
  const Quat dq1 = q_dot(s.q, w0);
  VehicleState s2 = advance(s, dp1, dv1, dq1, dt / 2);
  state_derivative(s2, Tm, wm, world, aero, wind, t + dt / 2, dp2, dv2, om);
  const Quat dq2 = q_dot(s2.q, wm);
  VehicleState s3 = advance(s, dp2, dv2, dq2, dt / 2);
  state_derivative(s3, Tm, wm, world, aero, wind, t + dt / 2, dp3, dv3, om);
  const Quat dq3 = q_dot(s3.q, wm);
  VehicleState s4 = advance(s, dp3, dv3, dq3, dt);
  state_derivative(s4, T1, w1, world, aero, wind, t + dt, dp4, dv4, om);
  const Quat dq4 = q_dot(s4.q, w1);
  VehicleState out;
  out.p = s.p + dt / 6.0 * (dp1 + 2 * dp2 + 2 * dp3 + dp4);
  out.v = s.v + dt / 6.0 * (dv1 + 2 * dv2 + 2 * dv3 + dv4);
  out.q.coeffs() =
      s.q.coeffs() + dt / 6.0 * (dq1.coeffs() + 2 * dq2.coeffs() + 2 * dq3.coeffs() + dq4.coeffs());
  out.q.normalize();
  return out;
}

// Ideal (noise-free) sensor values recorded while simulating.
struct IdealSensorSample {
  double t;
  Vec3 omega;           // body rates, rad/s
  Vec3 specific_force;  // accelerometer ideal, body, m/s^2
  double thrust;        // collective thrust, m/s^2
};

struct SimResult {
  std::vector<GroundTruthSample> truth;
  std::vector<IdealSensorSample> ideal;
};

namespace detail {

// Thrust direction and magnitude that realize acceleration a at velocity v
// under the configured aero model; fixed-point over the attitude since the
// board force depends on it.
inline void flatness_invert(const Vec3& a, const Vec3& v, const Vec3& p, double t, double yaw,
                            const WorldConfig& world, const AeroConfig& aero,
                            const WindField& wind, Quat& q_out, double& T_out) {
  const Vec3 v_rel_w = v - wind.velocity(p, t);
  Quat q = q_out;  // warm start from previous attitude
  double T = 0;
  for (int it = 0; it < 4; ++it) {
    const Mat3 R = q.toRotationMatrix();
    const Vec3 f_aero_w =
        R * aero_force_body(aero, world.air_density, R.transpose() * v_rel_w) / world.mass;
    const Vec3 thrust_w = a - world.gravity - f_aero_w;
    T = thrust_w.norm();
    if (T < 1e-6) throw std::runtime_error("reference demands near-zero thrust");
    const Vec3 zb = thrust_w / T;
    // yaw-constrained attitude: body z along thrust, x toward desired heading
    const Vec3 xc(std::cos(yaw), std::sin(yaw), 0);
    Vec3 yb = zb.cross(xc);
    const double yn = yb.norm();
    if (yn < 1e-6) throw std::runtime_error("reference attitude singular (thrust along heading)");
    yb /= yn;
    const Vec3 xb = yb.cross(zb);
    Mat3 Rn;
    Rn.col(0) = xb;
    Rn.col(1) = yb;
    Rn.col(2) = zb;
    q = Quat(Rn);
  }
  if (q_out.dot(q) < 0) q.coeffs() *= -1.0;
  q_out = q.normalized();
  T_out = T;
}

}  // namespace detail

// Simulates the vehicle flying the reference: thrust and attitude come from
// the flatness inversion of the reference, the actual state is then obtained
// by RK4-integrating the dynamics with those inputs.
inline SimResult simulate(const ReferenceTrajectory& ref, const WorldConfig& world,
                          const AeroConfig& aero, const WindField& wind) {
  world.validate();
  aero.validate();
  if (ref.samples.size() < 2) throw std::invalid_argument("reference too short");
  const double dt = ref.dt;
  const int n = static_cast<int>(ref.samples.size());

  // inputs at half-step resolution
  const int nh = 2 * n - 1;
  std::vector<Quat> q_ref(nh);
  std::vector<double> T_ref(nh);
  Quat q_warm = Quat::Identity();
  for (int i = 0; i < nh; ++i) {
    const double t = i * dt / 2.0;
    const int lo = std::min(i / 2, n - 2);
    const double u = t / dt - lo;
    const auto& s0 = ref.samples[lo];
    const auto& s1 = ref.samples[lo + 1];
    const Vec3 p = (1 - u) * s0.p + u * s1.p;
    const Vec3 v = (1 - u) * s0.v + u * s1.v;
    const Vec3 a = (1 - u) * s0.a + u * s1.a;
    double yaw0 = s0.yaw, yaw1 = s1.yaw;
    if (yaw1 - yaw0 > M_PI) yaw1 -= 2 * M_PI;
    if (yaw1 - yaw0 < -M_PI) yaw1 += 2 * M_PI;
    const double yaw = (1 - u) * yaw0 + u * yaw1;
    detail::flatness_invert(a, v, p, t, yaw, world, aero, wind, q_warm, T_ref[i]);
    q_ref[i] = q_warm;
  }
  // body rates from attitude differences at half-step resolution
  std::vector<Vec3> w_ref(nh);
  for (int i = 0; i < nh; ++i) {
    const int a = std::max(i - 1, 0), b = std::min(i + 1, nh - 1);
    const double span = (b - a) * dt / 2.0;
    w_ref[i] = quat_log(q_ref[a].conjugate() * q_ref[b]) / span;
  }

  SimResult out;
  VehicleState st{ref.samples[0].p, ref.samples[0].v, q_ref[0]};
  const WindField no_wind = WindField::none();
  for (int i = 0; i < n; ++i) {
    const double t = i * dt;
    GroundTruthSample g;
    g.t = t;
    g.p = st.p;
    g.v = st.v;
    g.q = st.q;
    const Mat3 R = st.q.toRotationMatrix();
    const Vec3 v_rel_w = st.v - wind.velocity(st.p, t);
    const Vec3 f_on = aero_force_body(aero, world.air_density, R.transpose() * v_rel_w) /
                      world.mass;
    const Vec3 f_off = aero_force_body(aero, world.air_density, R.transpose() * st.v) /
                       world.mass;
    g.f_aero_true = f_off;
    g.f_e_true = f_on - f_off;  // wind-on minus wind-off
    out.truth.push_back(g);

    IdealSensorSample s;
    s.t = t;
    s.omega = w_ref[2 * i];
    s.thrust = T_ref[2 * i];
    s.specific_force = Vec3(0, 0, s.thrust) + f_on;
    out.ideal.push_back(s);

    if (i + 1 < n)
      st = rk4_step(st, t, dt, T_ref[2 * i], T_ref[2 * i + 1], T_ref[2 * i + 2], w_ref[2 * i],
                    w_ref[2 * i + 1], w_ref[2 * i + 2], world, aero, wind);
  }
  return out;
}

}  // namespace vidyn
