#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "vidyn/preint/residuals.hpp"

using namespace vidyn;

namespace {

MeasurementBuffer random_buffer(uint64_t seed, double duration = 0.2, double dt = 0.005) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  MeasurementBuffer buf;
  buf.t0 = 0;
  buf.t1 = duration;
  buf.dt_nominal = dt;
  buf.has_accel = true;
  const int n = static_cast<int>(std::round(duration / dt));
  for (int i = 0; i < n; ++i) {
    buf.ts.push_back(i * dt);
    buf.gyro.push_back(0.4 * Vec3(nd(rng), nd(rng), nd(rng)));
    buf.accel.push_back(Vec3(nd(rng), nd(rng), 9.81 + nd(rng)));
    buf.thrust.push_back(9.81 + 1.5 * nd(rng));
  }
  return buf;
}

DroneState random_state(uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd(0.0, 1.0);
  DroneState x;
  x.p = Vec3(nd(rng), nd(rng), nd(rng));
  x.v = 0.5 * Vec3(nd(rng), nd(rng), nd(rng));
  x.q = quat_exp(0.5 * Vec3(nd(rng), nd(rng), nd(rng)));
  x.b_w = 0.01 * Vec3(nd(rng), nd(rng), nd(rng));
  x.b_a = 0.05 * Vec3(nd(rng), nd(rng), nd(rng));
  x.f_e = 0.3 * Vec3(nd(rng), nd(rng), nd(rng));
  return x;
}

const Vec3 kGravity(0, 0, -9.81);

enum Field { P, Th, V, Bw, Ba, Fe };

DroneState perturb(const DroneState& x, Field f, int axis, double h) {
  DroneState y = x;
  Vec3 d = Vec3::Zero();
  d[axis] = h;
  switch (f) {
    case P: y.p += d; break;
    case Th: y.q = x.q * quat_exp(d); break;
    case V: y.v += d; break;
    case Bw: y.b_w += d; break;
    case Ba: y.b_a += d; break;
    case Fe: y.f_e += d; break;
  }
  return y;
}

// central finite difference of a residual w.r.t. one 3-dof field
template <int N, typename EvalFn>
void check_block(const EvalFn& eval, const DroneState& x0, const DroneState& x1, bool on_x0,
                 Field f, const Eigen::Matrix<double, N, 3>& J, double tol = 1e-5) {
  const double h = 1e-6;
  for (int a = 0; a < 3; ++a) {
    Eigen::Matrix<double, N, 1> ep, em;
    if (on_x0) {
      ep = eval(perturb(x0, f, a, h), x1);
      em = eval(perturb(x0, f, a, -h), x1);
    } else {
      ep = eval(x0, perturb(x1, f, a, h));
      em = eval(x0, perturb(x1, f, a, -h));
    }
    const Eigen::Matrix<double, N, 1> fd = (ep - em) / (2 * h);
    const double scale = 1.0 + J.col(a).norm();
    CHECK((fd - J.col(a)).norm() / scale < tol);
  }
}

}  // namespace

TEST_CASE("dynamics residual vanishes on Euler-propagated states") {
  auto buf = random_buffer(5);
  const Vec3 bw(0.01, -0.005, 0.002);
  auto d = preintegrate_dynamics(buf, bw, {});
  DroneState x0 = random_state(9);
  x0.b_w = bw;
  x0.f_e = Vec3::Zero();
  // propagate x0 through the same Euler recursion
  DroneState x1 = x0;
  Quat q = x0.q;
  Vec3 p = x0.p, v = x0.v;
  for (size_t i = 0; i < buf.size(); ++i) {
    const double dt = buf.step(i);
    const Vec3 f = q.toRotationMatrix() * Vec3(0, 0, buf.thrust[i]) + kGravity;
    p += v * dt + 0.5 * f * dt * dt;
    v += f * dt;
    q = quat_integrate(q, buf.gyro[i] - bw, dt);
  }
  x1.p = p;
  x1.v = v;
  x1.q = q;
  auto r = dynamics_residual(d, x0, x1, kGravity, 1.0 / 25.0);
  CHECK(r.e.norm() < 1e-9);
}

TEST_CASE("dynamics residual Jacobians match finite differences") {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    auto buf = random_buffer(seed);
    const DroneState x0 = random_state(2 * seed + 1), x1 = random_state(2 * seed + 2);
    auto d = preintegrate_dynamics(buf, x0.b_w + Vec3(0.003, -0.002, 0.001), {});
    auto eval = [&](const DroneState& a, const DroneState& b) {
      return dynamics_residual(d, a, b, kGravity, 1.0 / 25.0).e;
    };
    auto r = dynamics_residual(d, x0, x1, kGravity, 1.0 / 25.0);
    check_block<9>(eval, x0, x1, true, P, r.J_p0);
    check_block<9>(eval, x0, x1, true, Th, r.J_th0);
    check_block<9>(eval, x0, x1, true, V, r.J_v0);
    check_block<9>(eval, x0, x1, true, Bw, r.J_bw0);
    check_block<9>(eval, x0, x1, true, Fe, r.J_fe0);
    check_block<9>(eval, x0, x1, false, P, r.J_p1);
    check_block<9>(eval, x0, x1, false, V, r.J_v1);
  }
}

TEST_CASE("imu residual Jacobians match finite differences") {
  for (uint64_t seed = 10; seed < 15; ++seed) {
    auto buf = random_buffer(seed);
    const DroneState x0 = random_state(3 * seed + 1), x1 = random_state(3 * seed + 2);
    auto d = preintegrate_imu(buf, x0.b_w + Vec3(-0.002, 0.004, 0.001),
                              x0.b_a + Vec3(0.01, -0.01, 0.02), {});
    auto eval = [&](const DroneState& a, const DroneState& b) {
      return imu_residual(d, a, b, kGravity).e;
    };
    auto r = imu_residual(d, x0, x1, kGravity);
    check_block<15>(eval, x0, x1, true, P, r.J_p0);
    check_block<15>(eval, x0, x1, true, Th, r.J_th0);
    check_block<15>(eval, x0, x1, true, V, r.J_v0);
    check_block<15>(eval, x0, x1, true, Bw, r.J_bw0);
    check_block<15>(eval, x0, x1, true, Ba, r.J_ba0);
    check_block<15>(eval, x0, x1, false, P, r.J_p1);
    check_block<15>(eval, x0, x1, false, Th, r.J_th1);
    check_block<15>(eval, x0, x1, false, V, r.J_v1);
    check_block<15>(eval, x0, x1, false, Bw, r.J_bw1);
    check_block<15>(eval, x0, x1, false, Ba, r.J_ba1);
  }
}

TEST_CASE("velocity perturbation moves the beta rows by R0' dv") {
  auto buf = random_buffer(20);
  const DroneState x0 = random_state(30);
  DroneState x1 = random_state(31);
  auto d = preintegrate_dynamics(buf, x0.b_w, {});
  auto r0 = dynamics_residual(d, x0, x1, kGravity, 1.0 / 25.0);
  x1.v += Vec3(0.1, 0, 0);
  auto r1 = dynamics_residual(d, x0, x1, kGravity, 1.0 / 25.0);
  const Vec3 expected = x0.q.toRotationMatrix().transpose() * Vec3(0.1, 0, 0);
  CHECK((r1.e.segment<3>(3) - r0.e.segment<3>(3) - expected).norm() < 1e-12);
  CHECK((r1.e.segment<3>(0) - r0.e.segment<3>(0)).norm() == 0.0);
}

TEST_CASE("external force enters the prior rows directly") {
  auto buf = random_buffer(21);
  DroneState x0 = random_state(40);
  const DroneState x1 = random_state(41);
  auto d = preintegrate_dynamics(buf, x0.b_w, {});
  x0.f_e = Vec3(0.5, -0.25, 1.0);
  auto r = dynamics_residual(d, x0, x1, kGravity, 1.0 / 25.0);
  CHECK((r.e.segment<3>(6) - x0.f_e).norm() == 0.0);
}

TEST_CASE("weight matrix is symmetric positive definite") {
  auto buf = random_buffer(22);
  DynamicsNoiseParams noise;
  auto d = preintegrate_dynamics(buf, Vec3::Zero(), noise);
  auto r = dynamics_residual(d, random_state(50), random_state(51), kGravity, noise.w_f);
  CHECK((r.W - r.W.transpose()).norm() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, 9, 9>> es(r.W);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("kind mismatch is rejected") {
  auto buf = random_buffer(23);
  auto dd = preintegrate_dynamics(buf, Vec3::Zero(), {});
  auto di = preintegrate_imu(buf, Vec3::Zero(), Vec3::Zero(), {});
  const DroneState x0 = random_state(60), x1 = random_state(61);
  CHECK_THROWS(imu_residual(dd, x0, x1, kGravity));
  CHECK_THROWS(dynamics_residual(di, x0, x1, kGravity, 1.0));
}
