#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "vidyn/sim/sensors.hpp"
#include "vidyn/sim/simulate.hpp"
#include "vidyn/sim/trajectory.hpp"

using namespace vidyn;

namespace {
WorldConfig default_world() {
  WorldConfig w;
  w.mass = 1.0;
  return w;
}
}  // namespace

TEST_CASE("circle reference starts at phase zero") {
  TrajectoryParams prm;
  prm.radius_x = prm.radius_y = 1.0;
  prm.period = 2 * M_PI;
  prm.height = 1.5;
  prm.ramp_time = 0.0;
  auto ref = generate_trajectory("circle", prm, 1.0, 0.01);
  CHECK((ref.samples[0].p - Vec3(1, 0, 1.5)).norm() < 1e-12);
}

TEST_CASE("hover reference is static") {
  auto ref = generate_trajectory("hover", {}, 1.0, 0.01);
  for (const auto& s : ref.samples) {
    CHECK((s.p - ref.samples[0].p).norm() == 0.0);
    CHECK(s.v.norm() == 0.0);
  }
}

TEST_CASE("gp-random is deterministic given seed") {
  TrajectoryParams prm;
  prm.seed = 7;
  auto a = generate_trajectory("gp-random", prm, 5.0, 0.01);
  auto b = generate_trajectory("gp-random", prm, 5.0, 0.01);
  REQUIRE(a.samples.size() == b.samples.size());
  for (size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].p == b.samples[i].p);
    CHECK(a.samples[i].v == b.samples[i].v);
  }
}

TEST_CASE("unknown trajectory kind and bad durations throw") {
  CHECK_THROWS(generate_trajectory("spiral", {}, 1.0, 0.01));
  CHECK_THROWS(generate_trajectory("hover", {}, -1.0, 0.01));
  CHECK_THROWS(generate_trajectory("hover", {}, 1.0, 0.0));
}

TEST_CASE("free fall matches closed form") {
  WorldConfig world = default_world();
  AeroConfig aero;  // all zero
  WindField wind = WindField::none();
  VehicleState s{Vec3(0, 0, 10), Vec3(1, 0, 0), Quat::Identity()};
  const double dt = 0.01;
  for (int i = 0; i < 100; ++i)
    s = rk4_step(s, i * dt, dt, 0, 0, 0, Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), world,
                 aero, wind);
  const Vec3 expected = Vec3(0, 0, 10) + Vec3(1, 0, 0) * 1.0 + 0.5 * world.gravity;
  CHECK((s.p - expected).norm() / expected.norm() < 1e-9);
}

TEST_CASE("rk4 order: halving dt shrinks error about 16x") {
  // smooth closed-form inputs so the integrator order is visible
  WorldConfig world = default_world();
  AeroConfig aero;
  aero.fuselage_area = 0.01;
  aero.fuselage_cd = 2.0;
  WindField wind = WindField::none();
  auto thrust_fn = [](double t) { return 9.81 + 2.0 * std::sin(3.0 * t); };
  auto omega_fn = [](double t) { return Vec3(0.5 * std::sin(2 * t), 0.3 * std::cos(t), 0.2); };
  auto run = [&](double dt) {
    VehicleState s{Vec3::Zero(), Vec3(1, 0, 0), Quat::Identity()};
    const int n = static_cast<int>(std::round(1.0 / dt));
    for (int i = 0; i < n; ++i) {
      const double t = i * dt;
      s = rk4_step(s, t, dt, thrust_fn(t), thrust_fn(t + dt / 2), thrust_fn(t + dt),
                   omega_fn(t), omega_fn(t + dt / 2), omega_fn(t + dt), world, aero, wind);
    }
    return s.p;
  };
  const Vec3 ref = run(1.0 / 6400);
  const double e1 = (run(1.0 / 100) - ref).norm();
  const double e2 = (run(1.0 / 200) - ref).norm();
  const double ratio = e1 / e2;
  CHECK(ratio > 8.0);
  CHECK(ratio < 40.0);
}

TEST_CASE("hover equilibrium: thrust equals gravity, no wind force") {
  WorldConfig world = default_world();
  auto ref = generate_trajectory("hover", {}, 2.0, 0.01);
  auto sim = simulate(ref, world, {}, WindField::none());
  for (const auto& s : sim.ideal) CHECK(std::abs(s.thrust - 9.81) < 1e-9);
  for (const auto& g : sim.truth) CHECK(g.f_e_true.norm() < 1e-12);
}

TEST_CASE("fuselage drag magnitude matches hand evaluation") {
  // v_rel = 2 m/s, rho=1.2, A=0.01, cd=2.0 -> 0.5*1.2*0.01*2.0*4 = 0.048 N
  AeroConfig aero;
  aero.fuselage_area = 0.01;
  aero.fuselage_cd = 2.0;
  const Vec3 f = aero_force_body(aero, 1.2, Vec3(2, 0, 0));
  CHECK(std::abs(f.norm() - 0.048) < 1e-12);
  CHECK(f.x() < 0);  // opposes motion
}

TEST_CASE("flat plate coefficients at 45 degrees") {
  // c_l = sin(90deg) = 1, c_d = 2 sin^2(45deg) = 1
  AeroConfig aero;
  aero.board_area = 1.0;
  aero.board_normal = Vec3(0, 0, 1);
  const double rho = 2.0;  // dynamic pressure 0.5*rho*A*v^2 = 1 at v=1
  const Vec3 v_rel = Vec3(1, 0, -1).normalized();  // 45 deg angle of attack
  const Vec3 f = aero_force_body(aero, rho, v_rel);
  const Vec3 drag = f.dot(-v_rel) * (-v_rel);
  const Vec3 lift = f - drag;
  CHECK(std::abs(drag.norm() - 1.0) < 1e-12);
  CHECK(std::abs(lift.norm() - 1.0) < 1e-12);
  CHECK(lift.dot(Vec3(0, 0, 1)) > 0);  // plate moving down -> pushed up
}

TEST_CASE("wind force ground truth is zero where wind is zero") {
  WorldConfig world = default_world();
  AeroConfig aero;
  aero.fuselage_area = 0.02;
  aero.fuselage_cd = 2.0;
  // wind patch far away from the flown circle
  auto wind = WindField::from_function(Vec3(50, 50, 0), Vec3(60, 60, 3), 4, 4, 4,
                                       [](const Vec3&) { return Vec3(5, 0, 0); });
  TrajectoryParams prm;
  auto ref = generate_trajectory("circle", prm, 5.0, 0.01);
  auto sim = simulate(ref, world, aero, wind);
  for (const auto& g : sim.truth) CHECK(g.f_e_true.norm() == 0.0);
}

TEST_CASE("constant wind produces nonzero wind force") {
  WorldConfig world = default_world();
  AeroConfig aero;
  aero.fuselage_area = 0.02;
  aero.fuselage_cd = 2.0;
  auto ref = generate_trajectory("circle", {}, 6.0, 0.01);
  auto sim = simulate(ref, world, aero, WindField::constant_wind(Vec3(4, 0, 0)));
  double max_fe = 0;
  for (const auto& g : sim.truth) max_fe = std::max(max_fe, g.f_e_true.norm());
  CHECK(max_fe > 0.01);
}

TEST_CASE("sensor synthesis: zero noise equals ideal") {
  WorldConfig world = default_world();
  auto ref = generate_trajectory("circle", {}, 3.0, 0.01);
  auto sim = simulate(ref, world, {}, WindField::none());
  SensorNoiseConfig noise;  // all sigma zero
  auto landmarks = make_landmark_cloud(100, Vec3(-5, -5, 0), Vec3(5, 5, 3), 3);
  auto rig = default_camera_rig(noise);
  auto log = synthesize_sensors(sim, noise, landmarks, rig, 1.0, 42);
  REQUIRE(!log.imu.empty());
  for (size_t i = 0; i < log.imu.size(); i += 17) {
    const auto ideal = sim.ideal[i];
    CHECK((log.imu[i].w - ideal.omega).norm() < 1e-12);
    CHECK((log.imu[i].a - ideal.specific_force).norm() < 1e-12);
  }
}

TEST_CASE("hover accelerometer reads gravity magnitude along z") {
  WorldConfig world = default_world();
  auto ref = generate_trajectory("hover", {}, 1.0, 0.01);
  auto sim = simulate(ref, world, {}, WindField::none());
  SensorNoiseConfig noise;
  auto landmarks = make_landmark_cloud(50, Vec3(-5, -5, 0), Vec3(5, 5, 3), 3);
  auto log = synthesize_sensors(sim, noise, landmarks, default_camera_rig(noise), 1.0, 0);
  for (const auto& m : log.imu) CHECK((m.a - Vec3(0, 0, 9.81)).norm() < 1e-9);
}

TEST_CASE("thrust bias scales the thrust stream") {
  WorldConfig world = default_world();
  auto ref = generate_trajectory("circle", {}, 5.0, 0.01);
  auto sim = simulate(ref, world, {}, WindField::none());
  SensorNoiseConfig noise;
  noise.sigma_ft = 0.01;
  auto landmarks = make_landmark_cloud(50, Vec3(-5, -5, 0), Vec3(5, 5, 3), 3);
  auto log = synthesize_sensors(sim, noise, landmarks, default_camera_rig(noise), 1.05, 9);
  double ratio = 0;
  for (size_t i = 0; i < log.thrust.size(); ++i) ratio += log.thrust[i].T / sim.ideal[i].thrust;
  ratio /= log.thrust.size();
  CHECK(std::abs(ratio - 1.05) < 0.005);
}

TEST_CASE("determinism: identical seeds give identical logs") {
  WorldConfig world = default_world();
  auto ref = generate_trajectory("circle", {}, 2.0, 0.01);
  auto sim = simulate(ref, world, {}, WindField::none());
  SensorNoiseConfig noise;
  noise.sigma_w = 1e-3;
  noise.sigma_a = 1e-2;
  noise.pixel_sigma = 0.5;
  auto landmarks = make_landmark_cloud(80, Vec3(-5, -5, 0), Vec3(5, 5, 3), 3);
  auto rig = default_camera_rig(noise);
  auto a = synthesize_sensors(sim, noise, landmarks, rig, 1.0, 77);
  auto b = synthesize_sensors(sim, noise, landmarks, rig, 1.0, 77);
  REQUIRE(a.imu.size() == b.imu.size());
  for (size_t i = 0; i < a.imu.size(); ++i) {
    CHECK(a.imu[i].w == b.imu[i].w);
    CHECK(a.imu[i].a == b.imu[i].a);
  }
  REQUIRE(a.features.size() == b.features.size());
  for (size_t i = 0; i < a.features.size(); ++i) CHECK(a.features[i].px == b.features[i].px);
}

TEST_CASE("feature reprojection is exact with zero pixel noise") {
  WorldConfig world = default_world();
  auto ref = generate_trajectory("circle", {}, 3.0, 0.01);
  auto sim = simulate(ref, world, {}, WindField::none());
  SensorNoiseConfig noise;
  auto landmarks = make_landmark_cloud(100, Vec3(-5, -5, 0), Vec3(5, 5, 3), 3);
  auto rig = default_camera_rig(noise);
  auto log = synthesize_sensors(sim, noise, landmarks, rig, 1.0, 0);
  REQUIRE(!log.features.empty());
  const double dt_sim = 0.01;
  for (const auto& f : log.features) {
    const auto& g = sim.truth[static_cast<size_t>(std::round(f.t / dt_sim))];
    const Vec3 pb = g.q.toRotationMatrix().transpose() * (log.landmarks.at(f.landmark_id) - g.p);
    const Vec3 pc = rig.q_bc.toRotationMatrix().transpose() * (pb - rig.p_bc);
    CHECK((rig.cam.project(pc) - f.px).norm() < 1e-9);
  }
}
