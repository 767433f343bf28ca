#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "preint_oracle.hpp"
#include "vidyn/preint/preintegrate.hpp"

using namespace vidyn;

namespace {

MeasurementBuffer random_buffer(uint64_t seed, double duration = 0.2, double dt = 0.01) {
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
    buf.gyro.push_back(0.5 * Vec3(nd(rng), nd(rng), nd(rng)));
    buf.accel.push_back(Vec3(nd(rng), nd(rng), 9.81 + nd(rng)));
    buf.thrust.push_back(9.81 + 2.0 * nd(rng));
  }
  return buf;
}

MeasurementBuffer constant_buffer(double T, const Vec3& w, double duration, double dt) {
  MeasurementBuffer buf;
  buf.t0 = 0;
  buf.t1 = duration;
  buf.dt_nominal = dt;
  buf.has_accel = true;
  const int n = static_cast<int>(std::round(duration / dt));
  for (int i = 0; i < n; ++i) {
    buf.ts.push_back(i * dt);
    buf.gyro.push_back(w);
    buf.accel.push_back(Vec3(0, 0, T));
    buf.thrust.push_back(T);
  }
  return buf;
}

}  // namespace

TEST_CASE("zero input gives identity delta") {
  auto buf = constant_buffer(0.0, Vec3::Zero(), 0.3, 0.01);
  auto d = preintegrate_dynamics(buf, Vec3::Zero(), {});
  CHECK(d.alpha.norm() == 0.0);
  CHECK(d.beta.norm() == 0.0);
  CHECK(quat_log(d.gamma).norm() == 0.0);
  CHECK(d.Dt == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("constant thrust closed form at small steps") {
  const double c = 3.0, Dt = 0.2, dt = 1e-4;
  auto buf = constant_buffer(c, Vec3::Zero(), Dt, dt);
  auto d = preintegrate_dynamics(buf, Vec3::Zero(), {});
  CHECK((d.beta - Vec3(0, 0, c * Dt)).norm() < 1e-9);
  CHECK((d.alpha - Vec3(0, 0, 0.5 * c * Dt * Dt)).norm() < c * Dt * dt * 2);
}

TEST_CASE("dynamics preintegration matches the literal oracle") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto buf = random_buffer(seed);
    const Vec3 bw(0.01, -0.02, 0.005);
    std::vector<Vec3> forces;
    for (size_t i = 0; i < buf.size(); ++i) forces.push_back(Vec3(0, 0, buf.thrust[i]));
    auto oracle = testing::oracle_preintegrate(buf, bw, forces);
    auto d = preintegrate_dynamics(buf, bw, {});
    CHECK((d.alpha - oracle.alpha).norm() < 1e-12);
    CHECK((d.beta - oracle.beta).norm() < 1e-12);
    CHECK(quat_log(d.gamma.conjugate() * oracle.gamma).norm() < 1e-12);
  }
}

TEST_CASE("imu preintegration matches the literal oracle") {
  for (uint64_t seed = 100; seed < 110; ++seed) {
    auto buf = random_buffer(seed);
    const Vec3 bw(0.01, 0.0, -0.01), ba(0.05, -0.02, 0.1);
    std::vector<Vec3> forces;
    for (size_t i = 0; i < buf.size(); ++i) forces.push_back(buf.accel[i] - ba);
    auto oracle = testing::oracle_preintegrate(buf, bw, forces);
    auto d = preintegrate_imu(buf, bw, ba, {});
    CHECK((d.alpha - oracle.alpha).norm() < 1e-12);
    CHECK((d.beta - oracle.beta).norm() < 1e-12);
    CHECK(quat_log(d.gamma.conjugate() * oracle.gamma).norm() < 1e-12);
  }
}

TEST_CASE("imu hover: beta integrates specific force") {
  auto buf = constant_buffer(9.81, Vec3::Zero(), 0.5, 0.001);
  auto d = preintegrate_imu(buf, Vec3::Zero(), Vec3::Zero(), {});
  CHECK((d.beta - Vec3(0, 0, 9.81 * 0.5)).norm() < 1e-9);
}

TEST_CASE("constant rotation rate gives axis-angle gamma") {
  const Vec3 w(0, 0, 1.3);
  auto buf = constant_buffer(0.0, w, 0.5, 1e-4);
  auto d = preintegrate_imu(buf, Vec3::Zero(), Vec3::Zero(), {});
  const Vec3 expected = w * 0.5;
  CHECK((quat_log(d.gamma) - expected).norm() < 1e-6);
}

TEST_CASE("covariance is symmetric PSD with non-decreasing trace") {
  auto buf = random_buffer(42);
  DynamicsNoiseParams noise;
  noise.sigma_ft = 0.1;
  noise.sigma_w = 0.01;
  noise.sigma_bw = 1e-3;
  // integrate prefixes of increasing length
  double prev_trace = 0.0;
  for (size_t n = 2; n <= buf.size(); n += 3) {
    MeasurementBuffer sub = buf;
    sub.ts.resize(n);
    sub.gyro.resize(n);
    sub.accel.resize(n);
    sub.thrust.resize(n);
    sub.t1 = sub.ts.back() + sub.dt_nominal;
    auto d = preintegrate_dynamics(sub, Vec3::Zero(), noise);
    CHECK((d.P - d.P.transpose()).norm() < 1e-15);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(d.P);
    CHECK(es.eigenvalues().minCoeff() > -1e-15);
    CHECK(d.P.trace() >= prev_trace - 1e-15);
    prev_trace = d.P.trace();
  }
}

TEST_CASE("deltas do not depend on the world pose") {
  // preintegration consumes only measurements; there is no state input at all,
  // so recomputation with any bias linearization point is reproducible
  auto buf = random_buffer(3);
  auto a = preintegrate_dynamics(buf, Vec3(0.01, 0, 0), {});
  auto b = preintegrate_dynamics(buf, Vec3(0.01, 0, 0), {});
  CHECK(a.alpha == b.alpha);
  CHECK(a.beta == b.beta);
}

TEST_CASE("first-order bias correction approximates re-preintegration") {
  auto buf = random_buffer(7);
  const Vec3 bw0(0.0, 0.0, 0.0);
  auto d = preintegrate_dynamics(buf, bw0, {});

  SUBCASE("zero change is the identity") {
    auto c = correct_bias_change(d, bw0);
    CHECK((c.alpha - d.alpha).norm() == 0.0);
    CHECK((c.beta - d.beta).norm() == 0.0);
    CHECK(quat_log(c.gamma.conjugate() * d.gamma).norm() < 1e-15);
  }

  SUBCASE("small change within 1e-4 of exact") {
    const Vec3 db(0.005, 0, 0);
    auto c = correct_bias_change(d, bw0 + db);
    auto exact = preintegrate_dynamics(buf, bw0 + db, {});
    CHECK((c.alpha - exact.alpha).norm() < 1e-4);
    CHECK((c.beta - exact.beta).norm() < 1e-4);
    CHECK(quat_log(c.gamma.conjugate() * exact.gamma).norm() < 1e-4);
  }

  SUBCASE("error scales quadratically") {
    auto err = [&](double mag) {
      const Vec3 db(mag, 0, 0);
      auto c = correct_bias_change(d, bw0 + db);
      auto exact = preintegrate_dynamics(buf, bw0 + db, {});
      return (c.alpha - exact.alpha).norm() + (c.beta - exact.beta).norm() +
             quat_log(c.gamma.conjugate() * exact.gamma).norm();
    };
    const double e_small = err(0.005), e_large = err(0.1);
    // 20x bias change -> about 400x error
    CHECK(e_large / e_small > 10.0);
  }
}

TEST_CASE("quadratic scaling slope of the bias correction error") {
  auto buf = random_buffer(11);
  auto d = preintegrate_dynamics(buf, Vec3::Zero(), {});
  std::vector<double> mags, errs;
  for (double mag : {1e-3, 3e-3, 1e-2, 3e-2, 1e-1}) {
    const Vec3 db = mag * Vec3(1, -1, 0.5).normalized();
    auto c = correct_bias_change(d, db);
    auto exact = preintegrate_dynamics(buf, db, {});
    const double e = (c.alpha - exact.alpha).norm() + (c.beta - exact.beta).norm() +
                     quat_log(c.gamma.conjugate() * exact.gamma).norm();
    mags.push_back(std::log(mag));
    errs.push_back(std::log(e));
  }
  // least-squares slope on log-log
  double mx = 0, my = 0;
  for (size_t i = 0; i < mags.size(); ++i) {
    mx += mags[i];
    my += errs[i];
  }
  mx /= mags.size();
  my /= errs.size();
  double num = 0, den = 0;
  for (size_t i = 0; i < mags.size(); ++i) {
    num += (mags[i] - mx) * (errs[i] - my);
    den += (mags[i] - mx) * (mags[i] - mx);
  }
  const double slope = num / den;
  CHECK(slope > 1.8);
  CHECK(slope < 2.2);
}

TEST_CASE("empty or NaN buffers are rejected") {
  MeasurementBuffer empty;
  CHECK_THROWS(preintegrate_dynamics(empty, Vec3::Zero(), {}));
  auto buf = random_buffer(1);
  buf.gyro[3] = Vec3(std::nan(""), 0, 0);
  CHECK_THROWS(preintegrate_dynamics(buf, Vec3::Zero(), {}));
}
