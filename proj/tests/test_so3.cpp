#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <random>

#include "vidyn/core/so3.hpp"

using namespace vidyn;

TEST_CASE("exp/log round trip") {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    Vec3 phi(nd(rng), nd(rng), nd(rng));
    if (phi.norm() > 3.0) phi *= 3.0 / phi.norm();
    const Vec3 back = quat_log(quat_exp(phi));
    CHECK((back - phi).norm() < 1e-10);
  }
}

TEST_CASE("right jacobian matches finite differences") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 0.5);
  for (int i = 0; i < 50; ++i) {
    const Vec3 phi(nd(rng), nd(rng), nd(rng));
    const Mat3 Jr = so3_right_jacobian(phi);
    const double h = 1e-7;
    for (int a = 0; a < 3; ++a) {
      Vec3 dphi = Vec3::Zero();
      dphi[a] = h;
      // Exp(phi + dphi) approx Exp(phi) Exp(Jr dphi)
      const Vec3 diff = so3_log(so3_exp(phi).transpose() * so3_exp(phi + dphi)) / h;
      CHECK((diff - Jr.col(a)).norm() < 1e-5);
    }
  }
}

TEST_CASE("right jacobian inverse is the inverse") {
  const Vec3 phi(0.3, -0.7, 0.2);
  CHECK((so3_right_jacobian(phi) * so3_right_jacobian_inv(phi) - Mat3::Identity()).norm() <
        1e-12);
}

TEST_CASE("skew antisymmetry and cross product") {
  const Vec3 a(1, 2, 3), b(-2, 0.5, 4);
  CHECK((skew(a) * b - a.cross(b)).norm() == 0.0);
  CHECK((skew(a) + skew(a).transpose()).norm() == 0.0);
}
