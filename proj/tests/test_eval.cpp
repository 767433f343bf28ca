#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>

#include "vidyn/eval/metrics.hpp"
#include "vidyn/eval/report.hpp"

using namespace vidyn;

namespace {

// smooth 3d test trajectory with non-trivial orientation
std::vector<PoseSample> spiral(int n = 200, double dt = 0.05) {
  std::vector<PoseSample> out;
  for (int i = 0; i < n; ++i) {
    PoseSample s;
    s.t = i * dt;
    s.p = Vec3(std::cos(0.4 * s.t), std::sin(0.4 * s.t), 0.1 * s.t);
    s.q = quat_exp(Vec3(0.1 * std::sin(0.3 * s.t), 0.05 * std::cos(0.2 * s.t), 0.4 * s.t));
    out.push_back(s);
  }
  return out;
}

std::vector<PoseSample> transformed(const std::vector<PoseSample>& in, double yaw,
                                    const Vec3& shift) {
  const Quat Rz = quat_exp(Vec3(0, 0, yaw));
  const Mat3 R = Rz.toRotationMatrix();
  std::vector<PoseSample> out;
  for (const auto& s : in) out.push_back({s.t, R * s.p + shift, (Rz * s.q).normalized()});
  return out;
}

}  // namespace

TEST_CASE("posyaw alignment inverts a synthetic yaw + translation") {
  auto gt = spiral();
  auto est = transformed(gt, 30.0 * M_PI / 180.0, Vec3(1, 2, 0));
  auto pair = align_posyaw(est, gt);
  for (size_t i = 0; i < pair.t.size(); ++i)
    CHECK((pair.p_est[i] - pair.p_gt[i]).norm() < 1e-10);
  CHECK(ate_translation(pair) < 1e-10);
  // the recovered transform undoes the injected one
  CHECK(std::abs(pair.yaw + 30.0 * M_PI / 180.0) < 1e-12);
}

TEST_CASE("identical trajectories give the identity transform and zero ATE") {
  auto gt = spiral();
  auto pair = align_posyaw(gt, gt);
  CHECK(std::abs(pair.yaw) < 1e-12);
  CHECK(pair.translation.norm() < 1e-12);
  CHECK(ate_translation(pair) < 1e-12);
  CHECK(ate_rotation(pair) < 1e-12);
}

TEST_CASE("roll error is not removed by yaw-only alignment") {
  auto gt = spiral();
  const Quat roll = quat_exp(Vec3(10.0 * M_PI / 180.0, 0, 0));
  std::vector<PoseSample> est;
  for (const auto& s : gt)
    est.push_back({s.t, roll.toRotationMatrix() * s.p, (roll * s.q).normalized()});
  auto pair = align_posyaw(est, gt);
  // yaw alignment may compensate slightly, but the bulk of the roll remains
  CHECK(ate_rotation(pair) == doctest::Approx(10.0).epsilon(0.05));
  CHECK(ate_translation(pair) > 0.01);
}

TEST_CASE("constant z offset is absorbed by the translation") {
  auto gt = spiral();
  std::vector<PoseSample> est;
  for (const auto& s : gt) est.push_back({s.t, s.p + Vec3(0, 0, 0.1), s.q});
  auto pair = align_posyaw(est, gt);
  CHECK(ate_translation(pair) < 1e-12);
}

TEST_CASE("zero-mean sinusoidal z perturbation gives amplitude over sqrt(2)") {
  // whole number of periods so the sample mean vanishes exactly
  const int n = 400;
  const double dt = 0.05;
  std::vector<PoseSample> gt, est;
  for (int i = 0; i < n; ++i) {
    PoseSample s;
    s.t = i * dt;
    s.p = Vec3(s.t * 0.3, 0, 1.0);
    gt.push_back(s);
    s.p.z() += 0.1 * std::sin(2.0 * M_PI * 4.0 * i / n);
    est.push_back(s);
  }
  auto pair = align_posyaw(est, gt);
  CHECK(ate_translation(pair) == doctest::Approx(0.1 / std::sqrt(2.0)).epsilon(1e-6));
}

TEST_CASE("alignment invariance: metrics unchanged under any yaw + translation") {
  auto gt = spiral();
  std::mt19937_64 rng(1);
  std::normal_distribution<double> nd(0.0, 1.0);
  // a noisy estimate so the metrics are non-trivial
  std::vector<PoseSample> est;
  for (const auto& s : gt) {
    PoseSample e = s;
    e.p += 0.01 * Vec3(nd(rng), nd(rng), nd(rng));
    e.q = (s.q * quat_exp(0.01 * Vec3(nd(rng), nd(rng), nd(rng)))).normalized();
    est.push_back(e);
  }
  auto base = align_posyaw(est, gt);
  const double t0 = ate_translation(base), r0 = ate_rotation(base);
  auto rel0 = relative_errors(base, default_relative_lengths(10.0));
  for (double yaw : {0.5, -2.0}) {
    auto pair = align_posyaw(transformed(est, yaw, Vec3(4, -3, 2)), gt);
    CHECK(std::abs(ate_translation(pair) - t0) < 1e-9);
    CHECK(std::abs(ate_rotation(pair) - r0) < 1e-9);
    auto rel = relative_errors(pair, default_relative_lengths(10.0));
    for (size_t i = 0; i < rel.size(); ++i) {
      CHECK(std::abs(rel[i].trans_rmse - rel0[i].trans_rmse) < 1e-9);
      CHECK(std::abs(rel[i].rot_rmse_deg - rel0[i].rot_rmse_deg) < 1e-9);
    }
  }
}

TEST_CASE("relative errors vanish for identical trajectories") {
  auto gt = spiral();
  auto pair = align_posyaw(gt, gt);
  for (const auto& row : relative_errors(pair, {0.5, 1.0})) {
    CHECK(row.count > 0);
    CHECK(row.trans_rmse < 1e-12);
    CHECK(row.rot_rmse_deg < 1e-12);
  }
}

TEST_CASE("association drops samples beyond 5 ms and needs overlap") {
  auto gt = spiral(100, 0.05);
  SUBCASE("3 ms offset still associates") {
    auto est = gt;
    for (auto& s : est) s.t += 0.003;
    auto pair = align_posyaw(est, gt);
    CHECK(pair.t.size() == gt.size());
  }
  SUBCASE("25 ms offset matches nothing") {
    auto est = gt;
    for (auto& s : est) s.t += 0.025;
    CHECK_THROWS_WITH_AS(align_posyaw(est, gt), doctest::Contains("overlap"),
                         std::invalid_argument);
  }
}

TEST_CASE("force rmse basics") {
  std::vector<PoseSample> orient;
  std::vector<ForceSample> truth, est;
  for (int i = 0; i < 500; ++i) {
    const double t = i * 0.01;
    orient.push_back({t, Vec3::Zero(), quat_exp(Vec3(0, 0, 0.3 * t))});
    truth.push_back({t, Vec3(0.2 * std::sin(t), 0, -0.5)});
  }
  const double mass = 0.8;

  SUBCASE("exact estimate gives zero") {
    auto r = force_rmse(truth, truth, orient, mass);
    CHECK(r.total_N == 0.0);
    CHECK(r.per_axis_N.norm() == 0.0);
  }
  SUBCASE("constant world-z error maps to the z axis only") {
    est = truth;
    // body-frame offset along z is world z for yaw-only orientations
    for (auto& s : est) s.f.z() += 0.5 / mass;
    auto r = force_rmse(est, truth, orient, mass);
    CHECK(r.per_axis_N.z() == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.per_axis_N.head<2>().norm() < 1e-12);
    CHECK(r.total_N == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("unit-variance error per axis gives total near sqrt(3)") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> nd(0.0, 1.0);
    est = truth;
    std::vector<ForceSample> long_truth, long_est;
    for (int i = 0; i < 20000; ++i) {
      const double t = i * 0.01;
      long_truth.push_back({t, Vec3::Zero()});
      long_est.push_back({t, Vec3(nd(rng), nd(rng), nd(rng))});
    }
    std::vector<PoseSample> long_orient;
    for (int i = 0; i < 20000; ++i) long_orient.push_back({i * 0.01, Vec3::Zero(), Quat::Identity()});
    auto r = force_rmse(long_est, long_truth, long_orient, 1.0);
    CHECK(r.total_ms2 == doctest::Approx(std::sqrt(3.0)).epsilon(0.03));
  }
  SUBCASE("missing orientation throws") {
    CHECK_THROWS_AS(force_rmse(truth, truth, {}, mass), std::invalid_argument);
    std::vector<PoseSample> short_orient(orient.begin(), orient.begin() + 10);
    CHECK_THROWS_WITH_AS(force_rmse(truth, truth, short_orient, mass),
                         doctest::Contains("orientation"), std::invalid_argument);
  }
  SUBCASE("norm metric is frame invariant") {
    est = truth;
    for (auto& s : est) s.f += Vec3(0.1, -0.2, 0.05);
    auto r_world = force_rmse(est, truth, orient, mass);
    std::vector<PoseSample> identity_orient;
    for (const auto& o : orient) identity_orient.push_back({o.t, o.p, Quat::Identity()});
    auto r_body = force_rmse(est, truth, identity_orient, mass);
    CHECK(r_world.total_N == doctest::Approx(r_body.total_N).epsilon(1e-12));
  }
}

TEST_CASE("compare_modes report") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "vidyn_eval_test";
  fs::create_directories(dir);
  const std::string md = (dir / "report.md").string(), csv = (dir / "metrics.csv").string();

  SUBCASE("single cell gives a one-row table") {
    compare_modes({{"circle", "vio", 0.12, 1.5, 0, false}}, md, csv);
    std::ifstream in(md);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(all.find("| vio |") != std::string::npos);
    CHECK(all.find("**0.1200**") != std::string::npos);  // sole entry is best
  }
  SUBCASE("2x error run ranks second") {
    compare_modes({{"circle", "hybrid", 0.1, 1.0, 0.4, true},
                   {"circle", "vio", 0.2, 2.0, 0.8, true}},
                  md, csv);
    std::ifstream in(md);
    std::string all((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(all.find("**0.1000**") != std::string::npos);
    CHECK(all.find("*0.2000*") != std::string::npos);
  }
  SUBCASE("identical inputs give identical csv outputs") {
    compare_modes({{"a", "vio", 0.1, 1.0, 0, false}, {"a", "hybrid", 0.2, 2.0, 0.3, true}}, md,
                  csv);
    std::ifstream c1(csv);
    std::string s1((std::istreambuf_iterator<char>(c1)), std::istreambuf_iterator<char>());
    compare_modes({{"a", "vio", 0.1, 1.0, 0, false}, {"a", "hybrid", 0.2, 2.0, 0.3, true}}, md,
                  csv);
    std::ifstream c2(csv);
    std::string s2((std::istreambuf_iterator<char>(c2)), std::istreambuf_iterator<char>());
    CHECK(s1 == s2);
  }
  SUBCASE("mismatched mode lists throw") {
    CHECK_THROWS_WITH_AS(compare_modes({{"a", "vio", 0.1, 1.0, 0, false},
                                        {"b", "hybrid", 0.2, 2.0, 0.3, true}},
                                       md, csv),
                         doctest::Contains("mismatched"), std::invalid_argument);
    CHECK_THROWS_AS(compare_modes({{"a", "vio", 0.1, 1.0, 0, false},
                                   {"a", "vio", 0.1, 1.0, 0, false}},
                                  md, csv),
                    std::invalid_argument);
  }
}
