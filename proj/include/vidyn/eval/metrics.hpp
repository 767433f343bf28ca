#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "vidyn/core/so3.hpp"
#include "vidyn/core/types.hpp"

namespace vidyn {

struct PoseSample {
  double t = 0;
  Vec3 p = Vec3::Zero();
  Quat q = Quat::Identity();
};

// Estimate/ground-truth pose pairs on shared timestamps with the applied
// yaw + translation alignment.
struct AlignedPair {
  std::vector<double> t;
  std::vector<Vec3> p_est, p_gt;
  std::vector<Quat> q_est, q_gt;
  double yaw = 0;                  // rotation about +z applied to the estimate
  Vec3 translation = Vec3::Zero(); // applied after the yaw rotation
};

namespace detail {

// Nearest-neighbor association of est onto gt timestamps within max_dt.
inline std::vector<std::pair<size_t, size_t>> associate(const std::vector<PoseSample>& est,
                                                        const std::vector<PoseSample>& gt,
                                                        double max_dt) {
  std::vector<std::pair<size_t, size_t>> out;
  size_t j = 0;
  for (size_t i = 0; i < est.size(); ++i) {
    while (j + 1 < gt.size() &&
           std::abs(gt[j + 1].t - est[i].t) <= std::abs(gt[j].t - est[i].t))
      ++j;
    if (j < gt.size() && std::abs(gt[j].t - est[i].t) <= max_dt) out.push_back({i, j});
  }
  return out;
}

}  // namespace detail

// Closed-form yaw + translation that minimizes the position SSE of the
// estimate against ground truth; the transform is applied to the estimate.
inline AlignedPair align_posyaw(const std::vector<PoseSample>& est,
                                const std::vector<PoseSample>& gt, double max_dt = 0.005) {
  const auto assoc = detail::associate(est, gt, max_dt);
  if (assoc.size() < 2)
    throw std::invalid_argument("no temporal overlap between estimate and ground truth");

  Vec3 ce = Vec3::Zero(), cg = Vec3::Zero();
  for (const auto& [i, j] : assoc) {
    ce += est[i].p;
    cg += gt[j].p;
  }
  ce /= static_cast<double>(assoc.size());
  cg /= static_cast<double>(assoc.size());

  // maximize sum (pg - cg)' Rz(yaw) (pe - ce) over the horizontal plane
  double a = 0, b = 0;
  for (const auto& [i, j] : assoc) {
    const Vec3 e = est[i].p - ce, g = gt[j].p - cg;
    a += e.x() * g.x() + e.y() * g.y();
    b += e.x() * g.y() - e.y() * g.x();
  }
  const double yaw = std::atan2(b, a);
  const Quat Rz = quat_exp(Vec3(0, 0, yaw));
  const Mat3 R = Rz.toRotationMatrix();
  const Vec3 t = cg - R * ce;

  AlignedPair out;
  out.yaw = yaw;
  out.translation = t;
  for (const auto& [i, j] : assoc) {
    out.t.push_back(gt[j].t);
    out.p_est.push_back(R * est[i].p + t);
    out.q_est.push_back((Rz * est[i].q).normalized());
    out.p_gt.push_back(gt[j].p);
    out.q_gt.push_back(gt[j].q);
  }
  return out;
}

// RMSE of position differences [m].
inline double ate_translation(const AlignedPair& pair) {
  if (pair.t.empty()) throw std::invalid_argument("empty aligned pair");
  double s = 0;
  for (size_t i = 0; i < pair.t.size(); ++i) s += (pair.p_est[i] - pair.p_gt[i]).squaredNorm();
  return std::sqrt(s / static_cast<double>(pair.t.size()));
}

// RMSE of geodesic rotation angles [deg].
inline double ate_rotation(const AlignedPair& pair) {
  if (pair.t.empty()) throw std::invalid_argument("empty aligned pair");
  double s = 0;
  for (size_t i = 0; i < pair.t.size(); ++i) {
    const double ang = quat_log(pair.q_gt[i].conjugate() * pair.q_est[i]).norm();
    s += ang * ang;
  }
  return std::sqrt(s / static_cast<double>(pair.t.size())) * 180.0 / M_PI;
}

struct RelativeErrorRow {
  double length = 0;       // sub-trajectory length [m]
  int count = 0;           // number of evaluated segments
  double trans_rmse = 0;   // [m]
  double rot_rmse_deg = 0; // [deg]
};

// Default evaluation distances {2,5,10,20} m, scaled down for short paths so
// the largest bin stays within half the total path length.
inline std::vector<double> default_relative_lengths(double path_length) {
  const double scale = std::min(1.0, path_length / 40.0);
  return {2 * scale, 5 * scale, 10 * scale, 20 * scale};
}

// Relative pose error over sub-trajectories of the given path lengths: for
// each start sample, the end sample is the first one at least `length` meters
// of ground-truth path away; the error is the discrepancy of the relative
// transform expressed in the start frame.
inline std::vector<RelativeErrorRow> relative_errors(const AlignedPair& pair,
                                                     const std::vector<double>& lengths) {
  if (pair.t.size() < 2) throw std::invalid_argument("aligned pair too short");
  const size_t n = pair.t.size();
  std::vector<double> arc(n, 0);
  for (size_t i = 1; i < n; ++i)
    arc[i] = arc[i - 1] + (pair.p_gt[i] - pair.p_gt[i - 1]).norm();

  std::vector<RelativeErrorRow> out;
  for (double L : lengths) {
    RelativeErrorRow row;
    row.length = L;
    double st = 0, sr = 0;
    size_t j = 0;
    for (size_t i = 0; i < n; ++i) {
      while (j < n && arc[j] - arc[i] < L) ++j;
      if (j >= n) break;
      const Mat3 Re = pair.q_est[i].toRotationMatrix().transpose();
      const Mat3 Rg = pair.q_gt[i].toRotationMatrix().transpose();
      const Vec3 dpe = Re * (pair.p_est[j] - pair.p_est[i]);
      const Vec3 dpg = Rg * (pair.p_gt[j] - pair.p_gt[i]);
      const Quat dqe = pair.q_est[i].conjugate() * pair.q_est[j];
      const Quat dqg = pair.q_gt[i].conjugate() * pair.q_gt[j];
      st += (dpe - dpg).squaredNorm();
      const double ang = quat_log(dqg.conjugate() * dqe).norm();
      sr += ang * ang;
      ++row.count;
    }
    if (row.count > 0) {
      row.trans_rmse = std::sqrt(st / row.count);
      row.rot_rmse_deg = std::sqrt(sr / row.count) * 180.0 / M_PI;
    }
    out.push_back(row);
  }
  return out;
}

struct ForceSample {
  double t = 0;
  Vec3 f = Vec3::Zero();  // body frame, mass-normalized [m/s^2]
};

struct ForceRmse {
  Vec3 per_axis_ms2 = Vec3::Zero();  // world frame
  double total_ms2 = 0;
  Vec3 per_axis_N = Vec3::Zero();
  double total_N = 0;
  int count = 0;
};

// RMSE between estimated and true mass-normalized forces, compared in the
// world frame using the ground-truth orientations; Newton figures use the
// given mass.
inline ForceRmse force_rmse(const std::vector<ForceSample>& est,
                            const std::vector<ForceSample>& truth,
                            const std::vector<PoseSample>& gt_orientation, double mass,
                            double max_dt = 0.005) {
  if (gt_orientation.empty()) throw std::invalid_argument("missing ground-truth orientations");
  if (mass <= 0) throw std::invalid_argument("mass must be positive");
  auto q_at = [&](double t) {
    size_t j = 0;
    for (size_t k = 1; k < gt_orientation.size(); ++k)
      if (std::abs(gt_orientation[k].t - t) < std::abs(gt_orientation[j].t - t)) j = k;
    if (std::abs(gt_orientation[j].t - t) > max_dt)
      throw std::invalid_argument("missing orientation for force sample");
    return gt_orientation[j].q;
  };

  ForceRmse out;
  Vec3 s2 = Vec3::Zero();
  double sn = 0;
  size_t j = 0;
  for (const auto& e : est) {
    while (j + 1 < truth.size() &&
           std::abs(truth[j + 1].t - e.t) <= std::abs(truth[j].t - e.t))
      ++j;
    if (j >= truth.size() || std::abs(truth[j].t - e.t) > max_dt) continue;
    const Mat3 R = q_at(e.t).toRotationMatrix();
    const Vec3 err = R * e.f - R * truth[j].f;
    s2 += err.cwiseAbs2();
    sn += err.squaredNorm();
    ++out.count;
  }
  if (out.count == 0) throw std::invalid_argument("no associated force samples");
  out.per_axis_ms2 = (s2 / out.count).cwiseSqrt();
  out.total_ms2 = std::sqrt(sn / out.count);
  out.per_axis_N = mass * out.per_axis_ms2;
  out.total_N = mass * out.total_ms2;
  return out;
}

}  // namespace vidyn
