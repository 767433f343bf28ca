#pragma once

#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "vidyn/core/so3.hpp"

namespace vidyn {

struct ReferenceSample {
  double t;
  Vec3 p, v, a;
  double yaw;
};

struct ReferenceTrajectory {
  std::vector<ReferenceSample> samples;
  double dt = 0.0;
};

struct TrajectoryParams {
  // circle / ellipse
  double radius_x = 1.0, radius_y = 1.0, period = 6.0;
  double height = 1.5;
  double z_amplitude = 0.0;   // vertical oscillation ("egg"-style loops)
  double z_period = 0.0;      // defaults to period/2 when z_amplitude > 0
  // lemniscate
  double amp_x = 2.0, amp_y = 1.0;
  // gp-random
  double gp_length_scale = 2.0;  // s
  double gp_sigma = 1.0;          // m, per-axis position std
  Vec3 gp_center{0, 0, 1.5};
  uint64_t seed = 0;
  // yaw
  bool yaw_follow_tangent = true;
  double yaw_fixed = 0.0;
  // smooth speed-up from rest over this many seconds
  double ramp_time = 2.0;
};

namespace detail {

// Natural cubic spline through (t_i, y_i) on a uniform knot grid.
class CubicSpline {
 public:
  CubicSpline(double t0, double h, std::vector<double> y) : t0_(t0), h_(h), y_(std::move(y)) {
    const int n = static_cast<int>(y_.size());
    m_.assign(n, 0.0);
    if (n < 3) return;
    // solve tridiagonal system for second derivatives (natural BCs)
    std::vector<double> a(n, 0), b(n, 0), c(n, 0), d(n, 0);
    b[0] = b[n - 1] = 1.0;
    for (int i = 1; i + 1 < n; ++i) {
      a[i] = h_ / 6.0;
      b[i] = 2.0 * h_ / 3.0;
      c[i] = h_ / 6.0;
      d[i] = (y_[i + 1] - 2.0 * y_[i] + y_[i - 1]) / h_;
    }
    for (int i = 1; i < n; ++i) {
      const double w = a[i] / b[i - 1];
      b[i] -= w * c[i - 1];
      d[i] -= w * d[i - 1];
    }
    m_[n - 1] = d[n - 1] / b[n - 1];
    for (int i = n - 2; i >= 0; --i) m_[i] = (d[i] - c[i] * m_[i + 1]) / b[i];
  }

  void eval(double t, double& y, double& dy, double& ddy) const {
    const int n = static_cast<int>(y_.size());
    int i = static_cast<int>((t - t0_) / h_);
    i = std::clamp(i, 0, n - 2);
    const double tl = t0_ + i * h_;
    const double A = (tl + h_ - t) / h_, B = (t - tl) / h_;
    y = A * y_[i] + B * y_[i + 1] +
        ((A * A * A - A) * m_[i] + (B * B * B - B) * m_[i + 1]) * h_ * h_ / 6.0;
    dy = (y_[i + 1] - y_[i]) / h_ -
         (3.0 * A * A - 1.0) * h_ / 6.0 * m_[i] + (3.0 * B * B - 1.0) * h_ / 6.0 * m_[i + 1];
    ddy = A * m_[i] + B * m_[i + 1];
  }

 private:
  double t0_, h_;
  std::vector<double> y_, m_;
};

inline double ramp(double t, double T) {
  if (T <= 0 || t >= T) return 1.0;
  const double u = t / T;
  return u * u * (3.0 - 2.0 * u);
}

}  // namespace detail

// Deterministic reference trajectory generator. Positions are C^2 in time;
// yaw follows the velocity direction or stays fixed.
inline ReferenceTrajectory generate_trajectory(const std::string& kind,
                                               const TrajectoryParams& prm, double duration,
                                               double dt) {
  if (duration <= 0 || dt <= 0)
    throw std::invalid_argument("duration and dt must be positive");

  ReferenceTrajectory out;
  out.dt = dt;
  const int n = static_cast<int>(std::round(duration / dt)) + 1;

  // yaw follows the path tangent; the tangent direction (not the velocity,
  // which vanishes at the ramped start) keeps the heading continuous
  auto yaw_of = [&](const Vec3& tangent) {
    if (!prm.yaw_follow_tangent || tangent.head<2>().norm() < 1e-9) return prm.yaw_fixed;
    return std::atan2(tangent.y(), tangent.x());
  };

  if (kind == "hover") {
    for (int i = 0; i < n; ++i) {
      ReferenceSample s;
      s.t = i * dt;
      s.p = Vec3(0, 0, prm.height);
      s.v.setZero();
      s.a.setZero();
      s.yaw = prm.yaw_fixed;
      out.samples.push_back(s);
    }
    return out;
  }

  if (kind == "circle" || kind == "lemniscate") {
    const double w = 2.0 * M_PI / prm.period;
    const double wz = prm.z_amplitude > 0
                          ? 2.0 * M_PI / (prm.z_period > 0 ? prm.z_period : prm.period / 2)
                          : 0.0;
    for (int i = 0; i < n; ++i) {
      ReferenceSample s;
      s.t = i * dt;
      // phase advances with a smooth ramp so the vehicle starts from rest
      const double r = detail::ramp(s.t, prm.ramp_time);
      double phase, dphase, ddphase;
      if (prm.ramp_time > 0 && s.t < prm.ramp_time) {
        const double u = s.t / prm.ramp_time, T = prm.ramp_time;
        phase = w * T * (u * u * u - u * u * u * u / 2.0);
        dphase = w * (3 * u * u - 2 * u * u * u);
        ddphase = w / T * (6 * u - 6 * u * u);
      } else {
        const double T = prm.ramp_time;
        phase = w * (s.t - T / 2.0);
        dphase = w;
        ddphase = 0.0;
      }
      (void)r;
      if (kind == "circle") {
        s.p = Vec3(prm.radius_x * std::cos(phase), prm.radius_y * std::sin(phase), prm.height);
        s.v = Vec3(-prm.radius_x * std::sin(phase), prm.radius_y * std::cos(phase), 0) * dphase;
        s.a = Vec3(-prm.radius_x * std::cos(phase), -prm.radius_y * std::sin(phase), 0) *
                  dphase * dphase +
              Vec3(-prm.radius_x * std::sin(phase), prm.radius_y * std::cos(phase), 0) * ddphase;
      } else {
        s.p = Vec3(prm.amp_x * std::sin(phase), prm.amp_y * std::sin(2 * phase), prm.height);
        s.v = Vec3(prm.amp_x * std::cos(phase), 2 * prm.amp_y * std::cos(2 * phase), 0) * dphase;
        s.a = Vec3(-prm.amp_x * std::sin(phase), -4 * prm.amp_y * std::sin(2 * phase), 0) *
                  dphase * dphase +
              Vec3(prm.amp_x * std::cos(phase), 2 * prm.amp_y * std::cos(2 * phase), 0) * ddphase;
      }
      if (prm.z_amplitude > 0) {
        s.p.z() += prm.z_amplitude * std::sin(wz * phase / w);
        const double zp = wz / w;
        s.v.z() += prm.z_amplitude * zp * std::cos(zp * phase) * dphase;
        s.a.z() += prm.z_amplitude * (-zp * zp * std::sin(zp * phase) * dphase * dphase +
                                      zp * std::cos(zp * phase) * ddphase);
      }
      const Vec3 tangent =
          kind == "circle"
              ? Vec3(-prm.radius_x * std::sin(phase), prm.radius_y * std::cos(phase), 0)
              : Vec3(prm.amp_x * std::cos(phase), 2 * prm.amp_y * std::cos(2 * phase), 0);
      s.yaw = yaw_of(tangent);
      out.samples.push_back(s);
    }
    return out;
  }

  if (kind == "gp-random") {
    if (prm.gp_length_scale <= 0 || prm.gp_sigma <= 0)
      throw std::invalid_argument("gp-random requires positive length scale and sigma");
    // sample the GP at coarse knots, then a natural cubic spline gives a C^2 curve
    const double knot_dt = prm.gp_length_scale / 4.0;
    const int nk = static_cast<int>(std::ceil(duration / knot_dt)) + 3;
    Eigen::MatrixXd K(nk, nk);
    for (int i = 0; i < nk; ++i)
      for (int j = 0; j < nk; ++j) {
        const double d = (i - j) * knot_dt / prm.gp_length_scale;
        K(i, j) = prm.gp_sigma * prm.gp_sigma * std::exp(-0.5 * d * d);
      }
    K.diagonal().array() += 1e-10;
    Eigen::LLT<Eigen::MatrixXd> llt(K);
    Eigen::MatrixXd L = llt.matrixL();
    std::mt19937_64 rng(prm.seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    std::vector<detail::CubicSpline> axes;
    for (int a = 0; a < 3; ++a) {
      Eigen::VectorXd z(nk);
      for (int i = 0; i < nk; ++i) z(i) = nd(rng);
      Eigen::VectorXd y = L * z;
      std::vector<double> yv(nk);
      for (int i = 0; i < nk; ++i) yv[i] = y(i) + prm.gp_center[a];
      axes.emplace_back(0.0, knot_dt, std::move(yv));
    }
    for (int i = 0; i < n; ++i) {
      ReferenceSample s;
      s.t = i * dt;
      const double r = detail::ramp(s.t, prm.ramp_time);
      for (int a = 0; a < 3; ++a) {
        double y, dy, ddy;
        axes[a].eval(s.t, y, dy, ddy);
        // blend from the start point so the trajectory begins at rest
        s.p[a] = y;
        s.v[a] = dy;
        s.a[a] = ddy;
      }
      // spline tangent before the rest-blend keeps yaw continuous at t=0
      const Vec3 tangent = s.v;
      if (prm.ramp_time > 0 && s.t < prm.ramp_time) {
        double y0, dy0, ddy0;
        Vec3 p0;
        for (int a = 0; a < 3; ++a) {
          axes[a].eval(0.0, y0, dy0, ddy0);
          p0[a] = y0;
        }
        const double T = prm.ramp_time, u = s.t / T;
        const double b = u * u * (3 - 2 * u), db = (6 * u - 6 * u * u) / T,
                     ddb = (6 - 12 * u) / (T * T);
        Vec3 p = s.p, v = s.v, acc = s.a;
        s.p = p0 + b * (p - p0);
        s.v = db * (p - p0) + b * v;
        s.a = ddb * (p - p0) + 2 * db * v + b * acc;
      }
      (void)r;
      s.yaw = yaw_of(tangent);
      out.samples.push_back(s);
    }
    return out;
  }

  throw std::invalid_argument("unknown trajectory kind: " + kind);
}

}  // namespace vidyn
