#pragma once

#include <deque>
#include <map>
#include <optional>
#include <string>

#include "vidyn/core/types.hpp"
#include "vidyn/estimator/visual.hpp"
#include "vidyn/preint/preintegrate.hpp"
#include "vidyn/preint/residuals.hpp"
#include "vidyn/resmodel/train.hpp"

namespace vidyn {

// vio: visual + imu only. dynamics: adds the thrust-model factor with zero
// residual force. dynamics-prior: same, with the external-force prior centered
// on the averaged accelerometer-minus-thrust discrepancy. hybrid: dynamics
// factor driven by the learned residual-force model.
enum class EstimatorMode { Vio, Dynamics, DynamicsPrior, Hybrid };

inline EstimatorMode parse_mode(const std::string& s) {
  if (s == "vio") return EstimatorMode::Vio;
  if (s == "dynamics") return EstimatorMode::Dynamics;
  if (s == "dynamics-prior") return EstimatorMode::DynamicsPrior;
  if (s == "hybrid") return EstimatorMode::Hybrid;
  throw std::invalid_argument("unknown estimator mode '" + s + "'");
}

inline std::string mode_name(EstimatorMode m) {
  switch (m) {
    case EstimatorMode::Vio: return "vio";
    case EstimatorMode::Dynamics: return "dynamics";
    case EstimatorMode::DynamicsPrior: return "dynamics-prior";
    case EstimatorMode::Hybrid: return "hybrid";
  }
  return "?";
}

struct SolverConfig {
  int max_iterations = 8;
  double lm_lambda0 = 1e-4;
  double lm_up = 10.0, lm_down = 0.3;
  double tol_dx = 1e-8;
  double tol_dcost = 1e-9;
  double huber_px = 2.0;
  double pixel_sigma = 1.0;
  double w_f = 1.0 / 25.0;
  EstimatorMode mode = EstimatorMode::Vio;
  int keyframes = 10;       // L
  int recent_states = 5;    // K
  int keyframe_every = 2;   // every Nth frame becomes a keyframe
  double parallax_px = 20.0;
  double min_baseline = 0.05;   // m, triangulation gate
  double max_landmark_px = 5.0; // prune landmarks above this residual after solving

  void validate() const {
    if (tol_dx <= 0 || tol_dcost <= 0) throw std::invalid_argument("tolerances must be > 0");
    if (keyframes < 2 || recent_states < 2)
      throw std::invalid_argument("window sizes must be >= 2");
  }
};

// One frame in the window. Recent frames carry the full 18-dof state
// (pose + velocity/biases/external force extension); demoted keyframes keep
// only the 6-dof pose.
struct Frame {
  long id = 0;
  double t = 0;
  DroneState x;
  bool keyframe = false;
  bool has_ext = true;
  std::map<int, Vec2> obs;  // landmark id -> pixel

  // link to the previous recent frame (absorbed into the prior on demotion)
  bool has_preint = false;
  MeasurementBuffer buf;
  PreintegratedDelta imu_d;
  PreintegratedDelta dyn_d;
  Vec3 fe_prior_mean = Vec3::Zero();
};

// Identifies one tangent-space block of the problem.
struct BlockRef {
  enum Kind { Pose, Ext, Landmark } kind;
  long id;  // frame id or landmark id
  bool operator<(const BlockRef& o) const {
    return kind != o.kind ? kind < o.kind : id < o.id;
  }
  bool operator==(const BlockRef& o) const { return kind == o.kind && id == o.id; }
  static int dim(Kind k) { return k == Pose ? 6 : k == Ext ? 12 : 3; }
  int dim() const { return dim(kind); }
};

// Gaussian prior from marginalization: cost(delta) = 1/2 delta' H delta +
// b' delta, where delta is the tangent displacement of each listed block
// from its stored linearization point.
struct MarginalPrior {
  struct Entry {
    BlockRef ref;
    DroneState lin;  // pose blocks read p/q, ext blocks read v/b_w/b_a/f_e
  };
  std::vector<Entry> entries;
  Eigen::MatrixXd H;
  Eigen::VectorXd b;

  int dim() const { return static_cast<int>(H.rows()); }
  bool empty() const { return entries.empty(); }

  int offset_of(const BlockRef& ref) const {
    int off = 0;
    for (const auto& e : entries) {
      if (e.ref == ref) return off;
      off += e.ref.dim();
    }
    return -1;
  }
};

// Tangent displacement of a state from a linearization point for one block.
inline Eigen::VectorXd block_delta(const BlockRef& ref, const DroneState& cur,
                                   const DroneState& lin) {
  if (ref.kind == BlockRef::Pose) {
    Eigen::VectorXd d(6);
    d.segment<3>(0) = cur.p - lin.p;
    d.segment<3>(3) = quat_log(lin.q.conjugate() * cur.q);
    return d;
  }
  Eigen::VectorXd d(12);
  d.segment<3>(0) = cur.v - lin.v;
  d.segment<3>(3) = cur.b_w - lin.b_w;
  d.segment<3>(6) = cur.b_a - lin.b_a;
  d.segment<3>(9) = cur.f_e - lin.f_e;
  return d;
}

// Jacobian of block_delta w.r.t. the right-multiplicative retraction of cur
// (identity except the rotation rows, where the log map bends).
inline Eigen::MatrixXd block_delta_jacobian(const BlockRef& ref, const DroneState& cur,
                                            const DroneState& lin) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(ref.dim(), ref.dim());
  if (ref.kind == BlockRef::Pose)
    J.block<3, 3>(3, 3) = so3_right_jacobian_inv(quat_log(lin.q.conjugate() * cur.q));
  return J;
}

struct SlidingWindow {
  SolverConfig cfg;
  CameraRig rig;
  Vec3 gravity = Vec3(0, 0, -9.81);
  ImuNoiseParams imu_noise;
  DynamicsNoiseParams dyn_noise;
  const ResidualForceModel* model = nullptr;  // hybrid mode only

  std::deque<Frame> frames;
  std::map<int, Vec3> landmarks;
  MarginalPrior prior;
  long next_frame_id = 0;
  long frames_since_keyframe = 0;

  Frame* find(long id) {
    for (auto& f : frames)
      if (f.id == id) return &f;
    return nullptr;
  }
  const Frame* find(long id) const {
    for (const auto& f : frames)
      if (f.id == id) return &f;
    return nullptr;
  }

  int count_ext() const {
    int n = 0;
    for (const auto& f : frames) n += f.has_ext ? 1 : 0;
    return n;
  }
  int count_keyframes() const {
    int n = 0;
    for (const auto& f : frames) n += f.keyframe ? 1 : 0;
    return n;
  }
};

// External-force prior mean: average over the interval of
// (accelerometer - b_a) minus the mass-normalized thrust, body frame.
inline Vec3 accel_thrust_force_prior(const MeasurementBuffer& buf, const Vec3& b_a) {
  if (!buf.has_accel) throw std::invalid_argument("force prior needs an accelerometer stream");
  buf.validate();
  Vec3 sum = Vec3::Zero();
  for (size_t i = 0; i < buf.size(); ++i)
    sum += (buf.accel[i] - b_a) - Vec3(0, 0, buf.thrust[i]);
  return sum / static_cast<double>(buf.size());
}

// (Re-)preintegrates the deltas stored on a frame at the given bias
// linearization point; fills the dynamics delta according to the mode.
inline void preintegrate_frame(SlidingWindow& win, Frame& f, const Vec3& bw, const Vec3& ba) {
  f.imu_d = preintegrate_imu(f.buf, bw, ba, win.imu_noise);
  if (win.cfg.mode != EstimatorMode::Vio) {
    ResidualForceProvider f_res = zero_residual_force();
    if (win.cfg.mode == EstimatorMode::Hybrid) {
      if (!win.model) throw std::invalid_argument("hybrid mode requires a residual model");
      f_res = residual_force_provider(*win.model, f.buf, bw);
    }
    f.dyn_d = preintegrate_dynamics(f.buf, bw, win.dyn_noise, f_res);
    if (win.cfg.mode == EstimatorMode::DynamicsPrior)
      f.fe_prior_mean = accel_thrust_force_prior(f.buf, ba);
  }
}

// Seeds the window with the first frame and the gauge-fixing prior.
inline void initialize_window(SlidingWindow& win, double t, const DroneState& x0,
                              const std::map<int, Vec2>& obs) {
  win.cfg.validate();
  Frame f;
  f.id = win.next_frame_id++;
  f.t = t;
  f.x = x0;
  f.x.t = t;
  f.keyframe = true;
  f.obs = obs;
  win.frames.push_back(f);

  MarginalPrior p;
  p.entries.push_back({{BlockRef::Pose, f.id}, f.x});
  p.entries.push_back({{BlockRef::Ext, f.id}, f.x});
  p.H = Eigen::MatrixXd::Zero(18, 18);
  p.H.block<6, 6>(0, 0) = 1e8 * Eigen::MatrixXd::Identity(6, 6);
  p.H.block<3, 3>(6, 6) = 1e2 * Mat3::Identity();   // v
  p.H.block<3, 3>(9, 9) = 1e6 * Mat3::Identity();   // b_w
  p.H.block<3, 3>(12, 12) = 1e4 * Mat3::Identity(); // b_a
  p.H.block<3, 3>(15, 15) = win.cfg.w_f * Mat3::Identity();
  p.b = Eigen::VectorXd::Zero(18);
  win.prior = std::move(p);
}

// Appends a new frame: state initialized by IMU propagation from the newest
// frame, preintegrated deltas attached, new landmarks triangulated from two
// views (midpoint method).
inline void add_measurements(SlidingWindow& win, double t, const std::map<int, Vec2>& obs,
                             const MeasurementBuffer& buf) {
  if (win.frames.empty()) throw std::logic_error("window not initialized");
  Frame& prev = win.frames.back();
  if (t <= prev.t) throw std::invalid_argument("frame timestamps must advance");
  buf.validate();
  if (buf.t0 > prev.t + 1e-6 || buf.t1 < t - 1e-6)
    throw std::invalid_argument("buffer does not cover the inter-frame gap");

  Frame f;
  f.id = win.next_frame_id++;
  f.t = t;
  f.obs = obs;
  f.buf = buf;
  f.has_preint = true;
  preintegrate_frame(win, f, prev.x.b_w, prev.x.b_a);

  // propagate the state across the interval with the preintegrated delta
  const Mat3 R0 = prev.x.q.toRotationMatrix();
  const double Dt = f.imu_d.Dt;
  f.x = prev.x;
  f.x.t = t;
  f.x.p = prev.x.p + prev.x.v * Dt + 0.5 * win.gravity * Dt * Dt + R0 * f.imu_d.alpha;
  f.x.v = prev.x.v + win.gravity * Dt + R0 * f.imu_d.beta;
  f.x.q = (prev.x.q * f.imu_d.gamma).normalized();

  // keyframe cadence + parallax promotion
  ++win.frames_since_keyframe;
  bool kf = win.frames_since_keyframe >= win.cfg.keyframe_every;
  if (!kf) {
    const Frame* last_kf = nullptr;
    for (auto it = win.frames.rbegin(); it != win.frames.rend(); ++it)
      if (it->keyframe) {
        last_kf = &*it;
        break;
      }
    if (last_kf) {
      std::vector<double> disp;
      for (const auto& [lm, px] : obs) {
        auto it = last_kf->obs.find(lm);
        if (it != last_kf->obs.end()) disp.push_back((px - it->second).norm());
      }
      if (!disp.empty()) {
        std::nth_element(disp.begin(), disp.begin() + disp.size() / 2, disp.end());
        if (disp[disp.size() / 2] > win.cfg.parallax_px) kf = true;
      }
    }
  }
  f.keyframe = kf;
  if (kf) win.frames_since_keyframe = 0;

  win.frames.push_back(std::move(f));

  // triangulate landmarks that just gained a second view
  Frame& cur = win.frames.back();
  for (const auto& [lm, px] : cur.obs) {
    if (win.landmarks.count(lm)) continue;
    const Frame* other = nullptr;
    for (const auto& g : win.frames) {
      if (g.id != cur.id && g.obs.count(lm)) {
        other = &g;
        break;
      }
    }
    if (!other) continue;
    if ((other->x.p - cur.x.p).norm() < win.cfg.min_baseline) continue;  // no baseline yet
    try {
      const Vec3 l = triangulate_midpoint(win.rig, other->x.p, other->x.q, other->obs.at(lm),
                                          cur.x.p, cur.x.q, px);
      // sanity: the point must reproject into every observing frame
      bool ok = true;
      for (const auto& g : win.frames) {
        const auto it = g.obs.find(lm);
        if (it == g.obs.end()) continue;
        const auto r = reprojection_residual(win.rig, g.x.p, g.x.q, l, it->second);
        if (r.behind_camera || r.e.norm() > win.cfg.max_landmark_px) {
          ok = false;
          break;
        }
      }
      if (ok) win.landmarks[lm] = l;
    } catch (const std::runtime_error&) {
      // behind camera / degenerate rays: retry once more views arrive
    }
  }
}

}  // namespace vidyn
