#pragma once

#include <algorithm>
#include <functional>
#include <iostream>
#include <set>

#include "vidyn/estimator/window.hpp"

namespace vidyn {

// ---------------------------------------------------------------------------
// generic dense Gaussian marginalization
// ---------------------------------------------------------------------------

// Clamps negative eigenvalues of a symmetric matrix to zero.
inline Eigen::MatrixXd psd_project(const Eigen::MatrixXd& H, bool* clipped = nullptr) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (H + H.transpose()));
  Eigen::VectorXd ev = es.eigenvalues();
  bool any = false;
  for (int i = 0; i < ev.size(); ++i)
    if (ev[i] < 0) {
      if (ev[i] < -1e-9 * std::max(1.0, ev.maxCoeff())) any = true;
      ev[i] = 0;
    }
  if (clipped) *clipped = any;
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

// Schur complement of the `drop` scalar indices of the quadratic cost
// 1/2 x'Hx + b'x onto the `keep` indices.
inline void schur_marginalize(const Eigen::MatrixXd& H, const Eigen::VectorXd& b,
                              const std::vector<int>& keep, const std::vector<int>& drop,
                              Eigen::MatrixXd& Hk, Eigen::VectorXd& bk) {
  const int nk = static_cast<int>(keep.size()), nd = static_cast<int>(drop.size());
  Eigen::MatrixXd Hkk(nk, nk), Hkd(nk, nd), Hdd(nd, nd);
  Eigen::VectorXd bkv(nk), bdv(nd);
  for (int i = 0; i < nk; ++i) {
    bkv[i] = b[keep[i]];
    for (int j = 0; j < nk; ++j) Hkk(i, j) = H(keep[i], keep[j]);
    for (int j = 0; j < nd; ++j) Hkd(i, j) = H(keep[i], drop[j]);
  }
  for (int i = 0; i < nd; ++i) {
    bdv[i] = b[drop[i]];
    for (int j = 0; j < nd; ++j) Hdd(i, j) = H(drop[i], drop[j]);
  }
  // eigendecomposition-based pseudo-inverse: tolerant of unconstrained dims
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (Hdd + Hdd.transpose()));
  const double tol = 1e-12 * std::max(1.0, es.eigenvalues().cwiseAbs().maxCoeff());
  Eigen::VectorXd inv = es.eigenvalues();
  for (int i = 0; i < inv.size(); ++i) inv[i] = inv[i] > tol ? 1.0 / inv[i] : 0.0;
  const Eigen::MatrixXd Hdd_inv =
      es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  Hk = Hkk - Hkd * Hdd_inv * Hkd.transpose();
  bk = bkv - Hkd * Hdd_inv * bdv;
  Hk = 0.5 * (Hk + Hk.transpose()).eval();
}

// ---------------------------------------------------------------------------
// factor enumeration
// ---------------------------------------------------------------------------

struct FactorBlocks {
  std::vector<std::pair<BlockRef, Eigen::MatrixXd>> J;
};

// Landmarks optimized this round: in the map and observed by >= 2 frames.
inline std::vector<int> active_landmarks(const SlidingWindow& win) {
  std::map<int, int> count;
  for (const auto& f : win.frames)
    for (const auto& [lm, px] : f.obs)
      if (win.landmarks.count(lm)) ++count[lm];
  std::vector<int> out;
  for (const auto& [lm, n] : count)
    if (n >= 2) out.push_back(lm);
  return out;
}

// Calls emit(e, W, blocks) for every factor in the window, in deterministic
// order. Jacobian matrices are left empty when with_jac is false.
template <class Emit>
void for_each_factor(const SlidingWindow& win, bool with_jac, Emit&& emit) {
  const auto lm_active = [&] {
    auto v = active_landmarks(win);
    return std::set<int>(v.begin(), v.end());
  }();

  const double huber = win.cfg.huber_px;
  const double inv_var = 1.0 / (win.cfg.pixel_sigma * win.cfg.pixel_sigma);

  // visual factors
  for (const auto& f : win.frames) {
    for (const auto& [lm, px] : f.obs) {
      if (!lm_active.count(lm)) continue;
      const auto r = reprojection_residual(win.rig, f.x.p, f.x.q, win.landmarks.at(lm), px);
      double w = inv_var;
      const double rn = r.e.norm();
      if (rn > huber) w *= huber / rn;  // robust reweighting
      Eigen::VectorXd e = r.e;
      Eigen::MatrixXd W = w * Eigen::Matrix2d::Identity();
      FactorBlocks fb;
      if (with_jac) {
        Eigen::MatrixXd Jp(2, 6);
        Jp << r.J_p, r.J_th;
        fb.J.push_back({{BlockRef::Pose, f.id}, Jp});
        fb.J.push_back({{BlockRef::Landmark, lm}, r.J_l});
      } else {
        fb.J.push_back({{BlockRef::Pose, f.id}, {}});
        fb.J.push_back({{BlockRef::Landmark, lm}, {}});
      }
      emit(e, W, fb);
    }
  }

  // preintegration factors between consecutive recent states
  const Frame* prev = nullptr;
  for (const auto& f : win.frames) {
    if (f.has_preint && prev && prev->has_ext && f.has_ext) {
      {
        const auto r = imu_residual(f.imu_d, prev->x, f.x, win.gravity);
        FactorBlocks fb;
        if (with_jac) {
          Eigen::MatrixXd Jp0(15, 6), Je0(15, 12), Jp1(15, 6), Je1(15, 12);
          Jp0 << r.J_p0, r.J_th0;
          Je0 << r.J_v0, r.J_bw0, r.J_ba0, Eigen::MatrixXd::Zero(15, 3);
          Jp1 << r.J_p1, r.J_th1;
          Je1 << r.J_v1, r.J_bw1, r.J_ba1, Eigen::MatrixXd::Zero(15, 3);
          fb.J.push_back({{BlockRef::Pose, prev->id}, Jp0});
          fb.J.push_back({{BlockRef::Ext, prev->id}, Je0});
          fb.J.push_back({{BlockRef::Pose, f.id}, Jp1});
          fb.J.push_back({{BlockRef::Ext, f.id}, Je1});
        } else {
          fb.J.push_back({{BlockRef::Pose, prev->id}, {}});
          fb.J.push_back({{BlockRef::Ext, prev->id}, {}});
          fb.J.push_back({{BlockRef::Pose, f.id}, {}});
          fb.J.push_back({{BlockRef::Ext, f.id}, {}});
        }
        emit(Eigen::VectorXd(r.e), Eigen::MatrixXd(r.W), fb);
      }
      if (win.cfg.mode != EstimatorMode::Vio) {
        const auto r = dynamics_residual(f.dyn_d, prev->x, f.x, win.gravity, win.cfg.w_f,
                                         f.fe_prior_mean);
        FactorBlocks fb;
        if (with_jac) {
          Eigen::MatrixXd Jp0(9, 6), Je0(9, 12), Jp1(9, 6), Je1(9, 12);
          Jp0 << r.J_p0, r.J_th0;
          Je0 << r.J_v0, r.J_bw0, Eigen::MatrixXd::Zero(9, 3), r.J_fe0;
          Jp1 << r.J_p1, Eigen::MatrixXd::Zero(9, 3);
          Je1 << r.J_v1, Eigen::MatrixXd::Zero(9, 9);
          fb.J.push_back({{BlockRef::Pose, prev->id}, Jp0});
          fb.J.push_back({{BlockRef::Ext, prev->id}, Je0});
          fb.J.push_back({{BlockRef::Pose, f.id}, Jp1});
          fb.J.push_back({{BlockRef::Ext, f.id}, Je1});
        } else {
          fb.J.push_back({{BlockRef::Pose, prev->id}, {}});
          fb.J.push_back({{BlockRef::Ext, prev->id}, {}});
          fb.J.push_back({{BlockRef::Pose, f.id}, {}});
          fb.J.push_back({{BlockRef::Ext, f.id}, {}});
        }
        emit(Eigen::VectorXd(r.e), Eigen::MatrixXd(r.W), fb);
      }
    }
    prev = &f;
  }

  // external-force zero prior: newest state always (its f_e has no dynamics
  // factor yet); in vio mode every state (f_e is otherwise unconstrained)
  for (const auto& f : win.frames) {
    if (!f.has_ext) continue;
    const bool newest = f.id == win.frames.back().id;
    if (!newest && win.cfg.mode != EstimatorMode::Vio) continue;
    Eigen::VectorXd e = f.x.f_e;
    Eigen::MatrixXd W = win.cfg.w_f * Mat3::Identity();
    FactorBlocks fb;
    if (with_jac) {
      Eigen::MatrixXd Je = Eigen::MatrixXd::Zero(3, 12);
      Je.block<3, 3>(0, 9) = Mat3::Identity();
      fb.J.push_back({{BlockRef::Ext, f.id}, Je});
    } else {
      fb.J.push_back({{BlockRef::Ext, f.id}, {}});
    }
    emit(e, W, fb);
  }
}

// Block-diagonal Jacobian of the stacked prior displacement w.r.t. the
// retraction at the current states.
inline Eigen::MatrixXd prior_delta_jacobian(const SlidingWindow& win) {
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(win.prior.dim(), win.prior.dim());
  int off = 0;
  for (const auto& e : win.prior.entries) {
    const Frame* f = win.find(e.ref.id);
    if (!f) throw std::logic_error("prior references a frame outside the window");
    J.block(off, off, e.ref.dim(), e.ref.dim()) = block_delta_jacobian(e.ref, f->x, e.lin);
    off += e.ref.dim();
  }
  return J;
}

// Prior cost at the current linearization displacement.
inline double prior_cost(const SlidingWindow& win) {
  if (win.prior.empty()) return 0.0;
  Eigen::VectorXd d(win.prior.dim());
  int off = 0;
  for (const auto& e : win.prior.entries) {
    const Frame* f = win.find(e.ref.id);
    if (!f) throw std::logic_error("prior references a frame outside the window");
    d.segment(off, e.ref.dim()) = block_delta(e.ref, f->x, e.lin);
    off += e.ref.dim();
  }
  return 0.5 * d.dot(win.prior.H * d) + win.prior.b.dot(d);
}

inline double evaluate_cost(const SlidingWindow& win) {
  double cost = prior_cost(win);
  for_each_factor(win, false,
                  [&](const Eigen::VectorXd& e, const Eigen::MatrixXd& W, const FactorBlocks&) {
                    cost += 0.5 * e.dot(W * e);
                  });
  return cost;
}

// ---------------------------------------------------------------------------
// stacked residual/Jacobian (test- and gradient-check-facing)
// ---------------------------------------------------------------------------

struct StackedSystem {
  std::vector<BlockRef> blocks;  // column layout
  std::map<BlockRef, int> offset;
  int dim = 0;
  Eigen::VectorXd r;   // whitened residual (sqrt(W) e), prior included
  Eigen::MatrixXd J;   // whitened Jacobian
  double cost() const { return 0.5 * r.squaredNorm(); }
};

inline std::vector<BlockRef> state_block_layout(const SlidingWindow& win) {
  std::vector<BlockRef> blocks;
  for (const auto& f : win.frames) {
    blocks.push_back({BlockRef::Pose, f.id});
    if (f.has_ext) blocks.push_back({BlockRef::Ext, f.id});
  }
  for (int lm : active_landmarks(win)) blocks.push_back({BlockRef::Landmark, lm});
  return blocks;
}

inline Eigen::MatrixXd matrix_sqrt(const Eigen::MatrixXd& W) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(W);
  return es.operatorSqrt();
}

inline StackedSystem build_cost(const SlidingWindow& win) {
  StackedSystem sys;
  sys.blocks = state_block_layout(win);
  for (const auto& b : sys.blocks) {
    sys.offset[b] = sys.dim;
    sys.dim += b.dim();
  }
  std::vector<Eigen::VectorXd> rs;
  std::vector<std::vector<std::pair<int, Eigen::MatrixXd>>> js;
  int rows = 0;
  for_each_factor(win, true,
                  [&](const Eigen::VectorXd& e, const Eigen::MatrixXd& W,
                      const FactorBlocks& fb) {
                    const Eigen::MatrixXd sw = matrix_sqrt(W);
                    rs.push_back(sw * e);
                    std::vector<std::pair<int, Eigen::MatrixXd>> row;
                    for (const auto& [ref, J] : fb.J)
                      if (sys.offset.count(ref)) row.push_back({sys.offset.at(ref), sw * J});
                    js.push_back(std::move(row));
                    rows += static_cast<int>(e.size());
                  });
  int prior_rows = 0;
  Eigen::MatrixXd sqrtH;
  Eigen::VectorXd prior_d;
  if (!win.prior.empty()) {
    sqrtH = matrix_sqrt(win.prior.H);
    prior_d.resize(win.prior.dim());
    int off = 0;
    for (const auto& e : win.prior.entries) {
      prior_d.segment(off, e.ref.dim()) = block_delta(e.ref, win.find(e.ref.id)->x, e.lin);
      off += e.ref.dim();
    }
    prior_rows = win.prior.dim();
  }
  sys.r.setZero(rows + prior_rows);
  sys.J.setZero(rows + prior_rows, sys.dim);
  int row = 0;
  for (size_t i = 0; i < rs.size(); ++i) {
    sys.r.segment(row, rs[i].size()) = rs[i];
    for (const auto& [off, J] : js[i]) sys.J.block(row, off, J.rows(), J.cols()) += J;
    row += static_cast<int>(rs[i].size());
  }
  if (prior_rows) {
    // linear prior b folded into the residual: r = sqrt(H) d + sqrt(H)^+ b
    Eigen::VectorXd b_half = sqrtH.completeOrthogonalDecomposition().solve(win.prior.b);
    sys.r.segment(row, prior_rows) = sqrtH * prior_d + b_half;
    const Eigen::MatrixXd sqrtHJ = sqrtH * prior_delta_jacobian(win);
    int off = 0;
    for (const auto& e : win.prior.entries) {
      if (sys.offset.count(e.ref))
        sys.J.block(row, sys.offset.at(e.ref), prior_rows, e.ref.dim()) =
            sqrtHJ.middleCols(off, e.ref.dim());
      off += e.ref.dim();
    }
  }
  return sys;
}

// ---------------------------------------------------------------------------
// Levenberg-Marquardt with landmark Schur elimination
// ---------------------------------------------------------------------------

struct OptimizeResult {
  int iterations = 0;
  std::vector<double> cost_trace;  // cost after each accepted step (front = initial)
  bool converged = false;
};

namespace detail {

struct StateSnapshot {
  std::vector<std::pair<long, DroneState>> xs;
  std::map<int, Vec3> lms;
};

inline StateSnapshot snapshot(const SlidingWindow& win) {
  StateSnapshot s;
  for (const auto& f : win.frames) s.xs.push_back({f.id, f.x});
  s.lms = win.landmarks;
  return s;
}

inline void restore(SlidingWindow& win, const StateSnapshot& s) {
  for (const auto& [id, x] : s.xs) win.find(id)->x = x;
  win.landmarks = s.lms;
}

inline void retract(SlidingWindow& win, const std::vector<BlockRef>& blocks,
                    const std::map<BlockRef, int>& offset, const Eigen::VectorXd& dx) {
  for (const auto& b : blocks) {
    const int off = offset.at(b);
    if (b.kind == BlockRef::Pose) {
      Frame* f = win.find(b.id);
      f->x.p += dx.segment<3>(off);
      f->x.q = (f->x.q * quat_exp(dx.segment<3>(off + 3))).normalized();
    } else if (b.kind == BlockRef::Ext) {
      Frame* f = win.find(b.id);
      f->x.v += dx.segment<3>(off);
      f->x.b_w += dx.segment<3>(off + 3);
      f->x.b_a += dx.segment<3>(off + 6);
      f->x.f_e += dx.segment<3>(off + 9);
    } else {
      win.landmarks.at(static_cast<int>(b.id)) += dx.segment<3>(off);
    }
  }
}

}  // namespace detail

// Re-preintegrates frames whose stored gyro-bias linearization point has
// drifted beyond the first-order-correction threshold.
inline void refresh_preintegration(SlidingWindow& win) {
  const Frame* prev = nullptr;
  for (auto& f : win.frames) {
    if (f.has_preint && prev && prev->has_ext &&
        (prev->x.b_w - f.imu_d.bw_lin).norm() > kRepreintegrationThreshold)
      preintegrate_frame(win, f, prev->x.b_w, prev->x.b_a);
    prev = &f;
  }
}

inline OptimizeResult optimize(SlidingWindow& win) {
  OptimizeResult out;
  if (win.frames.size() < 2) {
    out.cost_trace.push_back(evaluate_cost(win));
    return out;
  }
  refresh_preintegration(win);

  // column layout: frame blocks first, landmarks last
  std::vector<BlockRef> blocks = state_block_layout(win);
  std::map<BlockRef, int> offset;
  int ns = 0, nl = 0;
  for (const auto& b : blocks)
    if (b.kind != BlockRef::Landmark) ns += b.dim();
  {
    int off_s = 0, off_l = ns;
    for (const auto& b : blocks) {
      if (b.kind != BlockRef::Landmark) {
        offset[b] = off_s;
        off_s += b.dim();
      } else {
        offset[b] = off_l;
        off_l += 3;
        nl += 3;
      }
    }
  }

  double cost = evaluate_cost(win);
  out.cost_trace.push_back(cost);
  double lambda = win.cfg.lm_lambda0;

  for (int iter = 0; iter < win.cfg.max_iterations; ++iter) {
    ++out.iterations;
    // assemble the normal equations
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(ns + nl, ns + nl);
    Eigen::VectorXd g = Eigen::VectorXd::Zero(ns + nl);
    for_each_factor(win, true,
                    [&](const Eigen::VectorXd& e, const Eigen::MatrixXd& W,
                        const FactorBlocks& fb) {
                      for (const auto& [ri, Ji] : fb.J) {
                        if (!offset.count(ri)) continue;
                        const int oi = offset.at(ri);
                        g.segment(oi, Ji.cols()) += Ji.transpose() * (W * e);
                        for (const auto& [rj, Jj] : fb.J) {
                          if (!offset.count(rj)) continue;
                          const int oj = offset.at(rj);
                          H.block(oi, oj, Ji.cols(), Jj.cols()) +=
                              Ji.transpose() * W * Jj;
                        }
                      }
                    });
    if (!win.prior.empty()) {
      Eigen::VectorXd d(win.prior.dim());
      int off = 0;
      std::vector<int> map_idx(win.prior.dim());
      for (const auto& e : win.prior.entries) {
        const Frame* f = win.find(e.ref.id);
        if (!f) throw std::logic_error("prior references a frame outside the window");
        d.segment(off, e.ref.dim()) = block_delta(e.ref, f->x, e.lin);
        for (int k = 0; k < e.ref.dim(); ++k) map_idx[off + k] = offset.at(e.ref) + k;
        off += e.ref.dim();
      }
      const Eigen::MatrixXd Jp = prior_delta_jacobian(win);
      const Eigen::VectorXd gp = Jp.transpose() * (win.prior.b + win.prior.H * d);
      const Eigen::MatrixXd Hp = Jp.transpose() * win.prior.H * Jp;
      for (int i = 0; i < win.prior.dim(); ++i) {
        g[map_idx[i]] += gp[i];
        for (int j = 0; j < win.prior.dim(); ++j)
          H(map_idx[i], map_idx[j]) += Hp(i, j);
      }
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 8 && !stepped; ++attempt) {
      Eigen::MatrixXd Hd = H;
      for (int i = 0; i < ns + nl; ++i) Hd(i, i) += lambda * std::max(H(i, i), 1e-6);
      // Schur-eliminate the landmarks (block-diagonal tail)
      Eigen::VectorXd dx(ns + nl);
      bool ok = true;
      if (nl > 0) {
        Eigen::MatrixXd Hss = Hd.topLeftCorner(ns, ns);
        const Eigen::MatrixXd Hsl = Hd.topRightCorner(ns, nl);
        Eigen::VectorXd gs = g.head(ns);
        // Hll is 3x3 block diagonal: invert blockwise
        Eigen::MatrixXd Hsl_w(ns, nl);  // Hsl * Hll^-1
        std::vector<Mat3> Hll_inv(nl / 3);
        for (int i = 0; i < nl; i += 3) {
          Eigen::LDLT<Mat3> ld(Mat3(Hd.block<3, 3>(ns + i, ns + i)));
          if (ld.info() != Eigen::Success) {
            ok = false;
            break;
          }
          Hll_inv[i / 3] = ld.solve(Mat3::Identity());
          Hsl_w.middleCols<3>(i) = Hsl.middleCols<3>(i) * Hll_inv[i / 3];
        }
        if (ok) {
          Hss -= Hsl_w * Hsl.transpose();
          gs -= Hsl_w * g.tail(nl);
          Eigen::LDLT<Eigen::MatrixXd> ld(Hss);
          if (ld.info() != Eigen::Success) {
            ok = false;
          } else {
            dx.head(ns) = ld.solve(-gs);
            const Eigen::VectorXd rhs = -g.tail(nl) - Hsl.transpose() * dx.head(ns);
            for (int i = 0; i < nl; i += 3)
              dx.segment<3>(ns + i) = Hll_inv[i / 3] * rhs.segment<3>(i);
          }
        }
      } else {
        Eigen::LDLT<Eigen::MatrixXd> ld(Hd);
        if (ld.info() != Eigen::Success)
          ok = false;
        else
          dx = ld.solve(-g);
      }
      if (!ok || !dx.allFinite()) {
        lambda *= win.cfg.lm_up;
        if (attempt == 7)
          throw std::runtime_error("normal-equation solve failure (system dim " +
                                   std::to_string(ns + nl) + ")");
        continue;
      }

      const auto snap = detail::snapshot(win);
      detail::retract(win, blocks, offset, dx);
      const double trial = evaluate_cost(win);
      if (trial <= cost) {
        const double decrease = cost - trial;
        cost = trial;
        out.cost_trace.push_back(cost);
        lambda = std::max(lambda * win.cfg.lm_down, 1e-12);
        stepped = true;
        if (dx.norm() < win.cfg.tol_dx || decrease < win.cfg.tol_dcost) {
          out.converged = true;
          return out;
        }
      } else {
        detail::restore(win, snap);
        lambda *= win.cfg.lm_up;
      }
    }
    if (!stepped) {
      out.converged = true;  // no admissible step: local minimum within damping range
      return out;
    }
  }
  return out;
}

// Drops landmarks whose worst reprojection residual exceeds the configured
// bound; they can be re-triangulated later from the improved poses.
inline int prune_landmarks(SlidingWindow& win) {
  std::vector<int> bad;
  for (const auto& [lm, l] : win.landmarks) {
    double worst = 0;
    for (const auto& f : win.frames) {
      const auto it = f.obs.find(lm);
      if (it == f.obs.end()) continue;
      const auto r = reprojection_residual(win.rig, f.x.p, f.x.q, l, it->second);
      worst = std::max(worst, r.behind_camera ? 1e9 : r.e.norm());
    }
    if (worst > win.cfg.max_landmark_px) bad.push_back(lm);
  }
  for (int lm : bad) win.landmarks.erase(lm);
  return static_cast<int>(bad.size());
}

// ---------------------------------------------------------------------------
// marginalization
// ---------------------------------------------------------------------------

namespace detail {

// Builds a dense (H, b) over `involved` blocks at the current estimates from
// the rebased prior plus the given factors, then Schur-complements the
// `drop_set` blocks away and installs the result as the new window prior.
inline void marginalize_blocks(SlidingWindow& win, const std::vector<BlockRef>& extra_blocks,
                               const std::set<BlockRef>& drop_set,
                               const std::function<void(const std::function<void(
                                   const Eigen::VectorXd&, const Eigen::MatrixXd&,
                                   const FactorBlocks&)>&)>& emit_factors) {
  // involved = prior blocks + extra blocks (deduplicated, deterministic order)
  std::vector<BlockRef> involved;
  auto add_block = [&](const BlockRef& r) {
    if (std::find(involved.begin(), involved.end(), r) == involved.end())
      involved.push_back(r);
  };
  for (const auto& e : win.prior.entries) add_block(e.ref);
  for (const auto& r : extra_blocks) add_block(r);

  std::map<BlockRef, int> offset;
  int dim = 0;
  for (const auto& r : involved) {
    offset[r] = dim;
    dim += r.dim();
  }
  Eigen::MatrixXd H = Eigen::MatrixXd::Zero(dim, dim);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dim);

  // rebase the prior to the current states: the stored quadratic in the old
  // displacement d becomes H' = J'HJ, b' = J'(b + Hd) in the local tangent
  if (!win.prior.empty()) {
    Eigen::VectorXd d(win.prior.dim());
    std::vector<int> idx(win.prior.dim());
    int off = 0;
    for (const auto& e : win.prior.entries) {
      const Frame* f = win.find(e.ref.id);
      if (!f) throw std::logic_error("prior references a frame outside the window");
      d.segment(off, e.ref.dim()) = block_delta(e.ref, f->x, e.lin);
      for (int k = 0; k < e.ref.dim(); ++k) idx[off + k] = offset.at(e.ref) + k;
      off += e.ref.dim();
    }
    const Eigen::MatrixXd Jp = prior_delta_jacobian(win);
    const Eigen::VectorXd br = Jp.transpose() * (win.prior.b + win.prior.H * d);
    const Eigen::MatrixXd Hr = Jp.transpose() * win.prior.H * Jp;
    for (int i = 0; i < win.prior.dim(); ++i) {
      b[idx[i]] += br[i];
      for (int j = 0; j < win.prior.dim(); ++j) H(idx[i], idx[j]) += Hr(i, j);
    }
  }

  emit_factors([&](const Eigen::VectorXd& e, const Eigen::MatrixXd& W, const FactorBlocks& fb) {
    for (const auto& [ri, Ji] : fb.J) {
      if (!offset.count(ri)) continue;
      const int oi = offset.at(ri);
      b.segment(oi, Ji.cols()) += Ji.transpose() * (W * e);
      for (const auto& [rj, Jj] : fb.J) {
        if (!offset.count(rj)) continue;
        H.block(oi, offset.at(rj), Ji.cols(), Jj.cols()) += Ji.transpose() * W * Jj;
      }
    }
  });

  std::vector<int> keep_idx, drop_idx;
  std::vector<BlockRef> keep_blocks;
  for (const auto& r : involved) {
    const bool drop = drop_set.count(r) > 0;
    for (int k = 0; k < r.dim(); ++k)
      (drop ? drop_idx : keep_idx).push_back(offset.at(r) + k);
    if (!drop) keep_blocks.push_back(r);
  }
  Eigen::MatrixXd Hk;
  Eigen::VectorXd bk;
  schur_marginalize(H, b, keep_idx, drop_idx, Hk, bk);
  bool clipped = false;
  Hk = psd_project(Hk, &clipped);
  if (clipped) std::cerr << "warning: marginal prior lost positive-semidefiniteness; projected\n";

  MarginalPrior np;
  np.H = Hk;
  np.b = bk;
  for (const auto& r : keep_blocks) np.entries.push_back({r, win.find(r.id)->x});
  win.prior = std::move(np);
}

// Demotes the oldest full state: its extension (and, for non-keyframes, its
// pose) is marginalized together with the preintegration factors linking it
// to its successor.
inline void demote_oldest_ext(SlidingWindow& win) {
  auto it = std::find_if(win.frames.begin(), win.frames.end(),
                         [](const Frame& f) { return f.has_ext; });
  if (it == win.frames.end()) return;
  Frame& F = *it;
  auto nx = std::next(it);
  if (nx == win.frames.end()) return;  // nothing to absorb yet
  Frame& S = *nx;

  std::vector<BlockRef> extra = {{BlockRef::Pose, F.id},
                                 {BlockRef::Ext, F.id},
                                 {BlockRef::Pose, S.id},
                                 {BlockRef::Ext, S.id}};
  std::set<BlockRef> drop = {{BlockRef::Ext, F.id}};
  if (!F.keyframe) drop.insert({BlockRef::Pose, F.id});

  const Vec3 gravity = win.gravity;
  marginalize_blocks(win, extra, drop, [&](const auto& add) {
    if (S.has_preint) {
      const auto r = imu_residual(S.imu_d, F.x, S.x, gravity);
      FactorBlocks fb;
      Eigen::MatrixXd Jp0(15, 6), Je0(15, 12), Jp1(15, 6), Je1(15, 12);
      Jp0 << r.J_p0, r.J_th0;
      Je0 << r.J_v0, r.J_bw0, r.J_ba0, Eigen::MatrixXd::Zero(15, 3);
      Jp1 << r.J_p1, r.J_th1;
      Je1 << r.J_v1, r.J_bw1, r.J_ba1, Eigen::MatrixXd::Zero(15, 3);
      fb.J.push_back({{BlockRef::Pose, F.id}, Jp0});
      fb.J.push_back({{BlockRef::Ext, F.id}, Je0});
      fb.J.push_back({{BlockRef::Pose, S.id}, Jp1});
      fb.J.push_back({{BlockRef::Ext, S.id}, Je1});
      add(r.e, r.W, fb);
      if (win.cfg.mode != EstimatorMode::Vio) {
        const auto rd =
            dynamics_residual(S.dyn_d, F.x, S.x, gravity, win.cfg.w_f, S.fe_prior_mean);
        FactorBlocks fd;
        Eigen::MatrixXd Dp0(9, 6), De0(9, 12), Dp1(9, 6), De1(9, 12);
        Dp0 << rd.J_p0, rd.J_th0;
        De0 << rd.J_v0, rd.J_bw0, Eigen::MatrixXd::Zero(9, 3), rd.J_fe0;
        Dp1 << rd.J_p1, Eigen::MatrixXd::Zero(9, 3);
        De1 << rd.J_v1, Eigen::MatrixXd::Zero(9, 9);
        fd.J.push_back({{BlockRef::Pose, F.id}, Dp0});
        fd.J.push_back({{BlockRef::Ext, F.id}, De0});
        fd.J.push_back({{BlockRef::Pose, S.id}, Dp1});
        fd.J.push_back({{BlockRef::Ext, S.id}, De1});
        add(rd.e, rd.W, fd);
      }
    }
    if (win.cfg.mode == EstimatorMode::Vio) {
      // the per-state f_e prior row, so the dropped f_e dims carry information
      Eigen::VectorXd e = F.x.f_e;
      Eigen::MatrixXd W = win.cfg.w_f * Mat3::Identity();
      FactorBlocks fb;
      Eigen::MatrixXd Je = Eigen::MatrixXd::Zero(3, 12);
      Je.block<3, 3>(0, 9) = Mat3::Identity();
      fb.J.push_back({{BlockRef::Ext, F.id}, Je});
      add(e, W, fb);
    }
  });

  // the preintegration link is now part of the prior
  S.has_preint = false;
  S.buf = MeasurementBuffer{};
  F.has_ext = false;
  if (!F.keyframe) {
    win.frames.erase(it);
  }
  // prune landmarks that lost all observers
  for (auto lm = win.landmarks.begin(); lm != win.landmarks.end();) {
    bool seen = false;
    for (const auto& f : win.frames) seen = seen || f.obs.count(lm->first) > 0;
    if (!seen)
      lm = win.landmarks.erase(lm);
    else
      ++lm;
  }
}

// Drops the oldest keyframe: its visual factors are discarded (landmarks
// never enter the prior) and its pose is marginalized out of the prior.
inline void drop_oldest_keyframe(SlidingWindow& win) {
  auto it = std::find_if(win.frames.begin(), win.frames.end(),
                         [](const Frame& f) { return f.keyframe; });
  if (it == win.frames.end()) return;
  Frame& F = *it;
  if (F.has_ext) return;  // still a full state; demotion handles it first

  F.obs.clear();
  const BlockRef ref{BlockRef::Pose, F.id};
  if (win.prior.offset_of(ref) >= 0)
    marginalize_blocks(win, {ref}, {ref}, [](const auto&) {});
  win.frames.erase(it);
  for (auto lm = win.landmarks.begin(); lm != win.landmarks.end();) {
    bool seen = false;
    for (const auto& f : win.frames) seen = seen || f.obs.count(lm->first) > 0;
    if (!seen)
      lm = win.landmarks.erase(lm);
    else
      ++lm;
  }
}

}  // namespace detail

// Shrinks the window back to capacity (K recent full states, L keyframes),
// Schur-complementing departing variables into the marginal prior.
inline void marginalize(SlidingWindow& win) {
  while (win.count_ext() > win.cfg.recent_states) detail::demote_oldest_ext(win);
  while (win.count_keyframes() > win.cfg.keyframes) detail::drop_oldest_keyframe(win);
}

}  // namespace vidyn
