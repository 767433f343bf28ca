#pragma once

#include <algorithm>
#include <numeric>
#include <random>

#include "vidyn/preint/preintegrate.hpp"
#include "vidyn/resmodel/model.hpp"

namespace vidyn {

// One inter-frame interval with its position/velocity-delta supervision
// (computed from poses/velocities with f_e = 0; no force ground truth).
struct TrainingSample {
  MeasurementBuffer buf;
  Vec3 alpha_gt = Vec3::Zero();
  Vec3 beta_gt = Vec3::Zero();
  std::string source = "sim";  // mocap | slam | sim
  bool disturbance_free = true;
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int epochs = 40;
  double adam_beta1 = 0.9, adam_beta2 = 0.999, adam_eps = 1e-8;
  double bias_augmentation_sigma = 1e-3;  // rad/s, per axis
  double train_split = 0.8;
  uint64_t seed = 0;

  void validate() const {
    if (learning_rate <= 0) throw std::invalid_argument("learning rate must be positive");
    if (train_split <= 0 || train_split >= 1)
      throw std::invalid_argument("train split must be in (0,1)");
  }
};

// The residual force applied over the interval: constant per 100 ms window,
// consecutive windows for longer intervals.
inline ResidualForceProvider residual_force_provider(const ResidualForceModel& model,
                                                     const MeasurementBuffer& buf,
                                                     const Vec3& gyro_bias) {
  if (model.variant == ResidualForceModel::Variant::Zero) return zero_residual_force();
  auto windows = extract_windows(buf, gyro_bias);
  std::vector<Vec3> forces;
  forces.reserve(windows.size());
  for (const auto& w : windows) forces.push_back(model.forward(w));
  const double t0 = buf.t0;
  const double win_len = InputWindow::kSteps * buf.dt_nominal;
  const size_t n = forces.size();
  return [forces = std::move(forces), t0, win_len, n](double t) {
    size_t i = static_cast<size_t>(std::max(0.0, t - t0) / win_len);
    if (i >= n) i = n - 1;
    return forces[i];
  };
}

// Total-force time series f = [0,0,T] + f_res, aligned to the buffer samples.
inline std::vector<std::pair<double, Vec3>> predict_total_force(
    const ResidualForceModel& model, const MeasurementBuffer& buf,
    const Vec3& gyro_bias = Vec3::Zero()) {
  if (buf.duration() < InputWindow::kSteps * buf.dt_nominal - 1e-9)
    throw std::invalid_argument("buffer shorter than the model window (100 ms)");
  auto provider = residual_force_provider(model, buf, gyro_bias);
  std::vector<std::pair<double, Vec3>> out;
  for (size_t i = 0; i < buf.size(); ++i)
    out.emplace_back(buf.ts[i], Vec3(0, 0, buf.thrust[i]) + provider(buf.ts[i]));
  return out;
}

struct ModelGradient {
  TcnNet::Grad tcn;
  Mat3 dD = Mat3::Zero();

  static ModelGradient zero_like(const ResidualForceModel& m) {
    ModelGradient g;
    if (m.variant == ResidualForceModel::Variant::Tcn) g.tcn = TcnNet::Grad::zero_like(m.tcn);
    return g;
  }
};

// flat parameter views used by the optimizer and the gradient checks
inline int model_num_params(const ResidualForceModel& m) {
  if (m.variant == ResidualForceModel::Variant::Tcn) return m.tcn.num_params();
  if (m.variant == ResidualForceModel::Variant::LinearDrag) return 9;
  return 0;
}

inline Eigen::VectorXd model_get_params(const ResidualForceModel& m) {
  Eigen::VectorXd p(model_num_params(m));
  int off = 0;
  if (m.variant == ResidualForceModel::Variant::Tcn) {
    m.tcn.for_each_param_array([&](const double* d, long n) {
      p.segment(off, n) = Eigen::Map<const Eigen::VectorXd>(d, n);
      off += static_cast<int>(n);
    });
  } else if (m.variant == ResidualForceModel::Variant::LinearDrag) {
    p = Eigen::Map<const Eigen::VectorXd>(m.drag_matrix.data(), 9);
  }
  return p;
}

inline void model_set_params(ResidualForceModel& m, const Eigen::VectorXd& p) {
  int off = 0;
  if (m.variant == ResidualForceModel::Variant::Tcn) {
    m.tcn.for_each_param_array([&](double* d, long n) {
      Eigen::Map<Eigen::VectorXd>(d, n) = p.segment(off, n);
      off += static_cast<int>(n);
    });
  } else if (m.variant == ResidualForceModel::Variant::LinearDrag) {
    Eigen::Map<Eigen::VectorXd>(m.drag_matrix.data(), 9) = p;
  }
}

inline Eigen::VectorXd gradient_flatten(const ResidualForceModel& m, const ModelGradient& g) {
  Eigen::VectorXd out(model_num_params(m));
  int off = 0;
  if (m.variant == ResidualForceModel::Variant::Tcn) {
    for (size_t i = 0; i < g.tcn.dW.size(); ++i) {
      out.segment(off, g.tcn.dW[i].size()) =
          Eigen::Map<const Eigen::VectorXd>(g.tcn.dW[i].data(), g.tcn.dW[i].size());
      off += static_cast<int>(g.tcn.dW[i].size());
      out.segment(off, g.tcn.db[i].size()) = g.tcn.db[i];
      off += static_cast<int>(g.tcn.db[i].size());
    }
    out.segment(off, g.tcn.dhead_W.size()) =
        Eigen::Map<const Eigen::VectorXd>(g.tcn.dhead_W.data(), g.tcn.dhead_W.size());
    off += static_cast<int>(g.tcn.dhead_W.size());
    out.segment(off, g.tcn.dhead_b.size()) = g.tcn.dhead_b;
  } else if (m.variant == ResidualForceModel::Variant::LinearDrag) {
    out = Eigen::Map<const Eigen::VectorXd>(g.dD.data(), 9);
  }
  return out;
}

// MSE loss over position/velocity deltas (mean over the batch) with the
// gradient chained analytically through the Euler preintegration recursion
// into the network weights.
//
// gyro_offsets, when given, holds one per-sample additive offset applied to
// the gyro channels of the network input (bias augmentation).
inline double loss_and_gradient(const ResidualForceModel& model,
                                const std::vector<TrainingSample>& batch, ModelGradient& grad,
                                const std::vector<Vec3>* gyro_offsets = nullptr) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double loss = 0.0;

  for (size_t bi = 0; bi < batch.size(); ++bi) {
    const auto& s = batch[bi];
    if (!s.disturbance_free)
      throw std::invalid_argument("training sample is not disturbance-free");
    auto windows = extract_windows(s.buf, Vec3::Zero());
    if (gyro_offsets)
      for (auto& w : windows)
        w.data.bottomRows<3>().colwise() += (*gyro_offsets)[bi];

    std::vector<TcnNet::Cache> caches(windows.size());
    std::vector<Vec3> f_res(windows.size());
    for (size_t wi = 0; wi < windows.size(); ++wi)
      f_res[wi] = model.forward(windows[wi],
                                model.variant == ResidualForceModel::Variant::Tcn
                                    ? &caches[wi]
                                    : nullptr);

    // Euler recursion with per-window sensitivity accumulation
    const double win_len = InputWindow::kSteps * s.buf.dt_nominal;
    Vec3 alpha = Vec3::Zero(), beta = Vec3::Zero();
    Quat gamma = Quat::Identity();
    std::vector<Mat3> S_alpha(windows.size(), Mat3::Zero());
    std::vector<Mat3> S_beta(windows.size(), Mat3::Zero());
    for (size_t i = 0; i < s.buf.size(); ++i) {
      const double dt = s.buf.step(i);
      size_t wi = static_cast<size_t>((s.buf.ts[i] - s.buf.t0) / win_len);
      if (wi >= windows.size()) wi = windows.size() - 1;
      const Mat3 R = gamma.toRotationMatrix();
      const Vec3 f = Vec3(0, 0, s.buf.thrust[i]) + f_res[wi];
      const double t_after = s.buf.ts[i] + dt;
      S_alpha[wi] += R * dt * (0.5 * dt + (s.buf.t1 - t_after));
      S_beta[wi] += R * dt;
      alpha += beta * dt + 0.5 * R * f * dt * dt;
      beta += R * f * dt;
      gamma = quat_integrate(gamma, s.buf.gyro[i], dt);
    }

    const Vec3 e_a = alpha - s.alpha_gt;
    const Vec3 e_b = beta - s.beta_gt;
    const double l = e_a.squaredNorm() + e_b.squaredNorm();
    if (!std::isfinite(l))
      throw std::runtime_error("non-finite loss on sample starting at t=" +
                               std::to_string(s.buf.t0));
    loss += inv_n * l;

    for (size_t wi = 0; wi < windows.size(); ++wi) {
      const Vec3 dfdw =
          2.0 * inv_n * (S_alpha[wi].transpose() * e_a + S_beta[wi].transpose() * e_b);
      if (model.variant == ResidualForceModel::Variant::Tcn) {
        // chain through the per-channel input normalization-free weight path
        model.tcn.backward(caches[wi], dfdw, grad.tcn);
      } else if (model.variant == ResidualForceModel::Variant::LinearDrag) {
        grad.dD += dfdw * windows[wi].proxy_velocity.transpose();
      }
    }
  }
  return loss;
}

struct AdamState {
  Eigen::VectorXd m, v;
  int t = 0;
};

inline void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& st,
                      const TrainConfig& cfg) {
  if (st.m.size() != params.size()) {
    st.m = Eigen::VectorXd::Zero(params.size());
    st.v = Eigen::VectorXd::Zero(params.size());
  }
  ++st.t;
  st.m = cfg.adam_beta1 * st.m + (1 - cfg.adam_beta1) * grad;
  st.v = cfg.adam_beta2 * st.v.array().matrix() +
         (1 - cfg.adam_beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1 - std::pow(cfg.adam_beta1, st.t);
  const double bc2 = 1 - std::pow(cfg.adam_beta2, st.t);
  params -= (cfg.learning_rate / bc1) *
            (st.m.array() / ((st.v.array() / bc2).sqrt() + cfg.adam_eps)).matrix();
}

struct TrainResult {
  ResidualForceModel model;
  std::vector<double> train_loss;  // per epoch
  std::vector<double> val_loss;
};

inline double dataset_loss(const ResidualForceModel& model,
                           const std::vector<TrainingSample>& set) {
  if (set.empty()) return 0.0;
  ModelGradient g = ModelGradient::zero_like(model);
  return loss_and_gradient(model, set, g);
}

// Adam training loop with per-epoch train/val logging and best-validation
// checkpointing. Deterministic given the seed.
inline TrainResult train(std::vector<TrainingSample> dataset, const TrainConfig& cfg,
                         ResidualForceModel model) {
  cfg.validate();
  if (dataset.empty()) throw std::invalid_argument("empty training dataset");

  std::mt19937_64 rng(cfg.seed);
  std::shuffle(dataset.begin(), dataset.end(), rng);
  const size_t n_train = std::max<size_t>(1, static_cast<size_t>(dataset.size() * cfg.train_split));
  std::vector<TrainingSample> train_set(dataset.begin(), dataset.begin() + n_train);
  std::vector<TrainingSample> val_set(dataset.begin() + n_train, dataset.end());

  // per-channel normalization from the training split
  if (model.variant == ResidualForceModel::Variant::Tcn) {
    Eigen::Matrix<double, 4, 1> mean = Eigen::Matrix<double, 4, 1>::Zero();
    Eigen::Matrix<double, 4, 1> sq = Eigen::Matrix<double, 4, 1>::Zero();
    long count = 0;
    for (const auto& s : train_set)
      for (const auto& w : extract_windows(s.buf, Vec3::Zero())) {
        mean += w.data.rowwise().sum();
        sq += w.data.cwiseProduct(w.data).rowwise().sum();
        count += InputWindow::kSteps;
      }
    mean /= count;
    for (int c = 0; c < 4; ++c) {
      const double var = sq(c) / count - mean(c) * mean(c);
      model.norm_mean(c) = mean(c);
      model.norm_std(c) = std::max(std::sqrt(std::max(var, 0.0)), 1e-6);
    }
  }
  model.train_seed = cfg.seed;

  TrainResult out;
  AdamState adam;
  Eigen::VectorXd params = model_get_params(model);
  double best_val = std::numeric_limits<double>::infinity();
  Eigen::VectorXd best_params = params;
  auto best_norm_mean = model.norm_mean;
  auto best_norm_std = model.norm_std;

  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  const int n_epochs = model_num_params(model) == 0 ? 0 : cfg.epochs;
  for (int epoch = 0; epoch <= n_epochs; ++epoch) {
    double epoch_loss = 0.0;
    int n_batches = 0;
    if (epoch > 0) {
      std::shuffle(order.begin(), order.end(), rng);
      for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
        std::vector<TrainingSample> batch;
        std::vector<Vec3> offsets;
        for (size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
          batch.push_back(train_set[order[i]]);
          offsets.emplace_back(cfg.bias_augmentation_sigma * nd(rng),
                               cfg.bias_augmentation_sigma * nd(rng),
                               cfg.bias_augmentation_sigma * nd(rng));
        }
        ModelGradient grad = ModelGradient::zero_like(model);
        epoch_loss += loss_and_gradient(model, batch, grad, &offsets);
        ++n_batches;
        Eigen::VectorXd g = gradient_flatten(model, grad);
        adam_step(params, g, adam, cfg);
        model_set_params(model, params);
      }
    }
    const double train_l = epoch > 0 ? epoch_loss / std::max(n_batches, 1)
                                     : dataset_loss(model, train_set);
    const double val_l = val_set.empty() ? train_l : dataset_loss(model, val_set);
    if (!std::isfinite(val_l)) throw std::runtime_error("training diverged (val loss NaN)");
    out.train_loss.push_back(train_l);
    out.val_loss.push_back(val_l);
    if (val_l < best_val) {
      best_val = val_l;
      best_params = params;
      best_norm_mean = model.norm_mean;
      best_norm_std = model.norm_std;
    }
  }
  model_set_params(model, best_params);
  model.norm_mean = best_norm_mean;
  model.norm_std = best_norm_std;
  out.model = model;
  return out;
}

// Builds supervision samples from a log + ground truth over fixed-length
// intervals (multiples of the 100 ms window).
inline std::vector<TrainingSample> make_training_samples(
    const SensorLog& log, const std::vector<GroundTruthSample>& truth, const Vec3& gravity,
    double interval, const std::string& source = "sim") {
  std::vector<TrainingSample> out;
  if (truth.size() < 2) return out;
  const double gt_dt = truth[1].t - truth[0].t;
  const double t_end = truth.back().t;
  for (double t0 = 0; t0 + interval <= t_end + 1e-9; t0 += interval) {
    const size_t i0 = static_cast<size_t>(std::round(t0 / gt_dt));
    const size_t i1 = static_cast<size_t>(std::round((t0 + interval) / gt_dt));
    if (i1 >= truth.size()) break;
    const auto& g0 = truth[i0];
    const auto& g1 = truth[i1];
    TrainingSample s;
    s.buf = MeasurementBuffer::from_log(log, g0.t, g1.t);
    if (s.buf.size() < InputWindow::kSteps) continue;
    const Mat3 R0t = g0.q.toRotationMatrix().transpose();
    const double Dt = g1.t - g0.t;
    s.alpha_gt = R0t * (g1.p - g0.p - g0.v * Dt - 0.5 * gravity * Dt * Dt);
    s.beta_gt = R0t * (g1.v - g0.v - gravity * Dt);
    s.source = source;
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace vidyn
