#pragma once

#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "vidyn/core/so3.hpp"
#include "vidyn/preint/buffer.hpp"

namespace vidyn {

// A 100 ms slice of thrust + bias-corrected gyro at 100 Hz: 4 channels x 10
// steps. This is the only vehicle information the model ever sees; position,
// velocity and orientation are excluded by construction.
struct InputWindow {
  static constexpr int kChannels = 4;
  static constexpr int kSteps = 10;
  Eigen::Matrix<double, kChannels, kSteps> data;  // rows: thrust, gx, gy, gz
  // Diagnostic side-channel for the linear-drag variant only; the TCN
  // never reads it.
  Vec3 proxy_velocity = Vec3::Zero();

  void validate() const {
    if (!data.allFinite()) throw std::invalid_argument("non-finite window entries");
  }
};

namespace nn {

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / M_SQRT2)); }
inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / M_SQRT2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
  return cdf + x * pdf;
}

// Causal dilated 1-D convolution, kernel 3. Weights are stored as a single
// (out x 3*in) matrix over the stacked taps [x(t-2d); x(t-d); x(t)].
struct ConvLayer {
  int in_ch, out_ch, dilation;
  Eigen::MatrixXd W;  // out_ch x 3*in_ch
  Eigen::VectorXd b;  // out_ch

  ConvLayer(int in, int out, int d) : in_ch(in), out_ch(out), dilation(d) {
    W.setZero(out, 3 * in);
    b.setZero(out);
  }

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x) const {
    const int T = static_cast<int>(x.cols());
    Eigen::MatrixXd y(out_ch, T);
    Eigen::VectorXd taps(3 * in_ch);
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k < 3; ++k) {
        const int src = t - (2 - k) * dilation;
        if (src >= 0)
          taps.segment(k * in_ch, in_ch) = x.col(src);
        else
          taps.segment(k * in_ch, in_ch).setZero();
      }
      y.col(t) = W * taps + b;
    }
    return y;
  }

  // Accumulates dW/db and returns the gradient w.r.t. the layer input.
  Eigen::MatrixXd backward(const Eigen::MatrixXd& x, const Eigen::MatrixXd& dy,
                           Eigen::MatrixXd& dW, Eigen::VectorXd& db) const {
    const int T = static_cast<int>(x.cols());
    Eigen::MatrixXd dx = Eigen::MatrixXd::Zero(in_ch, T);
    Eigen::VectorXd taps(3 * in_ch);
    for (int t = 0; t < T; ++t) {
      for (int k = 0; k < 3; ++k) {
        const int src = t - (2 - k) * dilation;
        if (src >= 0)
          taps.segment(k * in_ch, in_ch) = x.col(src);
        else
          taps.segment(k * in_ch, in_ch).setZero();
      }
      dW += dy.col(t) * taps.transpose();
      db += dy.col(t);
      for (int k = 0; k < 3; ++k) {
        const int src = t - (2 - k) * dilation;
        if (src >= 0)
          dx.col(src) += W.middleCols(k * in_ch, in_ch).transpose() * dy.col(t);
      }
    }
    return dx;
  }
};

}  // namespace nn

// Temporal convolutional network: four 64-filter layers then three 128-filter
// layers, GELU activations, and a linear head reading the last time step.
// Kernel 3, dilations 1,1,2,2 / 1,2,4 (receptive field covers the window).
struct TcnNet {
  std::vector<nn::ConvLayer> layers;
  Eigen::MatrixXd head_W;  // 3 x last_ch
  Eigen::VectorXd head_b;  // 3

  static TcnNet make() {
    TcnNet net;
    const int dims[] = {4, 64, 64, 64, 64, 128, 128, 128};
    const int dils[] = {1, 1, 2, 2, 1, 2, 4};
    for (int i = 0; i < 7; ++i) net.layers.emplace_back(dims[i], dims[i + 1], dils[i]);
    net.head_W.setZero(3, 128);
    net.head_b.setZero(3);
    return net;
  }

  void init_random(uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (auto& l : net_layers()) {
      const double s = std::sqrt(2.0 / l->W.cols());
      for (int i = 0; i < l->W.size(); ++i) l->W.data()[i] = s * nd(rng);
      l->b.setZero();
    }
    const double s = std::sqrt(2.0 / head_W.cols());
    for (int i = 0; i < head_W.size(); ++i) head_W.data()[i] = s * nd(rng);
    head_b.setZero();
  }

  std::vector<nn::ConvLayer*> net_layers() {
    std::vector<nn::ConvLayer*> out;
    for (auto& l : layers) out.push_back(&l);
    return out;
  }

  struct Cache {
    std::vector<Eigen::MatrixXd> pre;   // pre-activation per layer
    std::vector<Eigen::MatrixXd> post;  // post-activation per layer (inputs chain)
  };

  Vec3 forward(const Eigen::MatrixXd& x, Cache* cache = nullptr) const {
    Eigen::MatrixXd h = x;
    if (cache) {
      cache->pre.clear();
      cache->post.clear();
      cache->post.push_back(h);
    }
    for (const auto& l : layers) {
      Eigen::MatrixXd z = l.forward(h);
      if (cache) cache->pre.push_back(z);
      h = z.unaryExpr([](double v) { return nn::gelu(v); });
      if (cache) cache->post.push_back(h);
    }
    return head_W * h.col(h.cols() - 1) + head_b;
  }

  struct Grad {
    std::vector<Eigen::MatrixXd> dW;
    std::vector<Eigen::VectorXd> db;
    Eigen::MatrixXd dhead_W;
    Eigen::VectorXd dhead_b;

    static Grad zero_like(const TcnNet& net) {
      Grad g;
      for (const auto& l : net.layers) {
        g.dW.push_back(Eigen::MatrixXd::Zero(l.W.rows(), l.W.cols()));
        g.db.push_back(Eigen::VectorXd::Zero(l.b.size()));
      }
      g.dhead_W = Eigen::MatrixXd::Zero(net.head_W.rows(), net.head_W.cols());
      g.dhead_b = Eigen::VectorXd::Zero(net.head_b.size());
      return g;
    }
  };

  void backward(const Cache& cache, const Vec3& dout, Grad& g) const {
    const Eigen::MatrixXd& last = cache.post.back();
    const int T = static_cast<int>(last.cols());
    g.dhead_W += dout * last.col(T - 1).transpose();
    g.dhead_b += dout;
    Eigen::MatrixXd dh = Eigen::MatrixXd::Zero(last.rows(), T);
    dh.col(T - 1) = head_W.transpose() * dout;
    for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
      Eigen::MatrixXd dz =
          dh.array() * cache.pre[i].unaryExpr([](double v) { return nn::gelu_grad(v); }).array();
      dh = layers[i].backward(cache.post[i], dz, g.dW[i], g.db[i]);
    }
  }

  // flat parameter access for the optimizer and gradient checks
  int num_params() const {
    int n = 0;
    for (const auto& l : layers) n += static_cast<int>(l.W.size() + l.b.size());
    return n + static_cast<int>(head_W.size() + head_b.size());
  }

  template <class Fn>
  void for_each_param_array(Fn&& fn) {
    for (auto& l : layers) {
      fn(l.W.data(), l.W.size());
      fn(l.b.data(), l.b.size());
    }
    fn(head_W.data(), head_W.size());
    fn(head_b.data(), head_b.size());
  }
  template <class Fn>
  void for_each_param_array(Fn&& fn) const {
    for (const auto& l : layers) {
      fn(l.W.data(), l.W.size());
      fn(l.b.data(), l.b.size());
    }
    fn(head_W.data(), head_W.size());
    fn(head_b.data(), head_b.size());
  }
};

// Residual-force model: maps an input window to a body-frame residual force.
// Variants share one interface: zero (no residual), linear-drag (diagnostic
// D * proxy-velocity baseline), tcn (the learned model).
struct ResidualForceModel {
  enum class Variant { Zero, LinearDrag, Tcn };
  Variant variant = Variant::Zero;
  TcnNet tcn;
  Mat3 drag_matrix = Mat3::Zero();
  Eigen::Matrix<double, 4, 1> norm_mean = Eigen::Matrix<double, 4, 1>::Zero();
  Eigen::Matrix<double, 4, 1> norm_std = Eigen::Matrix<double, 4, 1>::Ones();
  uint64_t train_seed = 0;
  std::string config_hash;

  static ResidualForceModel zero() { return {}; }

  static ResidualForceModel make_tcn(uint64_t seed) {
    ResidualForceModel m;
    m.variant = Variant::Tcn;
    m.tcn = TcnNet::make();
    m.tcn.init_random(seed);
    return m;
  }

  static ResidualForceModel make_linear_drag(const Mat3& D) {
    ResidualForceModel m;
    m.variant = Variant::LinearDrag;
    m.drag_matrix = D;
    return m;
  }

  Eigen::MatrixXd normalize(const InputWindow& w) const {
    Eigen::MatrixXd x = w.data;
    for (int c = 0; c < 4; ++c)
      x.row(c) = (x.row(c).array() - norm_mean(c)) / norm_std(c);
    return x;
  }

  Vec3 forward(const InputWindow& w, TcnNet::Cache* cache = nullptr) const {
    w.validate();
    switch (variant) {
      case Variant::Zero: return Vec3::Zero();
      case Variant::LinearDrag: return drag_matrix * w.proxy_velocity;
      case Variant::Tcn: return tcn.forward(normalize(w), cache);
    }
    return Vec3::Zero();
  }
};

// Slices 100 ms windows out of a buffer: window w covers steps
// [10w, 10w+10) of the gyro/thrust streams, gyro bias removed.
inline std::vector<InputWindow> extract_windows(const MeasurementBuffer& buf,
                                                const Vec3& gyro_bias) {
  if (buf.size() < InputWindow::kSteps)
    throw std::invalid_argument("buffer shorter than one model window");
  std::vector<InputWindow> out;
  const size_t n_win = buf.size() / InputWindow::kSteps;
  for (size_t w = 0; w < n_win; ++w) {
    InputWindow win;
    for (int s = 0; s < InputWindow::kSteps; ++s) {
      const size_t i = w * InputWindow::kSteps + s;
      win.data(0, s) = buf.thrust[i];
      win.data.block<3, 1>(1, s) = buf.gyro[i] - gyro_bias;
    }
    out.push_back(win);
  }
  return out;
}

// model file round trip -------------------------------------------------

namespace detail {
inline uint64_t fnv1a(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline nlohmann::json dump_matrix(const Eigen::MatrixXd& m) {
  std::vector<double> v(m.data(), m.data() + m.size());
  return nlohmann::json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", v}};
}

inline Eigen::MatrixXd load_matrix(const nlohmann::json& j) {
  Eigen::MatrixXd m(j.at("rows").get<int>(), j.at("cols").get<int>());
  const auto& d = j.at("data");
  if (static_cast<int>(d.size()) != m.size())
    throw std::runtime_error("model file: weight array size mismatch");
  for (int i = 0; i < m.size(); ++i) m.data()[i] = d[i];
  return m;
}
}  // namespace detail

constexpr int kModelFileVersion = 1;

inline void save_model(const ResidualForceModel& m, const std::string& path) {
  nlohmann::json j;
  j["version"] = kModelFileVersion;
  j["variant"] = m.variant == ResidualForceModel::Variant::Zero        ? "zero"
                 : m.variant == ResidualForceModel::Variant::LinearDrag ? "linear-drag"
                                                                        : "tcn";
  j["train_seed"] = m.train_seed;
  j["config_hash"] = m.config_hash;
  std::vector<double> mean(m.norm_mean.data(), m.norm_mean.data() + 4);
  std::vector<double> stdv(m.norm_std.data(), m.norm_std.data() + 4);
  j["normalization"] = {{"mean", mean}, {"std", stdv}};
  if (m.variant == ResidualForceModel::Variant::LinearDrag)
    j["drag_matrix"] = detail::dump_matrix(m.drag_matrix);
  if (m.variant == ResidualForceModel::Variant::Tcn) {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : m.tcn.layers) {
      layers.push_back({{"in", l.in_ch},
                        {"out", l.out_ch},
                        {"dilation", l.dilation},
                        {"kernel", 3},
                        {"W", detail::dump_matrix(l.W)},
                        {"b", detail::dump_matrix(l.b)}});
    }
    j["tcn"] = {{"layers", layers},
                {"head_W", detail::dump_matrix(m.tcn.head_W)},
                {"head_b", detail::dump_matrix(m.tcn.head_b)}};
  }
  const std::string body = j.dump();
  nlohmann::json outer{{"checksum", detail::fnv1a(body)}, {"model", j}};
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write model file " + path);
  out << outer.dump(1) << "\n";
}

inline ResidualForceModel load_model(const std::string& path,
                                     const std::string& expect_variant = "") {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open model file " + path);
  nlohmann::json outer = nlohmann::json::parse(in);
  nlohmann::json j = outer.at("model");
  if (detail::fnv1a(j.dump()) != outer.at("checksum").get<uint64_t>())
    throw std::runtime_error("model file checksum failure");
  if (j.at("version").get<int>() != kModelFileVersion)
    throw std::runtime_error("model file version mismatch");
  const std::string variant = j.at("variant");
  if (!expect_variant.empty() && variant != expect_variant)
    throw std::runtime_error("variant mismatch: file holds '" + variant + "', expected '" +
                             expect_variant + "'");
  ResidualForceModel m;
  m.train_seed = j.at("train_seed");
  m.config_hash = j.value("config_hash", "");
  for (int c = 0; c < 4; ++c) {
    m.norm_mean(c) = j.at("normalization").at("mean")[c];
    m.norm_std(c) = j.at("normalization").at("std")[c];
  }
  if (variant == "zero") {
    m.variant = ResidualForceModel::Variant::Zero;
  } else if (variant == "linear-drag") {
    m.variant = ResidualForceModel::Variant::LinearDrag;
    m.drag_matrix = detail::load_matrix(j.at("drag_matrix"));
  } else if (variant == "tcn") {
    m.variant = ResidualForceModel::Variant::Tcn;
    m.tcn.layers.clear();
    for (const auto& lj : j.at("tcn").at("layers")) {
      nn::ConvLayer l(lj.at("in"), lj.at("out"), lj.at("dilation"));
      l.W = detail::load_matrix(lj.at("W"));
      l.b = detail::load_matrix(lj.at("b"));
      m.tcn.layers.push_back(std::move(l));
    }
    m.tcn.head_W = detail::load_matrix(j.at("tcn").at("head_W"));
    m.tcn.head_b = detail::load_matrix(j.at("tcn").at("head_b"));
  } else {
    throw std::runtime_error("unknown model variant '" + variant + "'");
  }
  return m;
}

}  // namespace vidyn
