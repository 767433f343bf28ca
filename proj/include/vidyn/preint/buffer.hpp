#pragma once

#include <stdexcept>
#include <vector>

#include "vidyn/core/types.hpp"

namespace vidyn {

// Time-stamped gyro + thrust (+ accelerometer) samples covering one
// inter-state interval. Thrust is resampled zero-order-hold onto the gyro
// timestamps so the recursion sees one force sample per step.
struct MeasurementBuffer {
  double t0 = 0, t1 = 0;
  double dt_nominal = 0.01;
  std::vector<double> ts;      // sample times, sorted, within [t0, t1)
  std::vector<Vec3> gyro;
  std::vector<Vec3> accel;
  std::vector<double> thrust;  // ZOH-resampled, aligned with ts
  bool has_accel = false;

  size_t size() const { return ts.size(); }
  double duration() const { return t1 - t0; }

  // step length for sample i (last step runs to t1)
  double step(size_t i) const {
    return (i + 1 < ts.size() ? ts[i + 1] : t1) - ts[i];
  }

  void validate() const {
    if (ts.empty()) throw std::invalid_argument("empty measurement buffer");
    if (t1 <= t0) throw std::invalid_argument("buffer interval is empty");
    double prev = t0;
    for (size_t i = 0; i < ts.size(); ++i) {
      if (ts[i] < prev - 1e-9) throw std::invalid_argument("buffer samples not sorted");
      if (ts[i] - prev > 2.0 * dt_nominal + 1e-9)
        throw std::invalid_argument("gap in buffer coverage");
      if (!gyro[i].allFinite() || !std::isfinite(thrust[i]))
        throw std::invalid_argument("NaN measurement in buffer");
      prev = ts[i];
    }
    if (t1 - prev > 2.0 * dt_nominal + 1e-9)
      throw std::invalid_argument("gap at end of buffer coverage");
  }

  // Slices [t0, t1) out of a sensor log.
  static MeasurementBuffer from_log(const SensorLog& log, double t0, double t1) {
    MeasurementBuffer buf;
    buf.t0 = t0;
    buf.t1 = t1;
    buf.dt_nominal = 1.0 / log.rig.imu_rate;
    buf.has_accel = true;
    size_t th = 0;
    for (const auto& m : log.imu) {
      if (m.t < t0 - 1e-9 || m.t >= t1 - 1e-9) continue;
      buf.ts.push_back(m.t);
      buf.gyro.push_back(m.w);
      buf.accel.push_back(m.a);
      while (th + 1 < log.thrust.size() && log.thrust[th + 1].t <= m.t + 1e-9) ++th;
      buf.thrust.push_back(log.thrust.empty() ? 0.0 : log.thrust[th].T);
    }
    return buf;
  }
};

}  // namespace vidyn
