#pragma once

#include <stdexcept>
#include <vector>

#include "vidyn/core/so3.hpp"

namespace vidyn {

struct WorldConfig {
  Vec3 gravity{0, 0, -9.81};
  double mass = 1.0;        // kg
  double air_density = 1.2; // kg/m^3
  uint64_t rng_seed = 0;

  void validate() const {
    if (mass <= 0) throw std::invalid_argument("mass must be positive");
    if (air_density <= 0) throw std::invalid_argument("air density must be positive");
    const double g = gravity.norm();
    if (g < 9.0 || g > 10.5) throw std::invalid_argument("gravity magnitude out of range");
  }
};

struct AeroConfig {
  double fuselage_area = 0.0;   // m^2
  double fuselage_cd = 0.0;
  double induced_drag_k = 0.0;  // N s/m
  double board_area = 0.0;      // m^2, 0 disables the drag board
  Vec3 board_normal{0, 1, 0};   // body frame, unit length when board_area > 0

  void validate() const {
    if (fuselage_area < 0 || fuselage_cd < 0 || induced_drag_k < 0 || board_area < 0)
      throw std::invalid_argument("aero coefficients must be non-negative");
    if (board_area > 0 && std::abs(board_normal.norm() - 1.0) > 1e-9)
      throw std::invalid_argument("board normal must be unit length");
  }

  bool any() const { return fuselage_area > 0 || induced_drag_k > 0 || board_area > 0; }
};

// White-noise sigmas are per-sample standard deviations at the sensor rate;
// bias sigmas are random-walk densities (std of the increment is sigma*sqrt(dt)).
struct SensorNoiseConfig {
  double sigma_w = 0.0;    // rad/s
  double sigma_bw = 0.0;   // rad/s/sqrt(s)
  double sigma_a = 0.0;    // m/s^2
  double sigma_ba = 0.0;   // m/s^2/sqrt(s)
  double sigma_ft = 0.0;   // m/s^2
  double pixel_sigma = 0.0;
  double imu_rate = 100.0;
  double thrust_rate = 100.0;
  double cam_rate = 10.0;

  void validate() const {
    if (sigma_w < 0 || sigma_bw < 0 || sigma_a < 0 || sigma_ba < 0 || sigma_ft < 0 ||
        pixel_sigma < 0)
      throw std::invalid_argument("noise sigmas must be non-negative");
    if (imu_rate <= 0 || thrust_rate <= 0 || cam_rate <= 0)
      throw std::invalid_argument("sensor rates must be positive");
    if (imu_rate < cam_rate) throw std::invalid_argument("imu rate must be >= camera rate");
  }
};

}  // namespace vidyn
