#pragma once

#include "vidyn/sim/config.hpp"

namespace vidyn {

// Aerodynamic force on the vehicle in the body frame, in Newtons.
// v_rel_body is the velocity of the vehicle relative to the surrounding air,
// expressed in the body frame. Fuselage drag is quadratic, induced (rotor)
// drag linear, and the drag board follows flat-plate lift/drag laws
// c_l = sin(2a), c_d = 2 sin^2(a) with a the angle of attack.
inline Vec3 aero_force_body(const AeroConfig& aero, double air_density,
                            const Vec3& v_rel_body) {
  const double speed = v_rel_body.norm();
  if (speed < 1e-9) return Vec3::Zero();
  const Vec3 dir = v_rel_body / speed;

  Vec3 f = Vec3::Zero();
  f -= 0.5 * air_density * aero.fuselage_area * aero.fuselage_cd * speed * v_rel_body;
  f -= aero.induced_drag_k * v_rel_body;

  if (aero.board_area > 0) {
    // orient the normal against the direction of motion
    Vec3 n = aero.board_normal;
    if (dir.dot(n) > 0) n = -n;
    const double sin_a = std::clamp(-dir.dot(n), 0.0, 1.0);
    const double a = std::asin(sin_a);
    const double cl = std::sin(2.0 * a);
    const double cd = 2.0 * sin_a * sin_a;
    const double q_dyn = 0.5 * air_density * aero.board_area * speed * speed;
    Vec3 lift_dir = n - n.dot(dir) * dir;
    const double ln = lift_dir.norm();
    if (ln > 1e-9) lift_dir /= ln; else lift_dir.setZero();
    f += q_dyn * (cd * (-dir) + cl * lift_dir);
  }
  return f;
}

}  // namespace vidyn
