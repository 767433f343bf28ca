#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <vector>

#include "vidyn/core/so3.hpp"

namespace vidyn {

// Regular 3D grid of wind vectors over an axis-aligned box. Interpolation is
// trilinear with a cubic smoothing of the cell coordinate, which makes the
// field C^1 inside the box; the field is zero outside the box, with a smooth
// fade over a margin inside the boundary.
struct WindGrid {
  Vec3 box_min = Vec3::Zero();
  Vec3 box_max = Vec3::Zero();
  int nx = 0, ny = 0, nz = 0;
  double fade_margin = 0.5;  // m
  std::vector<Vec3> samples;  // nx*ny*nz, x fastest

  const Vec3& at(int i, int j, int k) const { return samples[(k * ny + j) * nx + i]; }

  static double smoothstep(double u) { return u * u * (3.0 - 2.0 * u); }

  Vec3 sample(const Vec3& p) const {
    for (int a = 0; a < 3; ++a)
      if (p[a] <= box_min[a] || p[a] >= box_max[a]) return Vec3::Zero();
    Vec3 rel = (p - box_min).cwiseQuotient(box_max - box_min);
    const double gx = rel.x() * (nx - 1), gy = rel.y() * (ny - 1), gz = rel.z() * (nz - 1);
    int i = std::min(static_cast<int>(gx), nx - 2);
    int j = std::min(static_cast<int>(gy), ny - 2);
    int k = std::min(static_cast<int>(gz), nz - 2);
    const double u = smoothstep(gx - i), v = smoothstep(gy - j), w = smoothstep(gz - k);
    Vec3 out = Vec3::Zero();
    for (int dk = 0; dk < 2; ++dk)
      for (int dj = 0; dj < 2; ++dj)
        for (int di = 0; di < 2; ++di) {
          const double wgt = (di ? u : 1 - u) * (dj ? v : 1 - v) * (dk ? w : 1 - w);
          out += wgt * at(i + di, j + dj, k + dk);
        }
    // smooth fade to zero near the box faces
    double fade = 1.0;
    for (int a = 0; a < 3; ++a) {
      const double d = std::min(p[a] - box_min[a], box_max[a] - p[a]);
      if (d < fade_margin) fade *= smoothstep(d / fade_margin);
    }
    return fade * out;
  }
};

struct WindField {
  enum class Kind { None, Constant, SmoothedGrid };
  Kind kind = Kind::None;
  Vec3 constant = Vec3::Zero();
  WindGrid grid;
  double ramp_time = 0.0;  // s, linear-smooth ramp from zero at t=0

  Vec3 velocity(const Vec3& p, double t) const {
    Vec3 w;
    switch (kind) {
      case Kind::None: return Vec3::Zero();
      case Kind::Constant: w = constant; break;
      case Kind::SmoothedGrid: w = grid.sample(p); break;
    }
    if (!w.allFinite()) throw std::runtime_error("wind sample is not finite");
    if (ramp_time > 0 && t < ramp_time) w *= WindGrid::smoothstep(t / ramp_time);
    return w;
  }

  static WindField none() { return {}; }

  static WindField constant_wind(const Vec3& v, double ramp = 0.0) {
    WindField f;
    f.kind = Kind::Constant;
    f.constant = v;
    f.ramp_time = ramp;
    return f;
  }

  // Fills a grid by sampling fn at the nodes.
  static WindField from_function(const Vec3& box_min, const Vec3& box_max, int nx, int ny,
                                 int nz, const std::function<Vec3(const Vec3&)>& fn,
                                 double fade_margin = 0.5) {
    WindField f;
    f.kind = Kind::SmoothedGrid;
    f.grid.box_min = box_min;
    f.grid.box_max = box_max;
    f.grid.nx = nx;
    f.grid.ny = ny;
    f.grid.nz = nz;
    f.grid.fade_margin = fade_margin;
    f.grid.samples.resize(static_cast<size_t>(nx) * ny * nz);
    for (int k = 0; k < nz; ++k)
      for (int j = 0; j < ny; ++j)
        for (int i = 0; i < nx; ++i) {
          Vec3 p = box_min +
                   Vec3((box_max - box_min).x() * i / static_cast<double>(std::max(nx - 1, 1)),
                        (box_max - box_min).y() * j / static_cast<double>(std::max(ny - 1, 1)),
                        (box_max - box_min).z() * k / static_cast<double>(std::max(nz - 1, 1)));
          Vec3 w = fn(p);
          if (!w.allFinite()) throw std::runtime_error("wind grid sample is not finite");
          f.grid.samples[(static_cast<size_t>(k) * ny + j) * nx + i] = w;
        }
    return f;
  }
};

}  // namespace vidyn
