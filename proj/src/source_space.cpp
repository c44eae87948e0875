#include "esiw/source_space.hpp"

#include <cmath>
#include <numbers>

namespace esiw {

std::vector<std::array<int, 3>> enumerate_ball_lattice(double radius_mm,
                                                       double spacing_mm) {
  if (!(spacing_mm > 0) || !(radius_mm >= 0) || !std::isfinite(radius_mm) ||
      !std::isfinite(spacing_mm)) {
    throw ConfigError("lattice enumeration needs spacing > 0 and radius >= 0");
  }
  const int reach = static_cast<int>(std::floor(radius_mm / spacing_mm));
  const double r2 = radius_mm * radius_mm;
  const double s2 = spacing_mm * spacing_mm;
  std::vector<std::array<int, 3>> points;
  for (int i = -reach; i <= reach; ++i) {
    for (int j = -reach; j <= reach; ++j) {
      for (int k = -reach; k <= reach; ++k) {
        if (static_cast<double>(i * i + j * j + k * k) * s2 <= r2) {
          points.push_back({i, j, k});
        }
      }
    }
  }
  return points;
}

SourceSpace build_grid_source_space(double radius_mm, double spacing_mm,
                                    const Eigen::Vector3d& origin) {
  if (!(spacing_mm > 0) || !(radius_mm > spacing_mm)) {
    throw ConfigError("source space requires radius_mm > spacing_mm > 0");
  }
  const auto points = enumerate_ball_lattice(radius_mm, spacing_mm);
  if (points.size() < 8) {
    throw ConfigError("source space would contain only " +
                      std::to_string(points.size()) +
                      " sources (< 8); enlarge radius or shrink spacing");
  }
  const int reach = static_cast<int>(std::floor(radius_mm / spacing_mm));
  const int n = static_cast<int>(points.size());

  SourceSpace space;
  space.grid_spacing = spacing_mm;
  space.grid_dims = {2 * reach + 1, 2 * reach + 1, 2 * reach + 1};
  space.grid_origin =
      origin - Eigen::Vector3d::Constant(static_cast<double>(reach) * spacing_mm);
  space.grid_index.resize(n, 3);
  space.positions.resize(n, 3);
  for (int s = 0; s < n; ++s) {
    const auto& p = points[static_cast<std::size_t>(s)];
    for (int a = 0; a < 3; ++a) {
      const int idx = p[static_cast<std::size_t>(a)] + reach;
      space.grid_index(s, a) = idx;
      // Exactly grid_origin + idx * spacing, the reconstruction contract.
      space.positions(s, a) =
          space.grid_origin[a] + static_cast<double>(idx) * spacing_mm;
    }
  }
  return space;
}

SourceSpace build_cube_source_space(const std::array<int, 3>& dims,
                                    double spacing_mm,
                                    const Eigen::Vector3d& origin) {
  if (dims[0] < 1 || dims[1] < 1 || dims[2] < 1 || !(spacing_mm > 0)) {
    throw ConfigError("cube source space requires positive dims and spacing");
  }
  const int n = dims[0] * dims[1] * dims[2];
  SourceSpace space;
  space.grid_spacing = spacing_mm;
  space.grid_dims = dims;
  space.grid_origin = origin;  // origin is voxel (0,0,0)
  space.grid_index.resize(n, 3);
  space.positions.resize(n, 3);
  int s = 0;
  for (int i = 0; i < dims[0]; ++i) {
    for (int j = 0; j < dims[1]; ++j) {
      for (int k = 0; k < dims[2]; ++k, ++s) {
        space.grid_index.row(s) << i, j, k;
        for (int a = 0; a < 3; ++a) {
          space.positions(s, a) =
              origin[a] + static_cast<double>(space.grid_index(s, a)) * spacing_mm;
        }
      }
    }
  }
  return space;
}

MatrixX3d fibonacci_hemisphere_sensors(int n_sensors, double radius_mm) {
  if (n_sensors < 1 || !(radius_mm > 0)) {
    throw ConfigError("sensor layout requires count >= 1 and radius > 0");
  }
  const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
  MatrixX3d sensors(n_sensors, 3);
  for (int m = 0; m < n_sensors; ++m) {
    const double z = (m + 0.5) / static_cast<double>(n_sensors);  // (0, 1)
    const double rho = std::sqrt(1.0 - z * z);
    const double azimuth = golden_angle * static_cast<double>(m);
    sensors.row(m) << radius_mm * rho * std::cos(azimuth),
        radius_mm * rho * std::sin(azimuth), radius_mm * z;
  }
  return sensors;
}

}  // namespace esiw
