#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "esiw/common.hpp"

namespace esiw {

using MatrixX3d = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using MatrixX3i = Eigen::Matrix<int, Eigen::Dynamic, 3>;

// Gridded volumetric source space. Positions are reconstructed as
// origin + grid_index * spacing with the exact same arithmetic on every
// build, so equal arguments give bit-identical spaces.
struct SourceSpace {
  MatrixX3d positions;       // N x 3, millimeters
  double grid_spacing = 0;   // millimeters
  MatrixX3i grid_index;      // N x 3 voxel coordinates, each in [0, grid_dims)
  std::array<int, 3> grid_dims{0, 0, 0};
  Eigen::Vector3d grid_origin = Eigen::Vector3d::Zero();  // voxel (0,0,0), mm
  MatrixX3d orientations;    // N x 3 unit vectors; 0 rows until derived

  int n_sources() const { return static_cast<int>(positions.rows()); }
  bool has_orientations() const { return orientations.rows() > 0; }
};

// All lattice offsets (i,j,k) with ||(i,j,k)*spacing|| <= radius, in
// lexicographic order.
std::vector<std::array<int, 3>> enumerate_ball_lattice(double radius_mm,
                                                       double spacing_mm);

// Ball-shaped grid centered on `origin`. Throws ConfigError when the
// parameters are invalid or fewer than 8 sources result.
SourceSpace build_grid_source_space(double radius_mm, double spacing_mm,
                                    const Eigen::Vector3d& origin);

// Dense cuboid grid (used for small exactness studies and edge-operator
// tests where every voxel must be populated).
SourceSpace build_cube_source_space(const std::array<int, 3>& dims,
                                    double spacing_mm,
                                    const Eigen::Vector3d& origin);

// Deterministic, roughly uniform sensor layout: Fibonacci spiral over the
// upper hemisphere of a sphere with the given radius.
MatrixX3d fibonacci_hemisphere_sensors(int n_sensors, double radius_mm);

}  // namespace esiw
