#pragma once

#include <Eigen/Dense>
#include <array>
#include <vector>

#include "esiw/source_space.hpp"

namespace esiw {

// 3D Prewitt edge extractor over the source voxel grid. Each derivative
// kernel is the 3x3x3 outer product of [-1,0,1] along one axis with [1,1,1]
// smoothing along the other two; entries sum to zero and the three kernels
// are axis permutations of one another. Responses use correlation with zero
// padding.
struct EdgeOperator {
  std::array<int, 3> dims{0, 0, 0};
  std::vector<int> source_of_voxel;  // linear voxel -> source index or -1
  std::vector<int> voxel_of_source;  // source -> linear voxel
  int n_sources = 0;

  int n_voxels() const { return dims[0] * dims[1] * dims[2]; }
  int linear(int ix, int iy, int iz) const {
    return (ix * dims[1] + iy) * dims[2] + iz;
  }
};

EdgeOperator make_edge_operator(const SourceSpace& space);

// Prewitt kernel weight for the derivative axis, offsets in {-1,0,1}^3.
double prewitt_weight(int axis, int ox, int oy, int oz);

// Scatters `field` onto the voxel grid (missing voxels 0), correlates with
// the x/y/z kernels, gathers back at source voxels. Returns the x block,
// then y, then z (3N total).
Eigen::VectorXd prewitt_edges(const EdgeOperator& op,
                              const Eigen::VectorXd& field);

// Adjoint of prewitt_edges: maps a 3N response vector back to an N field,
// satisfying <V f, r> = <f, V^T r>.
Eigen::VectorXd prewitt_edges_adjoint(const EdgeOperator& op,
                                      const Eigen::VectorXd& responses);

}  // namespace esiw
