#include "esiw/prewitt.hpp"

#include <string>

namespace esiw {

EdgeOperator make_edge_operator(const SourceSpace& space) {
  EdgeOperator op;
  op.dims = space.grid_dims;
  if (op.dims[0] < 1 || op.dims[1] < 1 || op.dims[2] < 1) {
    throw ConfigError("edge operator needs positive grid dimensions");
  }
  op.n_sources = space.n_sources();
  op.source_of_voxel.assign(static_cast<std::size_t>(op.n_voxels()), -1);
  op.voxel_of_source.resize(static_cast<std::size_t>(op.n_sources));
  for (int s = 0; s < op.n_sources; ++s) {
    const int ix = space.grid_index(s, 0);
    const int iy = space.grid_index(s, 1);
    const int iz = space.grid_index(s, 2);
    if (ix < 0 || ix >= op.dims[0] || iy < 0 || iy >= op.dims[1] || iz < 0 ||
        iz >= op.dims[2]) {
      throw DataError("source " + std::to_string(s) +
                      " lies outside the voxel grid");
    }
    const int v = op.linear(ix, iy, iz);
    if (op.source_of_voxel[static_cast<std::size_t>(v)] != -1) {
      throw DataError("duplicate voxel index at source " + std::to_string(s));
    }
    op.source_of_voxel[static_cast<std::size_t>(v)] = s;
    op.voxel_of_source[static_cast<std::size_t>(s)] = v;
  }
  return op;
}

double prewitt_weight(int axis, int ox, int oy, int oz) {
  const int off[3] = {ox, oy, oz};
  return static_cast<double>(off[axis]);
}

namespace {

// Correlation with a 3-tap kernel along one axis, zero padding:
// out[v] = w[-1] in[v - e] + w[0] in[v] + w[+1] in[v + e].
void pass1d(const EdgeOperator& op, const std::vector<double>& in,
            std::vector<double>& out, int axis, double wm, double w0,
            double wp) {
  const int dx = op.dims[0], dy = op.dims[1], dz = op.dims[2];
  const int stride[3] = {dy * dz, dz, 1};
  const int extent[3] = {dx, dy, dz};
  const int st = stride[axis];
  const int n_axis = extent[axis];
  for (int ix = 0; ix < dx; ++ix) {
    for (int iy = 0; iy < dy; ++iy) {
      for (int iz = 0; iz < dz; ++iz) {
        const int v = op.linear(ix, iy, iz);
        const int pos[3] = {ix, iy, iz};
        const int p = pos[axis];
        double acc = w0 * in[static_cast<std::size_t>(v)];
        if (p > 0) acc += wm * in[static_cast<std::size_t>(v - st)];
        if (p + 1 < n_axis) acc += wp * in[static_cast<std::size_t>(v + st)];
        out[static_cast<std::size_t>(v)] = acc;
      }
    }
  }
}

void smooth(const EdgeOperator& op, const std::vector<double>& in,
            std::vector<double>& out, int axis) {
  pass1d(op, in, out, axis, 1.0, 1.0, 1.0);
}

void derivative(const EdgeOperator& op, const std::vector<double>& in,
                std::vector<double>& out, int axis, bool adjoint) {
  // Correlation taps are (-1, 0, +1); the adjoint reverses them.
  if (adjoint) {
    pass1d(op, in, out, axis, 1.0, 0.0, -1.0);
  } else {
    pass1d(op, in, out, axis, -1.0, 0.0, 1.0);
  }
}

std::vector<double> scatter(const EdgeOperator& op,
                            const Eigen::VectorXd& field) {
  std::vector<double> vol(static_cast<std::size_t>(op.n_voxels()), 0.0);
  for (int s = 0; s < op.n_sources; ++s) {
    vol[static_cast<std::size_t>(op.voxel_of_source[static_cast<std::size_t>(s)])] =
        field[s];
  }
  return vol;
}

void gather(const EdgeOperator& op, const std::vector<double>& vol,
            Eigen::VectorXd& out, int offset) {
  for (int s = 0; s < op.n_sources; ++s) {
    out[offset + s] =
        vol[static_cast<std::size_t>(op.voxel_of_source[static_cast<std::size_t>(s)])];
  }
}

}  // namespace

Eigen::VectorXd prewitt_edges(const EdgeOperator& op,
                              const Eigen::VectorXd& field) {
  if (field.size() != op.n_sources) {
    throw DataError("field length does not match the edge operator");
  }
  const std::vector<double> vol = scatter(op, field);
  std::vector<double> a(vol.size()), b(vol.size());
  Eigen::VectorXd out(3 * op.n_sources);

  // The 3x3x3 kernel for axis d is separable: smoothing [1,1,1] along the
  // two other axes, derivative [-1,0,1] along d.
  for (int axis = 0; axis < 3; ++axis) {
    const int other1 = (axis + 1) % 3;
    const int other2 = (axis + 2) % 3;
    smooth(op, vol, a, other1);
    smooth(op, a, b, other2);
    derivative(op, b, a, axis, /*adjoint=*/false);
    gather(op, a, out, axis * op.n_sources);
  }
  return out;
}

Eigen::VectorXd prewitt_edges_adjoint(const EdgeOperator& op,
                                      const Eigen::VectorXd& responses) {
  if (responses.size() != 3 * op.n_sources) {
    throw DataError("response length does not match the edge operator");
  }
  Eigen::VectorXd result = Eigen::VectorXd::Zero(op.n_sources);
  std::vector<double> a(static_cast<std::size_t>(op.n_voxels()));
  std::vector<double> b(a.size());
  for (int axis = 0; axis < 3; ++axis) {
    const std::vector<double> vol =
        scatter(op, responses.segment(axis * op.n_sources, op.n_sources));
    const int other1 = (axis + 1) % 3;
    const int other2 = (axis + 2) % 3;
    derivative(op, vol, a, axis, /*adjoint=*/true);
    smooth(op, a, b, other2);
    smooth(op, b, a, other1);
    for (int s = 0; s < op.n_sources; ++s) {
      result[s] += a[static_cast<std::size_t>(
          op.voxel_of_source[static_cast<std::size_t>(s)])];
    }
  }
  return result;
}

}  // namespace esiw
