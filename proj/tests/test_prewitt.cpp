#include <doctest.h>

#include "esiw/prewitt.hpp"
#include "support/test_helpers.hpp"

using namespace esiw;

namespace {

SourceSpace cube(int n) {
  return build_cube_source_space({n, n, n}, 1.0, Eigen::Vector3d::Zero());
}

// Direct 27-tap correlation on the scattered volume; the independent oracle.
Eigen::VectorXd brute_force_edges(const SourceSpace& space,
                                  const Eigen::VectorXd& field) {
  const auto& dims = space.grid_dims;
  std::vector<double> vol(
      static_cast<std::size_t>(dims[0] * dims[1] * dims[2]), 0.0);
  auto lin = [&](int x, int y, int z) {
    return (x * dims[1] + y) * dims[2] + z;
  };
  for (int s = 0; s < space.n_sources(); ++s) {
    vol[static_cast<std::size_t>(lin(space.grid_index(s, 0),
                                     space.grid_index(s, 1),
                                     space.grid_index(s, 2)))] = field[s];
  }
  Eigen::VectorXd out(3 * space.n_sources());
  for (int axis = 0; axis < 3; ++axis) {
    for (int s = 0; s < space.n_sources(); ++s) {
      const int x = space.grid_index(s, 0);
      const int y = space.grid_index(s, 1);
      const int z = space.grid_index(s, 2);
      double acc = 0;
      for (int ox = -1; ox <= 1; ++ox) {
        for (int oy = -1; oy <= 1; ++oy) {
          for (int oz = -1; oz <= 1; ++oz) {
            const int xx = x + ox, yy = y + oy, zz = z + oz;
            if (xx < 0 || xx >= dims[0] || yy < 0 || yy >= dims[1] || zz < 0 ||
                zz >= dims[2]) {
              continue;  // zero padding
            }
            acc += prewitt_weight(axis, ox, oy, oz) *
                   vol[static_cast<std::size_t>(lin(xx, yy, zz))];
          }
        }
      }
      out[axis * space.n_sources() + s] = acc;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("prewitt kernels: zero sum and axis permutation symmetry") {
  for (int axis = 0; axis < 3; ++axis) {
    double sum = 0;
    for (int ox = -1; ox <= 1; ++ox) {
      for (int oy = -1; oy <= 1; ++oy) {
        for (int oz = -1; oz <= 1; ++oz) {
          sum += prewitt_weight(axis, ox, oy, oz);
        }
      }
    }
    CHECK(sum == 0.0);
  }
  // the y kernel is the x kernel with axes swapped, likewise z
  for (int ox = -1; ox <= 1; ++ox) {
    for (int oy = -1; oy <= 1; ++oy) {
      for (int oz = -1; oz <= 1; ++oz) {
        CHECK(prewitt_weight(0, ox, oy, oz) == prewitt_weight(1, oy, ox, oz));
        CHECK(prewitt_weight(0, ox, oy, oz) == prewitt_weight(2, oz, oy, ox));
      }
    }
  }
}

TEST_CASE("prewitt: constant field responds only at the boundary") {
  const SourceSpace space = cube(5);
  const EdgeOperator op = make_edge_operator(space);
  const Eigen::VectorXd field =
      Eigen::VectorXd::Constant(space.n_sources(), 3.25);
  const Eigen::VectorXd resp = prewitt_edges(op, field);
  for (int s = 0; s < space.n_sources(); ++s) {
    const bool interior = space.grid_index(s, 0) > 0 &&
                          space.grid_index(s, 0) < 4 &&
                          space.grid_index(s, 1) > 0 &&
                          space.grid_index(s, 1) < 4 &&
                          space.grid_index(s, 2) > 0 &&
                          space.grid_index(s, 2) < 4;
    if (interior) {
      for (int axis = 0; axis < 3; ++axis) {
        CHECK(resp[axis * space.n_sources() + s] == 0.0);
      }
    }
  }
  // boundary voxels do respond (zero padding breaks the cancellation)
  CHECK(resp.cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("prewitt: linear ramp gives 18 along the ramp axis, 0 elsewhere") {
  const SourceSpace space = cube(5);
  const EdgeOperator op = make_edge_operator(space);
  Eigen::VectorXd ramp(space.n_sources());
  for (int s = 0; s < space.n_sources(); ++s) {
    ramp[s] = static_cast<double>(space.grid_index(s, 0));  // f = x
  }
  const Eigen::VectorXd resp = prewitt_edges(op, ramp);
  const Eigen::VectorXd oracle = brute_force_edges(space, ramp);
  CHECK((resp - oracle).cwiseAbs().maxCoeff() == 0.0);  // exact, integer data
  for (int s = 0; s < space.n_sources(); ++s) {
    const bool interior = space.grid_index(s, 0) > 0 &&
                          space.grid_index(s, 0) < 4 &&
                          space.grid_index(s, 1) > 0 &&
                          space.grid_index(s, 1) < 4 &&
                          space.grid_index(s, 2) > 0 &&
                          space.grid_index(s, 2) < 4;
    if (!interior) continue;
    CHECK(resp[0 * space.n_sources() + s] == 18.0);
    CHECK(resp[1 * space.n_sources() + s] == 0.0);
    CHECK(resp[2 * space.n_sources() + s] == 0.0);
  }
}

TEST_CASE("prewitt: separable implementation matches the 27-tap oracle") {
  const SourceSpace space = cube(4);
  const EdgeOperator op = make_edge_operator(space);
  Rng rng(77);
  const Eigen::VectorXd field = test::random_vector(space.n_sources(), rng);
  const Eigen::VectorXd resp = prewitt_edges(op, field);
  const Eigen::VectorXd oracle = brute_force_edges(space, field);
  CHECK((resp - oracle).cwiseAbs().maxCoeff() <
        1e-12 * oracle.cwiseAbs().maxCoeff());
}

TEST_CASE("prewitt: works on a non-cubic ball space with holes") {
  const SourceSpace space =
      build_grid_source_space(25.0, 10.0, Eigen::Vector3d::Zero());
  const EdgeOperator op = make_edge_operator(space);
  Rng rng(78);
  const Eigen::VectorXd field = test::random_vector(space.n_sources(), rng);
  const Eigen::VectorXd resp = prewitt_edges(op, field);
  const Eigen::VectorXd oracle = brute_force_edges(space, field);
  CHECK((resp - oracle).cwiseAbs().maxCoeff() <
        1e-12 * oracle.cwiseAbs().maxCoeff() + 1e-300);
}

TEST_CASE("prewitt: permuting field axes permutes the response blocks") {
  const int n = 4;
  const SourceSpace space = cube(n);
  const EdgeOperator op = make_edge_operator(space);
  Rng rng(79);
  const Eigen::VectorXd field = test::random_vector(space.n_sources(), rng);

  // transpose the volume: swap x and y axes of the field
  Eigen::VectorXd swapped(space.n_sources());
  auto idx_of = [&](int x, int y, int z) { return (x * n + y) * n + z; };
  for (int s = 0; s < space.n_sources(); ++s) {
    const int x = space.grid_index(s, 0);
    const int y = space.grid_index(s, 1);
    const int z = space.grid_index(s, 2);
    swapped[idx_of(y, x, z)] = field[s];
  }
  const Eigen::VectorXd r1 = prewitt_edges(op, field);
  const Eigen::VectorXd r2 = prewitt_edges(op, swapped);
  const int ns = space.n_sources();
  // x response of the swapped field at (y,x,z) equals the y response of the
  // original at (x,y,z)
  for (int s = 0; s < ns; ++s) {
    const int x = space.grid_index(s, 0);
    const int y = space.grid_index(s, 1);
    const int z = space.grid_index(s, 2);
    const int t = idx_of(y, x, z);
    CHECK(r2[0 * ns + t] == doctest::Approx(r1[1 * ns + s]).epsilon(1e-12));
    CHECK(r2[1 * ns + t] == doctest::Approx(r1[0 * ns + s]).epsilon(1e-12));
    CHECK(r2[2 * ns + t] == doctest::Approx(r1[2 * ns + s]).epsilon(1e-12));
  }
}

TEST_CASE("prewitt: adjoint identity <Vx, y> == <x, V^T y>") {
  for (const auto& space :
       {cube(3), build_grid_source_space(25.0, 10.0, Eigen::Vector3d::Zero())}) {
    const EdgeOperator op = make_edge_operator(space);
    Rng rng(80);
    for (int trial = 0; trial < 5; ++trial) {
      const Eigen::VectorXd x = test::random_vector(space.n_sources(), rng);
      const Eigen::VectorXd y =
          test::random_vector(3 * space.n_sources(), rng);
      const double lhs = prewitt_edges(op, x).dot(y);
      const double rhs = x.dot(prewitt_edges_adjoint(op, y));
      CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
    }
  }
}
