#pragma once

#include <unistd.h>

#include <Eigen/Dense>
#include <filesystem>
#include <string>

#include "esiw/rng.hpp"
#include "esiw/source_space.hpp"

namespace esiw::test {

inline std::filesystem::path temp_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("esiw-tests-" + name + "-" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Eigen::MatrixXd random_matrix(int rows, int cols, Rng& rng,
                                     double scale = 1.0) {
  Eigen::MatrixXd m(rows, cols);
  for (int c = 0; c < cols; ++c) {
    for (int r = 0; r < rows; ++r) m(r, c) = scale * rng.normal();
  }
  return m;
}

inline Eigen::VectorXd random_vector(int n, Rng& rng, double scale = 1.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = scale * rng.normal();
  return v;
}

// 3x3x3 cube around the origin, 10 mm spacing: the small grid used by the
// gradient-oracle instances.
inline SourceSpace small_cube_space() {
  return build_cube_source_space({3, 3, 3}, 10.0,
                                 Eigen::Vector3d(-10.0, -10.0, -10.0));
}

inline double rel_err(double a, double b, double floor = 1e-4) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace esiw::test
