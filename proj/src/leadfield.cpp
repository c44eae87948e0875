#include "esiw/leadfield.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "esiw/matrix_io.hpp"

namespace esiw {

double dipole_potential(const Eigen::Vector3d& source_pos,
                        const Eigen::Vector3d& moment,
                        const Eigen::Vector3d& sensor_pos,
                        double conductivity) {
  const Eigen::Vector3d r = sensor_pos - source_pos;
  const double dist = r.norm();
  if (dist < 1e-12) {
    throw NumericError("dipole potential evaluated at the source position");
  }
  return moment.dot(r) /
         (4.0 * std::numbers::pi * conductivity * dist * dist * dist);
}

LeadField analytic_leadfield(const SourceSpace& space, const MatrixX3d& sensors,
                             double conductivity) {
  if (!(conductivity > 0)) throw ConfigError("conductivity must be positive");
  const int n = space.n_sources();
  const int m = static_cast<int>(sensors.rows());
  if (n == 0 || m == 0) {
    throw ConfigError("analytic leadfield needs sources and sensors");
  }

  Eigen::MatrixXd raw(m, 3 * n);
  const double four_pi_sigma = 4.0 * std::numbers::pi * conductivity;
  for (int s = 0; s < n; ++s) {
    const Eigen::Vector3d pos = space.positions.row(s);
    for (int c = 0; c < m; ++c) {
      const Eigen::Vector3d r = sensors.row(c).transpose() - pos;
      const double dist = r.norm();
      if (dist < 1.0) {
        std::ostringstream msg;
        msg << "sensor " << c << " is " << dist << " mm from source " << s
            << " (< 1 mm)";
        throw ConfigError(msg.str());
      }
      const double inv = 1.0 / (four_pi_sigma * dist * dist * dist);
      raw(c, 3 * s + 0) = r.x() * inv;
      raw(c, 3 * s + 1) = r.y() * inv;
      raw(c, 3 * s + 2) = r.z() * inv;
    }
  }

  LeadField lf;
  lf.column_mean = raw.colwise().mean();
  lf.gain_free = raw.rowwise() - lf.column_mean.transpose();
  lf.sensor_positions = sensors;
  return lf;
}

MatrixX3d principal_orientations(const LeadField& lf) {
  if (!lf.has_free()) {
    throw ConfigError("principal orientations need the free-orientation gain");
  }
  const int n = lf.n_sources();
  const int m = lf.n_channels();
  const bool have_raw_sums = lf.column_mean.size() == 3 * n;

  MatrixX3d d(n, 3);
  std::vector<int> degenerate;
  for (int s = 0; s < n; ++s) {
    Eigen::Vector3d sum;
    if (have_raw_sums) {
      // Channel sums of the pre-reference gain; the referenced gain sums to
      // zero by construction.
      sum = static_cast<double>(m) * lf.column_mean.segment<3>(3 * s);
    } else {
      sum = lf.gain_free.middleCols(3 * s, 3).colwise().sum();
    }
    const double norm = sum.norm();
    if (norm < 1e-12) {
      degenerate.push_back(s);
      d.row(s).setZero();
    } else {
      d.row(s) = (sum / norm).transpose();
    }
  }
  if (!degenerate.empty()) {
    std::ostringstream msg;
    msg << "degenerate principal orientation (zero channel sum) for "
        << degenerate.size() << " source(s):";
    const std::size_t shown = std::min<std::size_t>(degenerate.size(), 8);
    for (std::size_t i = 0; i < shown; ++i) msg << ' ' << degenerate[i];
    if (degenerate.size() > shown) msg << " ...";
    throw NumericError(msg.str());
  }
  return d;
}

Eigen::Vector3d apply_loose_orientation(const Eigen::Vector3d& d,
                                        const Eigen::Vector3d& ori, double act,
                                        double loose) {
  if (!(loose >= 0.0 && loose <= 1.0)) {
    throw ConfigError("loose must lie in [0, 1]");
  }
  if (std::abs(d.norm() - 1.0) > 1e-9 || std::abs(ori.norm() - 1.0) > 1e-9) {
    throw ConfigError("loose orientation mixing requires unit d and ori");
  }
  const Eigen::Vector3d mix = (1.0 - loose) * d + loose * ori;
  const double norm = mix.norm();
  if (norm < 1e-12) {
    throw NumericError("orientation mixture collapsed to the zero vector");
  }
  // flip so the result keeps a non-negative component along the principal
  // direction; at loose = 0 the output is d for any ori, at loose = 1 it is
  // +-ori with the sign of dot(ori, d)
  const double s = mix.dot(d) > 0.0 ? 1.0 : -1.0;
  return s * act * (mix / norm);
}

MatrixX3d sample_loose_orientations(const LeadField& lf, double loose,
                                    Rng& rng) {
  const MatrixX3d principal = principal_orientations(lf);
  const int n = static_cast<int>(principal.rows());
  MatrixX3d out(n, 3);
  for (int s = 0; s < n; ++s) {
    Eigen::Vector3d ori;
    double norm = 0.0;
    do {
      ori << rng.normal(), rng.normal(), rng.normal();
      norm = ori.norm();
    } while (norm < 1e-12);
    ori /= norm;
    out.row(s) = apply_loose_orientation(principal.row(s), ori, 1.0, loose)
                     .transpose();
  }
  return out;
}

LeadField collapse_leadfield(const LeadField& lf,
                             const MatrixX3d& orientations) {
  if (!lf.has_free()) {
    throw ConfigError("collapse needs the free-orientation gain");
  }
  const int n = lf.n_sources();
  if (orientations.rows() != n) {
    throw DataError("orientation count " + std::to_string(orientations.rows()) +
                    " does not match source count " + std::to_string(n));
  }
  for (int s = 0; s < n; ++s) {
    if (std::abs(orientations.row(s).norm() - 1.0) > 1e-9) {
      throw ConfigError("orientation row " + std::to_string(s) +
                        " is not unit length");
    }
  }
  LeadField out = lf;
  out.gain_fixed.resize(lf.n_channels(), n);
  for (int s = 0; s < n; ++s) {
    out.gain_fixed.col(s) =
        lf.gain_free.middleCols(3 * s, 3) * orientations.row(s).transpose();
  }
  return out;
}

double source_depth_score(const LeadField& lf, int n) {
  if (!lf.has_fixed()) {
    throw ConfigError("depth score needs the fixed-orientation gain");
  }
  if (n < 0 || n >= lf.n_sources()) {
    throw DataError("source index out of range");
  }
  return lf.gain_fixed.col(n).cwiseAbs().sum();
}

Eigen::VectorXd source_depth_scores(const LeadField& lf) {
  if (!lf.has_fixed()) {
    throw ConfigError("depth scores need the fixed-orientation gain");
  }
  return lf.gain_fixed.cwiseAbs().colwise().sum();
}

void export_leadfield(const LeadField& lf, const std::filesystem::path& dir,
                      const std::string& stem) {
  if (lf.has_free()) {
    write_matrix(dir / (stem + ".free.esiw"), lf.gain_free,
                 ContainerKind::kLeadfieldFree);
  }
  if (lf.has_fixed()) {
    write_matrix(dir / (stem + ".fixed.esiw"), lf.gain_fixed,
                 ContainerKind::kLeadfieldFixed);
  }
  if (lf.sensor_positions.rows() > 0) {
    write_matrix(dir / (stem + ".sensors.esiw"), lf.sensor_positions,
                 ContainerKind::kGeneric);
  }
}

LeadField import_leadfield(const std::filesystem::path& gain_file) {
  ContainerKind kind;
  Eigen::MatrixXd gain = read_matrix(gain_file, &kind);
  LeadField lf;
  if (kind == ContainerKind::kLeadfieldFree) {
    if (gain.cols() % 3 != 0) {
      throw DataError(gain_file.filename().string() +
                      ": free-orientation gain must have 3N columns");
    }
    lf.gain_free = std::move(gain);
  } else if (kind == ContainerKind::kLeadfieldFixed) {
    lf.gain_fixed = std::move(gain);
  } else {
    throw DataError(gain_file.filename().string() +
                    ": not a leadfield container (kind 1 or 2 expected)");
  }
  return lf;
}

}  // namespace esiw
