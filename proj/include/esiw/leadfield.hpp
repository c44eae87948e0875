#pragma once

#include <Eigen/Dense>
#include <filesystem>

#include "esiw/rng.hpp"
#include "esiw/source_space.hpp"

namespace esiw {

struct LeadField {
  Eigen::MatrixXd gain_free;    // M x 3N; columns 3n..3n+2 belong to source n
  Eigen::MatrixXd gain_fixed;   // M x N; empty until collapsed
  MatrixX3d sensor_positions;   // M x 3 mm; may be empty after import
  // Per-column means of the raw gain that the average reference removed.
  // Kept because the referenced gain_free has exactly zero channel sums,
  // which would make the principal-orientation sum degenerate for every
  // source. Empty for imported or hand-built leadfields.
  Eigen::VectorXd column_mean;  // 3N

  bool has_free() const { return gain_free.size() > 0; }
  bool has_fixed() const { return gain_fixed.size() > 0; }
  int n_channels() const {
    return static_cast<int>(has_free() ? gain_free.rows() : gain_fixed.rows());
  }
  int n_sources() const {
    return static_cast<int>(has_free() ? gain_free.cols() / 3
                                       : gain_fixed.cols());
  }
};

// Potential of a unit current dipole in an infinite homogeneous medium:
// phi = q . (r - r0) / (4 pi sigma ||r - r0||^3). No referencing.
double dipole_potential(const Eigen::Vector3d& source_pos,
                        const Eigen::Vector3d& moment,
                        const Eigen::Vector3d& sensor_pos,
                        double conductivity);

// Free-orientation gain for every (source, axis) pair, average-referenced so
// each column sums to zero. Throws ConfigError when any sensor comes within
// 1 mm of a source.
LeadField analytic_leadfield(const SourceSpace& space, const MatrixX3d& sensors,
                             double conductivity);

// Dominant source directions from the channel sums of each source's gain
// triplet (pre-reference sums when available). Throws NumericError listing
// the offending sources when a sum vector has norm < 1e-12.
MatrixX3d principal_orientations(const LeadField& lf);

// Mixes the principal direction with a random one: s * act * unit((1-l)d + l*ori),
// s = +1 when dot(ori, d) > 0 and -1 otherwise.
Eigen::Vector3d apply_loose_orientation(const Eigen::Vector3d& d,
                                        const Eigen::Vector3d& ori, double act,
                                        double loose);

// One loose-constrained unit orientation per source; ori drawn uniformly on
// the sphere from `rng` in source order.
MatrixX3d sample_loose_orientations(const LeadField& lf, double loose,
                                    Rng& rng);

// Reduces gain_free to gain_fixed along the given unit orientations.
LeadField collapse_leadfield(const LeadField& lf,
                             const MatrixX3d& orientations);

// Sum of |gain_fixed[:, n]|. Smaller score = deeper source (weaker scalp
// footprint).
double source_depth_score(const LeadField& lf, int n);
Eigen::VectorXd source_depth_scores(const LeadField& lf);

// ESIW container round trip. A LeadField spans up to three files:
// <stem>.free.esiw (kind 1), <stem>.fixed.esiw (kind 2) and
// <stem>.sensors.esiw (kind 3). import_leadfield reads a single gain file.
void export_leadfield(const LeadField& lf, const std::filesystem::path& dir,
                      const std::string& stem);
LeadField import_leadfield(const std::filesystem::path& gain_file);

}  // namespace esiw
