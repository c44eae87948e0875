#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "esiw/common.hpp"

namespace esiw {

// "ESIW" binary container. Common prefix: magic "ESIW", u16 version, u8 kind.
// Kinds 1-3 carry a single dense matrix: u32 rows, u32 cols, then rows*cols
// little-endian f64, row-major. Kinds 4 (sample batch) and 5 (model
// checkpoint) define their own payload after the prefix.
enum class ContainerKind : std::uint8_t {
  kLeadfieldFree = 1,
  kLeadfieldFixed = 2,
  kGeneric = 3,
  kBatch = 4,
  kModel = 5,
};

inline constexpr std::uint16_t kContainerVersion = 1;

namespace container {

void write_prefix(std::ostream& os, ContainerKind kind);
// Validates magic and version; returns the kind byte.
ContainerKind read_prefix(std::istream& is, const std::string& context);

void write_u32(std::ostream& os, std::uint32_t v);
void write_u64(std::ostream& os, std::uint64_t v);
void write_f64(std::ostream& os, double v);
std::uint32_t read_u32(std::istream& is, const std::string& context);
std::uint64_t read_u64(std::istream& is, const std::string& context);
double read_f64(std::istream& is, const std::string& context);

// Row-major f64 block of an Eigen matrix.
void write_matrix_block(std::ostream& os, const Eigen::MatrixXd& m);
Eigen::MatrixXd read_matrix_block(std::istream& is, std::uint32_t rows,
                                  std::uint32_t cols,
                                  const std::string& context);

// Throws DataError unless the stream is positioned exactly at EOF.
void expect_eof(std::istream& is, const std::string& context);

}  // namespace container

// Single-matrix files (kinds 1-3).
void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                  ContainerKind kind = ContainerKind::kGeneric);
Eigen::MatrixXd read_matrix(const std::filesystem::path& path,
                            ContainerKind* kind_out = nullptr);

}  // namespace esiw
