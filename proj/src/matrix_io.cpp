#include "esiw/matrix_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <limits>

namespace esiw {

static_assert(std::endian::native == std::endian::little,
              "the ESIW container is little-endian; big-endian hosts are "
              "not supported");
static_assert(sizeof(double) == 8 && std::numeric_limits<double>::is_iec559);

namespace container {

namespace {
constexpr char kMagic[4] = {'E', 'S', 'I', 'W'};

template <typename T>
void write_raw(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is, const std::string& context) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw DataError(context + ": payload shorter than header declares");
  return v;
}
}  // namespace

void write_prefix(std::ostream& os, ContainerKind kind) {
  os.write(kMagic, 4);
  write_raw<std::uint16_t>(os, kContainerVersion);
  write_raw<std::uint8_t>(os, static_cast<std::uint8_t>(kind));
}

ContainerKind read_prefix(std::istream& is, const std::string& context) {
  char magic[4] = {};
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) {
    throw DataError(context + ": bad magic bytes (not an ESIW container)");
  }
  const auto version = read_raw<std::uint16_t>(is, context);
  if (version != kContainerVersion) {
    throw DataError(context + ": unsupported container version " +
                    std::to_string(version));
  }
  const auto kind = read_raw<std::uint8_t>(is, context);
  if (kind < 1 || kind > 5) {
    throw DataError(context + ": unknown container kind " +
                    std::to_string(kind));
  }
  return static_cast<ContainerKind>(kind);
}

void write_u32(std::ostream& os, std::uint32_t v) { write_raw(os, v); }
void write_u64(std::ostream& os, std::uint64_t v) { write_raw(os, v); }
void write_f64(std::ostream& os, double v) { write_raw(os, v); }

std::uint32_t read_u32(std::istream& is, const std::string& context) {
  return read_raw<std::uint32_t>(is, context);
}
std::uint64_t read_u64(std::istream& is, const std::string& context) {
  return read_raw<std::uint64_t>(is, context);
}
double read_f64(std::istream& is, const std::string& context) {
  return read_raw<double>(is, context);
}

void write_matrix_block(std::ostream& os, const Eigen::MatrixXd& m) {
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const RowMajor tmp = m;
  os.write(reinterpret_cast<const char*>(tmp.data()),
           static_cast<std::streamsize>(sizeof(double) * tmp.size()));
}

Eigen::MatrixXd read_matrix_block(std::istream& is, std::uint32_t rows,
                                  std::uint32_t cols,
                                  const std::string& context) {
  using RowMajor =
      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  RowMajor tmp(rows, cols);
  is.read(reinterpret_cast<char*>(tmp.data()),
          static_cast<std::streamsize>(sizeof(double) * tmp.size()));
  if (!is) throw DataError(context + ": payload shorter than header declares");
  return tmp;
}

void expect_eof(std::istream& is, const std::string& context) {
  is.peek();
  if (!is.eof()) {
    throw DataError(context + ": trailing bytes after declared payload");
  }
}

}  // namespace container

void write_matrix(const std::filesystem::path& path, const Eigen::MatrixXd& m,
                  ContainerKind kind) {
  if (kind != ContainerKind::kLeadfieldFree &&
      kind != ContainerKind::kLeadfieldFixed &&
      kind != ContainerKind::kGeneric) {
    throw DataError("write_matrix: kind does not describe a single matrix");
  }
  std::ofstream os(path, std::ios::binary);
  if (!os) throw DataError("cannot open " + path.string() + " for writing");
  container::write_prefix(os, kind);
  container::write_u32(os, static_cast<std::uint32_t>(m.rows()));
  container::write_u32(os, static_cast<std::uint32_t>(m.cols()));
  container::write_matrix_block(os, m);
  if (!os) throw DataError("failed while writing " + path.string());
}

Eigen::MatrixXd read_matrix(const std::filesystem::path& path,
                            ContainerKind* kind_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  const std::string ctx = path.filename().string();
  const ContainerKind kind = container::read_prefix(is, ctx);
  if (kind != ContainerKind::kLeadfieldFree &&
      kind != ContainerKind::kLeadfieldFixed &&
      kind != ContainerKind::kGeneric) {
    throw DataError(ctx + ": container holds a " +
                    std::to_string(static_cast<int>(kind)) +
                    "-kind payload, not a single matrix");
  }
  const std::uint32_t rows = container::read_u32(is, ctx);
  const std::uint32_t cols = container::read_u32(is, ctx);
  Eigen::MatrixXd m = container::read_matrix_block(is, rows, cols, ctx);
  container::expect_eof(is, ctx);
  if (kind_out) *kind_out = kind;
  return m;
}

}  // namespace esiw
