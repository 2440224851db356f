#include "hpdp/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hpdp::io {

static_assert(std::endian::native == std::endian::little, "array files are written in host byte order");

namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.insert(out.end(), b, b + 4);
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

}  // namespace

void append_f64(std::vector<char>& out, const MatrixXd& m) {
  const std::size_t start = out.size();
  out.resize(start + static_cast<std::size_t>(m.size()) * sizeof(double));
  char* dst = out.data() + start;
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      const double v = m(r, c);
      std::memcpy(dst, &v, sizeof(double));
      dst += sizeof(double);
    }
}

MatrixXd parse_f64(const char* data, Eigen::Index rows, Eigen::Index cols) {
  MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r)
    for (Eigen::Index c = 0; c < cols; ++c) {
      std::memcpy(&m(r, c), data, sizeof(double));
      data += sizeof(double);
    }
  return m;
}

void write_matrix(const std::filesystem::path& path, const MatrixXd& m, std::string_view magic) {
  if (magic.size() != 8) throw ConfigError("array magic must be 8 bytes");
  std::vector<char> buf(magic.begin(), magic.end());
  put_u32(buf, static_cast<std::uint32_t>(m.rows()));
  put_u32(buf, static_cast<std::uint32_t>(m.cols()));
  append_f64(buf, m);
  write_file_atomic(path, std::string_view(buf.data(), buf.size()));
}

MatrixXd read_matrix(const std::filesystem::path& path, std::string_view magic) {
  const std::string bytes = read_file(path);
  if (bytes.size() < 16 || std::string_view(bytes.data(), 8) != magic)
    throw InputError(path.string() + ": not an array file (bad magic)");
  const std::uint32_t rows = get_u32(bytes.data() + 8);
  const std::uint32_t cols = get_u32(bytes.data() + 12);
  const std::size_t need = 16 + static_cast<std::size_t>(rows) * cols * sizeof(double);
  if (bytes.size() != need)
    throw InputError(path.string() + ": size " + std::to_string(bytes.size()) + " does not match header (" +
                     std::to_string(need) + ")");
  return parse_f64(bytes.data() + 16, rows, cols);
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw InputError("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace hpdp::io
