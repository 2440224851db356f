#pragma once

// Binary array files and small filesystem helpers.
//
// Array file layout: 8-byte magic, u32 rows, u32 cols (little endian), then
// rows*cols little-endian f64 values in row-major order.

#include "hpdp/common.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace hpdp::io {

inline constexpr std::string_view kBagMagic = "HPDPBAG1";

void write_matrix(const std::filesystem::path& path, const MatrixXd& m, std::string_view magic = kBagMagic);
MatrixXd read_matrix(const std::filesystem::path& path, std::string_view magic = kBagMagic);

// Row-major f64 values appended to a byte buffer.
void append_f64(std::vector<char>& out, const MatrixXd& m);
MatrixXd parse_f64(const char* data, Eigen::Index rows, Eigen::Index cols);

// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace hpdp::io
