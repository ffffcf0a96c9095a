#pragma once

#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace fruitlet::util {

class MissingFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string base64_encode(std::span<const unsigned char> bytes);
std::vector<unsigned char> base64_decode(std::string_view text);

/// Little-endian float64 array packed as base64.
std::string encode_f64(std::span<const double> values);
std::vector<double> decode_f64(std::string_view text, std::size_t expected_count);

/// {"shape": [...], "dtype": "f64", "data": "<base64>"}
nlohmann::json array_to_json(const std::vector<std::size_t>& shape, std::span<const double> values);
std::vector<double> array_from_json(const nlohmann::json& j, std::vector<std::size_t>* shape_out);

/// Writes `contents` to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

/// Deterministic pretty JSON (sorted keys, two-space indent, trailing newline).
std::string dump_json(const nlohmann::json& j);

}  // namespace fruitlet::util
