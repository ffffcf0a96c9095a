#include "fruitlet/util/encoding.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <boost/beast/core/detail/base64.hpp>

namespace fruitlet::util {

namespace b64 = boost::beast::detail::base64;

static_assert(std::endian::native == std::endian::little,
              "array encoding assumes a little-endian host");

std::string base64_encode(std::span<const unsigned char> bytes) {
  std::string out(b64::encoded_size(bytes.size()), '\0');
  out.resize(b64::encode(out.data(), bytes.data(), bytes.size()));
  return out;
}

std::vector<unsigned char> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64: length is not a multiple of 4");
  std::vector<unsigned char> out(b64::decoded_size(text.size()));
  const auto [written, read] = b64::decode(out.data(), text.data(), text.size());
  std::size_t body = text.size();
  while (body > 0 && text.size() - body < 2 && text[body - 1] == '=') --body;
  if (read != body) throw std::invalid_argument("base64: invalid character in input");
  out.resize(written);
  return out;
}

std::string encode_f64(std::span<const double> values) {
  return base64_encode({reinterpret_cast<const unsigned char*>(values.data()),
                        values.size() * sizeof(double)});
}

std::vector<double> decode_f64(std::string_view text, std::size_t expected_count) {
  const auto bytes = base64_decode(text);
  if (bytes.size() != expected_count * sizeof(double)) {
    throw std::invalid_argument("f64 array: expected " + std::to_string(expected_count) +
                                " values, decoded " + std::to_string(bytes.size()) + " bytes");
  }
  std::vector<double> out(expected_count);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  return out;
}

nlohmann::json array_to_json(const std::vector<std::size_t>& shape, std::span<const double> values) {
  return {{"shape", shape}, {"dtype", "f64"}, {"data", encode_f64(values)}};
}

std::vector<double> array_from_json(const nlohmann::json& j, std::vector<std::size_t>* shape_out) {
  const auto shape = j.at("shape").get<std::vector<std::size_t>>();
  std::size_t n = 1;
  for (auto s : shape) n *= s;
  const auto dtype = j.value("dtype", std::string("f64"));
  const auto& data = j.at("data").get_ref<const std::string&>();
  std::vector<double> out;
  if (dtype == "f64") {
    out = decode_f64(data, n);
  } else if (dtype == "f32") {
    const auto bytes = base64_decode(data);
    if (bytes.size() != n * sizeof(float)) throw std::invalid_argument("f32 array: size mismatch");
    std::vector<float> tmp(n);
    std::memcpy(tmp.data(), bytes.data(), bytes.size());
    out.assign(tmp.begin(), tmp.end());
  } else {
    throw std::invalid_argument("array: unsupported dtype '" + dtype + "'");
  }
  if (shape_out) *shape_out = shape;
  return out;
}

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) throw std::runtime_error("write failed: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw MissingFileError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::string dump_json(const nlohmann::json& j) { return j.dump(2) + "\n"; }

}  // namespace fruitlet::util
