#include "glvq/tensor_file.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <json.hpp>

namespace glvq {

namespace fs = std::filesystem;

fs::path tensor_payload_path(const fs::path& path) {
  fs::path p = path;
  if (p.extension() == ".f32" || p.extension() == ".json") p.replace_extension();
  return p.string() + ".f32";
}

fs::path tensor_manifest_path(const fs::path& path) {
  fs::path p = path;
  if (p.extension() == ".f32" || p.extension() == ".json") p.replace_extension();
  return p.string() + ".json";
}

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file_atomic(const fs::path& path, std::span<const std::uint8_t> bytes) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw WriteError("cannot write " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ignored;
      fs::remove(tmp, ignored);
      throw WriteError("failed writing " + path.string());
    }
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw WriteError("cannot replace " + path.string());
  }
}

Matrix<double> read_tensor(const fs::path& path) {
  const auto manifest_bytes = read_file(tensor_manifest_path(path));
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(manifest_bytes.begin(), manifest_bytes.end());
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("bad tensor manifest: " + std::string(e.what()));
  }
  if (!manifest.is_object() || !manifest.contains("shape") || !manifest["shape"].is_array() ||
      manifest["shape"].size() != 2)
    throw ParseError("tensor manifest needs a two-element shape");
  if (manifest.value("dtype", "") != "f32") throw ParseError("tensor dtype must be f32");
  if (manifest.value("layout", "") != "row-major") throw ParseError("tensor layout must be row-major");
  const auto& shape = manifest["shape"];
  if (!shape[0].is_number_unsigned() || !shape[1].is_number_unsigned())
    throw ParseError("tensor shape must be non-negative integers");
  const auto rows = shape[0].get<std::uint64_t>();
  const auto cols = shape[1].get<std::uint64_t>();

  const auto payload = read_file(tensor_payload_path(path));
  if (payload.size() != rows * cols * 4)
    throw ParseError("tensor payload holds " + std::to_string(payload.size()) + " bytes, manifest implies " +
                     std::to_string(rows * cols * 4));
  Matrix<double> out(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::uint64_t r = 0; r < rows; ++r) {
    for (std::uint64_t c = 0; c < cols; ++c) {
      const std::size_t at = static_cast<std::size_t>((r * cols + c) * 4);
      const std::uint32_t word = std::uint32_t{payload[at]} | std::uint32_t{payload[at + 1]} << 8 |
                                 std::uint32_t{payload[at + 2]} << 16 | std::uint32_t{payload[at + 3]} << 24;
      out(static_cast<Index>(r), static_cast<Index>(c)) = std::bit_cast<float>(word);
    }
  }
  return out;
}

void write_tensor(const fs::path& path, const Matrix<double>& values) {
  std::vector<std::uint8_t> payload;
  payload.reserve(static_cast<std::size_t>(values.size()) * 4);
  for (Index r = 0; r < values.rows(); ++r) {
    for (Index c = 0; c < values.cols(); ++c) {
      const auto word = std::bit_cast<std::uint32_t>(static_cast<float>(values(r, c)));
      for (int i = 0; i < 4; ++i) payload.push_back(static_cast<std::uint8_t>(word >> (8 * i)));
    }
  }
  const nlohmann::json manifest = {
      {"shape", {values.rows(), values.cols()}}, {"dtype", "f32"}, {"layout", "row-major"}};
  const std::string text = manifest.dump(2) + "\n";
  write_file_atomic(tensor_payload_path(path), payload);
  write_file_atomic(tensor_manifest_path(path),
                    std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

}  // namespace glvq
