#pragma once

// Tensor files: `<name>.f32` holds row-major little-endian float32 values,
// `<name>.json` the manifest {"shape": [rows, cols], "dtype": "f32",
// "layout": "row-major"}.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "glvq/types.hpp"

namespace glvq {

/// `<name>.f32` for either `<name>` or `<name>.f32`.
std::filesystem::path tensor_payload_path(const std::filesystem::path& path);
std::filesystem::path tensor_manifest_path(const std::filesystem::path& path);

Matrix<double> read_tensor(const std::filesystem::path& path);

/// Writes payload and manifest, each via a temporary file and rename.
void write_tensor(const std::filesystem::path& path, const Matrix<double>& values);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);

/// Writes `bytes` to a sibling temporary and renames it over `path`, so a
/// failed write never leaves a partial file behind.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace glvq
