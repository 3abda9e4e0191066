#pragma once

// Layer-level compression: split a weight matrix into column groups,
// allocate bits, fit each group, and round side information to binary16 so
// the in-memory result decodes exactly like the archive.

#include <cstdint>
#include <span>
#include <vector>

#include "glvq/bit_alloc.hpp"
#include "glvq/codebook.hpp"
#include "glvq/container.hpp"

namespace glvq {

struct RunConfig {
  Index dim = 8;
  BitRate target{2, 1};
  Index group_width = 128;
  FitConfig fit;
  bool bit_alloc = true;
  SearchMode search = SearchMode::binary;
  std::uint64_t seed = 0;

  /// Throws std::invalid_argument on out-of-range settings.
  void validate() const;
};

struct ColumnGroup {
  Index first = 0;
  Index width = 0;
};

/// Contiguous blocks of `width` columns; the last block may be narrower.
std::vector<ColumnGroup> column_groups(Index cols, Index width);

struct QuantizedLayer {
  std::vector<ArchiveRecord> records;  // side info already binary16-exact
  std::vector<FitReport> reports;
  BitAllocation allocation;
  std::vector<double> salience;
};

QuantizedLayer quantize_layer(const Matrix<double>& weights, const Matrix<double>& calib,
                              const RunConfig& config);

/// Groups concatenated left to right; all groups must share a row count.
Matrix<double> dequantize_layer(std::span<const ArchiveRecord> records);
Matrix<double> dequantize_layer(const ArchiveReader& reader);

/// Round-to-nearest baseline applied per column group.
Matrix<double> rtn_layer(const Matrix<double>& weights, Index group_width, std::span<const int> bits);

struct LayerMetrics {
  double weight_mse = 0;
  double output_mse = 0;  // ||WX - W_hat X||_F^2 / (m T)
  double kl = 0;
  double bits_per_weight = 0;
  double overhead_percent = 0;
  double actual_overhead_percent = 0;
};

/// Error metrics; storage fields are filled only when `records` is non-empty.
LayerMetrics evaluate_layer(const Matrix<double>& weights, const Matrix<double>& reconstructed,
                            const Matrix<double>& calib, std::span<const ArchiveRecord> records = {});

}  // namespace glvq
