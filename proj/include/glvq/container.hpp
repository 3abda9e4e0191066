#pragma once

// GLVQ archive (.glvq), little-endian throughout:
//
//   "GLVQ" | u16 version = 1 | u32 group_count
//   per group:
//     u32 rows | u32 cols | u16 dim | u8 bits | u16 pad
//     f16 scale | f16 mu (0 = companding off) | f16 basis[dim*dim] row-major
//     u64 payload_len | packed codes
//
// Codes are stored as offsets u = z + 2^(b-1) in b bits, column-major over
// the d x l code matrix, LSB-first within each byte.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "glvq/codebook.hpp"
#include "glvq/types.hpp"

namespace glvq {

inline constexpr std::array<std::uint8_t, 4> kArchiveMagic{'G', 'L', 'V', 'Q'};
inline constexpr std::uint16_t kArchiveVersion = 1;

std::vector<std::uint8_t> pack_codes(const CodeMatrix& codes, int bits);

CodeMatrix unpack_codes(std::span<const std::uint8_t> payload, int bits, Index dim, Index columns);

/// Packed payload size in bytes for a d x l code matrix at b bits.
std::uint64_t packed_size(Index dim, Index columns, int bits);

struct ArchiveRecord {
  GroupCodec<double> codec;
  CodeMatrix codes;
};

/// Codec with scale, mu and basis rounded through binary16, i.e. exactly
/// what an archive reader will see.
GroupCodec<double> round_side_info(const GroupCodec<double>& codec);

std::vector<std::uint8_t> write_archive(std::span<const ArchiveRecord> records);

std::vector<ArchiveRecord> read_archive(std::span<const std::uint8_t> bytes);

/// Indexed view over archive bytes. Records are parsed on demand so a
/// consumer can decode a few sub-blocks of one group at a time. The bytes
/// must outlive the reader.
class ArchiveReader {
 public:
  explicit ArchiveReader(std::span<const std::uint8_t> bytes);

  std::size_t size() const { return entries_.size(); }
  const GroupCodec<double>& codec(std::size_t group) const { return entries_.at(group).codec; }
  CodeMatrix codes(std::size_t group) const;
  ArchiveRecord record(std::size_t group) const { return {codec(group), codes(group)}; }

  /// scale * F^-1(G z) for columns [first, first + count) of one group.
  Matrix<double> decode_blocks(std::size_t group, Index first, Index count) const;

 private:
  struct Entry {
    GroupCodec<double> codec;
    std::span<const std::uint8_t> payload;
  };
  std::vector<Entry> entries_;
};

struct OverheadReport {
  double percent = 0;         // 100 (16 d^2 + 16) / (m n b): basis + mu
  double actual_percent = 0;  // includes the stored scale
  std::uint64_t side_bytes = 0;         // 2 d^2 + 2
  std::uint64_t actual_side_bytes = 0;  // 2 d^2 + 4
};

OverheadReport overhead_report(std::int64_t dim, std::int64_t rows, std::int64_t cols,
                               std::int64_t bits);

struct OverheadRow {
  int dim = 0;
  int rows = 0;
  int cols = 0;
  std::array<double, 3> percent{};  // b = 2, 3, 4
};

/// Overhead for m = 4096, n in {128, 256}, d in {8, 16, 32}, b in {2, 3, 4}.
std::vector<OverheadRow> standard_overhead_table();

}  // namespace glvq
