#include "glvq/container.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "glvq/half.hpp"

namespace glvq {

namespace {

void check_bits(int bits) {
  if (bits < 1 || bits > 16) throw std::invalid_argument("bits must lie in [1, 16]");
}

class Writer {
 public:
  template <typename T>
  void put(T value) {
    for (std::size_t i = 0; i < sizeof(T); ++i)
      out_.push_back(static_cast<std::uint8_t>(static_cast<std::uint64_t>(value) >> (8 * i)));
  }
  void put_half(double value) {
    const std::uint16_t h = to_half_bits(value);
    if ((h & 0x7c00) == 0x7c00) throw CodeRangeError("side information does not fit binary16");
    put<std::uint16_t>(h);
  }
  void put_bytes(std::span<const std::uint8_t> bytes) { out_.insert(out_.end(), bytes.begin(), bytes.end()); }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    std::uint64_t value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) value |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += sizeof(T);
    return static_cast<T>(value);
  }
  double get_half() { return from_half_bits(get<std::uint16_t>()); }
  std::span<const std::uint8_t> take(std::uint64_t count) {
    need(count);
    auto out = bytes_.subspan(pos_, static_cast<std::size_t>(count));
    pos_ += static_cast<std::size_t>(count);
    return out;
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::uint64_t count) const {
    if (count > remaining()) throw TruncatedError("archive truncated");
  }
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::uint64_t packed_size(Index dim, Index columns, int bits) {
  return (static_cast<std::uint64_t>(dim) * static_cast<std::uint64_t>(columns) *
              static_cast<std::uint64_t>(bits) + 7) / 8;
}

std::vector<std::uint8_t> pack_codes(const CodeMatrix& codes, int bits) {
  check_bits(bits);
  const std::int64_t lo = code_min(bits);
  const std::int64_t hi = code_max(bits);
  std::vector<std::uint8_t> out(packed_size(codes.rows(), codes.cols(), bits), 0);
  std::uint64_t bit_pos = 0;
  // Eigen storage is column-major, matching the on-disk order.
  for (Index i = 0; i < codes.size(); ++i) {
    const std::int64_t z = codes.data()[i];
    if (z < lo || z > hi) throw CodeRangeError("code " + std::to_string(z) + " outside " + std::to_string(bits) + "-bit range");
    const auto u = static_cast<std::uint64_t>(z - lo);
    for (int b = 0; b < bits; ++b, ++bit_pos)
      if ((u >> b) & 1) out[bit_pos / 8] |= static_cast<std::uint8_t>(1u << (bit_pos % 8));
  }
  return out;
}

CodeMatrix unpack_codes(std::span<const std::uint8_t> payload, int bits, Index dim, Index columns) {
  check_bits(bits);
  if (payload.size() != packed_size(dim, columns, bits))
    throw TruncatedError("payload holds " + std::to_string(payload.size()) + " bytes, expected " +
                         std::to_string(packed_size(dim, columns, bits)));
  const std::int64_t lo = code_min(bits);
  CodeMatrix codes(dim, columns);
  std::uint64_t bit_pos = 0;
  for (Index i = 0; i < codes.size(); ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < bits; ++b, ++bit_pos) u |= std::uint64_t{(payload[bit_pos / 8] >> (bit_pos % 8)) & 1u} << b;
    codes.data()[i] = static_cast<std::int32_t>(static_cast<std::int64_t>(u) + lo);
  }
  return codes;
}

GroupCodec<double> round_side_info(const GroupCodec<double>& codec) {
  GroupCodec<double> out = codec;
  out.scale = round_to_half(codec.scale);
  if (!(out.scale > 0) || !std::isfinite(out.scale))
    throw CodeRangeError("group scale does not fit binary16");
  if (codec.mu) out.mu = CompandingParam<double>(round_to_half(codec.mu->value()));
  out.basis = GenerationMatrix<double>(codec.basis.matrix().unaryExpr([](double v) { return round_to_half(v); }));
  return out;
}

std::vector<std::uint8_t> write_archive(std::span<const ArchiveRecord> records) {
  Writer w;
  w.put_bytes(kArchiveMagic);
  w.put<std::uint16_t>(kArchiveVersion);
  if (records.size() > std::numeric_limits<std::uint32_t>::max()) throw CodeRangeError("too many groups");
  w.put<std::uint32_t>(static_cast<std::uint32_t>(records.size()));
  for (const auto& r : records) {
    const auto& c = r.codec;
    if (c.rows < 0 || c.cols < 0 || c.rows > std::numeric_limits<std::uint32_t>::max() ||
        c.cols > std::numeric_limits<std::uint32_t>::max() || c.dim() > 0xffff || c.pad() > 0xffff)
      throw CodeRangeError("group geometry does not fit the archive header");
    if (r.codes.rows() != c.dim() || r.codes.cols() != c.columns())
      throw ShapeError("code matrix does not match codec geometry");
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.rows));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.cols));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(c.dim()));
    w.put<std::uint8_t>(static_cast<std::uint8_t>(c.bits));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(c.pad()));
    w.put_half(c.scale);
    w.put_half(c.mu ? c.mu->value() : 0.0);
    for (Index i = 0; i < c.dim(); ++i)
      for (Index j = 0; j < c.dim(); ++j) w.put_half(c.basis.matrix()(i, j));
    const auto payload = pack_codes(r.codes, c.bits);
    w.put<std::uint64_t>(payload.size());
    w.put_bytes(payload);
  }
  return w.take();
}

ArchiveReader::ArchiveReader(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  if (bytes.size() < kArchiveMagic.size() ||
      !std::equal(kArchiveMagic.begin(), kArchiveMagic.end(), bytes.begin()))
    throw BadMagicError("not a GLVQ archive");
  r.take(kArchiveMagic.size());
  if (const auto version = r.get<std::uint16_t>(); version != kArchiveVersion)
    throw UnsupportedVersionError("unsupported archive version " + std::to_string(version));
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t g = 0; g < count; ++g) {
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    const auto dim = r.get<std::uint16_t>();
    const auto bits = r.get<std::uint8_t>();
    const auto pad = r.get<std::uint16_t>();
    const double scale = r.get_half();
    const double mu = r.get_half();
    if (r.remaining() < 2 * std::size_t{dim} * dim) throw TruncatedError("archive truncated");
    Matrix<double> basis(dim, dim);
    for (Index i = 0; i < dim; ++i)
      for (Index j = 0; j < dim; ++j) basis(i, j) = r.get_half();
    const auto payload_len = r.get<std::uint64_t>();

    const std::string where = "group " + std::to_string(g) + ": ";
    if (dim == 0 || bits < 1 || bits > 16) throw ParseError(where + "invalid dim or bit width");
    if (pad != padding_for(Index(rows) * Index(cols), dim)) throw ParseError(where + "inconsistent padding");
    if (!(scale > 0) || !std::isfinite(scale)) throw ParseError(where + "invalid scale");
    std::optional<CompandingParam<double>> mu_param;
    if (mu != 0.0) {
      if (!(mu >= CompandingParam<double>::kMin && mu <= CompandingParam<double>::kMax))
        throw ParseError(where + "companding parameter outside [10, 255]");
      mu_param = CompandingParam<double>(mu);
    }
    const Index columns = (Index(rows) * Index(cols) + pad) / dim;
    if (payload_len != packed_size(dim, columns, bits)) throw ParseError(where + "payload length does not match geometry");
    const auto payload = r.take(payload_len);
    try {
      entries_.push_back({GroupCodec<double>{GenerationMatrix<double>(std::move(basis)), mu_param, bits,
                                             scale, Index(rows), Index(cols)},
                          payload});
    } catch (const Error& e) {
      throw ParseError(where + e.what());
    }
  }
  if (r.remaining() != 0) throw ParseError("trailing bytes after the last group");
}

CodeMatrix ArchiveReader::codes(std::size_t group) const {
  const auto& e = entries_.at(group);
  return unpack_codes(e.payload, e.codec.bits, e.codec.dim(), e.codec.columns());
}

Matrix<double> ArchiveReader::decode_blocks(std::size_t group, Index first, Index count) const {
  const auto& e = entries_.at(group);
  const Index d = e.codec.dim();
  if (first < 0 || count < 0 || first + count > e.codec.columns())
    throw std::out_of_range("sub-block range outside the group");
  const std::int64_t lo = code_min(e.codec.bits);
  Matrix<double> z(d, count);
  std::uint64_t bit_pos = static_cast<std::uint64_t>(first) * d * e.codec.bits;
  for (Index i = 0; i < z.size(); ++i) {
    std::uint64_t u = 0;
    for (int b = 0; b < e.codec.bits; ++b, ++bit_pos)
      u |= std::uint64_t{(e.payload[bit_pos / 8] >> (bit_pos % 8)) & 1u} << b;
    z.data()[i] = static_cast<double>(static_cast<std::int64_t>(u) + lo);
  }
  Matrix<double> lattice = e.codec.basis.matrix() * z;
  if (e.codec.mu) lattice = expand(lattice, *e.codec.mu);
  return e.codec.scale * lattice;
}

std::vector<ArchiveRecord> read_archive(std::span<const std::uint8_t> bytes) {
  const ArchiveReader reader(bytes);
  std::vector<ArchiveRecord> out;
  out.reserve(reader.size());
  for (std::size_t g = 0; g < reader.size(); ++g) out.push_back(reader.record(g));
  return out;
}

OverheadReport overhead_report(std::int64_t dim, std::int64_t rows, std::int64_t cols,
                               std::int64_t bits) {
  if (dim < 1 || rows < 1 || cols < 1 || bits < 1)
    throw std::invalid_argument("overhead arguments must be >= 1");
  const double weight_bits = double(rows) * double(cols) * double(bits);
  OverheadReport r;
  r.side_bytes = static_cast<std::uint64_t>(2 * dim * dim + 2);
  r.actual_side_bytes = r.side_bytes + 2;
  r.percent = 100.0 * (16.0 * double(dim) * double(dim) + 16.0) / weight_bits;
  r.actual_percent = 100.0 * 8.0 * double(r.actual_side_bytes) / weight_bits;
  return r;
}

std::vector<OverheadRow> standard_overhead_table() {
  std::vector<OverheadRow> rows;
  for (int d : {8, 16, 32}) {
    for (int n : {128, 256}) {
      OverheadRow row{d, 4096, n, {}};
      for (int b = 2; b <= 4; ++b) row.percent[b - 2] = overhead_report(d, 4096, n, b).percent;
      rows.push_back(row);
    }
  }
  return rows;
}

}  // namespace glvq
