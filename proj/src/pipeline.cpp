#include "glvq/pipeline.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>

namespace glvq {

namespace {

/// Runs body(i) for i in [0, count) on up to hardware_concurrency threads.
template <typename Body>
void parallel_for(std::size_t count, Body body) {
  const std::size_t workers =
      std::min<std::size_t>(count, std::max(1u, std::thread::hardware_concurrency()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> threads;
  for (std::size_t w = 0; w < workers; ++w) {
    threads.emplace_back([&] {
      for (std::size_t i = next++; i < count; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : threads) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace

void RunConfig::validate() const {
  if (dim < 1 || dim > 64) throw std::invalid_argument("--dim must lie in [1, 64]");
  if (group_width < 1) throw std::invalid_argument("--group-width must be >= 1");
  if (target.num <= 0 || target.den <= 0 || target.ceil() > 16 || target.value() < 1)
    throw std::invalid_argument("--bits must lie in [1, 16]");
  if (!(fit.step_basis > 0) || !(fit.step_mu > 0)) throw std::invalid_argument("step sizes must be positive");
  if (!(fit.tolerance > 0)) throw std::invalid_argument("tolerance must be positive");
  if (fit.max_iters < 1) throw std::invalid_argument("max iterations must be >= 1");
  if (!(fit.lambda >= 0)) throw std::invalid_argument("lambda must be >= 0");
  if (!(fit.sigma_min > 0 && fit.sigma_min < fit.sigma_max))
    throw std::invalid_argument("spectral range must satisfy 0 < sigma_min < sigma_max");
  if (fit.gcd_sweeps < 1) throw std::invalid_argument("GCD sweeps must be >= 1");
}

std::vector<ColumnGroup> column_groups(Index cols, Index width) {
  if (width < 1) throw std::invalid_argument("group width must be >= 1");
  std::vector<ColumnGroup> groups;
  for (Index first = 0; first < cols; first += width) groups.push_back({first, std::min(width, cols - first)});
  return groups;
}

QuantizedLayer quantize_layer(const Matrix<double>& weights, const Matrix<double>& calib,
                              const RunConfig& config) {
  config.validate();
  if (calib.rows() != weights.cols())
    throw ShapeError("calibration has " + std::to_string(calib.rows()) + " features, weights have " +
                     std::to_string(weights.cols()) + " columns");
  if (weights.size() == 0) throw ShapeError("empty weight matrix");
  const auto spans = column_groups(weights.cols(), config.group_width);
  for (const auto& s : spans)
    if (weights.rows() * s.width < config.dim)
      throw ShapeError("a column group holds fewer weights than the lattice dimension");

  std::vector<WeightGroup<double>> groups;
  std::vector<CalibrationBatch<double>> calibs;
  for (const auto& s : spans) {
    groups.emplace_back(weights.middleCols(s.first, s.width));
    calibs.emplace_back(calib.middleRows(s.first, s.width));
  }
  const std::size_t count = groups.size();

  QuantizedLayer out;
  const int probe_bits = static_cast<int>(config.target.floor());
  const SalienceScores salience = compute_salience(groups, calibs, probe_bits);
  out.salience = salience.scores;

  if (config.target.is_integer() && !config.bit_alloc) {
    out.allocation.target = config.target;
    out.allocation.bits.assign(count, probe_bits);
  } else if (!config.target.is_integer()) {
    out.allocation = allocate_bits(salience, config.target, [](std::span<const int>) { return 0.0; });
  } else {
    const int n = probe_bits;
    if (n < 2) throw InfeasibleError("bit allocation needs an integer target >= 2 (use --no-bit-alloc)");
    // Probe outputs per group at n-1, n, n+1 from initialized (unoptimized) codecs.
    std::vector<std::array<Matrix<double>, 3>> probes(count);
    parallel_for(count, [&](std::size_t g) {
      for (int delta = -1; delta <= 1; ++delta) {
        const auto codec = init_codec(groups[g], config.dim, n + delta, config.fit);
        const auto codes = assign_codes(latent_of(groups[g].weights(), codec), codec, config.fit);
        probes[g][delta + 1] = reconstruct(codes, codec) * calibs[g].features();
      }
    });
    const Matrix<double> reference = weights * calib;
    out.allocation = allocate_bits_kl(
        salience, config.target,
        [&](std::span<const int> bits) {
          Matrix<double> total = Matrix<double>::Zero(reference.rows(), reference.cols());
          for (std::size_t g = 0; g < count; ++g) total += probes[g][bits[g] - n + 1];
          return total;
        },
        reference, config.search);
  }

  std::vector<std::optional<ArchiveRecord>> fitted(count);
  out.reports.resize(count);
  parallel_for(count, [&](std::size_t g) {
    const int bits = out.allocation.bits[g];
    auto fit = fit_group(groups[g], calibs[g], config.dim, bits, config.fit);
    GroupCodec<double> stored = round_side_info(fit.codec);
    CodeMatrix codes = assign_codes(latent_of(groups[g].weights(), stored), stored, config.fit);
    fitted[g].emplace(ArchiveRecord{std::move(stored), std::move(codes)});
    out.reports[g] = std::move(fit.report);
  });
  out.records.reserve(count);
  for (auto& r : fitted) out.records.push_back(std::move(*r));
  return out;
}

Matrix<double> dequantize_layer(std::span<const ArchiveRecord> records) {
  if (records.empty()) return Matrix<double>(0, 0);
  const Index rows = records.front().codec.rows;
  Index cols = 0;
  for (const auto& r : records) {
    if (r.codec.rows != rows) throw ShapeError("groups disagree on the row count");
    cols += r.codec.cols;
  }
  Matrix<double> out(rows, cols);
  Index at = 0;
  for (const auto& r : records) {
    out.middleCols(at, r.codec.cols) = reconstruct(r.codes, r.codec);
    at += r.codec.cols;
  }
  return out;
}

Matrix<double> dequantize_layer(const ArchiveReader& reader) {
  std::vector<ArchiveRecord> records;
  records.reserve(reader.size());
  for (std::size_t g = 0; g < reader.size(); ++g) records.push_back(reader.record(g));
  return dequantize_layer(records);
}

Matrix<double> rtn_layer(const Matrix<double>& weights, Index group_width, std::span<const int> bits) {
  const auto spans = column_groups(weights.cols(), group_width);
  if (bits.size() != spans.size()) throw ShapeError("need one bit width per group");
  Matrix<double> out(weights.rows(), weights.cols());
  for (std::size_t g = 0; g < spans.size(); ++g) {
    const WeightGroup<double> group(weights.middleCols(spans[g].first, spans[g].width));
    out.middleCols(spans[g].first, spans[g].width) = rtn_quantize(group, bits[g]);
  }
  return out;
}

LayerMetrics evaluate_layer(const Matrix<double>& weights, const Matrix<double>& reconstructed,
                            const Matrix<double>& calib, std::span<const ArchiveRecord> records) {
  if (weights.rows() != reconstructed.rows() || weights.cols() != reconstructed.cols())
    throw ShapeError("reconstruction shape does not match the original");
  if (calib.rows() != weights.cols()) throw ShapeError("calibration dimension mismatch");
  LayerMetrics m;
  const double count = static_cast<double>(weights.size());
  m.weight_mse = (weights - reconstructed).squaredNorm() / count;
  const Matrix<double> reference = weights * calib;
  const Matrix<double> approx = reconstructed * calib;
  m.output_mse = (reference - approx).squaredNorm() / static_cast<double>(reference.size());
  m.kl = kl_objective(reference, approx);
  if (!records.empty()) {
    double code_bits = 0;
    double side_bits = 0;
    double actual_side_bits = 0;
    double weight_bits = 0;
    for (const auto& r : records) {
      const auto& c = r.codec;
      code_bits += double(c.dim()) * double(c.columns()) * c.bits;
      weight_bits += double(c.rows) * double(c.cols) * c.bits;
      const auto oh = overhead_report(c.dim(), std::max<Index>(c.rows, 1), std::max<Index>(c.cols, 1), c.bits);
      side_bits += 8.0 * double(oh.side_bytes);
      actual_side_bits += 8.0 * double(oh.actual_side_bytes);
    }
    m.bits_per_weight = code_bits / count;
    m.overhead_percent = 100.0 * side_bits / weight_bits;
    m.actual_overhead_percent = 100.0 * actual_side_bits / weight_bits;
  }
  return m;
}

}  // namespace glvq
