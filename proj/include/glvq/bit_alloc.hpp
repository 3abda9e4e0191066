#pragma once

// Salience-determined bit allocation.
//
// Integer targets N use a balanced split: the k most salient groups get
// N+1 bits, the k least salient get N-1, the rest keep N, so the mean is
// exactly N. The balance count k is chosen by minimizing an objective
// (columnwise-softmax KL of layer outputs) over k in [0, floor(G/2)].

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include "glvq/codebook.hpp"
#include "glvq/types.hpp"

namespace glvq {

/// Average bits per weight as an exact fraction.
struct BitRate {
  std::int64_t num = 2;
  std::int64_t den = 1;

  /// Accepts "3", "1.5" or "3/2".
  static BitRate parse(std::string_view text);

  bool is_integer() const { return num % den == 0; }
  std::int64_t floor() const { return num / den; }
  std::int64_t ceil() const { return (num + den - 1) / den; }
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

struct SalienceScores {
  std::vector<double> scores;
  std::vector<std::size_t> order;  // group indices by descending score, ties by index
};

/// Validates scores and derives the descending order.
SalienceScores make_salience(std::vector<double> scores);

/// s_g = ||(W_g - RTN_probe(W_g)) X_g||_F^2. `calibs` holds either one batch
/// shared by every group or one batch per group.
SalienceScores compute_salience(std::span<const WeightGroup<double>> groups,
                                std::span<const CalibrationBatch<double>> calibs, int probe_bits);

/// Mean over columns of KL(softmax(reference) || softmax(quantized)), in nats.
double kl_objective(const Matrix<double>& reference_out, const Matrix<double>& quantized_out);

struct BitAllocation {
  std::vector<int> bits;  // indexed by group
  BitRate target;
  std::size_t balanced_count = 0;  // k for integer targets

  double mean() const;
};

enum class SearchMode { binary, exhaustive };

/// Objective D evaluated on a full per-group bit vector.
using AllocationObjective = std::function<double(std::span<const int> bits)>;

/// Quantized layer outputs for a per-group bit vector.
using QuantizeProbe = std::function<Matrix<double>(std::span<const int> bits)>;

/// Top-k salient groups at n+1, bottom-k at n-1, everything else at n.
std::vector<int> balanced_allocation(const SalienceScores& salience, int n, std::size_t k);

/// Integer targets search k; fractional targets mix floor/ceil widths by
/// salience without consulting the objective.
BitAllocation allocate_bits(const SalienceScores& salience, BitRate target,
                            const AllocationObjective& objective,
                            SearchMode mode = SearchMode::binary);

/// allocate_bits with D(bits) = kl_objective(reference_out, probe(bits)).
BitAllocation allocate_bits_kl(const SalienceScores& salience, BitRate target,
                               const QuantizeProbe& probe, const Matrix<double>& reference_out,
                               SearchMode mode = SearchMode::binary);

}  // namespace glvq
