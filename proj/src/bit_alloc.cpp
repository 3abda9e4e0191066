#include "glvq/bit_alloc.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <stdexcept>
#include <string>

namespace glvq {

namespace {

std::int64_t parse_int(std::string_view text) {
  std::int64_t value = 0;
  const auto* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, value);
  if (ec != std::errc{} || ptr != end || text.empty())
    throw std::invalid_argument("not a bit rate: " + std::string(text));
  return value;
}

}  // namespace

BitRate BitRate::parse(std::string_view text) {
  BitRate rate;
  if (const auto slash = text.find('/'); slash != std::string_view::npos) {
    rate.num = parse_int(text.substr(0, slash));
    rate.den = parse_int(text.substr(slash + 1));
  } else if (const auto dot = text.find('.'); dot != std::string_view::npos) {
    const auto whole = text.substr(0, dot);
    const auto frac = text.substr(dot + 1);
    if (frac.empty() || frac.size() > 9) throw std::invalid_argument("not a bit rate: " + std::string(text));
    rate.den = 1;
    for (std::size_t i = 0; i < frac.size(); ++i) rate.den *= 10;
    rate.num = (whole.empty() ? 0 : parse_int(whole)) * rate.den + parse_int(frac);
  } else {
    rate.num = parse_int(text);
    rate.den = 1;
  }
  if (rate.den <= 0 || rate.num <= 0) throw std::invalid_argument("bit rate must be positive");
  const auto g = std::gcd(rate.num, rate.den);
  rate.num /= g;
  rate.den /= g;
  return rate;
}

SalienceScores make_salience(std::vector<double> scores) {
  for (double s : scores)
    if (!std::isfinite(s) || s < 0) throw std::invalid_argument("salience scores must be finite and >= 0");
  SalienceScores out{std::move(scores), {}};
  out.order.resize(out.scores.size());
  std::iota(out.order.begin(), out.order.end(), std::size_t{0});
  std::stable_sort(out.order.begin(), out.order.end(),
                   [&](std::size_t a, std::size_t b) { return out.scores[a] > out.scores[b]; });
  return out;
}

SalienceScores compute_salience(std::span<const WeightGroup<double>> groups,
                                std::span<const CalibrationBatch<double>> calibs, int probe_bits) {
  if (probe_bits < 1) throw std::invalid_argument("probe bits must be >= 1");
  if (calibs.size() != 1 && calibs.size() != groups.size())
    throw ShapeError("need one shared calibration batch or one per group");
  std::vector<double> scores;
  scores.reserve(groups.size());
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& calib = calibs.size() == 1 ? calibs[0] : calibs[g];
    if (calib.dim() != groups[g].cols()) throw ShapeError("calibration dimension mismatch");
    const Matrix<double> delta = groups[g].weights() - rtn_quantize(groups[g], probe_bits);
    scores.push_back((delta * calib.features()).squaredNorm());
  }
  return make_salience(std::move(scores));
}

double kl_objective(const Matrix<double>& reference_out, const Matrix<double>& quantized_out) {
  if (reference_out.rows() != quantized_out.rows() || reference_out.cols() != quantized_out.cols())
    throw ShapeError("KL objective needs matching shapes");
  if (reference_out.size() == 0) throw ShapeError("KL objective needs a non-empty matrix");
  if (!reference_out.allFinite() || !quantized_out.allFinite())
    throw NonFiniteError("KL objective input is not finite");
  const auto log_softmax = [](const auto& column) {
    const double peak = column.maxCoeff();
    const double lse = peak + std::log((column.array() - peak).exp().sum());
    return Eigen::ArrayXd(column.array() - lse);
  };
  double total = 0;
  for (Index t = 0; t < reference_out.cols(); ++t) {
    const Eigen::ArrayXd lp = log_softmax(reference_out.col(t));
    const Eigen::ArrayXd lq = log_softmax(quantized_out.col(t));
    total += (lp.exp() * (lp - lq)).sum();
  }
  return std::max(0.0, total / static_cast<double>(reference_out.cols()));
}

double BitAllocation::mean() const {
  if (bits.empty()) return 0;
  return std::accumulate(bits.begin(), bits.end(), 0.0) / static_cast<double>(bits.size());
}

std::vector<int> balanced_allocation(const SalienceScores& salience, int n, std::size_t k) {
  const std::size_t count = salience.order.size();
  if (2 * k > count) throw std::invalid_argument("balance count exceeds half the groups");
  std::vector<int> bits(count, n);
  for (std::size_t i = 0; i < k; ++i) {
    bits[salience.order[i]] = n + 1;
    bits[salience.order[count - 1 - i]] = n - 1;
  }
  return bits;
}

BitAllocation allocate_bits(const SalienceScores& salience, BitRate target,
                            const AllocationObjective& objective, SearchMode mode) {
  const std::size_t count = salience.order.size();
  if (count == 0) throw std::invalid_argument("no groups to allocate");
  BitAllocation out;
  out.target = target;

  if (!target.is_integer()) {
    if (target.floor() < 1) throw InfeasibleError("fractional targets must be at least 1 bit");
    const std::int64_t remainder = target.num % target.den;
    // floor(frac * G + 1/2) in exact arithmetic
    const auto high = static_cast<std::size_t>(
        (2 * remainder * static_cast<std::int64_t>(count) + target.den) / (2 * target.den));
    out.bits.assign(count, static_cast<int>(target.floor()));
    for (std::size_t i = 0; i < high; ++i) out.bits[salience.order[i]] = static_cast<int>(target.ceil());
    return out;
  }

  const auto n = static_cast<int>(target.floor());
  if (n - 1 < 1) throw InfeasibleError("integer targets need N >= 2 so that N-1 >= 1");
  if (n + 1 > 16) throw InfeasibleError("integer targets need N + 1 <= 16");

  std::map<std::size_t, double> cache;
  const auto cost = [&](std::size_t k) {
    if (auto it = cache.find(k); it != cache.end()) return it->second;
    const auto bits = balanced_allocation(salience, n, k);
    const double value = objective(bits);
    cache.emplace(k, value);
    return value;
  };

  const std::size_t k_max = count / 2;
  std::size_t best = 0;
  if (mode == SearchMode::exhaustive) {
    double best_cost = cost(0);
    for (std::size_t k = 1; k <= k_max; ++k) {
      const double c = cost(k);
      if (c < best_cost) {
        best_cost = c;
        best = k;
      }
    }
  } else {
    // Assumes D(k) unimodal; keeps the left end on ties.
    std::size_t lo = 0;
    std::size_t hi = k_max;
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (cost(mid) <= cost(mid + 1))
        hi = mid;
      else
        lo = mid + 1;
    }
    best = lo;
  }
  out.balanced_count = best;
  out.bits = balanced_allocation(salience, n, best);
  return out;
}

BitAllocation allocate_bits_kl(const SalienceScores& salience, BitRate target,
                               const QuantizeProbe& probe, const Matrix<double>& reference_out,
                               SearchMode mode) {
  return allocate_bits(
      salience, target,
      [&](std::span<const int> bits) { return kl_objective(reference_out, probe(bits)); }, mode);
}

}  // namespace glvq
