#include "glvq/half.hpp"

#include <bit>
#include <cmath>

namespace glvq {

namespace {

// Round `mantissa >> shift` to nearest, ties to even.
std::uint64_t shift_round_even(std::uint64_t mantissa, int shift) {
  if (shift >= 64) return 0;
  const std::uint64_t kept = mantissa >> shift;
  const std::uint64_t rest = mantissa & ((std::uint64_t{1} << shift) - 1);
  const std::uint64_t half = std::uint64_t{1} << (shift - 1);
  return kept + ((rest > half || (rest == half && (kept & 1))) ? 1 : 0);
}

}  // namespace

std::uint16_t to_half_bits(double value) {
  const auto bits = std::bit_cast<std::uint64_t>(value);
  const auto sign = static_cast<std::uint16_t>((bits >> 48) & 0x8000);
  const int exponent = static_cast<int>((bits >> 52) & 0x7ff);
  const std::uint64_t fraction = bits & ((std::uint64_t{1} << 52) - 1);

  if (exponent == 0x7ff) return sign | (fraction ? 0x7e00 : 0x7c00);
  if (exponent == 0) return sign;  // double subnormals are far below half range

  const std::uint64_t mantissa = fraction | (std::uint64_t{1} << 52);
  int half_exponent = exponent - 1023 + 15;
  if (half_exponent >= 1) {
    std::uint64_t rounded = shift_round_even(mantissa, 42);
    if (rounded == (std::uint64_t{1} << 11)) {
      rounded >>= 1;
      ++half_exponent;
    }
    if (half_exponent >= 31) return sign | 0x7c00;
    return sign | static_cast<std::uint16_t>(half_exponent << 10) |
           static_cast<std::uint16_t>(rounded & 0x3ff);
  }
  // subnormal half: units of 2^-24; a carry into bit 10 yields the smallest normal
  const int shift = 42 + 1 - half_exponent;
  return sign | static_cast<std::uint16_t>(shift_round_even(mantissa, shift));
}

double from_half_bits(std::uint16_t bits) {
  const double sign = (bits & 0x8000) ? -1.0 : 1.0;
  const int exponent = (bits >> 10) & 0x1f;
  const int fraction = bits & 0x3ff;
  if (exponent == 0) return sign * std::ldexp(static_cast<double>(fraction), -24);
  if (exponent == 31) return fraction ? std::nan("") : sign * INFINITY;
  return sign * std::ldexp(static_cast<double>(fraction | 0x400), exponent - 25);
}

}  // namespace glvq
