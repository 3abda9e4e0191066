#pragma once

#include <cstdint>

namespace glvq {

/// IEEE 754 binary16 encoding of `value`, round-to-nearest-even.
/// Overflow saturates to infinity; NaN maps to a quiet NaN.
std::uint16_t to_half_bits(double value);

double from_half_bits(std::uint16_t bits);

inline double round_to_half(double value) { return from_half_bits(to_half_bits(value)); }

}  // namespace glvq
