#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace glvq {

using Index = Eigen::Index;

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

/// Integer lattice coordinates of a single vector (unbounded Babai output).
using CodeVector = Eigen::Matrix<std::int64_t, Eigen::Dynamic, 1>;

/// d x l matrix of clamped lattice indices, one column per sub-block.
using CodeMatrix = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class SingularBasisError : public Error {
 public:
  using Error::Error;
};

class DegenerateSampleError : public Error {
 public:
  using Error::Error;
};

class NonFiniteError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A requested configuration cannot be realized (e.g. bit target below 2 with balancing).
class InfeasibleError : public Error {
 public:
  using Error::Error;
};

class CodeRangeError : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

class BadMagicError : public ParseError {
 public:
  using ParseError::ParseError;
};

class UnsupportedVersionError : public ParseError {
 public:
  using ParseError::ParseError;
};

class TruncatedError : public ParseError {
 public:
  using ParseError::ParseError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// Output could not be created or replaced.
class WriteError : public IoError {
 public:
  using IoError::IoError;
};

/// Smallest code representable at `bits` bits per coordinate.
constexpr std::int64_t code_min(int bits) { return -(std::int64_t{1} << (bits - 1)); }

/// Largest code representable at `bits` bits per coordinate.
constexpr std::int64_t code_max(int bits) { return (std::int64_t{1} << (bits - 1)) - 1; }

}  // namespace glvq
