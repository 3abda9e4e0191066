#pragma once

// Pinned synthetic suite (version 1) used by ablations and acceptance runs.
//
// Weights: rows x (groups * group_width) i.i.d. draws from the source with
// unit variance, each column group multiplied by a factor drawn
// log-uniformly from [1/2, 2]. Calibration: features x samples standard
// Gaussian. All draws come from one mt19937_64 stream seeded by `seed`.

#include <cstdint>
#include <string>
#include <string_view>

#include "glvq/types.hpp"

namespace glvq {

inline constexpr int kSuiteVersion = 1;
inline constexpr int kSuiteSeeds = 20;

enum class Source { gaussian, laplacian, student_t };

Source parse_source(std::string_view name);
std::string_view source_name(Source source);

struct SuiteCase {
  Source source = Source::student_t;
  Index rows = 256;
  Index groups = 1;
  Index group_width = 64;
  Index samples = 128;
  std::uint64_t seed = 0;
};

struct SuiteData {
  Matrix<double> weights;
  Matrix<double> calib;
};

SuiteData make_suite_case(const SuiteCase& c);

}  // namespace glvq
