#include "glvq/synthetic.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

namespace glvq {

Source parse_source(std::string_view name) {
  if (name == "gaussian") return Source::gaussian;
  if (name == "laplacian") return Source::laplacian;
  if (name == "student-t" || name == "student_t") return Source::student_t;
  throw std::invalid_argument("unknown source '" + std::string(name) + "'");
}

std::string_view source_name(Source source) {
  switch (source) {
    case Source::gaussian: return "gaussian";
    case Source::laplacian: return "laplacian";
    case Source::student_t: return "student-t";
  }
  return "unknown";
}

SuiteData make_suite_case(const SuiteCase& c) {
  if (c.rows < 1 || c.groups < 1 || c.group_width < 1 || c.samples < 1)
    throw std::invalid_argument("suite dimensions must be positive");
  std::mt19937_64 rng(c.seed * 0x9E3779B97F4A7C15ULL + kSuiteVersion);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::exponential_distribution<double> exponential(1.0);
  std::student_t_distribution<double> student(4.0);
  std::uniform_real_distribution<double> log_factor(std::log(0.5), std::log(2.0));

  const auto draw = [&] {
    switch (c.source) {
      case Source::gaussian: return normal(rng);
      // Laplace(b) has variance 2b^2; b = 1/sqrt(2)
      case Source::laplacian: {
        const double a = exponential(rng);
        const double b = exponential(rng);
        return (a - b) / std::sqrt(2.0);
      }
      // t with 4 degrees of freedom has variance 2
      case Source::student_t: return student(rng) / std::sqrt(2.0);
    }
    return 0.0;
  };

  const Index cols = c.groups * c.group_width;
  SuiteData out{Matrix<double>(c.rows, cols), Matrix<double>(cols, c.samples)};
  for (Index g = 0; g < c.groups; ++g) {
    const double factor = std::exp(log_factor(rng));
    for (Index j = g * c.group_width; j < (g + 1) * c.group_width; ++j)
      for (Index i = 0; i < c.rows; ++i) out.weights(i, j) = factor * draw();
  }
  for (Index j = 0; j < out.calib.cols(); ++j)
    for (Index i = 0; i < out.calib.rows(); ++i) out.calib(i, j) = normal(rng);
  return out;
}

}  // namespace glvq
