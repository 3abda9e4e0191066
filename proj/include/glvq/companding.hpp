#pragma once

// Group-specific mu-law companding.
//
//   F(x)    = sgn(x) ln(1 + mu|x|) / ln(1 + mu)
//   F^-1(y) = sgn(y) ((1 + mu)^|y| - 1) / mu
//
// Inputs are expected to be pre-normalized to [-1, 1]; both maps are
// defined (and mutually inverse) on the whole real line.

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

#include "glvq/types.hpp"

namespace glvq {

/// Companding strength mu, always inside [kMin, kMax].
template <typename Scalar>
class CompandingParam {
 public:
  static constexpr Scalar kMin = Scalar(10);
  static constexpr Scalar kMax = Scalar(255);

  explicit CompandingParam(Scalar mu) : mu_(mu) {
    if (!std::isfinite(mu) || mu < kMin || mu > kMax)
      throw std::invalid_argument("companding parameter outside [10, 255]: " + std::to_string(mu));
  }

  /// Projection onto [kMin, kMax]; NaN projects to kMin.
  static CompandingParam projected(Scalar raw) {
    if (std::isnan(raw)) return CompandingParam(kMin);
    return CompandingParam(std::clamp(raw, kMin, kMax));
  }

  Scalar value() const { return mu_; }

  friend bool operator==(const CompandingParam&, const CompandingParam&) = default;

 private:
  Scalar mu_;
};

template <typename Scalar>
struct CompandingGrad {
  Scalar d_compand_dx;   // dF/dx
  Scalar d_compand_dmu;  // dF/dmu
  Scalar d_expand_dy;    // dF^-1/dy at y = F(x)
  Scalar d_expand_dmu;   // dF^-1/dmu at y = F(x)
};

/// mu-law pair with ln(1 + mu) evaluated once.
template <typename Scalar>
class MuLaw {
 public:
  explicit MuLaw(CompandingParam<Scalar> param)
      : mu_(param.value()), log1p_mu_(std::log1p(param.value())) {}

  Scalar mu() const { return mu_; }

  Scalar compand(Scalar x) const {
    return sign(x) * std::log1p(mu_ * std::abs(x)) / log1p_mu_;
  }

  Scalar expand(Scalar y) const { return sign(y) * std::expm1(std::abs(y) * log1p_mu_) / mu_; }

  Scalar d_compand_dx(Scalar x) const {
    return mu_ / ((Scalar(1) + mu_ * std::abs(x)) * log1p_mu_);
  }

  // Zero at x = 0 where both one-sided limits vanish.
  Scalar d_compand_dmu(Scalar x) const {
    const Scalar a = std::abs(x);
    const Scalar value = a / ((Scalar(1) + mu_ * a) * log1p_mu_) -
                         std::log1p(mu_ * a) / ((Scalar(1) + mu_) * log1p_mu_ * log1p_mu_);
    return sign(x) * value;
  }

  Scalar d_expand_dy(Scalar y) const {
    return std::exp(std::abs(y) * log1p_mu_) * log1p_mu_ / mu_;
  }

  Scalar d_expand_dmu(Scalar y) const {
    const Scalar a = std::abs(y);
    // d/dmu [((1+mu)^a - 1)/mu] = a (1+mu)^(a-1)/mu - ((1+mu)^a - 1)/mu^2
    const Scalar value = a * std::exp((a - Scalar(1)) * log1p_mu_) / mu_ -
                         std::expm1(a * log1p_mu_) / (mu_ * mu_);
    return sign(y) * value;
  }

 private:
  static Scalar sign(Scalar v) { return Scalar((v > 0) - (v < 0)); }

  Scalar mu_;
  Scalar log1p_mu_;
};

template <typename Scalar>
Scalar compand(Scalar x, CompandingParam<Scalar> mu) {
  if (!std::isfinite(x)) throw NonFiniteError("compand: non-finite input");
  return MuLaw<Scalar>(mu).compand(x);
}

template <typename Scalar>
Scalar expand(Scalar y, CompandingParam<Scalar> mu) {
  if (!std::isfinite(y)) throw NonFiniteError("expand: non-finite input");
  return MuLaw<Scalar>(mu).expand(y);
}

template <typename Scalar>
CompandingGrad<Scalar> grad(Scalar x, CompandingParam<Scalar> mu) {
  const MuLaw<Scalar> law(mu);
  const Scalar y = law.compand(x);
  return {law.d_compand_dx(x), law.d_compand_dmu(x), law.d_expand_dy(y), law.d_expand_dmu(y)};
}

/// Elementwise compand over a dense expression.
template <typename Derived>
auto compand(const Eigen::MatrixBase<Derived>& x,
             CompandingParam<typename Derived::Scalar> mu) {
  using Scalar = typename Derived::Scalar;
  if (!x.allFinite()) throw NonFiniteError("compand: non-finite input");
  const MuLaw<Scalar> law(mu);
  return Matrix<Scalar>(x.unaryExpr([law](Scalar v) { return law.compand(v); }));
}

template <typename Derived>
auto expand(const Eigen::MatrixBase<Derived>& y,
            CompandingParam<typename Derived::Scalar> mu) {
  using Scalar = typename Derived::Scalar;
  if (!y.allFinite()) throw NonFiniteError("expand: non-finite input");
  const MuLaw<Scalar> law(mu);
  return Matrix<Scalar>(y.unaryExpr([law](Scalar v) { return law.expand(v); }));
}

enum class KurtosisConvention { excess, raw };

/// Sample kurtosis m4 / m2^2 from biased central moments, minus 3 under
/// the excess convention.
template <typename Scalar>
Scalar kurtosis(std::span<const Scalar> sample,
                KurtosisConvention convention = KurtosisConvention::excess) {
  if (sample.size() < 4) throw std::invalid_argument("kurtosis needs at least 4 samples");
  long double mean = 0;
  for (Scalar v : sample) mean += v;
  mean /= static_cast<long double>(sample.size());
  long double m2 = 0;
  long double m4 = 0;
  for (Scalar v : sample) {
    const long double c = static_cast<long double>(v) - mean;
    const long double c2 = c * c;
    m2 += c2;
    m4 += c2 * c2;
  }
  m2 /= static_cast<long double>(sample.size());
  m4 /= static_cast<long double>(sample.size());
  if (!(m2 > 0)) throw DegenerateSampleError("kurtosis of a zero-variance sample");
  const long double k = m4 / (m2 * m2);
  return static_cast<Scalar>(convention == KurtosisConvention::excess ? k - 3 : k);
}

/// mu^(0) = 100 tanh(kappa / 10), projected onto [10, 255].
template <typename Scalar>
CompandingParam<Scalar> init_mu(Scalar kurtosis_value) {
  return CompandingParam<Scalar>::projected(Scalar(100) * std::tanh(kurtosis_value / Scalar(10)));
}

}  // namespace glvq
