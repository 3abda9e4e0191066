#pragma once

// Per-group lattice codebook learning.
//
// A weight group W (m x n) is flattened column-major, zero padded to a
// multiple of d and cut into l column vectors of length d. Each column is
// normalized by the group scale, companded, and assigned lattice indices
// by Babai rounding against the group's generation matrix G. The fit loop
// alternates index refresh with gradient steps on G and mu.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "glvq/companding.hpp"
#include "glvq/lattice.hpp"
#include "glvq/types.hpp"

namespace glvq {

template <typename Scalar>
class WeightGroup {
 public:
  explicit WeightGroup(Matrix<Scalar> weights) : weights_(std::move(weights)) {
    if (!weights_.allFinite()) throw NonFiniteError("weight group has non-finite entries");
  }
  const Matrix<Scalar>& weights() const { return weights_; }
  Index rows() const { return weights_.rows(); }
  Index cols() const { return weights_.cols(); }

 private:
  Matrix<Scalar> weights_;
};

/// Calibration inputs X, one sample per column (n x T).
template <typename Scalar>
class CalibrationBatch {
 public:
  explicit CalibrationBatch(Matrix<Scalar> features) : features_(std::move(features)) {
    if (features_.cols() < 1) throw ShapeError("calibration batch needs at least one sample");
    if (!features_.allFinite()) throw NonFiniteError("calibration batch has non-finite entries");
  }
  const Matrix<Scalar>& features() const { return features_; }
  Index dim() const { return features_.rows(); }
  Index samples() const { return features_.cols(); }

 private:
  Matrix<Scalar> features_;
};

/// Zero-padding needed to bring `count` entries to a multiple of `dim`.
inline Index padding_for(Index count, Index dim) { return (dim - count % dim) % dim; }

/// Everything needed to decode one group.
template <typename Scalar>
struct GroupCodec {
  GenerationMatrix<Scalar> basis;
  std::optional<CompandingParam<Scalar>> mu;  // nullopt: companding disabled
  int bits = 0;
  Scalar scale = Scalar(1);  // pre-companding normalizer, max|W|
  Index rows = 0;
  Index cols = 0;

  Index dim() const { return basis.dim(); }
  Index pad() const { return padding_for(rows * cols, dim()); }
  Index columns() const { return (rows * cols + pad()) / dim(); }
};

template <typename Scalar>
struct ReshapedGroup {
  Matrix<Scalar> blocks;  // d x l
  Index pad = 0;
};

/// Column-major flatten, zero pad to a multiple of `dim`, chunk into columns.
template <typename Derived>
ReshapedGroup<typename Derived::Scalar> reshape_group(const Eigen::MatrixBase<Derived>& weights,
                                                      Index dim) {
  using Scalar = typename Derived::Scalar;
  if (dim < 1) throw std::invalid_argument("lattice dimension must be >= 1");
  const Matrix<Scalar> dense = weights;
  const Index total = dense.size();
  const Index pad = padding_for(total, dim);
  ReshapedGroup<Scalar> out{Matrix<Scalar>::Zero(dim, (total + pad) / dim), pad};
  std::copy_n(dense.data(), total, out.blocks.data());
  return out;
}

/// Inverse of reshape_group; trailing pad entries are dropped.
template <typename Derived>
Matrix<typename Derived::Scalar> unreshape_group(const Eigen::MatrixBase<Derived>& blocks,
                                                 Index rows, Index cols) {
  using Scalar = typename Derived::Scalar;
  const Matrix<Scalar> dense = blocks;
  if (dense.size() < rows * cols || dense.size() - rows * cols >= std::max<Index>(dense.rows(), 1))
    throw ShapeError("block matrix does not match the requested geometry");
  Matrix<Scalar> out(rows, cols);
  std::copy_n(dense.data(), rows * cols, out.data());
  return out;
}

/// Companded, normalized d x l latent of a group under `codec`.
template <typename Scalar>
Matrix<Scalar> latent_of(const Matrix<Scalar>& weights, const GroupCodec<Scalar>& codec) {
  Matrix<Scalar> blocks = reshape_group(weights / codec.scale, codec.dim()).blocks;
  if (codec.mu) blocks = compand(blocks, *codec.mu);
  return blocks;
}

/// Babai rounding per column followed by a clamp to the b-bit code range.
template <typename Scalar>
CodeMatrix quantize_columns(const Matrix<Scalar>& latent, const GroupCodec<Scalar>& codec) {
  const Scalar lo = static_cast<Scalar>(code_min(codec.bits));
  const Scalar hi = static_cast<Scalar>(code_max(codec.bits));
  const Matrix<Scalar> coords = codec.basis.solve(latent);
  return coords.unaryExpr([lo, hi](Scalar x) {
    return static_cast<std::int32_t>(std::clamp(std::floor(x + Scalar(0.5)), lo, hi));
  });
}

/// Greedy coordinate descent index assignment (ablation comparator).
/// Starts from zero codes and sweeps coordinates round-robin, setting each
/// to the in-range integer minimizing the column residual.
template <typename Scalar>
CodeMatrix gcd_quantize_columns(const Matrix<Scalar>& latent, const GroupCodec<Scalar>& codec,
                                int sweeps) {
  if (sweeps < 1) throw std::invalid_argument("GCD needs at least one sweep");
  const Matrix<Scalar>& g = codec.basis.matrix();
  const Index d = codec.dim();
  if (latent.rows() != d) throw ShapeError("latent dimension does not match basis");
  const Scalar lo = static_cast<Scalar>(code_min(codec.bits));
  const Scalar hi = static_cast<Scalar>(code_max(codec.bits));
  const Vector<Scalar> norms = g.colwise().squaredNorm().transpose();

  CodeMatrix codes = CodeMatrix::Zero(d, latent.cols());
  Vector<Scalar> residual(d);
  for (Index c = 0; c < latent.cols(); ++c) {
    residual = latent.col(c);
    for (int s = 0; s < sweeps; ++s) {
      for (Index i = 0; i < d; ++i) {
        const Scalar current = static_cast<Scalar>(codes(i, c));
        const Scalar best = current + residual.dot(g.col(i)) / norms(i);
        const Scalar next = std::clamp(std::floor(best + Scalar(0.5)), lo, hi);
        if (next != current) {
          residual -= (next - current) * g.col(i);
          codes(i, c) = static_cast<std::int32_t>(next);
        }
      }
    }
  }
  return codes;
}

/// W_hat = scale * F^-1(G Z), reshaped back to rows x cols.
template <typename Scalar>
Matrix<Scalar> reconstruct(const CodeMatrix& codes, const GroupCodec<Scalar>& codec) {
  if (codes.rows() != codec.dim() || codes.cols() != codec.columns())
    throw ShapeError("code matrix does not match codec geometry");
  Matrix<Scalar> lattice = codec.basis.matrix() * codes.cast<Scalar>();
  if (codec.mu) lattice = expand(lattice, *codec.mu);
  return codec.scale * unreshape_group(lattice, codec.rows, codec.cols);
}

/// ||W X - W_hat X||_F^2 + lambda ||G - G0||_F^2.
template <typename Scalar>
Scalar group_loss(const WeightGroup<Scalar>& weights, const GroupCodec<Scalar>& codec,
                  const CodeMatrix& codes, const CalibrationBatch<Scalar>& calib,
                  const GenerationMatrix<Scalar>& basis_init, Scalar lambda = Scalar(0.1)) {
  if (calib.dim() != weights.cols()) throw ShapeError("calibration dimension mismatch");
  const Matrix<Scalar> w_hat = reconstruct(codes, codec);
  const Scalar data = (weights.weights() * calib.features() - w_hat * calib.features()).squaredNorm();
  return data + lambda * (codec.basis.matrix() - basis_init.matrix()).squaredNorm();
}

template <typename Scalar>
struct LossGradient {
  Matrix<Scalar> basis;
  Scalar mu = Scalar(0);  // zero when companding is disabled
};

namespace detail {

/// Gradients given dL/dW_hat of the data term. Codes are held constant.
template <typename Scalar>
LossGradient<Scalar> chain_to_parameters(const Matrix<Scalar>& d_w_hat,
                                         const GroupCodec<Scalar>& codec, const CodeMatrix& codes,
                                         const Matrix<Scalar>& basis_init, Scalar lambda) {
  const Matrix<Scalar> d_expanded = codec.scale * reshape_group(d_w_hat, codec.dim()).blocks;
  const Matrix<Scalar> z = codes.cast<Scalar>();
  const Matrix<Scalar> lattice = codec.basis.matrix() * z;
  LossGradient<Scalar> out;
  Matrix<Scalar> d_lattice;
  if (codec.mu) {
    const MuLaw<Scalar> law(*codec.mu);
    d_lattice = d_expanded.cwiseProduct(lattice.unaryExpr([&law](Scalar y) { return law.d_expand_dy(y); }));
    out.mu = d_expanded.cwiseProduct(lattice.unaryExpr([&law](Scalar y) { return law.d_expand_dmu(y); })).sum();
  } else {
    d_lattice = d_expanded;
  }
  out.basis = d_lattice * z.transpose() + Scalar(2) * lambda * (codec.basis.matrix() - basis_init);
  return out;
}

}  // namespace detail

/// Analytic gradient of group_loss with respect to the basis and mu.
template <typename Scalar>
LossGradient<Scalar> loss_gradient(const WeightGroup<Scalar>& weights,
                                   const GroupCodec<Scalar>& codec, const CodeMatrix& codes,
                                   const CalibrationBatch<Scalar>& calib,
                                   const GenerationMatrix<Scalar>& basis_init,
                                   Scalar lambda = Scalar(0.1)) {
  const Matrix<Scalar>& x = calib.features();
  const Matrix<Scalar> residual = weights.weights() - reconstruct(codes, codec);
  const Matrix<Scalar> d_w_hat = Scalar(-2) * (residual * x) * x.transpose();
  return detail::chain_to_parameters(d_w_hat, codec, codes, basis_init.matrix(), lambda);
}

template <typename Scalar>
Matrix<Scalar> grad_basis(const WeightGroup<Scalar>& weights, const GroupCodec<Scalar>& codec,
                          const CodeMatrix& codes, const CalibrationBatch<Scalar>& calib,
                          const GenerationMatrix<Scalar>& basis_init, Scalar lambda = Scalar(0.1)) {
  return loss_gradient(weights, codec, codes, calib, basis_init, lambda).basis;
}

template <typename Scalar>
Scalar grad_mu(const WeightGroup<Scalar>& weights, const GroupCodec<Scalar>& codec,
               const CodeMatrix& codes, const CalibrationBatch<Scalar>& calib,
               const GenerationMatrix<Scalar>& basis_init, Scalar lambda = Scalar(0.1)) {
  return loss_gradient(weights, codec, codes, calib, basis_init, lambda).mu;
}

/// Clamp singular values into [sigma_min, sigma_max], keeping singular vectors.
/// Inputs already in range are returned unchanged.
template <typename Scalar>
GenerationMatrix<Scalar> spectral_normalize(const Matrix<Scalar>& basis, Scalar sigma_min,
                                            Scalar sigma_max) {
  if (!(sigma_min > Scalar(0) && sigma_min < sigma_max))
    throw std::invalid_argument("spectral range must satisfy 0 < sigma_min < sigma_max");
  if (basis.rows() != basis.cols()) throw ShapeError("basis must be square");
  if (!basis.allFinite()) throw NonFiniteError("basis has non-finite entries");
  Eigen::JacobiSVD<Matrix<Scalar>> svd(basis, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector<Scalar>& sv = svd.singularValues();
  if (sv.minCoeff() >= sigma_min && sv.maxCoeff() <= sigma_max) return GenerationMatrix<Scalar>(basis);
  const Vector<Scalar> clamped = sv.cwiseMax(sigma_min).cwiseMin(sigma_max);
  return GenerationMatrix<Scalar>(svd.matrixU() * clamped.asDiagonal() * svd.matrixV().transpose());
}

template <typename Scalar>
GenerationMatrix<Scalar> spectral_normalize(const GenerationMatrix<Scalar>& basis, Scalar sigma_min,
                                            Scalar sigma_max) {
  return spectral_normalize(basis.matrix(), sigma_min, sigma_max);
}

enum class Rounding { babai, gcd };

struct FitConfig {
  double step_basis = 1e-3;
  double step_mu = 1e-1;
  double tolerance = 1e-4;
  int max_iters = 200;
  double lambda = 0.1;
  double sigma_min = 1e-2;
  double sigma_max = 1e1;
  bool companding = true;
  bool learn_basis = true;  // false: basis frozen at a scaled identity
  Rounding rounding = Rounding::babai;
  int gcd_sweeps = 1;
  int restore_after = 5;           // consecutive accepts before step sizes reset
  int max_halvings = 40;           // step floor = base * 2^-max_halvings
  KurtosisConvention kurtosis = KurtosisConvention::excess;
};

struct FitReport {
  std::vector<double> loss_history;  // initial loss, then every accepted step
  int iterations = 0;
  bool converged = false;
  double final_loss = 0;
};

template <typename Scalar>
struct FitResult {
  GroupCodec<Scalar> codec;
  CodeMatrix codes;
  FitReport report;
};

/// Index assignment selected by the config.
template <typename Scalar>
CodeMatrix assign_codes(const Matrix<Scalar>& latent, const GroupCodec<Scalar>& codec,
                        const FitConfig& config) {
  return config.rounding == Rounding::gcd ? gcd_quantize_columns(latent, codec, config.gcd_sweeps)
                                          : quantize_columns(latent, codec);
}

/// Initial codec: scale = max|W|, mu from kurtosis, G0 = alpha * chol(cov)
/// with alpha putting the 99th percentile of |G0^-1 latent| at 2^(b-1) - 0.5.
template <typename Scalar>
GroupCodec<Scalar> init_codec(const WeightGroup<Scalar>& weights, Index dim, int bits,
                              const FitConfig& config = {}) {
  if (bits < 1 || bits > 16) throw std::invalid_argument("bits must lie in [1, 16]");
  if (dim < 1 || weights.rows() * weights.cols() < dim)
    throw std::invalid_argument("group has fewer entries than the lattice dimension");
  const Matrix<Scalar>& w = weights.weights();
  const Scalar half_range = std::ldexp(Scalar(1), bits - 1);
  const Scalar scale = w.cwiseAbs().maxCoeff();
  std::optional<CompandingParam<Scalar>> mu;
  if (config.companding) mu = CompandingParam<Scalar>(CompandingParam<Scalar>::kMin);

  if (!(scale > Scalar(0))) {
    return GroupCodec<Scalar>{GenerationMatrix<Scalar>::identity(dim, Scalar(1) / half_range), mu,
                              bits, Scalar(1), weights.rows(), weights.cols()};
  }
  if (config.companding && w.size() >= 4) {
    try {
      mu = init_mu(kurtosis(std::span<const Scalar>(w.data(), static_cast<std::size_t>(w.size())),
                            config.kurtosis));
    } catch (const DegenerateSampleError&) {
    }
  }

  GroupCodec<Scalar> codec{GenerationMatrix<Scalar>::identity(dim), mu, bits, scale, weights.rows(),
                           weights.cols()};
  const Matrix<Scalar> latent = latent_of(w, codec);
  const Index ell = latent.cols();

  Matrix<Scalar> shape = Matrix<Scalar>::Identity(dim, dim);
  if (config.learn_basis) {
    const Matrix<Scalar> cov = latent * latent.transpose() / Scalar(ell) +
                               Scalar(1e-6) * Matrix<Scalar>::Identity(dim, dim);
    shape = cov.llt().matrixL();
  }
  const Matrix<Scalar> coords = shape.template triangularView<Eigen::Lower>().solve(latent);
  std::vector<Scalar> magnitudes(coords.data(), coords.data() + coords.size());
  for (Scalar& v : magnitudes) v = std::abs(v);
  const auto rank = static_cast<std::ptrdiff_t>(
      std::ceil(Scalar(0.99) * Scalar(magnitudes.size())) - 1);
  auto nth = magnitudes.begin() + std::clamp<std::ptrdiff_t>(rank, 0, magnitudes.size() - 1);
  std::nth_element(magnitudes.begin(), nth, magnitudes.end());
  Scalar p99 = *nth;
  if (!(p99 > Scalar(0))) p99 = *std::max_element(magnitudes.begin(), magnitudes.end());
  const Scalar alpha = p99 / (half_range - Scalar(0.5));

  codec.basis = spectral_normalize<Scalar>(alpha * shape, Scalar(config.sigma_min),
                                           Scalar(config.sigma_max));
  return codec;
}

namespace detail {

/// Output-space loss evaluated through the calibration Gram matrix X X^T.
template <typename Scalar>
class GroupObjective {
 public:
  GroupObjective(const WeightGroup<Scalar>& weights, const CalibrationBatch<Scalar>& calib)
      : weights_(weights.weights()),
        gram_(calib.features() * calib.features().transpose()) {
    if (calib.dim() != weights.cols()) throw ShapeError("calibration dimension mismatch");
    energy_ = weights_.cwiseProduct(weights_ * gram_).sum();
  }

  /// ||W X||_F^2
  Scalar energy() const { return energy_; }

  struct Evaluation {
    CodeMatrix codes;
    Scalar loss = 0;
    Matrix<Scalar> d_w_hat;  // dL_data/dW_hat
  };

  Evaluation evaluate(const GroupCodec<Scalar>& codec, const Matrix<Scalar>& basis_init,
                      const FitConfig& config) const {
    Evaluation e;
    e.codes = assign_codes(latent_of(weights_, codec), codec, config);
    const Matrix<Scalar> residual = weights_ - reconstruct(e.codes, codec);
    const Matrix<Scalar> projected = residual * gram_;
    const Scalar data = std::max(Scalar(0), residual.cwiseProduct(projected).sum());
    e.loss = data + Scalar(config.lambda) * (codec.basis.matrix() - basis_init).squaredNorm();
    e.d_w_hat = Scalar(-2) * projected;
    return e;
  }

 private:
  Matrix<Scalar> weights_;
  Matrix<Scalar> gram_;
  Scalar energy_ = 0;
};

}  // namespace detail

/// Alternating optimization of one group starting from `initial`.
///
/// Every iteration proposes a gradient step on (G, mu) with codes frozen,
/// re-projects G spectrally and mu onto [10, 255], refreshes the codes and
/// accepts the step only if the loss does not increase. Rejections halve
/// both step sizes; `restore_after` consecutive accepts reset them.
template <typename Scalar>
FitResult<Scalar> fit_group(const WeightGroup<Scalar>& weights,
                            const CalibrationBatch<Scalar>& calib, GroupCodec<Scalar> initial,
                            const FitConfig& config = {}) {
  const detail::GroupObjective<Scalar> objective(weights, calib);
  const Matrix<Scalar> basis_init = initial.basis.matrix();
  const Scalar sigma_min = Scalar(config.sigma_min);
  const Scalar sigma_max = Scalar(config.sigma_max);

  GroupCodec<Scalar> codec = std::move(initial);
  auto current = objective.evaluate(codec, basis_init, config);
  FitReport report;
  report.loss_history.push_back(double(current.loss));

  Scalar step_basis = Scalar(config.step_basis);
  Scalar step_mu = Scalar(config.step_mu);
  const Scalar step_floor = std::ldexp(Scalar(config.step_basis), -config.max_halvings);
  int streak = 0;
  // Rounding residue on exactly representable input.
  const Scalar negligible = Scalar(1e-24) * objective.energy();

  while (report.iterations < config.max_iters) {
    ++report.iterations;
    if (current.loss <= negligible) {
      report.converged = true;
      break;
    }
    const LossGradient<Scalar> g =
        detail::chain_to_parameters(current.d_w_hat, codec, current.codes, basis_init,
                                    Scalar(config.lambda));
    GroupCodec<Scalar> proposal = codec;
    if (config.learn_basis)
      proposal.basis = spectral_normalize<Scalar>(codec.basis.matrix() - step_basis * g.basis,
                                                  sigma_min, sigma_max);
    if (codec.mu)
      proposal.mu = CompandingParam<Scalar>::projected(codec.mu->value() - step_mu * g.mu);

    auto next = objective.evaluate(proposal, basis_init, config);
    if (next.loss <= current.loss) {
      const Scalar relative = (current.loss - next.loss) / current.loss;
      codec = std::move(proposal);
      current = std::move(next);
      report.loss_history.push_back(double(current.loss));
      if (++streak >= config.restore_after) {
        step_basis = Scalar(config.step_basis);
        step_mu = Scalar(config.step_mu);
        streak = 0;
      }
      if (relative < Scalar(config.tolerance)) {
        report.converged = true;
        break;
      }
    } else {
      streak = 0;
      step_basis /= 2;
      step_mu /= 2;
      // No step above the floor decreases the loss: stationary at this resolution.
      if (step_basis < step_floor) {
        report.converged = true;
        break;
      }
    }
  }
  report.final_loss = double(current.loss);
  return {std::move(codec), std::move(current.codes), std::move(report)};
}

template <typename Scalar>
FitResult<Scalar> fit_group(const WeightGroup<Scalar>& weights,
                            const CalibrationBatch<Scalar>& calib, Index dim, int bits,
                            const FitConfig& config = {}) {
  return fit_group(weights, calib, init_codec(weights, dim, bits, config), config);
}

/// Symmetric round-to-nearest scalar baseline.
template <typename Scalar>
Matrix<Scalar> rtn_quantize(const WeightGroup<Scalar>& weights, int bits) {
  if (bits < 1) throw std::invalid_argument("bits must be >= 1");
  const Matrix<Scalar>& w = weights.weights();
  const Scalar peak = w.size() ? w.cwiseAbs().maxCoeff() : Scalar(0);
  if (!(peak > Scalar(0))) return Matrix<Scalar>::Zero(w.rows(), w.cols());
  const Scalar step = bits == 1 ? peak : peak / Scalar(code_max(bits));
  const Scalar lo = Scalar(code_min(bits));
  const Scalar hi = Scalar(code_max(bits));
  return w.unaryExpr([=](Scalar v) {
    return step * std::clamp(std::floor(v / step + Scalar(0.5)), lo, hi);
  });
}

}  // namespace glvq
