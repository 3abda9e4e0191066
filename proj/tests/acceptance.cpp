// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "glvq/ablation.hpp"
#include "glvq/codebook.hpp"
#include "glvq/container.hpp"
#include "glvq/lattice.hpp"
#include "glvq/pipeline.hpp"

using glvq::CodeMatrix;
using glvq::CodeVector;
using glvq::CompandingParam;
using glvq::GenerationMatrix;
using glvq::GroupCodec;
using glvq::Index;
using glvq::Matrix;
using glvq::Vector;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

int failures = 0;

void report(int id, const char* name, bool ok, const std::string& detail) {
  std::printf("%s criterion %d (%s): %s\n", ok ? "PASS" : "FAIL", id, name, detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* format, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, format, args...);
  return buf;
}

Matrix<double> gaussian(std::mt19937_64& rng, Index rows, Index cols) {
  std::normal_distribution<double> normal;
  return Matrix<double>::NullaryExpr(rows, cols, [&] { return normal(rng); });
}

GenerationMatrix<double> random_basis(std::mt19937_64& rng, Index d) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (;;) {
    try {
      return GenerationMatrix<double>(Matrix<double>::NullaryExpr(d, d, [&] { return u(rng); }));
    } catch (const glvq::SingularBasisError&) {
    }
  }
}

/// Random orthogonal columns with lengths in [0.2, 2].
GenerationMatrix<double> orthogonal_basis(std::mt19937_64& rng, Index d) {
  const Eigen::HouseholderQR<Matrix<double>> qr(gaussian(rng, d, d));
  const Matrix<double> q = qr.householderQ();
  std::uniform_real_distribution<double> len(0.2, 2.0);
  Vector<double> s(d);
  for (Index i = 0; i < d; ++i) s(i) = len(rng);
  return GenerationMatrix<double>(Matrix<double>(q * s.asDiagonal()));
}

Vector<double> uniform_target(std::mt19937_64& rng, Index d, double half_width) {
  std::uniform_real_distribution<double> u(-half_width, half_width);
  return Vector<double>::NullaryExpr(d, [&] { return u(rng); });
}

double residual(const GenerationMatrix<double>& g, const Vector<double>& t, const CodeVector& z) {
  return (t - glvq::decode(g, z)).norm();
}

double rel(const Matrix<double>& a, const Matrix<double>& b) {
  return (a - b).norm() / std::max(1e-300, b.norm());
}

CodeMatrix random_codes(std::mt19937_64& rng, Index d, Index cols, int bits) {
  std::uniform_int_distribution<int> pick(static_cast<int>(glvq::code_min(bits)),
                                          static_cast<int>(glvq::code_max(bits)));
  return CodeMatrix::NullaryExpr(d, cols, [&] { return pick(rng); });
}

// 1 ------------------------------------------------------------------------

void overhead_table() {
  // m = 4096; rows (d, n) in table order, columns b = 2, 3, 4.
  const int dims[6] = {8, 8, 16, 16, 32, 32};
  const int cols[6] = {128, 256, 128, 256, 128, 256};
  const double published[6][3] = {{0.10, 0.07, 0.05}, {0.05, 0.03, 0.02}, {0.39, 0.26, 0.20},
                                   {0.20, 0.13, 0.10}, {1.56, 1.04, 0.78}, {0.78, 0.52, 0.39}};
  const auto start = Clock::now();
  const std::string cmd = std::string(GLVQ_CLI_PATH) + " overhead --paper-table";
  FILE* pipe = popen(cmd.c_str(), "r");
  std::string out;
  if (pipe) {
    char buf[256];
    while (std::fgets(buf, sizeof buf, pipe)) out += buf;
  }
  const int status = pipe ? pclose(pipe) : -1;
  const double elapsed = seconds_since(start);

  int matched = 0;
  std::istringstream lines(out);
  for (std::string line; std::getline(lines, line);) {
    std::istringstream fields(line);
    int d = 0, m = 0, n = 0;
    std::array<double, 3> pct{};
    if (!(fields >> d >> m >> n >> pct[0] >> pct[1] >> pct[2])) continue;
    for (int r = 0; r < 6; ++r) {
      if (d != dims[r] || n != cols[r] || m != 4096) continue;
      bool row_ok = true;
      for (int b = 0; b < 3; ++b) row_ok = row_ok && std::abs(pct[b] - published[r][b]) <= 0.01 + 1e-9;
      if (row_ok) ++matched;
    }
  }
  report(1, "overhead table", status == 0 && matched == 6 && elapsed < 1.0,
         fmt("%d/6 rows match to 0.01 pp, exit %d, %.3f s", matched, status, elapsed));
}

// 2 ------------------------------------------------------------------------

void babai_bound() {
  std::mt19937_64 rng(1001);
  const auto start = Clock::now();
  int within = 0;
  double max_coeff = 0;
  double worst_ratio = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const Index d = 1 + trial % 6;
    const auto reduced = glvq::lll_reduce(random_basis(rng, d), 0.75);
    const auto gs = glvq::gram_schmidt(reduced);
    for (Index i = 0; i < d; ++i)
      for (Index j = 0; j < i; ++j) max_coeff = std::max(max_coeff, std::abs(gs.coeffs(j, i)));
    const auto bound = glvq::babai_error_bound(gs).lll_form;
    const Vector<double> t = uniform_target(rng, d, 10.0);
    const double r = residual(reduced, t, glvq::babai_round(reduced, t));
    worst_ratio = std::max(worst_ratio, r / bound);
    if (r <= bound) ++within;
  }
  const double elapsed = seconds_since(start);
  // 1e-12 absorbs rounding in the Gram-Schmidt coefficients themselves.
  report(2, "Babai bound on LLL bases", within == 1000 && max_coeff <= 0.5 + 1e-12 && elapsed < 60,
         fmt("%d/1000 within bound (worst residual/bound %.3f), max |gs coeff| %.6f, %.2f s", within,
             worst_ratio, max_coeff, elapsed));
}

// 3 ------------------------------------------------------------------------

void cvp_oracle() {
  std::mt19937_64 rng(1002);
  const auto start = Clock::now();
  int never_worse = 0, orthogonal = 0, equal_on_orthogonal = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const bool ortho = trial % 4 == 0;
    const auto g = ortho ? orthogonal_basis(rng, 4) : glvq::lll_reduce(random_basis(rng, 4));
    const Vector<double> t = uniform_target(rng, 4, 5.0);
    const double babai = residual(g, t, glvq::babai_round(g, t));
    const double cvp = residual(g, t, glvq::exact_cvp(g, t, 2));
    if (cvp <= babai) ++never_worse;
    if (ortho) {
      ++orthogonal;
      if (std::abs(cvp - babai) <= 1e-12 * std::max(1.0, babai)) ++equal_on_orthogonal;
    }
  }
  const double elapsed = seconds_since(start);
  report(3, "CVP oracle", never_worse == 1000 && equal_on_orthogonal == orthogonal && elapsed < 60,
         fmt("CVP <= Babai on %d/1000, equal on %d/%d orthogonal bases, %.2f s", never_worse,
             equal_on_orthogonal, orthogonal, elapsed));
}

// 4 ------------------------------------------------------------------------

void gradient_check() {
  std::mt19937_64 rng(1003);
  const auto start = Clock::now();
  const double h = 1e-5;
  int instances = 0, passed = 0;
  double worst = 0;
  for (int companding = 0; companding < 2; ++companding) {
    for (int trial = 0; trial < 100; ++trial) {
      const Index d = 4, rows = 6, cols = 4;
      const double lambda = trial % 2 ? 0.1 : 0.0;
      const glvq::WeightGroup<double> w(gaussian(rng, rows, cols));
      const glvq::CalibrationBatch<double> x(gaussian(rng, cols, 5));
      const GenerationMatrix<double> g0(Matrix<double>(0.3 * orthogonal_basis(rng, d).matrix()));
      GroupCodec<double> codec{GenerationMatrix<double>(Matrix<double>(g0.matrix() + 0.05 * gaussian(rng, d, d))),
                               std::nullopt, 3, 1.3, rows, cols};
      if (companding) codec.mu = CompandingParam<double>(std::uniform_real_distribution<double>(20, 200)(rng));
      const CodeMatrix z = random_codes(rng, d, codec.columns(), 3);
      const auto grad = glvq::loss_gradient(w, codec, z, x, g0, lambda);

      const double mu0 = codec.mu ? codec.mu->value() : 0.0;
      const auto loss_at = [&](const Matrix<double>& basis, double mu) {
        GroupCodec<double> c = codec;
        c.basis = GenerationMatrix<double>(basis);
        if (c.mu) c.mu = CompandingParam<double>(mu);
        return glvq::group_loss(w, c, z, x, g0, lambda);
      };
      Matrix<double> numeric(d, d);
      for (Index i = 0; i < d; ++i) {
        for (Index j = 0; j < d; ++j) {
          Matrix<double> plus = codec.basis.matrix(), minus = codec.basis.matrix();
          plus(i, j) += h;
          minus(i, j) -= h;
          numeric(i, j) = (loss_at(plus, mu0) - loss_at(minus, mu0)) / (2 * h);
        }
      }
      double err = rel(grad.basis, numeric);
      if (companding) {
        const double numeric_mu =
            (loss_at(codec.basis.matrix(), mu0 + h) - loss_at(codec.basis.matrix(), mu0 - h)) / (2 * h);
        err = std::max(err, std::abs(grad.mu - numeric_mu) / std::max(1.0, std::abs(numeric_mu)));
      }
      worst = std::max(worst, err);
      ++instances;
      if (err <= 1e-4) ++passed;
    }
  }
  const double elapsed = seconds_since(start);
  report(4, "gradient vs finite differences", passed == instances && instances >= 100 && elapsed < 60,
         fmt("%d/%d instances within 1e-4 (worst %.2e), companding on and off, %.2f s", passed, instances, worst,
             elapsed));
}

// 5 ------------------------------------------------------------------------

void companding_round_trip() {
  double worst = 0;
  for (int i = 0; i < 100; ++i) {
    const double x = -1.0 + 2.0 * i / 99.0;
    for (int j = 0; j < 100; ++j) {
      const CompandingParam<double> mu(10.0 + 245.0 * j / 99.0);
      worst = std::max(worst, std::abs(glvq::expand(glvq::compand(x, mu), mu) - x));
    }
  }
  const double mu10 = glvq::init_mu(10.0).value();
  report(5, "companding round trip", worst <= 1e-6 && std::abs(mu10 - 76.159) <= 1e-3,
         fmt("max |expand(compand(x)) - x| = %.2e over 10^4 points, init_mu(10) = %.4f", worst, mu10));
}

// 6 ------------------------------------------------------------------------

void optimizer_contract() {
  const auto start = Clock::now();
  int runs = 0, monotone = 0, converged = 0;
  for (const auto source : {glvq::Source::gaussian, glvq::Source::laplacian, glvq::Source::student_t}) {
    for (const Index dim : {Index(4), Index(8)}) {
      for (std::uint64_t seed = 0; seed < glvq::kSuiteSeeds; ++seed) {
        const auto data = glvq::make_suite_case({source, 256, 1, 64, 128, seed});
        glvq::RunConfig config;
        config.dim = dim;
        config.group_width = 64;
        const auto layer = glvq::quantize_layer(data.weights, data.calib, config);
        for (const auto& r : layer.reports) {
          ++runs;
          const auto& h = r.loss_history;
          if (std::adjacent_find(h.begin(), h.end(), std::less<double>()) == h.end()) ++monotone;
          if (r.converged && r.iterations <= 200) ++converged;
        }
      }
    }
  }
  const double elapsed = seconds_since(start);
  report(6, "optimizer contract", runs > 0 && monotone == runs && converged >= 0.95 * runs,
         fmt("monotone %d/%d, converged %d/%d within 200 iterations, %.1f s", monotone, runs, converged, runs,
             elapsed));
}

// 7 ------------------------------------------------------------------------

void ablation_directions() {
  const auto start = Clock::now();
  glvq::AblationOptions options;
  options.source = glvq::Source::student_t;
  options.seeds = glvq::kSuiteSeeds;
  options.base.target = glvq::BitRate{2, 1};

  // The learned variant of the lattice preset is the full pipeline, so its
  // second direction is GLVQ against RTN.
  const auto lattice = glvq::run_ablation(glvq::Preset::lattice, options);
  const std::vector<glvq::Direction> wanted{
      lattice.directions.at(0),
      glvq::run_ablation(glvq::Preset::companding, options).directions.at(0),
      glvq::run_ablation(glvq::Preset::rounding, options).directions.at(0),
      lattice.directions.at(1),
  };

  bool all = true;
  std::string detail;
  for (const auto& d : wanted) {
    const bool ok = d.p_value < 0.05;
    all = all && ok;
    detail += fmt("%s%s<%s %d-%d p=%.2g%s", detail.empty() ? "" : "; ", d.better.c_str(), d.worse.c_str(), d.wins,
                  d.losses, d.p_value, ok ? "" : " (not significant)");
  }
  report(7, "ablation directions, Student-t, b=2, 20 seeds", all, detail + fmt(", %.1f s", seconds_since(start)));
}

// 8 ------------------------------------------------------------------------

bool integer_invariants(const glvq::BitAllocation& a, int n) {
  long sum = 0;
  long above = 0, below = 0;
  for (int b : a.bits) {
    sum += b;
    above += b == n + 1;
    below += b == n - 1;
    if (b < n - 1 || b > n + 1) return false;
  }
  return sum == long(n) * long(a.bits.size()) && above == below;
}

void allocation_constraints() {
  std::mt19937_64 rng(1008);
  std::uniform_real_distribution<double> uni(0, 1);
  int allocations = 0, valid = 0;

  // Allocations from the full pipeline.
  for (int n = 2; n <= 4; ++n) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto data = glvq::make_suite_case({glvq::Source::student_t, 64, 8, 32, 64, seed});
      glvq::RunConfig config;
      config.dim = 4;
      config.group_width = 32;
      config.target = glvq::BitRate{n, 1};
      config.fit.max_iters = 5;
      ++allocations;
      if (integer_invariants(glvq::quantize_layer(data.weights, data.calib, config).allocation, n)) ++valid;
    }
  }
  // Arbitrary objectives, both search modes.
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> scores(1 + rng() % 64);
    for (double& s : scores) s = uni(rng);
    const auto salience = glvq::make_salience(scores);
    const int n = 2 + static_cast<int>(rng() % 6);
    std::vector<double> table(scores.size() + 1);
    for (double& v : table) v = uni(rng);
    const auto objective = [&](std::span<const int> bits) {
      return table[std::count(bits.begin(), bits.end(), n + 1)];
    };
    for (const auto mode : {glvq::SearchMode::binary, glvq::SearchMode::exhaustive}) {
      ++allocations;
      if (integer_invariants(glvq::allocate_bits(salience, glvq::BitRate{n, 1}, objective, mode), n)) ++valid;
    }
  }

  // Fractional 1.5 over 64 groups.
  std::vector<double> scores(64);
  for (double& s : scores) s = uni(rng);
  const auto fractional = glvq::allocate_bits(glvq::make_salience(scores), glvq::BitRate::parse("1.5"),
                                              [](std::span<const int>) { return 0.0; });
  const double frac_err = std::abs(fractional.mean() - 1.5);

  // Binary search against exhaustive scan on unimodal objectives.
  int searches = 0, agree = 0;
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t g = 2 + rng() % 63;
    std::vector<double> s(g);
    for (double& v : s) v = uni(rng);
    const auto salience = glvq::make_salience(s);
    const int n = 2 + static_cast<int>(rng() % 6);
    const double center = uni(rng) * double(g / 2);
    const double left = 0.1 + uni(rng), right = 0.1 + uni(rng);
    const auto objective = [&](std::span<const int> bits) {
      const double k = double(std::count(bits.begin(), bits.end(), n + 1));
      return k < center ? left * (center - k) : right * (k - center);
    };
    const auto a = glvq::allocate_bits(salience, glvq::BitRate{n, 1}, objective, glvq::SearchMode::binary);
    const auto b = glvq::allocate_bits(salience, glvq::BitRate{n, 1}, objective, glvq::SearchMode::exhaustive);
    ++searches;
    if (a.balanced_count == b.balanced_count) ++agree;
  }

  report(8, "bit allocation constraints",
         valid == allocations && frac_err <= 1.0 / 128 && agree == searches,
         fmt("%d/%d integer allocations balanced with exact mean; 1.5 over 64 groups gives mean %.6f; "
             "binary k = exhaustive k on %d/%d unimodal objectives",
             valid, allocations, fractional.mean(), agree, searches));
}

// 9 ------------------------------------------------------------------------

void codec_bit_exactness() {
  std::mt19937_64 rng(1009);

  int packs = 0, exact = 0;
  for (int bits = 1; bits <= 8; ++bits) {
    for (int trial = 0; trial < 1000; ++trial) {
      const Index d = 1 + rng() % 8, cols = 1 + rng() % 40;
      const CodeMatrix z = random_codes(rng, d, cols, bits);
      ++packs;
      if (glvq::unpack_codes(glvq::pack_codes(z, bits), bits, d, cols) == z) ++exact;
    }
  }

  const auto data = glvq::make_suite_case({glvq::Source::student_t, 64, 3, 32, 48, 9});
  glvq::RunConfig config;
  config.dim = 4;
  config.group_width = 32;
  const auto bytes = glvq::write_archive(glvq::quantize_layer(data.weights, data.calib, config).records);
  const bool deterministic = glvq::write_archive(glvq::read_archive(bytes)) == bytes;

  // Weights built from a known codec: W = scale * expand(G Z).
  int cases = 0, codes_exact = 0, decode_exact = 0, within = 0;
  std::array<double, 2> worst{};  // companding off, on
  for (int trial = 0; trial < 200; ++trial) {
    const int bits = 2 + trial % 4;
    const Index d = trial % 2 ? 4 : 8, rows = 16, cols = 8;
    const double half = std::ldexp(1.0, bits - 1);
    GroupCodec<double> codec{GenerationMatrix<double>(Matrix<double>(
                                 (Matrix<double>::Identity(d, d) + 0.1 * gaussian(rng, d, d)) / half)),
                             std::nullopt, bits, std::uniform_real_distribution<double>(0.01, 3)(rng), rows, cols};
    if (trial % 3) codec.mu = CompandingParam<double>(std::uniform_real_distribution<double>(10, 255)(rng));
    const CodeMatrix z = random_codes(rng, d, codec.columns(), bits);
    const Matrix<double> w = glvq::reconstruct(z, codec);

    const CodeMatrix found = glvq::quantize_columns(glvq::latent_of(w, codec), codec);
    const std::vector<glvq::ArchiveRecord> records{{codec, found}};
    const auto archive = glvq::write_archive(records);
    const Matrix<double> decoded = glvq::dequantize_layer(glvq::ArchiveReader(archive));
    const double err = rel(decoded, w);
    auto& slot = worst[codec.mu ? 1 : 0];
    slot = std::max(slot, err);
    ++cases;
    if (found == z) ++codes_exact;
    if (decoded == glvq::reconstruct(z, glvq::round_side_info(codec))) ++decode_exact;
    if (err <= 1e-3) ++within;
  }

  report(9, "codec bit-exactness",
         exact == packs && deterministic && codes_exact == cases && decode_exact == cases && within == cases,
         fmt("pack round trip %d/%d; archive rewrite %s; representable inputs: codes exact %d/%d, "
             "decode equals the binary16 codec %d/%d, within 1e-3 relative %d/%d "
             "(worst %.2e without companding, %.2e with)",
             exact, packs, deterministic ? "byte-identical" : "differs", codes_exact, cases, decode_exact, cases,
             within, cases, worst[0], worst[1]));
}

}  // namespace

int main() {
  overhead_table();
  babai_bound();
  cvp_oracle();
  gradient_check();
  companding_round_trip();
  optimizer_contract();
  ablation_directions();
  allocation_constraints();
  codec_bit_exactness();
  std::printf("%d of 9 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
