#pragma once

// Paired ablation runs on the synthetic suite with a one-sided sign test
// per expected direction.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "glvq/pipeline.hpp"
#include "glvq/synthetic.hpp"

namespace glvq {

enum class Preset { bit_alloc, lattice, companding, group_size, rounding };

Preset parse_preset(std::string_view name);
std::string_view preset_name(Preset preset);

struct AblationOptions {
  RunConfig base;  // toggles are overridden per variant
  Source source = Source::student_t;
  int seeds = kSuiteSeeds;
  std::uint64_t first_seed = 0;
  Index groups = 0;  // 0: preset default (4 for bit-alloc, 8 for group-size, else 1)
};

struct AblationRow {
  std::uint64_t seed = 0;
  std::string variant;
  Index group_width = 0;
  LayerMetrics metrics;
  int iterations = 0;     // summed over groups
  bool converged = true;  // every group converged
};

/// `better` is expected to have the lower `metric` on most seeds.
struct Direction {
  std::string better;
  std::string worse;
  std::string metric;
  int wins = 0;
  int losses = 0;
  int ties = 0;
  double p_value = 1;
};

struct AblationResult {
  Preset preset = Preset::lattice;
  std::vector<AblationRow> rows;
  std::vector<Direction> directions;
};

/// P(X >= wins) for X ~ Binomial(wins + losses, 1/2).
double sign_test_p_value(int wins, int losses);

struct VariantRun {
  QuantizedLayer layer;
  LayerMetrics metrics;
};

/// Quantize, decode and evaluate one configuration on suite data.
VariantRun run_variant(const SuiteData& data, const RunConfig& config);

/// Per-group RTN at a uniform bit width.
LayerMetrics run_rtn(const SuiteData& data, Index group_width, int bits);

AblationResult run_ablation(Preset preset, const AblationOptions& options);

std::string ablation_csv(const AblationResult& result);
std::string ablation_text(const AblationResult& result);

}  // namespace glvq
