#include "glvq/ablation.hpp"

#include <cmath>
#include <cstdio>
#include <map>
#include <stdexcept>

namespace glvq {

namespace {

std::string format(const char* fmt, auto... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string out(static_cast<std::size_t>(n) + 1, '\0');
  std::snprintf(out.data(), out.size(), fmt, args...);
  out.resize(static_cast<std::size_t>(n));
  return out;
}

double metric_of(const AblationRow& row, std::string_view metric) {
  if (metric == "output_mse") return row.metrics.output_mse;
  if (metric == "overhead_percent") return row.metrics.overhead_percent;
  throw std::invalid_argument("unknown metric");
}

struct Variant {
  std::string name;
  RunConfig config;
};

}  // namespace

Preset parse_preset(std::string_view name) {
  if (name == "bit-alloc") return Preset::bit_alloc;
  if (name == "lattice") return Preset::lattice;
  if (name == "companding") return Preset::companding;
  if (name == "group-size") return Preset::group_size;
  if (name == "rounding") return Preset::rounding;
  throw std::invalid_argument("unknown preset '" + std::string(name) + "'");
}

std::string_view preset_name(Preset preset) {
  switch (preset) {
    case Preset::bit_alloc: return "bit-alloc";
    case Preset::lattice: return "lattice";
    case Preset::companding: return "companding";
    case Preset::group_size: return "group-size";
    case Preset::rounding: return "rounding";
  }
  return "unknown";
}

double sign_test_p_value(int wins, int losses) {
  const int n = wins + losses;
  if (n == 0) return 1.0;
  double p = 0;
  for (int i = wins; i <= n; ++i)
    p += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
  return std::min(1.0, p);
}

VariantRun run_variant(const SuiteData& data, const RunConfig& config) {
  VariantRun run{quantize_layer(data.weights, data.calib, config), {}};
  const Matrix<double> decoded = dequantize_layer(run.layer.records);
  run.metrics = evaluate_layer(data.weights, decoded, data.calib, run.layer.records);
  return run;
}

LayerMetrics run_rtn(const SuiteData& data, Index group_width, int bits) {
  const auto groups = column_groups(data.weights.cols(), group_width);
  const std::vector<int> widths(groups.size(), bits);
  LayerMetrics m = evaluate_layer(data.weights, rtn_layer(data.weights, group_width, widths), data.calib);
  m.bits_per_weight = bits;
  return m;
}

AblationResult run_ablation(Preset preset, const AblationOptions& options) {
  if (options.seeds < 1) throw std::invalid_argument("need at least one seed");
  options.base.validate();
  AblationResult result;
  result.preset = preset;

  RunConfig base = options.base;
  base.group_width = 64;
  Index groups = options.groups;
  if (groups == 0) groups = preset == Preset::bit_alloc ? 4 : preset == Preset::group_size ? 8 : 1;

  std::vector<Variant> variants;
  std::vector<std::pair<std::string, std::string>> expected;  // (better, worse)
  std::string metric = "output_mse";
  const auto with = [&](std::string name, auto tweak) {
    RunConfig c = base;
    tweak(c);
    variants.push_back({std::move(name), c});
  };
  switch (preset) {
    case Preset::bit_alloc:
      with("sdba", [](RunConfig& c) { c.bit_alloc = true; });
      with("uniform", [](RunConfig& c) { c.bit_alloc = false; });
      expected = {{"sdba", "uniform"}};
      break;
    case Preset::lattice:
      with("learned", [](RunConfig& c) { c.fit.learn_basis = true; });
      with("fixed", [](RunConfig& c) { c.fit.learn_basis = false; });
      expected = {{"learned", "fixed"}};
      break;
    case Preset::companding:
      with("companding", [](RunConfig& c) { c.fit.companding = true; });
      with("no-companding", [](RunConfig& c) { c.fit.companding = false; });
      expected = {{"companding", "no-companding"}};
      break;
    case Preset::rounding:
      with("babai", [](RunConfig& c) { c.fit.rounding = Rounding::babai; });
      with("gcd", [](RunConfig& c) { c.fit.rounding = Rounding::gcd; });
      expected = {{"babai", "gcd"}};
      break;
    case Preset::group_size: {
      const Index widths[] = {32, 64, 128, 256, 512};
      for (Index w : widths) with("width-" + std::to_string(w), [w](RunConfig& c) { c.group_width = w; });
      for (std::size_t i = 1; i < std::size(widths); ++i)
        expected.emplace_back("width-" + std::to_string(widths[i]), "width-" + std::to_string(widths[i - 1]));
      metric = "overhead_percent";
      break;
    }
  }
  const bool with_rtn = base.target.is_integer() && preset != Preset::group_size;
  if (with_rtn) expected.emplace_back(variants.front().name, "rtn");

  for (int s = 0; s < options.seeds; ++s) {
    const std::uint64_t seed = options.first_seed + static_cast<std::uint64_t>(s);
    const SuiteData data = make_suite_case({options.source, 256, groups, 64, 128, seed});
    for (const auto& v : variants) {
      const VariantRun run = run_variant(data, v.config);
      AblationRow row{seed, v.name, v.config.group_width, run.metrics, 0, true};
      for (const auto& r : run.layer.reports) {
        row.iterations += r.iterations;
        row.converged = row.converged && r.converged;
      }
      result.rows.push_back(std::move(row));
    }
    if (with_rtn)
      result.rows.push_back({seed, "rtn", base.group_width,
                             run_rtn(data, base.group_width, static_cast<int>(base.target.floor())), 0, true});
  }

  for (const auto& [better, worse] : expected) {
    std::map<std::uint64_t, double> better_by_seed;
    std::map<std::uint64_t, double> worse_by_seed;
    for (const auto& row : result.rows) {
      if (row.variant == better) better_by_seed[row.seed] = metric_of(row, metric);
      if (row.variant == worse) worse_by_seed[row.seed] = metric_of(row, metric);
    }
    Direction d{better, worse, metric};
    for (const auto& [seed, b] : better_by_seed) {
      const double w = worse_by_seed.at(seed);
      if (b < w) ++d.wins;
      else if (b > w) ++d.losses;
      else ++d.ties;
    }
    d.p_value = sign_test_p_value(d.wins, d.losses);
    result.directions.push_back(d);
  }
  return result;
}

std::string ablation_csv(const AblationResult& result) {
  std::string out =
      "preset,seed,variant,group_width,output_mse,weight_mse,kl,bits_per_weight,overhead_percent,iterations,converged\n";
  for (const auto& r : result.rows) {
    out += format("%s,%llu,%s,%lld,%.9g,%.9g,%.9g,%.6f,%.6f,%d,%d\n", std::string(preset_name(result.preset)).c_str(),
                  static_cast<unsigned long long>(r.seed), r.variant.c_str(), static_cast<long long>(r.group_width),
                  r.metrics.output_mse, r.metrics.weight_mse, r.metrics.kl, r.metrics.bits_per_weight,
                  r.metrics.overhead_percent, r.iterations, r.converged ? 1 : 0);
  }
  return out;
}

std::string ablation_text(const AblationResult& result) {
  std::map<std::string, std::pair<double, int>> sums;
  std::vector<std::string> order;
  for (const auto& r : result.rows) {
    auto [it, inserted] = sums.try_emplace(r.variant, 0.0, 0);
    if (inserted) order.push_back(r.variant);
    it->second.first += r.metrics.output_mse;
    ++it->second.second;
  }
  std::string out = format("ablation preset: %s\n", std::string(preset_name(result.preset)).c_str());
  out += format("%-16s %14s %6s\n", "variant", "mean out-MSE", "seeds");
  for (const auto& v : order)
    out += format("%-16s %14.6g %6d\n", v.c_str(), sums[v].first / sums[v].second, sums[v].second);
  out += "directions (one-sided sign test):\n";
  for (const auto& d : result.directions)
    out += format("  %s < %s on %s: wins %d, losses %d, ties %d, p = %.4g%s\n", d.better.c_str(), d.worse.c_str(),
                  d.metric.c_str(), d.wins, d.losses, d.ties, d.p_value, d.p_value < 0.05 ? " (significant)" : "");
  return out;
}

}  // namespace glvq
