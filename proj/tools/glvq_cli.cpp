// glvq: quantize / dequantize / eval / ablate / overhead / synth.
//
// Exit codes: 0 success, 2 usage or invalid configuration, 3 data error
// (unreadable or malformed input, shape mismatch), 4 internal error
// (including unwritable output).

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "glvq/ablation.hpp"
#include "glvq/container.hpp"
#include "glvq/pipeline.hpp"
#include "glvq/synthetic.hpp"
#include "glvq/tensor_file.hpp"

namespace {

using namespace glvq;
namespace fs = std::filesystem;

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitInternal = 4;

std::string format(const char* fmt, auto... args) {
  const int n = std::snprintf(nullptr, 0, fmt, args...);
  std::string out(static_cast<std::size_t>(n) + 1, '\0');
  std::snprintf(out.data(), out.size(), fmt, args...);
  out.resize(static_cast<std::size_t>(n));
  return out;
}

void write_text(const fs::path& path, const std::string& text) {
  write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

/// Flags shared by quantize and ablate; `finish` turns them into a RunConfig.
struct ConfigFlags {
  std::string bits = "2";
  std::string rounding = "babai";
  std::string search = "binary";
  bool no_bit_alloc = false;
  bool no_companding = false;
  bool fixed_basis = false;
  RunConfig config;

  void add_to(CLI::App& app) {
    app.add_option("--dim", config.dim, "lattice dimension d")->capture_default_str();
    app.add_option("--bits", bits, "target mean bits per weight (e.g. 2, 1.5, 3/2)")->capture_default_str();
    app.add_option("--group-width", config.group_width, "columns per group")->capture_default_str();
    app.add_flag("--no-bit-alloc", no_bit_alloc, "uniform bits across groups");
    app.add_flag("--no-companding", no_companding, "disable mu-law companding");
    app.add_flag("--fixed-basis", fixed_basis, "freeze the basis at a scaled identity");
    app.add_option("--rounding", rounding, "index assignment")
        ->check(CLI::IsMember({"babai", "gcd"}))
        ->capture_default_str();
    app.add_option("--search", search, "balance-count search")
        ->check(CLI::IsMember({"binary", "exhaustive"}))
        ->capture_default_str();
    app.add_option("--seed", config.seed, "seed")->capture_default_str();
    app.add_option("--step-basis", config.fit.step_basis, "basis step size")->capture_default_str();
    app.add_option("--step-mu", config.fit.step_mu, "companding step size")->capture_default_str();
    app.add_option("--tolerance", config.fit.tolerance, "relative loss change for convergence")->capture_default_str();
    app.add_option("--max-iters", config.fit.max_iters, "iteration cap per group")->capture_default_str();
    app.add_option("--lambda", config.fit.lambda, "basis regularizer weight")->capture_default_str();
    app.add_option("--sigma-min", config.fit.sigma_min, "smallest allowed singular value")->capture_default_str();
    app.add_option("--sigma-max", config.fit.sigma_max, "largest allowed singular value")->capture_default_str();
    app.add_option("--gcd-sweeps", config.fit.gcd_sweeps, "sweeps for --rounding gcd")->capture_default_str();
  }

  RunConfig finish() {
    config.target = BitRate::parse(bits);
    config.bit_alloc = !no_bit_alloc;
    config.fit.companding = !no_companding;
    config.fit.learn_basis = !fixed_basis;
    config.fit.rounding = rounding == "gcd" ? Rounding::gcd : Rounding::babai;
    config.search = search == "exhaustive" ? SearchMode::exhaustive : SearchMode::binary;
    config.validate();
    return config;
  }
};

std::string metrics_text(const LayerMetrics& m) {
  return format(
      "weight MSE        %.9g\n"
      "output MSE        %.9g\n"
      "KL objective      %.9g\n"
      "bits per weight   %.6f\n"
      "side overhead     %.4f%% (%.4f%% with scale)\n",
      m.weight_mse, m.output_mse, m.kl, m.bits_per_weight, m.overhead_percent, m.actual_overhead_percent);
}

std::string metrics_csv(const LayerMetrics& m) {
  return "weight_mse,output_mse,kl,bits_per_weight,overhead_percent,actual_overhead_percent\n" +
         format("%.9g,%.9g,%.9g,%.6f,%.6f,%.6f\n", m.weight_mse, m.output_mse, m.kl, m.bits_per_weight,
                m.overhead_percent, m.actual_overhead_percent);
}

int run_quantize(const fs::path& weights_path, const fs::path& calib_path, const fs::path& out,
                 const fs::path& report_path, RunConfig config) {
  const auto start = std::chrono::steady_clock::now();
  const Matrix<double> weights = read_tensor(weights_path);
  const Matrix<double> calib = read_tensor(calib_path);
  const QuantizedLayer layer = quantize_layer(weights, calib, config);
  write_file_atomic(out, write_archive(layer.records));

  const auto groups = column_groups(weights.cols(), config.group_width);
  std::string csv = "group,first_col,width,bits,salience,initial_loss,final_loss,iterations,converged\n";
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const auto& r = layer.reports[g];
    csv += format("%zu,%lld,%lld,%d,%.9g,%.9g,%.9g,%d,%d\n", g, static_cast<long long>(groups[g].first),
                  static_cast<long long>(groups[g].width), layer.allocation.bits[g], layer.salience[g],
                  r.loss_history.front(), r.final_loss, r.iterations, r.converged ? 1 : 0);
  }
  if (!report_path.empty()) write_text(report_path, csv);

  const LayerMetrics m = evaluate_layer(weights, dequantize_layer(layer.records), calib, layer.records);
  std::map<int, int> histogram;
  for (int b : layer.allocation.bits) ++histogram[b];
  std::string widths;
  for (const auto& [b, count] : histogram) widths += format(" %d-bit x%d", b, count);
  const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << format("groups            %zu (%s)\n", groups.size(), widths.c_str() + 1)
            << format("mean bits         %.6f (balance count %zu)\n", layer.allocation.mean(),
                      layer.allocation.balanced_count)
            << metrics_text(m) << format("wall time         %.3f s\n", seconds)
            << format("archive           %s\n", out.string().c_str());
  return 0;
}

int run_dequantize(const fs::path& archive, const fs::path& out) {
  const auto bytes = read_file(archive);
  const ArchiveReader reader(bytes);
  write_tensor(out, dequantize_layer(reader));
  return 0;
}

int run_eval(const fs::path& original, const fs::path& archive, const fs::path& calib_path,
             const fs::path& report_path) {
  const Matrix<double> weights = read_tensor(original);
  const Matrix<double> calib = read_tensor(calib_path);
  const auto records = read_archive(read_file(archive));
  const LayerMetrics m = evaluate_layer(weights, dequantize_layer(records), calib, records);
  if (!report_path.empty()) write_text(report_path, metrics_csv(m));
  std::cout << metrics_text(m);
  return 0;
}

int run_overhead(bool table, std::int64_t dim, std::int64_t rows, std::int64_t cols, std::int64_t bits) {
  if (table) {
    std::cout << format("%4s %6s %6s %8s %8s %8s\n", "d", "m", "n", "b=2", "b=3", "b=4");
    for (const auto& row : standard_overhead_table())
      std::cout << format("%4d %6d %6d %8.2f %8.2f %8.2f\n", row.dim, row.rows, row.cols, row.percent[0],
                          row.percent[1], row.percent[2]);
    return 0;
  }
  const auto r = overhead_report(dim, rows, cols, bits);
  std::cout << format("overhead %.2f%% (%llu side bytes; %.2f%% with scale)\n", r.percent,
                      static_cast<unsigned long long>(r.side_bytes), r.actual_percent);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Grouped lattice vector quantization"};
  app.require_subcommand(1);

  fs::path weights_path, calib_path, out_path, report_path, archive_path, original_path;

  ConfigFlags quantize_flags;
  auto* quantize = app.add_subcommand("quantize", "compress a weight matrix into a .glvq archive");
  quantize->add_option("--weights", weights_path, "weight tensor (m x n)")->required();
  quantize->add_option("--calib", calib_path, "calibration tensor (n x T)")->required();
  quantize->add_option("--out", out_path, "archive to write")->required();
  quantize->add_option("--report", report_path, "per-group CSV report");
  quantize_flags.add_to(*quantize);

  auto* dequantize = app.add_subcommand("dequantize", "decode an archive into a tensor");
  dequantize->add_option("archive", archive_path, "archive to read")->required();
  dequantize->add_option("--out", out_path, "tensor to write")->required();

  auto* eval = app.add_subcommand("eval", "compare an archive with the original weights");
  eval->add_option("--original", original_path, "original weight tensor")->required();
  eval->add_option("--archive", archive_path, "archive")->required();
  eval->add_option("--calib", calib_path, "calibration tensor")->required();
  eval->add_option("--report", report_path, "metrics CSV");

  ConfigFlags ablate_flags;
  std::string preset, source = "student-t";
  AblationOptions ablation;
  auto* ablate = app.add_subcommand("ablate", "paired runs on the synthetic suite");
  ablate->add_option("preset", preset, "bit-alloc | lattice | companding | group-size | rounding")
      ->required()
      ->check(CLI::IsMember({"bit-alloc", "lattice", "companding", "group-size", "rounding"}));
  ablate->add_option("--source", source, "gaussian | laplacian | student-t")->capture_default_str();
  ablate->add_option("--seeds", ablation.seeds, "number of seeds")->capture_default_str();
  ablate->add_option("--groups", ablation.groups, "64-column groups per case (0: preset default)");
  ablate->add_option("--out", out_path, "CSV table to write");
  ablate_flags.add_to(*ablate);

  bool paper_table = false;
  std::int64_t dim = 8, rows = 4096, cols = 128, bits = 2;
  auto* overhead = app.add_subcommand("overhead", "side-information overhead");
  overhead->add_flag("--paper-table", paper_table, "standard table for m = 4096");
  overhead->add_option("--dim", dim, "lattice dimension d")->capture_default_str()->check(CLI::PositiveNumber);
  overhead->add_option("--rows", rows, "rows per group m")->capture_default_str()->check(CLI::PositiveNumber);
  overhead->add_option("--cols", cols, "columns per group n")->capture_default_str()->check(CLI::PositiveNumber);
  overhead->add_option("--bits", bits, "bits per weight b")->capture_default_str()->check(CLI::PositiveNumber);

  SuiteCase synth_case;
  std::string synth_source = "student-t";
  fs::path synth_calib;
  auto* synth = app.add_subcommand("synth", "write one synthetic suite case as tensors");
  synth->add_option("--source", synth_source, "gaussian | laplacian | student-t")->capture_default_str();
  synth->add_option("--rows", synth_case.rows, "weight rows")->capture_default_str();
  synth->add_option("--groups", synth_case.groups, "column groups")->capture_default_str();
  synth->add_option("--group-width", synth_case.group_width, "columns per group")->capture_default_str();
  synth->add_option("--samples", synth_case.samples, "calibration samples T")->capture_default_str();
  synth->add_option("--seed", synth_case.seed, "seed")->capture_default_str();
  synth->add_option("--weights", weights_path, "weight tensor to write")->required();
  synth->add_option("--calib", synth_calib, "calibration tensor to write")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }

  try {
    if (*quantize) return run_quantize(weights_path, calib_path, out_path, report_path, quantize_flags.finish());
    if (*dequantize) return run_dequantize(archive_path, out_path);
    if (*eval) return run_eval(original_path, archive_path, calib_path, report_path);
    if (*overhead) return run_overhead(paper_table, dim, rows, cols, bits);
    if (*synth) {
      synth_case.source = parse_source(synth_source);
      const SuiteData data = make_suite_case(synth_case);
      write_tensor(weights_path, data.weights);
      write_tensor(synth_calib, data.calib);
      return 0;
    }
    if (*ablate) {
      ablation.base = ablate_flags.finish();
      ablation.source = parse_source(source);
      ablation.first_seed = ablation.base.seed;
      const AblationResult result = run_ablation(parse_preset(preset), ablation);
      if (!out_path.empty()) write_text(out_path, ablation_csv(result));
      std::cout << ablation_text(result);
      return 0;
    }
  } catch (const WriteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInternal;
  } catch (const InfeasibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kExitInternal;
  }
  return kExitInternal;
}
