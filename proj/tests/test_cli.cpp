#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "glvq/pipeline.hpp"
#include "glvq/tensor_file.hpp"

namespace fs = std::filesystem;
using glvq::Matrix;

namespace {

struct Result {
  int code = -1;
  std::string out;
};

struct Workspace {
  fs::path dir;
  Workspace() : dir(fs::temp_directory_path() / ("glvq_cli_" + std::to_string(std::random_device{}()))) {
    fs::create_directories(dir);
  }
  ~Workspace() { fs::remove_all(dir); }

  fs::path operator/(const std::string& name) const { return dir / name; }

  Result run(const std::string& args) const {
    const fs::path log = dir / "stdout.txt";
    const std::string cmd = std::string(GLVQ_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    Result r;
    r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream text;
    text << in.rdbuf();
    r.out = text.str();
    return r;
  }
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream text;
  text << in.rdbuf();
  return text.str();
}

/// Bits column of a quantize report.
std::multiset<int> report_bits(const fs::path& report) {
  std::istringstream in(slurp(report));
  std::string line;
  std::getline(in, line);
  std::multiset<int> bits;
  while (std::getline(in, line)) {
    std::istringstream fields(line);
    std::string f;
    for (int i = 0; i < 4; ++i) std::getline(fields, f, ',');
    bits.insert(std::stoi(f));
  }
  return bits;
}

}  // namespace

TEST_CASE("quantize, dequantize and eval round trip") {
  Workspace ws;
  REQUIRE(ws.run("synth --source student-t --rows 64 --groups 4 --group-width 32 --samples 40 --seed 3 --weights " +
                 (ws / "w").string() + " --calib " + (ws / "x").string())
              .code == 0);
  const std::string common = "quantize --weights " + (ws / "w").string() + " --calib " + (ws / "x").string() +
                             " --dim 4 --group-width 32";

  const auto first = ws.run(common + " --out " + (ws / "a.glvq").string() + " --report " + (ws / "a.csv").string());
  REQUIRE(first.code == 0);
  CHECK(first.out.find("mean bits         2.000000") != std::string::npos);
  const auto second = ws.run(common + " --out " + (ws / "b.glvq").string() + " --report " + (ws / "b.csv").string());
  REQUIRE(second.code == 0);
  CHECK(slurp(ws / "a.glvq") == slurp(ws / "b.glvq"));
  CHECK(slurp(ws / "a.csv") == slurp(ws / "b.csv"));

  const auto bits = report_bits(ws / "a.csv");
  CHECK(bits.size() == 4);
  CHECK(bits.count(1) == bits.count(3));

  REQUIRE(ws.run("dequantize " + (ws / "a.glvq").string() + " --out " + (ws / "wq").string()).code == 0);
  const Matrix<double> decoded = glvq::read_tensor(ws / "wq");
  const auto bytes = glvq::read_file(ws / "a.glvq");
  const Matrix<double> expected = glvq::dequantize_layer(glvq::ArchiveReader(bytes));
  // The tensor file stores float32.
  CHECK(decoded == expected.cast<float>().cast<double>());
  CHECK(decoded.rows() == 64);
  CHECK(decoded.cols() == 128);

  const auto eval = ws.run("eval --original " + (ws / "w").string() + " --archive " + (ws / "a.glvq").string() +
                           " --calib " + (ws / "x").string() + " --report " + (ws / "m.csv").string());
  REQUIRE(eval.code == 0);
  CHECK(eval.out.find("output MSE") != std::string::npos);
  CHECK(slurp(ws / "m.csv").rfind("weight_mse,output_mse,kl,bits_per_weight", 0) == 0);

  SUBCASE("uniform bits") {
    REQUIRE(ws.run(common + " --bits 3 --no-bit-alloc --out " + (ws / "u.glvq").string() + " --report " +
                   (ws / "u.csv").string())
                .code == 0);
    CHECK(report_bits(ws / "u.csv") == std::multiset<int>{3, 3, 3, 3});
  }

  SUBCASE("fractional target") {
    REQUIRE(ws.run(common + " --bits 1.5 --out " + (ws / "f.glvq").string() + " --report " + (ws / "f.csv").string())
                .code == 0);
    CHECK(report_bits(ws / "f.csv") == std::multiset<int>{1, 1, 2, 2});
  }

  SUBCASE("ablation toggles are accepted") {
    CHECK(ws.run(common + " --no-companding --fixed-basis --rounding gcd --out " + (ws / "t.glvq").string()).code == 0);
  }
}

TEST_CASE("all-zero weights decode to zeros") {
  Workspace ws;
  glvq::write_tensor(ws / "w", Matrix<double>::Zero(8, 16));
  glvq::write_tensor(ws / "x", Matrix<double>::Ones(16, 4));
  REQUIRE(ws.run("quantize --weights " + (ws / "w").string() + " --calib " + (ws / "x").string() +
                 " --dim 4 --group-width 8 --out " + (ws / "z.glvq").string())
              .code == 0);
  REQUIRE(ws.run("dequantize " + (ws / "z.glvq").string() + " --out " + (ws / "z").string()).code == 0);
  CHECK(glvq::read_tensor(ws / "z").isZero());
}

TEST_CASE("exit codes") {
  Workspace ws;
  REQUIRE(ws.run("synth --rows 16 --groups 2 --group-width 8 --samples 6 --weights " + (ws / "w").string() +
                 " --calib " + (ws / "x").string())
              .code == 0);
  const std::string inputs = " --weights " + (ws / "w").string() + " --calib " + (ws / "x").string();

  CHECK(ws.run("").code == 2);
  CHECK(ws.run("frobnicate").code == 2);
  CHECK(ws.run("quantize" + inputs).code == 2);  // missing --out
  CHECK(ws.run("quantize" + inputs + " --dim 0 --out " + (ws / "a.glvq").string()).code == 2);
  CHECK(ws.run("quantize" + inputs + " --bits 1 --out " + (ws / "a.glvq").string()).code == 2);
  CHECK(ws.run("quantize" + inputs + " --bits abc --out " + (ws / "a.glvq").string()).code == 2);
  CHECK(ws.run("quantize" + inputs + " --rounding nearest --out " + (ws / "a.glvq").string()).code == 2);
  CHECK(ws.run("ablate unknown-preset").code == 2);
  CHECK(ws.run("--help").code == 0);
  CHECK_FALSE(fs::exists(ws / "a.glvq"));

  SUBCASE("shape mismatch is a data error") {
    glvq::write_tensor(ws / "bad", Matrix<double>::Ones(5, 6));
    CHECK(ws.run("quantize --weights " + (ws / "w").string() + " --calib " + (ws / "bad").string() + " --out " +
                 (ws / "a.glvq").string())
              .code == 3);
    CHECK(ws.run("quantize --weights " + (ws / "missing").string() + " --calib " + (ws / "x").string() + " --out " +
                 (ws / "a.glvq").string())
              .code == 3);
    CHECK_FALSE(fs::exists(ws / "a.glvq"));
  }

  SUBCASE("unwritable output") {
    CHECK(ws.run("quantize" + inputs + " --dim 4 --group-width 8 --out " + (ws / "no/such/dir/a.glvq").string()).code ==
          4);
  }

  SUBCASE("corrupt archives leave no output") {
    REQUIRE(ws.run("quantize" + inputs + " --dim 4 --group-width 8 --out " + (ws / "a.glvq").string()).code == 0);
    const std::string archive = slurp(ws / "a.glvq");
    std::ofstream(ws / "cut.glvq", std::ios::binary) << archive.substr(0, archive.size() - 3);
    CHECK(ws.run("dequantize " + (ws / "cut.glvq").string() + " --out " + (ws / "out").string()).code == 3);
    std::string bad = archive;
    bad[0] = 'X';
    std::ofstream(ws / "magic.glvq", std::ios::binary) << bad;
    CHECK(ws.run("dequantize " + (ws / "magic.glvq").string() + " --out " + (ws / "out").string()).code == 3);
    CHECK_FALSE(fs::exists(ws / "out.f32"));
    CHECK_FALSE(fs::exists(ws / "out.json"));
  }
}

TEST_CASE("overhead command") {
  Workspace ws;
  const auto table = ws.run("overhead --paper-table");
  REQUIRE(table.code == 0);
  CHECK(table.out.find("  16   4096    128     0.39     0.26     0.20") != std::string::npos);
  CHECK(table.out.find("  32   4096    256     0.78     0.52     0.39") != std::string::npos);
  CHECK(ws.run("overhead --dim 16 --rows 4096 --cols 128 --bits 4").out.rfind("overhead 0.20%", 0) == 0);
  CHECK(ws.run("overhead --dim 1 --rows 1 --cols 1 --bits 32").out.rfind("overhead 100.00%", 0) == 0);
  CHECK(ws.run("overhead --dim 0").code == 2);
}

TEST_CASE("ablate command") {
  Workspace ws;
  const auto r = ws.run("ablate group-size --seeds 1 --out " + (ws / "g.csv").string());
  REQUIRE(r.code == 0);
  CHECK(r.out.find("sign test") != std::string::npos);
  std::istringstream csv(slurp(ws / "g.csv"));
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 6);
  const auto again = ws.run("ablate group-size --seeds 1 --out " + (ws / "h.csv").string());
  CHECK(slurp(ws / "g.csv") == slurp(ws / "h.csv"));
}
