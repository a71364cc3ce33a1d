#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "lightnorm/cli.hpp"
#include "lightnorm/io.hpp"
#include "lightnorm/tensor.hpp"
#include "json.hpp"

using namespace lightnorm;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  args.insert(args.begin(), "lightnorm");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Result r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "lightnorm_cli_test" / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

/// Every file under `a` exists under `b` with identical bytes, and vice versa.
bool same_tree(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const fs::path other = b / fs::relative(e.path(), a);
    if (!fs::exists(other) || slurp(e.path()) != slurp(other)) return false;
    ++files;
  }
  std::size_t other_files = 0;
  for (const auto& e : fs::recursive_directory_iterator(b)) other_files += e.is_regular_file();
  return files > 0 && files == other_files;
}

Tensor gaussian(std::vector<std::size_t> shape, std::uint64_t seed) {
  Tensor t = Tensor::zeros(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (double& v : t.data) v = static_cast<float>(normal(rng));
  return t;
}

}  // namespace

TEST_CASE("formats table") {
  const Result r = run({"formats"});
  CHECK(r.code == kExitOk);
  bool found = false;
  std::istringstream lines(r.out);
  for (std::string line; std::getline(lines, line);) {
    if (line.rfind("FP10-A", 0) == 0) {
      found = true;
      CHECK(line.find("-14") != std::string::npos);
      CHECK(line.find(" 15") != std::string::npos);
      CHECK(line.find("6.3488E+04") != std::string::npos);
    }
  }
  CHECK(found);
  CHECK(run({"formats", "{1,4,3}"}).out.find("{1,4,3}") != std::string::npos);
  CHECK(run({"--format", "FP7", "formats"}).code == kExitFormat);
}

TEST_CASE("exit codes") {
  const fs::path dir = scratch("codes");
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
  CHECK(run({"norm", "run", "--variant", "layernorm"}).code == kExitUsage);
  CHECK(run({"quantize"}).code == kExitConfig);
  CHECK(run({"quantize", "--in", (dir / "missing.f32").string()}).code == kExitIo);

  const std::string cfg = (dir / "config.json").string();
  write_text(cfg, R"({"seed": 3, "colour": "blue"})");
  CHECK(run({"--config", cfg, "formats"}).code == kExitConfig);
  write_text(cfg, "{broken");
  CHECK(run({"--config", cfg, "formats"}).code == kExitConfig);

  const std::string one = (dir / "one.f32").string();
  write_tensor(one, Tensor::from({1, 1}, {2.0}));
  CHECK(run({"norm", "run", "--in", one, "--variant", "bn", "--out-dir", (dir / "o").string()}).code ==
        kExitDomain);

  const std::string x = (dir / "x.f32").string();
  write_tensor(x, gaussian({4, 3}, 1));
  const std::string g = (dir / "g.f32").string();
  write_tensor(g, gaussian({4, 2}, 2));
  CHECK(run({"norm", "run", "--in", x, "--grad", g, "--variant", "bn", "--out-dir", (dir / "o").string()}).code ==
        kExitShape);
}

TEST_CASE("norm run on a constant tensor returns beta") {
  const fs::path dir = scratch("constant");
  const std::string x = (dir / "x.f32").string();
  write_tensor(x, Tensor::from({4, 2}, std::vector<double>(8, 3.0)));
  for (const std::string v : {"bn", "restructured", "rn", "lightnorm"}) {
    const fs::path out = dir / v;
    const Result r = run({"norm", "run", "--in", x, "--variant", v, "--beta", "0.5", "--out-dir", out.string()});
    REQUIRE(r.code == kExitOk);
    const Tensor y = read_tensor((out / "y.f32").string());
    CHECK(y.shape == std::vector<std::size_t>{4, 2});
    CHECK(y.data == std::vector<double>(8, 0.5));
    const auto manifest = nlohmann::json::parse(slurp(out / "manifest.json"));
    CHECK(manifest.at("tool") == "lightnorm");
    CHECK(manifest.at("command") == "norm run");
  }
}

TEST_CASE("every command is byte-for-byte reproducible") {
  const fs::path dir = scratch("determinism");
  const std::string x = (dir / "x.f32").string();
  const std::string dy = (dir / "dy.f32").string();
  write_tensor(x, gaussian({8, 4, 3, 3}, 5));
  write_tensor(dy, gaussian({8, 4, 3, 3}, 6));

  const std::vector<std::vector<std::string>> commands = {
      {"formats"},
      {"--format", "FP8", "quantize", "--in", x},
      {"bfp", "pack", "--in", x, "-k", "8"},
      {"norm", "run", "--in", x, "--grad", dy, "--variant", "lightnorm"},
      {"norm", "run", "--in", x, "--grad", dy, "--variant", "rn", "--rn-gradient", "exact", "--bfp-output"},
      {"norm", "run", "--in", x, "--grad", dy, "--variant", "bn", "--fw-format", "FP16"},
      {"--seed", "9", "stats", "sweep", "--samples", "2000", "--channels", "10"},
      {"cost", "report"},
      {"--seed", "4", "train-toy", "--samples", "400", "--epochs", "2", "--seeds", "2"},
  };
  int i = 0;
  for (auto cmd : commands) {
    const fs::path a = dir / ("a" + std::to_string(i));
    const fs::path b = dir / ("b" + std::to_string(i));
    auto ca = cmd;
    ca.insert(ca.begin(), {"--out-dir", a.string()});
    auto cb = cmd;
    cb.insert(cb.begin(), {"--out-dir", b.string()});
    const Result ra = run(ca);
    const Result rb = run(cb);
    INFO("command " << i);
    REQUIRE(ra.code == kExitOk);
    REQUIRE(rb.code == kExitOk);
    CHECK(ra.out == rb.out);
    CHECK(same_tree(a, b));
    ++i;
  }

  // Unpacking the container written above.
  const fs::path packed = dir / "a2" / "packed.lnbf";
  const Result u1 = run({"--out-dir", (dir / "u1").string(), "bfp", "unpack", "--in", packed.string()});
  const Result u2 = run({"--out-dir", (dir / "u2").string(), "bfp", "unpack", "--in", packed.string()});
  CHECK(u1.code == kExitOk);
  CHECK(same_tree(dir / "u1", dir / "u2"));
}

TEST_CASE("config file supplies defaults that flags override") {
  const fs::path dir = scratch("config");
  const std::string cfg = (dir / "c.json").string();
  write_text(cfg, R"({"samples": 1000, "channels": 10, "formats": ["FP8", "FP32"], "seed": 2})");
  const Result a = run({"--config", cfg, "--out-dir", (dir / "a").string(), "stats", "sweep"});
  REQUIRE(a.code == kExitOk);
  const auto sweep = nlohmann::json::parse(slurp(dir / "a" / "sweep.json"));
  CHECK(sweep.at("rows").size() == 2);
  const Result b = run({"--config", cfg, "--out-dir", (dir / "b").string(), "stats", "sweep", "--formats", "FP16"});
  REQUIRE(b.code == kExitOk);
  CHECK(nlohmann::json::parse(slurp(dir / "b" / "sweep.json")).at("rows").size() == 1);
}

TEST_CASE("the installed binary runs") {
  const char* bin = std::getenv("LIGHTNORM_CLI");
  if (bin == nullptr) return;  // only under ctest
  const fs::path dir = scratch("binary");
  const std::string cmd = std::string(bin) + " formats > " + (dir / "out.txt").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  CHECK(WEXITSTATUS(status) == 0);
  CHECK(slurp(dir / "out.txt").find("FP10-B") != std::string::npos);
  const int bad = std::system((std::string(bin) + " nonsense > /dev/null 2>&1").c_str());
  CHECK(WEXITSTATUS(bad) == kExitUsage);
}
