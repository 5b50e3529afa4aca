#include <catch_amalgamated.hpp>

#include <nlohmann/json.hpp>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;

namespace {

struct Result {
  int status = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "tea_cli_test" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

Result tea(const std::string& args) {
  const fs::path dir = fs::temp_directory_path() / "tea_cli_test";
  fs::create_directories(dir);
  const std::string cmd = std::string("\"") + TEA_CLI + "\" " + args + " >" + (dir / "stdout").string() + " 2>" +
                          (dir / "stderr").string();
  const int raw = std::system(cmd.c_str());
  Result r;
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  r.out = slurp(dir / "stdout");
  r.err = slurp(dir / "stderr");
  return r;
}

fs::path write_config(const fs::path& dir, const std::string& name, const std::string& text) {
  const fs::path p = dir / name;
  std::ofstream(p) << text;
  return p;
}

nlohmann::json shipped(const std::string& name) {
  std::ifstream f(fs::path(TEA_CONFIGS) / name);
  return nlohmann::json::parse(f);
}

}  // namespace

TEST_CASE("shipped configs validate cleanly") {
  for (const char* c : {"added_noise.json", "squeeze.json", "tomography.json", "direct_variance.json", "thermal.json"}) {
    const Result r = tea("validate --config " + (fs::path(TEA_CONFIGS) / c).string());
    CHECK(r.status == 0);
    CHECK_THAT(r.out, ContainsSubstring("ok"));
    CHECK_THAT(r.out, ContainsSubstring("0 warnings"));
  }
}

TEST_CASE("config errors exit with status 2") {
  const fs::path d = scratch("errors");
  SECTION("malformed JSON") {
    const Result r = tea("validate --config " + write_config(d, "bad.json", "{\"experiment\": ").string());
    CHECK(r.status == 2);
    CHECK_THAT(r.err, ContainsSubstring("line 1"));
  }
  SECTION("missing device table") {
    const Result r = tea("run --config " + write_config(d, "nodev.json", R"({"experiment": "added_noise_sweep"})").string());
    CHECK(r.status == 2);
    CHECK_THAT(r.err, ContainsSubstring("device"));
  }
  SECTION("missing file") {
    CHECK(tea("validate --config " + (d / "absent.json").string()).status == 2);
  }
  SECTION("bad flags") {
    CHECK(tea("run").status == 2);
    CHECK(tea("frobnicate").status == 2);
    const fs::path cfg = fs::path(TEA_CONFIGS) / "added_noise.json";
    CHECK(tea("run --config " + cfg.string() + " --format pdf").status == 2);
  }
}

TEST_CASE("validate lists physics warnings and still succeeds") {
  auto j = shipped("added_noise.json");
  j["schedule"][1]["gamma_plus_hz"] = 3.4e6;
  const fs::path d = scratch("warn");
  const Result r = tea("validate --config " + write_config(d, "strong.json", j.dump()).string());
  CHECK(r.status == 0);
  CHECK_THAT(r.out, ContainsSubstring("strong coupling"));
}

TEST_CASE("runtime failures exit with status 1") {
  auto j = shipped("tomography.json");
  j["schedule"][0]["gamma_minus_hz"] = 0.0;
  j["shots"] = 16;
  const fs::path d = scratch("runtime");
  const Result r = tea("run --config " + write_config(d, "two_quad.json", j.dump()).string() + " --out " + d.string());
  CHECK(r.status == 1);
  CHECK_THAT(r.err, ContainsSubstring("single-quadrature"));
}

TEST_CASE("run writes the requested formats and is byte-reproducible") {
  auto j = shipped("added_noise.json");
  j["sweep"] = {1.5, 2.5};
  j["shots"] = 256;
  j["resamples"] = 200;
  const fs::path d = scratch("run");
  const fs::path cfg = write_config(d, "small.json", j.dump());
  const Result a = tea("run --config " + cfg.string() + " --out " + (d / "a").string());
  REQUIRE(a.status == 0);
  CHECK_THAT(a.out, ContainsSubstring("min"));
  CHECK_THAT(a.out, ContainsSubstring("dB"));
  const Result b = tea("run --config " + cfg.string() + " --out " + (d / "b").string() + " --threads 3");
  REQUIRE(b.status == 0);
  CHECK(a.out == b.out);
  for (const char* f : {"added_noise_sweep.csv", "added_noise_sweep.json", "added_noise_sweep.svg"}) {
    REQUIRE(fs::exists(d / "a" / f));
    CHECK(slurp(d / "a" / f) == slurp(d / "b" / f));
  }
  const std::string csv = slurp(d / "a" / "added_noise_sweep.csv");
  CHECK(csv.rfind("ratio,add_noise_minus_db,add_noise_plus_db,ci_low,ci_high,", 0) == 0);
  CHECK(csv == slurp(fs::path(TEA_GOLDEN) / "added_noise_small.csv"));
  const auto doc = nlohmann::json::parse(slurp(d / "a" / "added_noise_sweep.json"));
  CHECK(doc["schema_version"] == 1);
  CHECK(doc["rows"].size() == 2);

  const Result c = tea("run --config " + cfg.string() + " --out " + (d / "c").string() + " --format csv --seed 5");
  REQUIRE(c.status == 0);
  CHECK(fs::exists(d / "c" / "added_noise_sweep.csv"));
  CHECK_FALSE(fs::exists(d / "c" / "added_noise_sweep.json"));
  CHECK(slurp(d / "c" / "added_noise_sweep.csv") != csv);
}

TEST_CASE("theory command is fast") {
  const fs::path d = scratch("theory");
  for (const char* c : {"added_noise.json", "squeeze.json"}) {
    const auto t0 = std::chrono::steady_clock::now();
    const Result r = tea("theory --config " + (fs::path(TEA_CONFIGS) / c).string() + " --out " + d.string());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    CHECK(r.status == 0);
    CHECK(secs < 1.0);
  }
  CHECK(fs::exists(d / "added_noise_sweep_theory.csv"));
  CHECK(fs::exists(d / "squeeze_sweep_theory.svg"));
}
