// tea: run, tabulate or check a configured experiment.
//
//   tea run      --config exp.json [--seed N] [--out DIR] [--format csv,json,svg] [--threads N]
//   tea theory   --config exp.json [--out DIR] [--format ...]
//   tea validate --config exp.json
//
// Exit status: 0 success, 1 runtime failure, 2 configuration or usage error.

#include "tea/config.hpp"
#include "tea/io.hpp"
#include "tea/protocol.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <set>
#include <string>

namespace {

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::string out = ".";
  std::string format = "csv,json,svg";
};

std::set<std::string> parse_formats(const std::string& spec) {
  std::set<std::string> out;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item != "csv" && item != "json" && item != "svg")
      throw tea::config_error("--format: unknown format \"" + item + "\" (expected csv, json, svg)");
    out.insert(item);
  }
  if (out.empty()) throw tea::config_error("--format: at least one format is required");
  return out;
}

void write_outputs(const tea::ExperimentResult& r, const std::string& stem, const Options& o) {
  const auto formats = parse_formats(o.format);
  const std::filesystem::path dir(o.out);
  std::filesystem::create_directories(dir);
  if (formats.count("csv")) tea::write_file(dir / (stem + ".csv"), [&](std::ostream& f) { tea::write_csv(r.table, f); });
  if (formats.count("json")) tea::write_file(dir / (stem + ".json"), [&](std::ostream& f) { tea::write_json(r.doc, f); });
  if (formats.count("svg")) tea::write_file(dir / (stem + ".svg"), [&](std::ostream& f) { tea::write_svg(r.table, f); });
}

tea::Experiment load(const Options& o) {
  tea::Experiment e = tea::load_config(o.config);
  if (o.seed) e.seed = *o.seed;
  if (o.threads) {
    if (*o.threads < 1) throw tea::config_error("--threads: must be >= 1");
    e.threads = *o.threads;
  }
  parse_formats(o.format);
  return e;
}

int guarded(const std::function<int()>& body) {
  try {
    return body();
  } catch (const tea::config_error& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transient electromechanical amplification toolkit"};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool outputs) {
    sub->add_option("--config", o.config, "experiment configuration (JSON)")->required();
    if (outputs) {
      sub->add_option("--out", o.out, "output directory")->capture_default_str();
      sub->add_option("--format", o.format, "comma-separated subset of csv,json,svg")->capture_default_str();
    }
  };

  CLI::App* run = app.add_subcommand("run", "simulate the experiment and write its results");
  add_common(run, true);
  run->add_option("--seed", o.seed, "override the configured seed");
  run->add_option("--threads", o.threads, "worker threads");

  CLI::App* theory = app.add_subcommand("theory", "write the analytic curves only");
  add_common(theory, true);

  CLI::App* validate = app.add_subcommand("validate", "check the configuration and print physics warnings");
  add_common(validate, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  if (*run)
    return guarded([&] {
      const tea::Experiment e = load(o);
      for (const auto& w : tea::config_warnings(e)) std::cerr << "warning: " << w << '\n';
      const tea::ExperimentResult r = tea::run_experiment(e);
      write_outputs(r, r.name, o);
      std::cout << r.summary << '\n';
      return 0;
    });
  if (*theory)
    return guarded([&] {
      const tea::Experiment e = load(o);
      const tea::ExperimentResult r = tea::run_theory(e);
      write_outputs(r, r.name + "_theory", o);
      std::cout << r.summary << '\n';
      return 0;
    });
  return guarded([&] {
    const tea::Experiment e = load(o);
    const auto warnings = tea::config_warnings(e);
    for (const auto& w : warnings) std::cout << "warning: " << w << '\n';
    std::cout << o.config << ": ok (" << tea::to_string(e.kind) << ", " << warnings.size() << " warning"
              << (warnings.size() == 1 ? "" : "s") << ")\n";
    return 0;
  });
}
