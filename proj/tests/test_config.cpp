#include <catch_amalgamated.hpp>

#include "tea/config.hpp"
#include "tea/io.hpp"

#include <regex>

using namespace tea;
using Catch::Approx;
using Catch::Matchers::ContainsSubstring;

namespace {

const char* minimal = R"({
  "experiment": "added_noise_sweep",
  "device": {"omega_c_hz": 7.376841e9, "kappa_hz": 3.4e6, "kappa_ext_hz": 3.1e6, "omega_m_hz": 9.3608e6,
             "gamma_m_hz": 21, "g0_hz": 287, "n_m": 36}
})";

nlohmann::json minimal_json() { return nlohmann::json::parse(minimal); }

std::string error_of(const std::string& text) {
  try {
    parse_config(text, "cfg.json");
  } catch (const config_error& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST_CASE("a minimal config takes the reference defaults") {
  const Experiment e = parse_config(minimal);
  CHECK(e.device == default_device());
  CHECK(e.kind == ExperimentKind::added_noise_sweep);
  CHECK(e.sweep == default_experiment(ExperimentKind::added_noise_sweep).sweep);
  CHECK(e.schedule_template == default_experiment(ExperimentKind::added_noise_sweep).schedule_template);
  CHECK(e.shots == 2048);
}

TEST_CASE("rates in files are Hz") {
  auto j = minimal_json();
  j["schedule"] = {{{"role", "amplify"}, {"duration_s", 2e-5}, {"gamma_plus_hz", 1e5}, {"gamma_minus_hz", 5e4}},
                   {{"role", "transfer"}, {"duration_s", 2e-5}, {"gamma_minus_hz", 1.81e5}}};
  j["receiver"] = {{"phase_drift_rate_hz", 0.5}};
  const Experiment e = parse_config(j.dump());
  CHECK(e.schedule_template[0].gamma_plus == Approx(two_pi * 1e5));
  CHECK(e.schedule_template[1].gamma_minus == Approx(two_pi * 1.81e5));
  CHECK(e.receiver.phase_drift_rate == Approx(std::numbers::pi));
  CHECK(e.device.kappa == Approx(two_pi * 3.4e6));
}

TEST_CASE("sweep grids") {
  auto j = minimal_json();
  j["sweep"] = {{"spacing", "log"}, {"from", 1.0}, {"to", 100.0}, {"points", 3}};
  CHECK(parse_config(j.dump()).sweep[1] == Approx(10.0));
  j["sweep"] = {{"spacing", "linear"}, {"from", 5}, {"to", 50}, {"points", 10}};
  CHECK(parse_config(j.dump()).sweep[9] == Approx(50.0));
  j["sweep"] = {{"spacing", "angles"}, {"points", 4}};
  CHECK(parse_config(j.dump()).sweep[2] == Approx(std::numbers::pi / 2));
  j["sweep"] = {1.5, 2.5};
  CHECK(parse_config(j.dump()).sweep == std::vector<double>{1.5, 2.5});
  j["sweep"] = nlohmann::json::array();
  CHECK_THAT(error_of(j.dump()), ContainsSubstring("sweep"));
}

TEST_CASE("configs round-trip") {
  for (auto k : {ExperimentKind::added_noise_sweep, ExperimentKind::squeeze_sweep, ExperimentKind::tomography_run,
                 ExperimentKind::direct_variance_vs_angle, ExperimentKind::thermal_sweep}) {
    Experiment e = default_experiment(k);
    e.seed = 99;
    e.eta_q = 0.9;
    e.n_sb_assumed = 0.01;
    const Experiment back = parse_config(to_config_json(e).dump());
    CHECK(back.kind == e.kind);
    CHECK(back.device == e.device);
    CHECK(back.receiver == e.receiver);
    CHECK(back.schedule_template == e.schedule_template);
    CHECK(back.sweep == e.sweep);
    CHECK(back.seed == 99);
    CHECK(back.eta_q == e.eta_q);
    CHECK(back.n_sb_assumed == e.n_sb_assumed);
    CHECK(back.input_state.has_value() == e.input_state.has_value());
  }
}

TEST_CASE("config diagnostics name the field or the line") {
  CHECK_THAT(error_of(R"({"experiment": "added_noise_sweep"})"), ContainsSubstring("device") && ContainsSubstring("missing"));

  auto j = minimal_json();
  j["device"].erase("kappa_hz");
  CHECK_THAT(error_of(j.dump()), ContainsSubstring("device.kappa_hz"));

  j = minimal_json();
  j["device"]["g0_hz"] = "287";
  CHECK_THAT(error_of(j.dump()), ContainsSubstring("device.g0_hz: expected a number"));

  j = minimal_json();
  j["shotz"] = 3;
  CHECK_THAT(error_of(j.dump()), ContainsSubstring("shotz: unknown field"));

  j = minimal_json();
  j["experiment"] = "frobnicate";
  CHECK_THAT(error_of(j.dump()), ContainsSubstring("unknown experiment"));

  j = minimal_json();
  j["schedule"] = {{{"role", "amplify"}, {"duration_s", -1}}};
  CHECK_THAT(error_of(j.dump()), ContainsSubstring("schedule[0].duration_s"));

  j = minimal_json();
  j["device"]["kappa_ext_hz"] = 4e6;
  CHECK_THAT(error_of(j.dump()), ContainsSubstring("kappa_ext"));

  const std::string broken = "{\n  \"experiment\": \"added_noise_sweep\",\n  \"device\": {,}\n}";
  const std::string msg = error_of(broken);
  CHECK_THAT(msg, ContainsSubstring("cfg.json: line 3"));
  CHECK_THAT(msg, ContainsSubstring("syntax error"));
}

TEST_CASE("physics warnings come from the schedule") {
  CHECK(config_warnings(parse_config(minimal)).empty());
  auto j = minimal_json();
  j["schedule"] = {{{"role", "amplify"}, {"duration_s", 2e-5}, {"gamma_plus_hz", 3.4e6}, {"gamma_minus_hz", 1e5}},
                   {{"role", "transfer"}, {"duration_s", 2e-5}, {"gamma_minus_hz", 1.81e5}}};
  const auto w = config_warnings(parse_config(j.dump()));
  REQUIRE_FALSE(w.empty());
  CHECK_THAT(w[0], ContainsSubstring("strong coupling"));
}

TEST_CASE("CSV cells") {
  CHECK(format_cell(-8.51234, ColumnKind::db) == "-8.512");
  CHECK(format_cell(-0.0001, ColumnKind::db) == "0.000");
  CHECK(format_cell(0.1, ColumnKind::value) == "0.10000000000000001");
  CHECK(std::stod(format_cell(1.0 / 3.0, ColumnKind::value)) == 1.0 / 3.0);
  CHECK(format_cell(missing, ColumnKind::value).empty());
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
}

TEST_CASE("CSV and SVG agree row for row") {
  Table t;
  t.columns = {{"ratio", ColumnKind::value}, {"y_db", ColumnKind::db}, {"lo", ColumnKind::db}, {"hi", ColumnKind::db}};
  t.add_row({1.1, -9.5, -10.0, -9.0});
  t.add_row({2.0, -7.25, missing, missing});
  t.add_row({4.0, missing, -6.0, -5.0});
  t.plot = {"ratio", {"y_db"}, "ratio", "dB", true, {"lo"}, {"hi"}};

  std::ostringstream csv, svg;
  write_csv(t, csv);
  write_svg(t, svg);
  CHECK(csv.str() ==
        "ratio,y_db,lo,hi,schema_version\n"
        "1.1000000000000001,-9.500,-10.000,-9.000,1\n"
        "2,-7.250,,,1\n"
        "4,,-6.000,-5.000,1\n");
  CHECK(csv.str().find('\r') == std::string::npos);

  const std::string s = svg.str();
  std::regex marker("<circle [^>]*data-x=\"([^\"]*)\" data-y=\"([^\"]*)\"");
  std::vector<std::pair<std::string, std::string>> points;
  for (auto it = std::sregex_iterator(s.begin(), s.end(), marker); it != std::sregex_iterator(); ++it)
    points.emplace_back((*it)[1], (*it)[2]);
  REQUIRE(points.size() == 2);
  CHECK(points[0] == std::make_pair(std::string("1.1000000000000001"), std::string("-9.500")));
  CHECK(points[1] == std::make_pair(std::string("2"), std::string("-7.250")));
  CHECK(s.rfind("<svg", 0) == 0);
  CHECK(s.find("</svg>") != std::string::npos);
}
