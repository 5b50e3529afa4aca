#pragma once

// JSON experiment configuration. Rates are given in Hz in files and held in
// rad/s in memory. Every error names the offending field or source line.

#include "tea/protocol.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>
#include <string>

namespace tea {

struct config_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline constexpr int config_schema_version = 1;

namespace detail {

using json = nlohmann::json;

inline std::string field(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

inline void allow_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* k : keys) ok = ok || it.key() == k;
    if (!ok) throw config_error(field(path, it.key()) + ": unknown field");
  }
}

inline const json& require_object(const json& obj, const std::string& path, const std::string& key) {
  if (!obj.contains(key)) throw config_error(field(path, key) + ": missing required table");
  const json& v = obj.at(key);
  if (!v.is_object()) throw config_error(field(path, key) + ": expected an object");
  return v;
}

inline double number(const json& obj, const std::string& path, const std::string& key) {
  if (!obj.contains(key)) throw config_error(field(path, key) + ": missing required field");
  const json& v = obj.at(key);
  if (!v.is_number()) throw config_error(field(path, key) + ": expected a number");
  return v.get<double>();
}

inline double number_or(const json& obj, const std::string& path, const std::string& key, double def) {
  return obj.contains(key) ? number(obj, path, key) : def;
}

inline std::uint64_t count_or(const json& obj, const std::string& path, const std::string& key, std::uint64_t def) {
  if (!obj.contains(key)) return def;
  const json& v = obj.at(key);
  if (!v.is_number_unsigned()) throw config_error(field(path, key) + ": expected a non-negative integer");
  return v.get<std::uint64_t>();
}

inline std::string text(const json& obj, const std::string& path, const std::string& key) {
  if (!obj.contains(key)) throw config_error(field(path, key) + ": missing required field");
  const json& v = obj.at(key);
  if (!v.is_string()) throw config_error(field(path, key) + ": expected a string");
  return v.get<std::string>();
}

inline DeviceParams parse_device(const json& d, const std::string& path) {
  allow_keys(d, path, {"omega_c_hz", "kappa_hz", "kappa_ext_hz", "omega_m_hz", "gamma_m_hz", "g0_hz", "n_m", "n_c"});
  DeviceParams dev;
  dev.omega_c = hz(number(d, path, "omega_c_hz"));
  dev.kappa = hz(number(d, path, "kappa_hz"));
  dev.kappa_ext = hz(number(d, path, "kappa_ext_hz"));
  dev.omega_m = hz(number(d, path, "omega_m_hz"));
  dev.gamma_m = hz(number(d, path, "gamma_m_hz"));
  dev.g0 = hz(number(d, path, "g0_hz"));
  dev.n_m = number(d, path, "n_m");
  dev.n_c = number_or(d, path, "n_c", 0.0);
  return dev;
}

inline ReceiverParams parse_receiver(const json& r, const std::string& path) {
  allow_keys(r, path, {"omega_het_hz", "sample_rate", "g_tot", "n_hemt", "phase_drift_rate_hz"});
  ReceiverParams rx;
  rx.omega_het = hz(number_or(r, path, "omega_het_hz", to_hz(rx.omega_het)));
  rx.sample_rate = number_or(r, path, "sample_rate", rx.sample_rate);
  rx.g_tot = number_or(r, path, "g_tot", rx.g_tot);
  rx.n_hemt = number_or(r, path, "n_hemt", rx.n_hemt);
  rx.phase_drift_rate = hz(number_or(r, path, "phase_drift_rate_hz", 0.0));
  return rx;
}

inline PulseSchedule parse_schedule(const json& s, const std::string& path) {
  if (!s.is_array()) throw config_error(path + ": expected an array of segments");
  PulseSchedule out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::string p = path + "[" + std::to_string(i) + "]";
    const json& j = s[i];
    if (!j.is_object()) throw config_error(p + ": expected an object");
    allow_keys(j, p, {"role", "duration_s", "gamma_plus_hz", "gamma_minus_hz", "delta_0_hz", "delta_m_hz", "phi_avg_rad",
                      "envelope_sigma_s"});
    PumpSegment seg;
    seg.role = text(j, p, "role");
    seg.duration = number(j, p, "duration_s");
    seg.gamma_plus = hz(number_or(j, p, "gamma_plus_hz", 0.0));
    seg.gamma_minus = hz(number_or(j, p, "gamma_minus_hz", 0.0));
    seg.delta_0 = hz(number_or(j, p, "delta_0_hz", 0.0));
    seg.delta_m = hz(number_or(j, p, "delta_m_hz", 0.0));
    seg.phi_avg = number_or(j, p, "phi_avg_rad", 0.0);
    seg.envelope_sigma = number_or(j, p, "envelope_sigma_s", 0.0);
    if (!(seg.duration > 0.0)) throw config_error(field(p, "duration_s") + ": must be > 0");
    if (!(seg.gamma_plus >= 0.0)) throw config_error(field(p, "gamma_plus_hz") + ": must be >= 0");
    if (!(seg.gamma_minus >= 0.0)) throw config_error(field(p, "gamma_minus_hz") + ": must be >= 0");
    if (!(seg.envelope_sigma >= 0.0)) throw config_error(field(p, "envelope_sigma_s") + ": must be >= 0");
    out.push_back(seg);
  }
  return out;
}

inline std::vector<double> parse_sweep(const json& s, const std::string& path) {
  if (s.is_array()) {
    std::vector<double> v;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (!s[i].is_number()) throw config_error(path + "[" + std::to_string(i) + "]: expected a number");
      v.push_back(s[i].get<double>());
    }
    if (v.empty()) throw config_error(path + ": sweep is empty");
    return v;
  }
  if (!s.is_object()) throw config_error(path + ": expected an array or a {spacing, from, to, points} object");
  allow_keys(s, path, {"spacing", "from", "to", "points"});
  const std::string spacing = text(s, path, "spacing");
  const std::uint64_t n = count_or(s, path, "points", 0);
  if (spacing == "angles") {
    if (n < 1) throw config_error(field(path, "points") + ": must be >= 1");
    return angle_grid(n);
  }
  const double lo = number(s, path, "from"), hi = number(s, path, "to");
  if (n < 2) throw config_error(field(path, "points") + ": must be >= 2");
  if (!(hi > lo)) throw config_error(field(path, "to") + ": must exceed from");
  if (spacing == "log") {
    if (!(lo > 0.0)) throw config_error(field(path, "from") + ": must be > 0 for log spacing");
    return log_grid(lo, hi, n);
  }
  if (spacing == "linear") {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return v;
  }
  throw config_error(field(path, "spacing") + ": expected \"log\", \"linear\" or \"angles\"");
}

/// 1-based line and column of a byte offset.
inline std::string line_col(const std::string& text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte; ++i) {
    if (text[i] == '\n')
      ++line, col = 1;
    else
      ++col;
  }
  return "line " + std::to_string(line) + ", column " + std::to_string(col);
}

}  // namespace detail

/// Parses configuration text; `source` prefixes diagnostics.
inline Experiment parse_config(const std::string& body, const std::string& source = "config") {
  using detail::json;
  json j;
  try {
    j = json::parse(body);
  } catch (const json::parse_error& e) {
    std::string msg = e.what();
    const auto colon = msg.find("syntax error");
    throw config_error(source + ": " + detail::line_col(body, e.byte) + ": " +
                       (colon == std::string::npos ? msg : msg.substr(colon)));
  }
  if (!j.is_object()) throw config_error(source + ": top level must be an object");
  try {
    detail::allow_keys(j, "", {"schema_version", "experiment", "device", "receiver", "schedule", "sweep", "shots", "seed",
                               "threads", "theory", "pump_shift", "overlay", "repetition_rate_hz", "input_state",
                               "n_sb_assumed", "eta_q", "resamples", "confidence_level", "fock_levels"});
    if (j.contains("schema_version") && detail::count_or(j, "", "schema_version", 0) != config_schema_version)
      throw config_error("schema_version: unsupported version (expected 1)");
    const std::string name = detail::text(j, "", "experiment");
    const auto kind = parse_experiment_kind(name);
    if (!kind) throw config_error("experiment: unknown experiment \"" + name + "\"");
    const DeviceParams dev = detail::parse_device(detail::require_object(j, "", "device"), "device");
    try {
      dev.check();
    } catch (const std::invalid_argument& e) {
      throw config_error(e.what());
    }
    Experiment e = default_experiment(*kind, dev);
    if (j.contains("receiver")) e.receiver = detail::parse_receiver(detail::require_object(j, "", "receiver"), "receiver");
    if (j.contains("schedule")) e.schedule_template = detail::parse_schedule(j.at("schedule"), "schedule");
    if (j.contains("sweep")) e.sweep = detail::parse_sweep(j.at("sweep"), "sweep");
    e.shots = detail::count_or(j, "", "shots", e.shots);
    e.seed = detail::count_or(j, "", "seed", e.seed);
    e.threads = static_cast<unsigned>(detail::count_or(j, "", "threads", e.threads));
    if (j.contains("theory")) {
      const std::string t = detail::text(j, "", "theory");
      if (t == "ideal")
        e.theory = Theory::ideal;
      else if (t == "full")
        e.theory = Theory::full;
      else
        throw config_error("theory: expected \"ideal\" or \"full\"");
    }
    if (j.contains("pump_shift")) {
      if (!j.at("pump_shift").is_boolean()) throw config_error("pump_shift: expected true or false");
      e.full.pump_shift = j.at("pump_shift").get<bool>();
    }
    if (j.contains("overlay")) {
      const json& o = detail::require_object(j, "", "overlay");
      detail::allow_keys(o, "overlay", {"delta_m_hz", "delta_0_hz"});
      e.overlay.delta_m = hz(detail::number_or(o, "overlay", "delta_m_hz", to_hz(e.overlay.delta_m)));
      e.overlay.delta_0 = hz(detail::number_or(o, "overlay", "delta_0_hz", to_hz(e.overlay.delta_0)));
    }
    e.repetition_rate = detail::number_or(j, "", "repetition_rate_hz", e.repetition_rate);
    if (j.contains("input_state")) {
      const json& s = detail::require_object(j, "", "input_state");
      detail::allow_keys(s, "input_state", {"r", "n_sq", "phi"});
      SqueezeParams sp{detail::number(s, "input_state", "r"), detail::number(s, "input_state", "n_sq"),
                       detail::number(s, "input_state", "phi")};
      if (!(sp.n_sq >= 0.0)) throw config_error("input_state.n_sq: must be >= 0");
      e.input_state = sp;
    }
    if (j.contains("n_sb_assumed")) e.n_sb_assumed = detail::number(j, "", "n_sb_assumed");
    if (j.contains("eta_q")) {
      e.eta_q = detail::number(j, "", "eta_q");
      if (!(*e.eta_q > 0.0 && *e.eta_q <= 1.0)) throw config_error("eta_q: must lie in (0, 1]");
    }
    e.resamples = detail::count_or(j, "", "resamples", e.resamples);
    e.level = detail::number_or(j, "", "confidence_level", e.level);
    e.fock_levels = detail::count_or(j, "", "fock_levels", e.fock_levels);
    if (e.threads < 1) throw config_error("threads: must be >= 1");
    try {
      check_experiment(e);
    } catch (const std::invalid_argument& ex) {
      throw config_error(ex.what());
    }
    return e;
  } catch (const config_error& ex) {
    throw config_error(source + ": " + ex.what());
  }
}

inline Experiment load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw config_error(path.string() + ": cannot open file");
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str(), path.string());
}

/// Physics warnings for the experiment's schedule, one per message.
inline std::vector<std::string> config_warnings(const Experiment& e) { return validate(e.schedule_template, e.device); }

/// Experiment as a configuration document; parse_config inverts it.
inline nlohmann::ordered_json to_config_json(const Experiment& e) {
  const nlohmann::ordered_json j = detail::header(e);
  nlohmann::ordered_json out;
  out["schema_version"] = config_schema_version;
  out["experiment"] = to_string(e.kind);
  out["device"] = j["device"];
  out["receiver"] = j["receiver"];
  out["schedule"] = j["schedule"];
  for (std::size_t i = 0; i < e.schedule_template.size(); ++i)
    out["schedule"][i]["phi_avg_rad"] = e.schedule_template[i].phi_avg;
  out["sweep"] = e.sweep;
  out["shots"] = e.shots;
  out["seed"] = e.seed;
  out["threads"] = e.threads;
  out["theory"] = to_string(e.theory);
  out["pump_shift"] = e.full.pump_shift;
  out["overlay"] = {{"delta_m_hz", to_hz(e.overlay.delta_m)}, {"delta_0_hz", to_hz(e.overlay.delta_0)}};
  out["repetition_rate_hz"] = e.repetition_rate;
  if (e.input_state) out["input_state"] = {{"r", e.input_state->r}, {"n_sq", e.input_state->n_sq}, {"phi", e.input_state->phi}};
  if (e.n_sb_assumed) out["n_sb_assumed"] = *e.n_sb_assumed;
  if (e.eta_q) out["eta_q"] = *e.eta_q;
  out["resamples"] = e.resamples;
  out["confidence_level"] = e.level;
  out["fock_levels"] = e.fock_levels;
  return out;
}

}  // namespace tea
