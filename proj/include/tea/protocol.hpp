#pragma once

// The named experiments: prepare a mechanical state, read it out with an
// amplification pulse and a transfer pulse through the receiver chain, and
// run the matching inference. Every shot draws from streams derived from the
// experiment seed and the shot index, so results do not depend on the
// thread count.

#include "tea/calibrate.hpp"
#include "tea/dynamics.hpp"
#include "tea/receiver.hpp"
#include "tea/stats.hpp"
#include "tea/table.hpp"
#include "tea/tomography.hpp"

#include <boost/math/tools/minima.hpp>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace tea {

enum class ExperimentKind { added_noise_sweep, squeeze_sweep, tomography_run, direct_variance_vs_angle, thermal_sweep };

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::added_noise_sweep: return "added_noise_sweep";
    case ExperimentKind::squeeze_sweep: return "squeeze_sweep";
    case ExperimentKind::tomography_run: return "tomography_run";
    case ExperimentKind::direct_variance_vs_angle: return "direct_variance_vs_angle";
    case ExperimentKind::thermal_sweep: return "thermal_sweep";
  }
  return "";
}

inline std::optional<ExperimentKind> parse_experiment_kind(const std::string& s) {
  for (auto k : {ExperimentKind::added_noise_sweep, ExperimentKind::squeeze_sweep, ExperimentKind::tomography_run,
                 ExperimentKind::direct_variance_vs_angle, ExperimentKind::thermal_sweep})
    if (s == to_string(k)) return k;
  return std::nullopt;
}

/// Detunings used only for the full-theory overlay curves.
struct OverlayParams {
  double delta_m = hz(300.0);
  double delta_0 = -hz(74e3);
};

struct Experiment {
  ExperimentKind kind = ExperimentKind::added_noise_sweep;
  DeviceParams device = default_device();
  ReceiverParams receiver{};
  /// Segments tagged by role: optional "prepare" segments, then "amplify"
  /// and "transfer".
  PulseSchedule schedule_template;
  /// Ratios Gamma_+/Gamma_- (sweeps), measurement angles (tomography and
  /// direct variance) or bath occupancies (thermal sweep).
  std::vector<double> sweep;
  std::size_t shots = 2048;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  Theory theory = Theory::ideal;  ///< model that generates the data
  FullTheoryOptions full{};
  OverlayParams overlay{};
  double repetition_rate = 500.0;
  std::optional<SqueezeParams> input_state;  ///< replaces preparation from a thermal state
  std::optional<double> n_sb_assumed;        ///< default: sideband-cooling limit
  std::optional<double> eta_q;               ///< tomography efficiency; default: from the readout model
  std::size_t resamples = 1000;
  double level = 0.9;
  std::size_t fock_levels = 10;
};

struct ExperimentResult {
  std::string name;
  Table table;
  nlohmann::ordered_json doc;
  std::string summary;
};

// ---------------------------------------------------------------------------
// Grids and theory curves

inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0 && hi > lo) || n < 2) throw std::invalid_argument("log grid needs 0 < lo < hi and n >= 2");
  std::vector<double> g(n);
  for (std::size_t i = 0; i < n; ++i)
    g[i] = lo * std::pow(hi / lo, static_cast<double>(i) / static_cast<double>(n - 1));
  return g;
}

inline PumpSegment make_segment(const std::string& role, double duration, double gp, double gm, double sigma = 0.0) {
  PumpSegment s;
  s.role = role;
  s.duration = duration;
  s.gamma_plus = gp;
  s.gamma_minus = gm;
  s.envelope_sigma = sigma;
  return s;
}

inline PumpSegment with_ratio(PumpSegment seg, double ratio) {
  seg.gamma_plus = ratio * seg.gamma_minus;
  return seg;
}

inline PumpSegment undetuned(PumpSegment seg) {
  seg.delta_0 = seg.delta_m = 0.0;
  return seg;
}

/// Main-text added noise (high-gain, rotating-wave) at Gamma_+ = ratio * Gamma_-.
inline double ideal_added_noise(double ratio, double gamma_minus, const DeviceParams& dev, Quadrature q) {
  return added_noise_ideal(make_segment("amplify", 0.0, ratio * gamma_minus, gamma_minus), dev, q);
}

/// Rotating-wave steady-state squeezing at Gamma_+ = ratio * Gamma_-.
inline double ideal_squeezed_variance(double ratio, double gamma_minus, const DeviceParams& dev, Quadrature q) {
  return squeezed_variance_ideal(make_segment("prepare", 0.0, ratio * gamma_minus, gamma_minus), dev, q);
}

struct CurveMinimum {
  double x = 0.0;
  double value = 0.0;
};

/// Minimum of f over [lo, hi]: a scan on n points, refined by Brent's method
/// around the best one.
template <class F>
CurveMinimum minimize_curve(F&& f, double lo, double hi, std::size_t n = 400) {
  double best_x = lo, best = f(lo);
  double step = (hi - lo) / static_cast<double>(n - 1);
  for (std::size_t i = 1; i < n; ++i) {
    const double x = lo + step * static_cast<double>(i);
    const double v = f(x);
    if (v < best) best = v, best_x = x;
  }
  const double a = std::max(lo, best_x - step), b = std::min(hi, best_x + step);
  const auto [x, v] = boost::math::tools::brent_find_minima(f, a, b, 50);
  if (v < best) return {x, v};
  return {best_x, best};
}

inline CurveMinimum minimum_on_grid(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.empty() || xs.size() != ys.size()) throw std::invalid_argument("grid minimum needs matching non-empty vectors");
  CurveMinimum m{xs[0], ys[0]};
  for (std::size_t i = 1; i < xs.size(); ++i)
    if (ys[i] < m.value) m = {xs[i], ys[i]};
  return m;
}

/// Ratio on the grid with the lowest main-text added noise of X_-.
inline double optimal_ratio(double gamma_minus, const DeviceParams& dev, const std::vector<double>& grid) {
  std::vector<double> v;
  for (double r : grid) v.push_back(ideal_added_noise(r, gamma_minus, dev, Quadrature::minus));
  return minimum_on_grid(grid, v).x;
}

// ---------------------------------------------------------------------------
// Default experiments

inline PulseSchedule readout_template(double gp, double gm, double t_amp = 30e-6, double t_xfer = 20e-6,
                                      double gm_xfer = hz(181e3)) {
  return {make_segment("amplify", t_amp, gp, gm), make_segment("transfer", t_xfer, 0.0, gm_xfer)};
}

inline Experiment default_experiment(ExperimentKind kind, const DeviceParams& dev = default_device()) {
  Experiment e;
  e.kind = kind;
  e.device = dev;
  const double sigma = 200e-9;
  switch (kind) {
    case ExperimentKind::added_noise_sweep: {
      e.schedule_template = {make_segment("prepare", 20e-6, 0.0, hz(181e3), sigma)};
      for (auto& s : readout_template(hz(181e3), hz(181e3))) e.schedule_template.push_back(s);
      e.sweep = log_grid(1.1, 4.0, 12);
      break;
    }
    case ExperimentKind::squeeze_sweep: {
      e.schedule_template = {make_segment("prepare", 90e-6, hz(77e3), hz(154e3), sigma)};
      for (auto& s : readout_template(hz(73e3), 0.0)) e.schedule_template.push_back(s);
      e.sweep = log_grid(0.1, 0.9, 12);
      break;
    }
    case ExperimentKind::direct_variance_vs_angle:
    case ExperimentKind::tomography_run: {
      const double gm = hz(181e3);
      e.schedule_template = readout_template(optimal_ratio(gm, e.device, log_grid(1.1, 4.0, 12)) * gm, gm);
      e.sweep = angle_grid(16);
      e.input_state = SqueezeParams{0.661, 0.44, 1.481};
      break;
    }
    case ExperimentKind::thermal_sweep: {
      e.schedule_template = readout_template(hz(73e3), 0.0);
      for (int i = 1; i <= 10; ++i) e.sweep.push_back(5.0 * i);
      break;
    }
  }
  return e;
}

// ---------------------------------------------------------------------------
// Measurement chain

inline std::size_t find_role(const PulseSchedule& s, const std::string& role) {
  for (std::size_t i = 0; i < s.size(); ++i)
    if (s[i].role == role) return i;
  throw std::invalid_argument("schedule_template has no segment with role \"" + role + "\"");
}

inline void check_experiment(const Experiment& e) {
  e.device.check();
  e.receiver.check();
  if (e.sweep.empty()) throw std::invalid_argument("sweep grid is empty");
  if (e.shots < 2) throw std::invalid_argument("shots must be >= 2");
  if (!(e.repetition_rate > 0.0)) throw std::invalid_argument("repetition_rate must be > 0");
  if (!(e.level > 0.0 && e.level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  if (e.resamples < 200) throw std::invalid_argument("resamples must be >= 200");
  const std::size_t amp = find_role(e.schedule_template, "amplify");
  const std::size_t xfer = find_role(e.schedule_template, "transfer");
  if (xfer != e.schedule_template.size() - 1 || amp + 1 != xfer)
    throw std::invalid_argument("schedule_template must end with the amplify and transfer segments");
  for (std::size_t i = 0; i < amp; ++i)
    if (e.schedule_template[i].role != "prepare")
      throw std::invalid_argument("segments before amplify must have role \"prepare\"");
}

/// A fixed preparation + readout chain.
struct Chain {
  std::vector<Transition> prepare;
  Transition amplify;
  Readout readout;
  PumpSegment amplify_segment;

  Chain(const PulseSchedule& schedule, const DeviceParams& dev, const ReceiverParams& rx, Theory theory,
        const FullTheoryOptions& full, bool with_preparation)
      : readout({undetuned(schedule[schedule.size() - 2]), undetuned(schedule.back())}, dev, rx),
        amplify_segment(schedule[schedule.size() - 2]) {
    if (with_preparation)
      for (std::size_t i = 0; i + 2 < schedule.size(); ++i)
        prepare.push_back(segment_transition(schedule[i], dev, theory, full));
    amplify = segment_transition(amplify_segment, dev, theory, full);
  }

  /// Input-referred added noise of each extracted quadrature: amplifier
  /// noise plus receiver noise.
  Vec2 added_noise() const {
    const Mat2 rcv = receiver_added_noise(readout);
    Vec2 a;
    for (int q = 0; q < 2; ++q)
      a(q) = (amplify.noise(q, q) + rcv(q, q) * readout.gain()) / amplify.phi.row(q).squaredNorm();
    return a;
  }

  /// Covariance after preparation.
  Mat2 prepared(const Mat2& cov) const {
    Mat2 g = cov;
    for (const auto& t : prepare) g = t.apply(g);
    return g;
  }
};

/// Extracted, phase-corrected quadrature pairs of `shots` repetitions.
inline std::vector<Vec2> measure(const Chain& chain, const GaussianState& input, double angle, std::size_t shots,
                                 std::uint64_t seed, unsigned threads, double repetition_rate) {
  const Mat2 l0 = psd_sqrt(input.cov());
  std::vector<Mat2> lp;
  for (const auto& t : chain.prepare) lp.push_back(psd_sqrt(t.noise));
  const Mat2 la = psd_sqrt(chain.amplify.noise);
  const Mat2 rot = rotation(angle);
  const double scale = 1.0 / std::sqrt(chain.readout.gain());
  const ReceiverParams& rx = chain.readout.receiver();
  std::vector<Vec2> out(shots);
  parallel_for(shots, threads, [&](std::size_t i) {
    Rng rng(seed, Stream::preparation, i);
    auto z = [&] { return Vec2(rng.normal(), rng.normal()); };
    Vec2 x = input.mean() + l0 * z();
    for (std::size_t k = 0; k < chain.prepare.size(); ++k) x = chain.prepare[k].phi * x + lp[k] * z();
    x = rot * x;
    x = chain.amplify.phi * x + la * z();
    const double t0 = static_cast<double>(i) / repetition_rate;
    ShotRecord rec = synthesize_trace(scale * x, chain.readout, derive_seed(seed, Stream::receiver, i), angle, t0);
    out[i] = correct_phase(extract_quadratures(rec, chain.readout), t0, rx);
  });
  return out;
}

namespace detail {

inline double db_or_missing(double v) { return v > 0.0 ? to_db(v) : missing; }

inline double component_variance(const std::vector<Vec2>& xs, int q) {
  std::vector<double> v;
  v.reserve(xs.size());
  for (const auto& x : xs) v.push_back(x(q));
  return sample_variance(v);
}

inline std::vector<Vec2> resample(const std::vector<Vec2>& xs, Rng& rng) {
  std::vector<Vec2> out(xs.size());
  for (auto& o : out) o = xs[rng.index_below(xs.size())];
  return out;
}

inline std::uint64_t point_seed(std::uint64_t seed, std::size_t point, std::size_t sub) {
  return derive_seed(seed, Stream::dataset, 16 * point + sub);
}

inline nlohmann::ordered_json device_json(const DeviceParams& d) {
  return {{"omega_c_hz", to_hz(d.omega_c)}, {"kappa_hz", to_hz(d.kappa)},   {"kappa_ext_hz", to_hz(d.kappa_ext)},
          {"omega_m_hz", to_hz(d.omega_m)}, {"gamma_m_hz", to_hz(d.gamma_m)}, {"g0_hz", to_hz(d.g0)},
          {"n_m", d.n_m},                   {"n_c", d.n_c}};
}

inline nlohmann::ordered_json schedule_json(const PulseSchedule& s) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (const auto& seg : s)
    a.push_back({{"role", seg.role},
                 {"duration_s", seg.duration},
                 {"gamma_plus_hz", to_hz(seg.gamma_plus)},
                 {"gamma_minus_hz", to_hz(seg.gamma_minus)},
                 {"delta_0_hz", to_hz(seg.delta_0)},
                 {"delta_m_hz", to_hz(seg.delta_m)},
                 {"envelope_sigma_s", seg.envelope_sigma}});
  return a;
}

inline nlohmann::ordered_json header(const Experiment& e) {
  nlohmann::ordered_json j;
  j["schema_version"] = 1;
  j["experiment"] = to_string(e.kind);
  j["seed"] = e.seed;
  j["shots"] = e.shots;
  j["theory"] = to_string(e.theory);
  j["device"] = device_json(e.device);
  j["receiver"] = {{"omega_het_hz", to_hz(e.receiver.omega_het)},
                   {"sample_rate", e.receiver.sample_rate},
                   {"g_tot", e.receiver.g_tot},
                   {"n_hemt", e.receiver.n_hemt},
                   {"phase_drift_rate_hz", to_hz(e.receiver.phase_drift_rate)}};
  j["schedule"] = schedule_json(e.schedule_template);
  return j;
}

inline double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

/// Table as JSON rows; dB columns rounded to 3 decimals, NaN as null.
inline nlohmann::ordered_json table_json(const Table& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    nlohmann::ordered_json o;
    for (std::size_t i = 0; i < t.columns.size(); ++i) {
      const double v = r[i];
      if (std::isnan(v))
        o[t.columns[i].name] = nullptr;
      else
        o[t.columns[i].name] = t.columns[i].kind == ColumnKind::db ? round3(v) : v;
    }
    rows.push_back(o);
  }
  return rows;
}

inline std::string fmt(double v, int digits = 3) {
  if (std::isnan(v)) return "nan";
  std::ostringstream s;
  s << std::fixed << std::setprecision(digits) << v;
  return s.str();
}

inline Table make_table(const std::vector<std::pair<std::string, ColumnKind>>& cols) {
  Table t;
  for (const auto& [n, k] : cols) t.columns.push_back({n, k});
  return t;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Theory-only curves

inline Table added_noise_theory(const Experiment& e) {
  using K = ColumnKind;
  Table t = detail::make_table({{"ratio", K::value},
                                {"ideal_minus_db", K::db},
                                {"ideal_plus_db", K::db},
                                {"full_minus_db", K::db},
                                {"full_plus_db", K::db},
                                {"ideal_minus", K::value},
                                {"ideal_plus", K::value},
                                {"full_minus", K::value},
                                {"full_plus", K::value},
                                {"rwa_minus", K::value},
                                {"rwa_plus", K::value}});
  const PumpSegment amp = e.schedule_template[find_role(e.schedule_template, "amplify")];
  for (double r : e.sweep) {
    PumpSegment s = undetuned(with_ratio(amp, r));
    const double im = added_noise_ideal(s, e.device, Quadrature::minus);
    const double ip = added_noise_ideal(s, e.device, Quadrature::plus);
    // same pulse length, rotating-wave model
    const Vec2 w = added_noise_referred(s, e.device, Theory::ideal);
    s.delta_m = e.overlay.delta_m;
    s.delta_0 = e.overlay.delta_0;
    const Vec2 f = added_noise_referred(s, e.device, Theory::full, e.full);
    t.add_row({r, to_db(im), to_db(ip), to_db(f(0)), to_db(f(1)), im, ip, f(0), f(1), w(0), w(1)});
  }
  t.plot = {"ratio", {"ideal_minus_db", "full_minus_db"}, "Gamma+/Gamma-", "added noise (dB rel. zero point)", true, {}, {}};
  return t;
}

inline std::pair<double, double> eigen_variances(const Mat2& g) {
  const Eigen::SelfAdjointEigenSolver<Mat2> es(g);
  return {es.eigenvalues()(0), es.eigenvalues()(1)};
}

inline Table squeeze_theory(const Experiment& e) {
  using K = ColumnKind;
  Table t = detail::make_table({{"ratio", K::value},
                                {"ideal_minus_db", K::db},
                                {"ideal_plus_db", K::db},
                                {"full_minus_db", K::db},
                                {"full_plus_db", K::db},
                                {"ideal_minus", K::value},
                                {"ideal_plus", K::value},
                                {"full_minus", K::value},
                                {"full_plus", K::value}});
  const PumpSegment prep = e.schedule_template[find_role(e.schedule_template, "prepare")];
  const GaussianState therm = GaussianState::thermal(e.device.n_m);
  for (double r : e.sweep) {
    PumpSegment s = undetuned(with_ratio(prep, r));
    const double im = squeezed_variance_ideal(s, e.device, Quadrature::minus);
    const double ip = squeezed_variance_ideal(s, e.device, Quadrature::plus);
    s.delta_m = e.overlay.delta_m;
    s.delta_0 = e.overlay.delta_0;
    const auto [fm, fp] = eigen_variances(evolve(therm, {s}, e.device, Theory::full, e.full).cov());
    t.add_row({r, to_db(im), to_db(ip), to_db(fm), to_db(fp), im, ip, fm, fp});
  }
  t.plot = {"ratio", {"ideal_minus_db", "ideal_plus_db", "full_minus_db", "full_plus_db"}, "Gamma+/Gamma-",
            "variance (dB rel. zero point)", true, {}, {}};
  return t;
}

inline GaussianState input_state(const Experiment& e) {
  if (e.input_state) return {Vec2::Zero(), squeeze_to_covariance(*e.input_state)};
  return GaussianState::thermal(e.device.n_m);
}

inline Table direct_variance_theory(const Experiment& e) {
  using K = ColumnKind;
  Table t = detail::make_table({{"phi", K::value}, {"model_db", K::db}, {"model", K::value}});
  const Chain chain(e.schedule_template, e.device, e.receiver, e.theory, e.full, true);
  const Mat2 g = chain.prepared(input_state(e).cov());
  const double a = chain.added_noise()(0);
  for (double phi : e.sweep) {
    const double v = axis(phi).dot(g * axis(phi)) + a;
    t.add_row({phi, to_db(v), v});
  }
  t.plot = {"phi", {"model_db"}, "measurement angle (rad)", "total variance (dB rel. zero point)", false, {}, {}};
  return t;
}

inline Table thermal_theory(const Experiment& e) {
  using K = ColumnKind;
  Table t = detail::make_table({{"n_m", K::value}, {"model_variance", K::value}});
  for (double n : e.sweep) {
    DeviceParams d = e.device;
    d.n_m = n;
    const Chain chain(e.schedule_template, d, e.receiver, e.theory, e.full, false);
    const Vec2 a = chain.added_noise();
    t.add_row({n, n + 0.5 + 0.5 * (a(0) + a(1))});
  }
  t.plot = {"n_m", {"model_variance"}, "bath occupancy n_m", "variance (quanta)", false, {}, {}};
  return t;
}

inline ExperimentResult run_theory(const Experiment& e) {
  check_experiment(e);
  ExperimentResult res;
  res.name = to_string(e.kind);
  res.doc = detail::header(e);
  res.doc["mode"] = "theory";
  switch (e.kind) {
    case ExperimentKind::added_noise_sweep: {
      res.table = added_noise_theory(e);
      const auto m = minimum_on_grid(res.table.column("ratio"), res.table.column("ideal_minus"));
      res.summary = "added_noise_sweep theory: ideal min <dX_add,-^2> = " + detail::fmt(to_db(m.value)) +
                    " dB at ratio " + detail::fmt(m.x);
      break;
    }
    case ExperimentKind::squeeze_sweep: {
      res.table = squeeze_theory(e);
      const auto m = minimum_on_grid(res.table.column("ratio"), res.table.column("ideal_minus"));
      res.summary = "squeeze_sweep theory: ideal min <dX_sq,-^2> = " + detail::fmt(to_db(m.value)) + " dB at ratio " +
                    detail::fmt(m.x);
      break;
    }
    case ExperimentKind::tomography_run:
    case ExperimentKind::direct_variance_vs_angle: {
      res.table = direct_variance_theory(e);
      const auto m = minimum_on_grid(res.table.column("phi"), res.table.column("model"));
      res.summary = std::string(to_string(e.kind)) + " theory: min total variance = " + detail::fmt(to_db(m.value)) +
                    " dB at phi " + detail::fmt(m.x);
      break;
    }
    case ExperimentKind::thermal_sweep: {
      res.table = thermal_theory(e);
      const Chain chain(e.schedule_template, e.device, e.receiver, e.theory, e.full, false);
      const Vec2 a = chain.added_noise();
      res.summary = "thermal_sweep theory: n_add = " + detail::fmt(0.5 * (a(0) + a(1)) - 0.5, 4) + " quanta";
      break;
    }
  }
  res.doc["rows"] = detail::table_json(res.table);
  res.doc["summary"] = res.summary;
  return res;
}

// ---------------------------------------------------------------------------
// Simulated experiments

inline double n_sb_assumed(const Experiment& e, const PumpSegment& cool) {
  return e.n_sb_assumed ? *e.n_sb_assumed : n_sb_min(cool, e.device);
}

inline ExperimentResult run_added_noise_sweep(const Experiment& e) {
  check_experiment(e);
  if (e.kind != ExperimentKind::added_noise_sweep) throw std::invalid_argument("experiment is not an added_noise_sweep");
  using K = ColumnKind;
  ExperimentResult res;
  res.name = to_string(e.kind);
  Table t = detail::make_table({{"ratio", K::value},
                                {"add_noise_minus_db", K::db},
                                {"add_noise_plus_db", K::db},
                                {"ci_low", K::db},
                                {"ci_high", K::db},
                                {"ci_plus_low", K::db},
                                {"ci_plus_high", K::db},
                                {"model_minus_db", K::db},
                                {"model_plus_db", K::db},
                                {"ideal_minus_db", K::db},
                                {"ideal_plus_db", K::db},
                                {"full_minus_db", K::db},
                                {"full_plus_db", K::db},
                                {"add_noise_minus", K::value},
                                {"add_noise_plus", K::value},
                                {"ci_low_quanta", K::value},
                                {"ci_high_quanta", K::value},
                                {"ci_plus_low_quanta", K::value},
                                {"ci_plus_high_quanta", K::value},
                                {"model_minus", K::value},
                                {"model_plus", K::value}});
  const Table theory = added_noise_theory(e);
  const std::size_t amp_i = find_role(e.schedule_template, "amplify");
  const PumpSegment cool = e.schedule_template[find_role(e.schedule_template, "prepare")];
  const double nsb = n_sb_assumed(e, cool);
  const GaussianState therm = GaussianState::thermal(e.device.n_m);
  nlohmann::ordered_json records = nlohmann::ordered_json::array();

  for (std::size_t p = 0; p < e.sweep.size(); ++p) {
    PulseSchedule s = e.schedule_template;
    s[amp_i] = with_ratio(s[amp_i], e.sweep[p]);
    const Chain cooled_chain(s, e.device, e.receiver, e.theory, e.full, true);
    const Chain therm_chain(s, e.device, e.receiver, e.theory, e.full, false);
    const auto xt = measure(therm_chain, therm, 0.0, e.shots, detail::point_seed(e.seed, p, 0), e.threads, e.repetition_rate);
    const auto xc = measure(cooled_chain, therm, 0.0, e.shots, detail::point_seed(e.seed, p, 1), e.threads, e.repetition_rate);
    const Vec2 model = cooled_chain.added_noise();
    double est[2];
    Interval ci[2];
    for (int q = 0; q < 2; ++q) {
      est[q] = infer_added_noise(detail::component_variance(xt, q), detail::component_variance(xc, q), e.device.n_m, nsb);
      const std::uint64_t bseed = detail::point_seed(e.seed, p, 2 + q);
      ci[q] = bootstrap_percentile(e.resamples, e.level, e.threads, [&](std::size_t b) -> std::optional<double> {
        Rng rng(bseed, Stream::bootstrap, b);
        const auto rt = detail::resample(xt, rng);
        const auto rc = detail::resample(xc, rng);
        return infer_added_noise(detail::component_variance(rt, q), detail::component_variance(rc, q), e.device.n_m, nsb);
      });
      const std::string op = "ratio=" + detail::fmt(e.sweep[p], 4);
      records.push_back(CalibrationRecord{op, q == 0 ? "minus" : "plus", est[q], ci[q].low, ci[q].high, "y_factor"}.to_json());
    }
    const auto& th = theory.rows[p];
    using detail::db_or_missing;
    t.add_row({e.sweep[p], db_or_missing(est[0]), db_or_missing(est[1]), db_or_missing(ci[0].low),
               db_or_missing(ci[0].high), db_or_missing(ci[1].low), db_or_missing(ci[1].high), to_db(model(0)),
               to_db(model(1)), th[1], th[2], th[3], th[4], est[0], est[1], ci[0].low, ci[0].high, ci[1].low,
               ci[1].high, model(0), model(1)});
  }
  t.plot = {"ratio",
            {"add_noise_minus_db", "model_minus_db", "ideal_minus_db", "full_minus_db"},
            "Gamma+/Gamma-",
            "added noise (dB rel. zero point)",
            true,
            {"ci_low", "", "", ""},
            {"ci_high", "", "", ""}};
  res.table = std::move(t);
  res.doc = detail::header(e);
  res.doc["n_sb_assumed"] = nsb;
  res.doc["n_sb_note"] = "n_sb and n_add are not separable; the inference assumes n_sb = n_sb_assumed";
  res.doc["rows"] = detail::table_json(res.table);
  res.doc["records"] = records;
  const auto m = minimum_on_grid(res.table.column("ratio"), res.table.column("add_noise_minus"));
  const auto mi = minimum_on_grid(res.table.column("ratio"), res.table.column("ideal_minus_db"));
  res.summary = "added_noise_sweep: min <dX_add,-^2> = " + detail::fmt(detail::db_or_missing(m.value)) +
                " dB at ratio " + detail::fmt(m.x) + " (ideal theory min " + detail::fmt(mi.value) + " dB)";
  res.doc["summary"] = res.summary;
  return res;
}

inline ExperimentResult run_squeeze_sweep(const Experiment& e) {
  check_experiment(e);
  if (e.kind != ExperimentKind::squeeze_sweep) throw std::invalid_argument("experiment is not a squeeze_sweep");
  using K = ColumnKind;
  ExperimentResult res;
  res.name = to_string(e.kind);
  Table t = detail::make_table({{"ratio", K::value},
                                {"sq_minus_db", K::db},
                                {"sq_plus_db", K::db},
                                {"ci_low", K::db},
                                {"ci_high", K::db},
                                {"ci_plus_low", K::db},
                                {"ci_plus_high", K::db},
                                {"model_minus_db", K::db},
                                {"model_plus_db", K::db},
                                {"ideal_minus_db", K::db},
                                {"ideal_plus_db", K::db},
                                {"full_minus_db", K::db},
                                {"full_plus_db", K::db},
                                {"sq_minus", K::value},
                                {"sq_plus", K::value},
                                {"ci_low_quanta", K::value},
                                {"ci_high_quanta", K::value},
                                {"ci_plus_low_quanta", K::value},
                                {"ci_plus_high_quanta", K::value},
                                {"model_minus", K::value},
                                {"model_plus", K::value}});
  const Table theory = squeeze_theory(e);
  const std::size_t prep_i = find_role(e.schedule_template, "prepare");
  const PumpSegment amp = e.schedule_template[find_role(e.schedule_template, "amplify")];
  if (amp.gamma_minus != 0.0) throw std::invalid_argument("squeeze_sweep needs a two-quadrature readout (amplify gamma_minus = 0)");
  const double nadd = n_add_min(amp, e.device);
  const GaussianState therm = GaussianState::thermal(e.device.n_m);
  nlohmann::ordered_json records = nlohmann::ordered_json::array();

  auto infer = [&](const std::vector<Vec2>& xt, const std::vector<Vec2>& xs) {
    const double vt = 0.5 * sample_covariance(xt).trace();
    const auto [vmin, vmax] = eigen_variances(sample_covariance(xs));
    return infer_squeezing(vt, vmax, vmin, e.device.n_m, nadd);
  };

  for (std::size_t p = 0; p < e.sweep.size(); ++p) {
    PulseSchedule s = e.schedule_template;
    s[prep_i] = with_ratio(s[prep_i], e.sweep[p]);
    const Chain sq_chain(s, e.device, e.receiver, e.theory, e.full, true);
    const Chain therm_chain(s, e.device, e.receiver, e.theory, e.full, false);
    const auto xt = measure(therm_chain, therm, 0.0, e.shots, detail::point_seed(e.seed, p, 0), e.threads, e.repetition_rate);
    const auto xs = measure(sq_chain, therm, 0.0, e.shots, detail::point_seed(e.seed, p, 1), e.threads, e.repetition_rate);
    const auto [sm, sp] = infer(xt, xs);
    const std::uint64_t bseed = detail::point_seed(e.seed, p, 2);
    const auto ci = bootstrap_percentiles(e.resamples, e.level, e.threads, [&](std::size_t b) -> std::optional<std::vector<double>> {
      Rng rng(bseed, Stream::bootstrap, b);
      const auto rt = detail::resample(xt, rng);
      const auto rs = detail::resample(xs, rng);
      const auto [a, c] = infer(rt, rs);
      return std::vector<double>{a, c};
    });
    const auto [mm, mp] = eigen_variances(sq_chain.prepared(therm.cov()));
    const std::string op = "ratio=" + detail::fmt(e.sweep[p], 4);
    records.push_back(CalibrationRecord{op, "minus", sm, ci[0].low, ci[0].high, "y_factor_two_quadrature"}.to_json());
    records.push_back(CalibrationRecord{op, "plus", sp, ci[1].low, ci[1].high, "y_factor_two_quadrature"}.to_json());
    const auto& th = theory.rows[p];
    using detail::db_or_missing;
    t.add_row({e.sweep[p], db_or_missing(sm), db_or_missing(sp), db_or_missing(ci[0].low), db_or_missing(ci[0].high),
               db_or_missing(ci[1].low), db_or_missing(ci[1].high), to_db(mm), to_db(mp), th[1], th[2], th[3], th[4], sm,
               sp, ci[0].low, ci[0].high, ci[1].low, ci[1].high, mm, mp});
  }
  t.plot = {"ratio",
            {"sq_minus_db", "sq_plus_db", "model_minus_db", "ideal_minus_db", "full_minus_db"},
            "Gamma+/Gamma-",
            "variance (dB rel. zero point)",
            true,
            {"ci_low", "ci_plus_low", "", "", ""},
            {"ci_high", "ci_plus_high", "", "", ""}};
  res.table = std::move(t);
  res.doc = detail::header(e);
  res.doc["n_add_assumed"] = nadd;
  res.doc["rows"] = detail::table_json(res.table);
  res.doc["records"] = records;
  const auto m = minimum_on_grid(res.table.column("ratio"), res.table.column("sq_minus"));
  const auto mi = minimum_on_grid(res.table.column("ratio"), res.table.column("ideal_minus_db"));
  res.summary = "squeeze_sweep: min <dX_sq,-^2> = " + detail::fmt(detail::db_or_missing(m.value)) + " dB at ratio " +
                detail::fmt(m.x) + " (ideal theory min " + detail::fmt(mi.value) + " dB)";
  res.doc["summary"] = res.summary;
  return res;
}

/// Least-squares fit v(phi) = c0 + c1 cos 2phi + c2 sin 2phi; returns the
/// fitted minimum c0 - |(c1, c2)| and its angle.
inline CurveMinimum fit_pi_periodic_minimum(const std::vector<double>& phi, const std::vector<double>& v) {
  if (phi.size() < 3 || phi.size() != v.size()) throw std::invalid_argument("periodic fit needs at least 3 points");
  Eigen::MatrixXd a(phi.size(), 3);
  Eigen::VectorXd y(phi.size());
  for (std::size_t i = 0; i < phi.size(); ++i) {
    a(i, 0) = 1.0;
    a(i, 1) = std::cos(2.0 * phi[i]);
    a(i, 2) = std::sin(2.0 * phi[i]);
    y(i) = v[i];
  }
  const Eigen::Vector3d c = a.colPivHouseholderQr().solve(y);
  const double amp = std::hypot(c(1), c(2));
  double at = 0.5 * (std::atan2(c(2), c(1)) + std::numbers::pi);
  at = std::fmod(at, std::numbers::pi);
  return {at, c(0) - amp};
}

inline ExperimentResult run_direct_variance_vs_angle(const Experiment& e) {
  check_experiment(e);
  if (e.kind != ExperimentKind::direct_variance_vs_angle) throw std::invalid_argument("experiment is not a direct_variance_vs_angle");
  using K = ColumnKind;
  const PumpSegment amp = e.schedule_template[find_role(e.schedule_template, "amplify")];
  if (!(amp.gamma_plus > amp.gamma_minus && amp.gamma_minus > 0.0))
    throw std::invalid_argument("direct variance needs a single-quadrature readout (gamma_plus > gamma_minus > 0)");
  ExperimentResult res;
  res.name = to_string(e.kind);
  Table t = detail::make_table({{"phi", K::value},
                                {"total_variance_db", K::db},
                                {"ci_low", K::db},
                                {"ci_high", K::db},
                                {"model_db", K::db},
                                {"total_variance", K::value},
                                {"ci_low_quanta", K::value},
                                {"ci_high_quanta", K::value},
                                {"model", K::value}});
  const Chain chain(e.schedule_template, e.device, e.receiver, e.theory, e.full, true);
  const Chain therm_chain(e.schedule_template, e.device, e.receiver, e.theory, e.full, false);
  const GaussianState therm = GaussianState::thermal(e.device.n_m);
  const GaussianState input = input_state(e);
  const Mat2 g = chain.prepared(input.cov());
  const double a = chain.added_noise()(0);
  const double nm = e.device.n_m;
  const auto xt = measure(therm_chain, therm, 0.0, e.shots, detail::point_seed(e.seed, e.sweep.size(), 0), e.threads,
                          e.repetition_rate);
  const double vt = detail::component_variance(xt, 0);
  std::vector<double> phis, values;
  for (std::size_t p = 0; p < e.sweep.size(); ++p) {
    const double phi = e.sweep[p];
    const auto xs = measure(chain, input, phi, e.shots, detail::point_seed(e.seed, p, 0), e.threads, e.repetition_rate);
    const double v = direct_total_variance(vt, detail::component_variance(xs, 0), nm);
    const std::uint64_t bseed = detail::point_seed(e.seed, p, 1);
    const Interval ci = bootstrap_percentile(e.resamples, e.level, e.threads, [&](std::size_t b) -> std::optional<double> {
      Rng rng(bseed, Stream::bootstrap, b);
      const auto rt = detail::resample(xt, rng);
      const auto rs = detail::resample(xs, rng);
      return direct_total_variance(detail::component_variance(rt, 0), detail::component_variance(rs, 0), nm);
    });
    const double model = (nm + 0.5) * (axis(phi).dot(g * axis(phi)) + a) / (nm + 0.5 + a);
    t.add_row({phi, to_db(v), to_db(ci.low), to_db(ci.high), to_db(model), v, ci.low, ci.high, model});
    phis.push_back(phi);
    values.push_back(v);
  }
  t.plot = {"phi", {"total_variance_db", "model_db"}, "measurement angle (rad)", "total variance (dB rel. zero point)",
            false, {"ci_low", ""}, {"ci_high", ""}};
  res.table = std::move(t);
  res.doc = detail::header(e);
  if (e.input_state)
    res.doc["input_state"] = {{"r", e.input_state->r}, {"n_sq", e.input_state->n_sq}, {"phi", e.input_state->phi}};
  res.doc["added_noise_model"] = a;
  res.doc["rows"] = detail::table_json(res.table);
  const auto grid_min = minimum_on_grid(phis, values);
  res.doc["grid_min_db"] = detail::round3(to_db(grid_min.value));
  res.doc["grid_min_phi"] = grid_min.x;
  std::string fit_text = "";
  if (phis.size() >= 3) {
    const auto fit = fit_pi_periodic_minimum(phis, values);
    res.doc["fitted_min_db"] = fit.value > 0.0 ? nlohmann::ordered_json(detail::round3(to_db(fit.value))) : nlohmann::ordered_json(nullptr);
    res.doc["fitted_min_phi"] = fit.x;
    fit_text = ", fitted " + detail::fmt(detail::db_or_missing(fit.value)) + " dB at phi " + detail::fmt(fit.x);
  }
  res.summary = "direct_variance_vs_angle: min total variance = " + detail::fmt(to_db(grid_min.value)) + " dB at phi " +
                detail::fmt(grid_min.x) + fit_text;
  res.doc["summary"] = res.summary;
  return res;
}

struct TomographyRun {
  MarginalDataset data;
  ReconstructionResult result;
  Mat2 truth;  ///< covariance of the measured state
  double eta_q = 1.0;
};

/// Collects marginals through the readout chain and reconstructs them.
inline TomographyRun tomography_pipeline(const Experiment& e) {
  check_experiment(e);
  const PumpSegment amp = e.schedule_template[find_role(e.schedule_template, "amplify")];
  if (!(amp.gamma_plus > amp.gamma_minus && amp.gamma_minus > 0.0))
    throw std::invalid_argument("tomography needs a single-quadrature readout (gamma_plus > gamma_minus > 0)");
  const Chain chain(e.schedule_template, e.device, e.receiver, e.theory, e.full, true);
  const GaussianState input = input_state(e);
  TomographyRun run;
  run.truth = chain.prepared(input.cov());
  run.eta_q = e.eta_q ? *e.eta_q : quantum_efficiency(chain.added_noise()(0));
  run.data.eta_q = run.eta_q;
  for (std::size_t p = 0; p < e.sweep.size(); ++p) {
    const auto xs = measure(chain, input, e.sweep[p], e.shots, detail::point_seed(e.seed, p, 0), e.threads, e.repetition_rate);
    for (const auto& x : xs) run.data.points.push_back({e.sweep[p], x(0)});
  }
  TomographyOptions opt;
  opt.resamples = e.resamples;
  opt.level = e.level;
  opt.fock_levels = e.fock_levels;
  opt.seed = derive_seed(e.seed, Stream::bootstrap, 0);
  opt.threads = e.threads;
  run.result = reconstruct(run.data, opt);
  return run;
}

inline ExperimentResult run_tomography(const Experiment& e) {
  if (e.kind != ExperimentKind::tomography_run) throw std::invalid_argument("experiment is not a tomography_run");
  const TomographyRun run = tomography_pipeline(e);
  const ReconstructionResult& r = run.result;
  using K = ColumnKind;
  ExperimentResult res;
  res.name = to_string(e.kind);
  Table t = detail::make_table({{"n", K::value}, {"P_n", K::value}, {"ci_low", K::value}, {"ci_high", K::value}});
  const std::size_t nf = std::max(r.fock_ci.size(), std::min<std::size_t>(e.fock_levels, r.fock_diag.size()));
  for (std::size_t n = 0; n < nf && n < r.fock_diag.size(); ++n) {
    const double lo = n < r.fock_ci.size() ? r.fock_ci[n].low : missing;
    const double hi = n < r.fock_ci.size() ? r.fock_ci[n].high : missing;
    t.add_row({static_cast<double>(n), r.fock_diag[n], lo, hi});
  }
  t.plot = {"n", {"P_n"}, "Fock state n", "population", false, {"ci_low"}, {"ci_high"}};
  res.table = std::move(t);
  res.doc = detail::header(e);
  res.doc["eta_q"] = run.eta_q;
  res.doc["points"] = run.data.points.size();
  res.doc["reconstruction"] = r.to_json();
  const SqueezeFit truth = covariance_to_squeeze(run.truth);
  res.doc["prepared_state"] = {{"r", truth.params.r}, {"n_sq", truth.params.n_sq}, {"phi", truth.params.phi}};
  res.doc["min_variance_db"] =
      detail::round3(to_db((r.squeeze.n_sq + 0.5) * std::exp(-2.0 * r.squeeze.r)));
  res.doc["fock"] = detail::table_json(res.table);
  res.summary = "tomography_run: r = " + detail::fmt(r.squeeze.r) + ", n_sq = " + detail::fmt(r.squeeze.n_sq) +
                ", phi = " + detail::fmt(r.squeeze.phi) + ", purity = " + detail::fmt(r.purity) +
                ", min variance = " + detail::fmt(res.doc["min_variance_db"].get<double>()) + " dB";
  res.doc["summary"] = res.summary;
  return res;
}

inline ExperimentResult run_thermal_sweep(const Experiment& e) {
  check_experiment(e);
  if (e.kind != ExperimentKind::thermal_sweep) throw std::invalid_argument("experiment is not a thermal_sweep");
  using K = ColumnKind;
  ExperimentResult res;
  res.name = to_string(e.kind);
  Table t = detail::make_table({{"n_m", K::value},
                                {"variance", K::value},
                                {"ci_low", K::value},
                                {"ci_high", K::value},
                                {"model_variance", K::value},
                                {"gain_envelope", K::value},
                                {"gain_model", K::value}});
  std::vector<std::pair<double, double>> pts;
  double model_nadd = 0.0;
  for (std::size_t p = 0; p < e.sweep.size(); ++p) {
    DeviceParams d = e.device;
    d.n_m = e.sweep[p];
    d.check();
    const Chain chain(e.schedule_template, d, e.receiver, e.theory, e.full, false);
    const auto xs = measure(chain, GaussianState::thermal(d.n_m), 0.0, e.shots, detail::point_seed(e.seed, p, 0),
                            e.threads, e.repetition_rate);
    auto stat = [](const std::vector<Vec2>& v) { return 0.5 * sample_covariance(v).trace(); };
    const double v = stat(xs);
    const std::uint64_t bseed = detail::point_seed(e.seed, p, 1);
    const Interval ci = bootstrap_percentile(e.resamples, e.level, e.threads, [&](std::size_t b) -> std::optional<double> {
      Rng rng(bseed, Stream::bootstrap, b);
      return stat(detail::resample(xs, rng));
    });
    const Vec2 a = chain.added_noise();
    model_nadd = 0.5 * (a(0) + a(1)) - 0.5;
    // gain from the envelope of a strong calibration tone
    const double tone = 1e3 * std::sqrt(e.receiver.n_hemt + 0.5);
    const ShotRecord cal = synthesize_trace(Vec2(tone, 0.0), chain.readout, detail::point_seed(e.seed, p, 2));
    double g_env = missing;
    try {
      g_env = gain_from_envelope(cal, chain.readout);
    } catch (const std::domain_error&) {
    }
    t.add_row({d.n_m, v, ci.low, ci.high, d.n_m + 1.0 + model_nadd, g_env, chain.readout.gain()});
    pts.emplace_back(d.n_m, v);
  }
  t.plot = {"n_m", {"variance", "model_variance"}, "bath occupancy n_m", "variance (quanta)", false, {"ci_low", ""},
            {"ci_high", ""}};
  res.table = std::move(t);
  res.doc = detail::header(e);
  res.doc["rows"] = detail::table_json(res.table);
  if (pts.size() >= 3) {
    const ThermalSweepFit f = fit_thermal_sweep(pts);
    res.doc["fit"] = {{"slope", f.slope}, {"intercept", f.intercept}, {"n_add", f.n_add}, {"n_add_se", f.n_add_se}};
    res.summary = "thermal_sweep: n_add = " + detail::fmt(f.n_add, 4) + " +- " + detail::fmt(f.n_add_se, 4) +
                  " quanta (model " + detail::fmt(model_nadd, 4) + ")";
  } else {
    res.summary = "thermal_sweep: fewer than 3 points, no fit";
  }
  res.doc["n_add_model"] = model_nadd;
  res.doc["summary"] = res.summary;
  return res;
}

inline ExperimentResult run_experiment(const Experiment& e) {
  switch (e.kind) {
    case ExperimentKind::added_noise_sweep: return run_added_noise_sweep(e);
    case ExperimentKind::squeeze_sweep: return run_squeeze_sweep(e);
    case ExperimentKind::tomography_run: return run_tomography(e);
    case ExperimentKind::direct_variance_vs_angle: return run_direct_variance_vs_angle(e);
    case ExperimentKind::thermal_sweep: return run_thermal_sweep(e);
  }
  throw std::logic_error("unknown experiment kind");
}

}  // namespace tea
