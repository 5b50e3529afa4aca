#pragma once

// Y-factor calibration algebra: variances of a state of unknown noise are
// compared with those of a thermal state of known occupancy. All variances
// in quanta use the zero-point convention (vacuum = 1/2).

#include "tea/dynamics.hpp"
#include "tea/receiver.hpp"
#include "tea/stats.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace tea {

/// Variance in dB relative to zero-point motion.
inline double to_db(double v) {
  if (!(v > 0.0)) throw std::domain_error("to_db needs a positive variance");
  return 10.0 * std::log10(v / zero_point_variance);
}

inline double from_db(double db) { return zero_point_variance * std::pow(10.0, db / 10.0); }

/// eta_q = 1 / (1 + 2 <dX_add^2>).
inline double quantum_efficiency(double added_noise) { return 1.0 / (1.0 + 2.0 * added_noise); }

/// n_sb + n_add from the thermal/cooled ratio r, neglecting n_add against n_m.
inline double residual_occupancy(double r, double n_m) {
  if (!(r > 1.0)) throw std::domain_error("residual occupancy needs a variance ratio r > 1");
  return (n_m + 1.0) / r - 1.0;
}

struct SidebandLimits {
  double n_sb_min = 0.0;   ///< occupancy after sideband cooling
  double n_add_min = 0.0;  ///< added occupancy of phase-insensitive amplification
};

inline double sideband_resolution_floor(const DeviceParams& dev) {
  return dev.kappa * dev.kappa / (16.0 * dev.omega_m * dev.omega_m);
}

inline double n_sb_min(const PumpSegment& cool, const DeviceParams& dev) {
  if (!(cool.gamma_minus > dev.gamma_m)) throw std::domain_error("sideband cooling limit needs gamma_minus > gamma_m");
  return dev.gamma_m * dev.n_m / (cool.gamma_minus + dev.gamma_m) + sideband_resolution_floor(dev);
}

inline double n_add_min(const PumpSegment& amp, const DeviceParams& dev) {
  if (!(amp.gamma_plus > dev.gamma_m)) throw std::domain_error("amplifier added-noise limit needs gamma_plus > gamma_m");
  return dev.gamma_m * dev.n_m / (amp.gamma_plus - dev.gamma_m) + sideband_resolution_floor(dev);
}

inline SidebandLimits sideband_limits(const PumpSegment& cool, const PumpSegment& amp, const DeviceParams& dev) {
  return {n_sb_min(cool, dev), n_add_min(amp, dev)};
}

/// Solves r = (n_m + 1/2 + a) / (n_sb + 1/2 + a) for the added noise a of one
/// quadrature, r = var_therm / var_cooled.
inline double infer_added_noise(double var_therm, double var_cooled, double n_m, double n_sb_assumed,
                                Quadrature = Quadrature::minus) {
  if (!(var_cooled > 0.0 && var_therm > var_cooled))
    throw std::domain_error("added-noise inference needs var_therm > var_cooled > 0");
  const double r = var_therm / var_cooled;
  const double a = (n_m + 0.5 - r * (n_sb_assumed + 0.5)) / (r - 1.0);
  if (!(n_sb_assumed + 0.5 + a > 0.0))
    throw inconsistent_calibration("variance ratio " + std::to_string(r) + " implies a cooled-state variance <= 0");
  return a;
}

/// Forward model of infer_added_noise: the ratio a noiseless measurement of
/// the two preparations would give.
inline double added_noise_ratio(double added, double n_m, double n_sb) {
  return (n_m + 0.5 + added) / (n_sb + 0.5 + added);
}

/// Squeezed and anti-squeezed variances from a two-quadrature (phase
/// insensitive) measurement: r = (n_m + n_add + 1) / (<dX_sq^2> + n_add + 1/2).
inline std::pair<double, double> infer_squeezing(double var_therm, double var_sq_max, double var_sq_min, double n_m,
                                                 double n_add) {
  if (!(var_therm > 0.0 && var_sq_max > 0.0 && var_sq_min > 0.0))
    throw std::domain_error("squeezing inference needs positive variances");
  auto solve = [&](double v) { return (n_m + n_add + 1.0) * v / var_therm - n_add - 0.5; };
  return {solve(var_sq_min), solve(var_sq_max)};
}

inline std::pair<double, double> infer_squeezing(double var_therm, double var_sq_max, double var_sq_min, double n_m,
                                                 const PumpSegment& seg_amp, const DeviceParams& dev) {
  if (!(seg_amp.gamma_minus == 0.0)) throw std::domain_error("squeezing inference needs a two-quadrature readout (gamma_minus = 0)");
  return infer_squeezing(var_therm, var_sq_max, var_sq_min, n_m, n_add_min(seg_amp, dev));
}

inline double squeezing_ratio(double squeezed, double n_m, double n_add) {
  return (n_m + n_add + 1.0) / (squeezed + n_add + 0.5);
}

/// Total variance (state plus added noise) from a single-quadrature direct
/// measurement, without subtraction: <dX_therm^2> / r(phi).
inline double direct_total_variance(double var_therm, double var_state, double n_m) {
  if (!(var_therm > 0.0 && var_state > 0.0)) throw std::domain_error("direct variance needs positive variances");
  return (n_m + 0.5) * var_state / var_therm;
}

struct EnvelopeFit {
  double rate = 0.0;  ///< fitted amplitude growth rate (1/s); negative for decay
  double rate_se = 0.0;
  std::size_t blocks = 0;
};

/// Growth rate of the demodulated amplitude in one window: a least-squares
/// amplitude per heterodyne period (with a linear envelope slope), then a fit of log amplitude against
/// time weighted by amplitude^2.
inline EnvelopeFit fit_envelope_rate(const ShotRecord& rec, const Readout& ro, Window window) {
  const ReceiverParams& rx = ro.receiver();
  const auto [first, last] = ro.range(window);
  const double span = static_cast<double>(last - first) / rx.sample_rate;
  if (span * rx.omega_het / two_pi < 10.0) throw std::domain_error("window holds fewer than 10 heterodyne periods");
  if (rec.samples.size() < last) throw std::out_of_range("record shorter than the fit window");
  const auto block = std::max<std::size_t>(4, static_cast<std::size_t>(std::llround(two_pi * rx.sample_rate / rx.omega_het)));
  std::vector<double> t, y, w;
  for (std::size_t b = first; b + block <= last; b += block) {
    const double tc = ro.time(b) + 0.5 * static_cast<double>(block - 1) / rx.sample_rate;
    Eigen::Matrix4d m = Eigen::Matrix4d::Zero();
    Eigen::Vector4d v = Eigen::Vector4d::Zero();
    for (std::size_t k = b; k < b + block; ++k) {
      const double ph = rx.omega_het * ro.time(k);
      const double dt = (ro.time(k) - tc) * rx.omega_het;
      const Eigen::Vector4d r(std::cos(ph), std::sin(ph), dt * std::cos(ph), dt * std::sin(ph));
      m += r * r.transpose();
      v += r * rec.samples[k];
    }
    const double amp = m.ldlt().solve(v).head<2>().norm();
    if (!(amp > 0.0)) continue;
    t.push_back(tc);
    y.push_back(std::log(amp));
    w.push_back(amp * amp);
  }
  if (t.size() < 3) throw std::domain_error("too few demodulated blocks for an envelope fit");
  const LineFit f = fit_line(t, y, w);
  return {f.slope, f.slope_se, t.size()};
}

/// Energy gain of the amplification pulse, exp(2 * rate * t_amp).
inline double gain_from_envelope(const ShotRecord& rec, const Readout& ro) {
  const EnvelopeFit f = fit_envelope_rate(rec, ro, Window::amplified);
  if (2.0 * ro.amplify_duration() * f.rate_se > 0.1)
    throw std::domain_error("signal too weak for an envelope fit (gain uncertainty above 10%)");
  return std::exp(2.0 * f.rate * ro.amplify_duration());
}

struct ThermalSweepFit {
  double slope = 0.0;      ///< gain-normalized variance per quantum of n_m
  double intercept = 0.0;  ///< variance at n_m = 0, = slope * (n_add + 1)
  double n_add = 0.0;
  double n_add_se = 0.0;
};

/// Ordinary least squares of measured variance against bath occupancy.
inline ThermalSweepFit fit_thermal_sweep(const std::vector<std::pair<double, double>>& points) {
  if (points.size() < 3) throw std::invalid_argument("thermal sweep needs at least 3 points");
  std::vector<double> x, y;
  for (const auto& [n, v] : points) {
    x.push_back(n);
    y.push_back(v);
  }
  const bool spread = std::any_of(x.begin(), x.end(), [&](double xi) { return xi != x.front(); });
  if (!spread) throw std::invalid_argument("degenerate abscissae: all occupancies are equal");
  const LineFit f = fit_line(x, y);
  ThermalSweepFit out;
  out.slope = f.slope;
  out.intercept = f.intercept;
  out.n_add = f.intercept / f.slope - 1.0;
  const double s = f.slope, i = f.intercept;
  const double var = f.intercept_se * f.intercept_se / (s * s) + i * i * f.slope_se * f.slope_se / (s * s * s * s) -
                     2.0 * i * f.covariance / (s * s * s);
  out.n_add_se = std::sqrt(std::max(0.0, var));
  return out;
}

/// One calibration result as emitted in JSON outputs.
struct CalibrationRecord {
  std::string operating_point;
  std::string quadrature;
  double value_quanta = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  std::string method;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["operating_point"] = operating_point;
    j["quadrature"] = quadrature;
    j["value_quanta"] = value_quanta;
    j["value_db"] = value_quanta > 0.0 ? nlohmann::ordered_json(to_db(value_quanta)) : nlohmann::ordered_json(nullptr);
    j["ci_low"] = ci_low;
    j["ci_high"] = ci_high;
    j["method"] = method;
    return j;
  }
};

}  // namespace tea
