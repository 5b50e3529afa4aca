#pragma once

// Heterodyne records of the readout: an amplification pulse followed by a
// red-detuned transfer pulse that swaps the amplified motion into the
// cavity output. The trace is
//
//   v(t) = sqrt(G_tot) [ e(t) (X1 cos(w t + psi) + X2 sin(w t + psi)) + xi(t) ]
//
// with (X1, X2) referred to the amplifier input, e(t) the field envelope of
// the window, psi the measurement axis (plus any drift) and xi white noise
// of spectral density n_hemt + 1/2. Extraction is a matched-filter least
// squares fit against the same envelope, so it inverts synthesis exactly.

#include "tea/model.hpp"
#include "tea/random.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace tea {

enum class Window { amplified, transferred };

inline const char* to_string(Window w) { return w == Window::amplified ? "amplified" : "transferred"; }

struct ShotRecord {
  std::vector<double> samples;  ///< volts
  double sample_rate = 0.0;
  double t0 = 0.0;  ///< wall-clock start of the shot (s)
  double tomography_angle = 0.0;
  std::optional<Vec2> extracted;

  double duration() const { return static_cast<double>(samples.size()) / sample_rate; }
};

/// Timing and envelopes of the two readout windows, taken from the last two
/// segments of a schedule, tabulated at the receiver's sample times. Trace
/// time 0 is the start of amplification.
class Readout {
 public:
  Readout(const PulseSchedule& schedule, const DeviceParams& dev, const ReceiverParams& rx) : rx_(rx) {
    rx.check();
    if (schedule.size() < 2) throw std::invalid_argument("readout needs an amplify segment followed by a transfer segment");
    const PumpSegment& amp = schedule[schedule.size() - 2];
    const PumpSegment& xfer = schedule.back();
    if (!(xfer.gamma_plus == 0.0 && xfer.gamma_minus > 0.0 && xfer.duration > 0.0))
      throw std::invalid_argument("missing transfer segment: the last segment must have gamma_minus > 0, gamma_plus = 0");
    if (!(amp.gamma_plus > 0.0 && amp.duration > 0.0))
      throw std::invalid_argument("missing amplify segment before the transfer segment");
    if (amp.is_detuned() || xfer.is_detuned())
      throw invalid_regime("receiver model requires optimally detuned readout pulses");
    t_amp_ = amp.duration;
    t_xfer_ = xfer.duration;
    growth_ = 0.5 * (amp.gamma_plus - amp.gamma_minus - dev.gamma_m);
    amp_scale_ = std::sqrt(2.0 * (amp.gamma_plus + amp.gamma_minus));
    decay_ = 0.5 * (xfer.gamma_minus + dev.gamma_m);
    xfer_scale_ = std::sqrt(2.0 * xfer.gamma_minus * gain());

    const auto n = static_cast<std::size_t>(std::llround(duration() * rx.sample_rate));
    env_.resize(n);
    cos_.resize(n);
    sin_.resize(n);
    split_ = n;
    for (std::size_t k = 0; k < n; ++k) {
      const double t = time(k);
      if (split_ == n && t >= t_amp_) split_ = k;
      env_[k] = envelope(t);
      cos_[k] = std::cos(rx.omega_het * t);
      sin_[k] = std::sin(rx.omega_het * t);
    }
  }

  const ReceiverParams& receiver() const { return rx_; }
  double amplify_duration() const { return t_amp_; }
  double transfer_duration() const { return t_xfer_; }
  double duration() const { return t_amp_ + t_xfer_; }
  /// Energy gain of the amplification pulse.
  double gain() const { return std::exp(2.0 * growth_ * t_amp_); }
  std::size_t size() const { return env_.size(); }
  double time(std::size_t k) const { return static_cast<double>(k) / rx_.sample_rate; }

  /// Sample index range [first, last) of a window.
  std::pair<std::size_t, std::size_t> range(Window w) const {
    return w == Window::amplified ? std::pair{std::size_t{0}, split_} : std::pair{split_, env_.size()};
  }

  /// Field envelope at trace time t (zero outside both windows).
  double envelope(double t) const {
    if (t >= 0.0 && t < t_amp_) return amp_scale_ * std::exp(growth_ * t);
    if (t >= t_amp_ && t < t_amp_ + t_xfer_) return xfer_scale_ * std::exp(-decay_ * (t - t_amp_));
    return 0.0;
  }

  /// Reference vector e_k (cos(w t_k + psi), sin(w t_k + psi)).
  Vec2 reference(std::size_t k, double cpsi, double spsi) const {
    const double c = cos_[k] * cpsi - sin_[k] * spsi;
    const double s = sin_[k] * cpsi + cos_[k] * spsi;
    return {env_[k] * c, env_[k] * s};
  }

  /// Normal matrix sum_k r_k r_k^T over a window.
  Mat2 gram(Window w, double angle) const {
    const double cp = std::cos(angle), sp = std::sin(angle);
    Mat2 m = Mat2::Zero();
    const auto [a, b] = range(w);
    for (std::size_t k = a; k < b; ++k) {
      const Vec2 r = reference(k, cp, sp);
      m += r * r.transpose();
    }
    return m;
  }

 private:
  ReceiverParams rx_;
  double t_amp_ = 0.0, t_xfer_ = 0.0;
  double growth_ = 0.0, amp_scale_ = 0.0;
  double decay_ = 0.0, xfer_scale_ = 0.0;
  std::size_t split_ = 0;
  std::vector<double> env_, cos_, sin_;
};

inline ShotRecord synthesize_trace(const Vec2& shot, const Readout& ro, std::uint64_t seed, double angle = 0.0,
                                   double t0 = 0.0) {
  const ReceiverParams& rx = ro.receiver();
  ShotRecord rec;
  rec.sample_rate = rx.sample_rate;
  rec.t0 = t0;
  rec.tomography_angle = angle;
  rec.samples.resize(ro.size());
  const double psi = angle + rx.phase_drift_rate * t0;
  const double cp = std::cos(psi), sp = std::sin(psi);
  const double sigma = std::sqrt((rx.n_hemt + zero_point_variance) * rx.sample_rate);
  const double amp = std::sqrt(rx.g_tot);
  Rng rng(seed);
  for (std::size_t k = 0; k < ro.size(); ++k) rec.samples[k] = amp * (ro.reference(k, cp, sp).dot(shot) + sigma * rng.normal());
  return rec;
}

/// Synthesizes one record. `shot` is the quadrature pair referred to the
/// amplifier input, `angle` the nominal measurement axis and `t0` the shot
/// start time used for the phase drift.
inline ShotRecord synthesize_trace(const Vec2& shot, const PulseSchedule& schedule, const DeviceParams& dev,
                                   const ReceiverParams& rx, std::uint64_t seed, double angle = 0.0, double t0 = 0.0) {
  return synthesize_trace(shot, Readout(schedule, dev, rx), seed, angle, t0);
}

inline Vec2 extract_quadratures(const ShotRecord& rec, const Readout& ro, Window w = Window::transferred) {
  const ReceiverParams& rx = ro.receiver();
  if (rec.sample_rate != rx.sample_rate) throw std::invalid_argument("record sample rate differs from receiver settings");
  if (rec.samples.size() < ro.size()) throw std::out_of_range("extraction window extends past the end of the record");
  const double cp = std::cos(rec.tomography_angle), sp = std::sin(rec.tomography_angle);
  Mat2 m = Mat2::Zero();
  Vec2 b = Vec2::Zero();
  const auto [first, last] = ro.range(w);
  for (std::size_t k = first; k < last; ++k) {
    const Vec2 r = ro.reference(k, cp, sp);
    m += r * r.transpose();
    b += r * rec.samples[k];
  }
  if (!(m.determinant() > 0.0)) throw std::domain_error("zero-energy envelope in the extraction window");
  return m.ldlt().solve(b) / std::sqrt(rx.g_tot);
}

/// Matched-filter estimate of the input-referred quadratures from one window,
/// demodulated along the record's nominal tomography angle.
inline Vec2 extract_quadratures(const ShotRecord& rec, const PulseSchedule& schedule, const DeviceParams& dev,
                                const ReceiverParams& rx, Window w = Window::transferred) {
  return extract_quadratures(rec, Readout(schedule, dev, rx), w);
}

/// Covariance of the receiver noise in the extracted, input-referred pair.
inline Mat2 receiver_added_noise(const Readout& ro, Window w = Window::transferred, double angle = 0.0) {
  const ReceiverParams& rx = ro.receiver();
  return (rx.n_hemt + zero_point_variance) * rx.sample_rate * ro.gram(w, angle).inverse();
}

/// Rotation that undoes a measurement-axis drift of `angle` radians.
inline Mat2 drift_correction(double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  Mat2 r;
  r << c, -s, s, c;
  return r;
}

/// Rotates each extracted pair back by the drift accumulated at its start
/// time, so every shot refers to its nominal measurement axis.
inline std::vector<ShotRecord> correct_phase(std::vector<ShotRecord> records, const ReceiverParams& rx) {
  for (auto& r : records)
    if (r.extracted) r.extracted = drift_correction(rx.phase_drift_rate * r.t0) * *r.extracted;
  return records;
}

inline Vec2 correct_phase(const Vec2& extracted, double t0, const ReceiverParams& rx) {
  return drift_correction(rx.phase_drift_rate * t0) * extracted;
}

/// Writes the trace as CSV (time_s, voltage_V) and its metadata as a JSON
/// sidecar next to it.
inline void export_trace(const ShotRecord& rec, const std::string& csv_path, const std::string& json_path) {
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << "time_s,voltage_V\n" << std::setprecision(17);
  for (std::size_t k = 0; k < rec.samples.size(); ++k)
    csv << static_cast<double>(k) / rec.sample_rate << ',' << rec.samples[k] << '\n';
  nlohmann::ordered_json meta;
  meta["schema_version"] = 1;
  meta["sample_rate"] = rec.sample_rate;
  meta["samples"] = rec.samples.size();
  meta["t0"] = rec.t0;
  meta["tomography_angle"] = rec.tomography_angle;
  if (rec.extracted) meta["extracted"] = {(*rec.extracted)(0), (*rec.extracted)(1)};
  std::ofstream js(json_path, std::ios::binary);
  if (!js) throw std::runtime_error("cannot write " + json_path);
  js << meta.dump(2) << '\n';
}

}  // namespace tea
