#pragma once

// Domain types shared by every stage of the toolkit: device constants,
// pump segments, single-mode Gaussian states and receiver settings.
//
// Units: every rate and frequency held in memory is in rad/s, every
// duration in seconds, every variance in quanta (vacuum = 1/2 per quadrature).
// Configuration files carry ordinary frequencies (Hz); see config.hpp.

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

namespace tea {

inline constexpr double two_pi = 2.0 * std::numbers::pi;

/// Vacuum (zero-point) variance of one quadrature.
inline constexpr double zero_point_variance = 0.5;

/// Relative slack on the Heisenberg bound det(cov) >= 1/4.
inline constexpr double heisenberg_tolerance = 1e-9;

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;

inline double hz(double f) { return two_pi * f; }
inline double to_hz(double omega) { return omega / two_pi; }

// ---------------------------------------------------------------------------
// Errors

struct invalid_regime : std::domain_error {
  using std::domain_error::domain_error;
};
struct not_amplifying : std::domain_error {
  using std::domain_error::domain_error;
};
struct not_squeezing : std::domain_error {
  using std::domain_error::domain_error;
};
struct unphysical_state : std::domain_error {
  using std::domain_error::domain_error;
};
struct inconsistent_calibration : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct nonconvergence : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------

enum class Quadrature { minus, plus };

inline const char* to_string(Quadrature q) { return q == Quadrature::minus ? "minus" : "plus"; }
inline int index(Quadrature q) { return q == Quadrature::minus ? 0 : 1; }
/// +1 for X2 (X_+), -1 for X1 (X_-): the sign in (sqrt(G+) +- sqrt(G-))^2.
inline double sign(Quadrature q) { return q == Quadrature::minus ? -1.0 : 1.0; }

/// Which equations of motion drive the mechanics.
enum class Theory { ideal, full };

inline const char* to_string(Theory t) { return t == Theory::ideal ? "ideal" : "full"; }

struct DeviceParams {
  double omega_c = 0.0;    ///< cavity angular frequency
  double kappa = 0.0;      ///< total cavity decay rate
  double kappa_ext = 0.0;  ///< decay rate into the feedline
  double omega_m = 0.0;    ///< mechanical angular frequency
  double gamma_m = 0.0;    ///< mechanical decay rate
  double g0 = 0.0;         ///< single-photon coupling
  double n_m = 0.0;        ///< mechanical bath occupancy
  double n_c = 0.0;        ///< cavity bath occupancy

  double kappa_0() const { return kappa - kappa_ext; }
  bool resolved_sideband() const { return kappa < omega_m; }

  /// Throws std::invalid_argument naming the first violated invariant.
  void check() const {
    auto positive = [](double v, const char* name) {
      if (!(std::isfinite(v) && v > 0.0))
        throw std::invalid_argument(std::string("device.") + name + " must be a positive finite rate");
    };
    positive(omega_c, "omega_c");
    positive(kappa, "kappa");
    positive(kappa_ext, "kappa_ext");
    positive(omega_m, "omega_m");
    positive(gamma_m, "gamma_m");
    positive(g0, "g0");
    if (kappa_ext > kappa) throw std::invalid_argument("device.kappa_ext must not exceed device.kappa");
    if (!(std::isfinite(n_m) && n_m >= 0.0)) throw std::invalid_argument("device.n_m must be >= 0");
    if (!(std::isfinite(n_c) && n_c >= 0.0)) throw std::invalid_argument("device.n_c must be >= 0");
  }

  friend bool operator==(const DeviceParams&, const DeviceParams&) = default;
};

/// Reference device with a 36-quantum mechanical bath and a cold cavity.
inline DeviceParams default_device() {
  DeviceParams d;
  d.omega_c = hz(7.376841e9);
  d.kappa = hz(3.4e6);
  d.kappa_ext = hz(3.1e6);
  d.omega_m = hz(9.3608e6);
  d.gamma_m = hz(21.0);
  d.g0 = hz(287.0);
  d.n_m = 36.0;
  d.n_c = 0.0;
  return d;
}

/// Gamma = 4 g0^2 n / kappa for a pump populating the cavity with n photons.
inline double rate_from_photons(double n_photons, const DeviceParams& dev) {
  return 4.0 * dev.g0 * dev.g0 * n_photons / dev.kappa;
}
inline double photons_from_rate(double gamma, const DeviceParams& dev) {
  return gamma * dev.kappa / (4.0 * dev.g0 * dev.g0);
}

/// One interval of constant two-tone driving.
struct PumpSegment {
  double duration = 0.0;
  double gamma_plus = 0.0;   ///< blue-pump growth rate
  double gamma_minus = 0.0;  ///< red-pump decay rate
  double delta_0 = 0.0;      ///< static detuning of both pumps from optimal
  double delta_m = 0.0;      ///< pump offset from the mechanical frequency
  double phi_avg = 0.0;      ///< mean pump phase (measurement/squeezing axis)
  double envelope_sigma = 0.0;
  std::string role;          ///< free-form tag ("thermalize", "prepare", "amplify", "transfer", ...)

  double gamma_em() const { return gamma_minus - gamma_plus; }
  bool is_detuned() const { return delta_0 != 0.0 || delta_m != 0.0; }

  friend bool operator==(const PumpSegment&, const PumpSegment&) = default;
};

using PulseSchedule = std::vector<PumpSegment>;

/// Field-amplitude envelope of a square pulse with Gaussian rise and fall.
/// The edges occupy 2*sigma at each end; the flat top is 1. Pulses shorter
/// than 4*sigma take the lower of the two edges.
inline double envelope(const PumpSegment& seg, double t) {
  const double s = seg.envelope_sigma;
  if (t < 0.0 || t > seg.duration) return 0.0;
  if (s <= 0.0) return 1.0;
  const double edge = 2.0 * s;
  const double from_start = std::max(0.0, edge - t);
  const double from_end = std::max(0.0, t - (seg.duration - edge));
  const double u = std::max(from_start, from_end);
  return std::exp(-0.5 * u * u / (s * s));
}

/// Pump rates beyond kappa/4 are refused by the dynamics; validate() warns
/// from kappa/10 on.
inline constexpr double strong_coupling_warning = 0.1;
inline constexpr double strong_coupling_limit = 0.25;

/// Physics warnings for a schedule; empty when every segment is in the
/// adiabatic (weak-coupling) regime and long enough for its edges.
inline std::vector<std::string> validate(const PulseSchedule& schedule, const DeviceParams& dev) {
  std::vector<std::string> warnings;
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    const auto& s = schedule[i];
    const std::string tag = "segment " + std::to_string(i) + (s.role.empty() ? "" : " (" + s.role + ")");
    if (std::max(s.gamma_plus, s.gamma_minus) >= strong_coupling_warning * dev.kappa)
      warnings.push_back(tag + ": strong coupling, max(gamma_plus, gamma_minus) >= kappa/10; "
                               "adiabatic elimination of the cavity is not valid");
    if (!(s.duration > 4.0 * s.envelope_sigma))
      warnings.push_back(tag + ": duration must exceed 4*envelope_sigma for Gaussian edges");
  }
  if (!dev.resolved_sideband()) warnings.push_back("device: kappa >= omega_m, not in the resolved-sideband regime");
  return warnings;
}

// ---------------------------------------------------------------------------

/// Mean and covariance of the mechanical quadratures (X1, X2).
/// Construction enforces symmetry, positivity and det(cov) >= 1/4.
class GaussianState {
 public:
  GaussianState(const Vec2& mean, const Mat2& cov) : mean_(mean), cov_(cov) {
    if (!mean.allFinite() || !cov.allFinite()) throw unphysical_state("non-finite Gaussian state");
    if (std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * std::max(1.0, cov.cwiseAbs().maxCoeff()))
      throw unphysical_state("covariance matrix is not symmetric");
    cov_(1, 0) = cov_(0, 1);
    const Eigen::SelfAdjointEigenSolver<Mat2> es(cov_);
    if (es.eigenvalues()(0) <= 0.0) throw unphysical_state("covariance matrix is not positive definite");
    if (cov_.determinant() < 0.25 * (1.0 - heisenberg_tolerance))
      throw unphysical_state("det(cov) = " + std::to_string(cov_.determinant()) + " violates the Heisenberg bound 1/4");
  }

  static GaussianState vacuum() { return {Vec2::Zero(), zero_point_variance * Mat2::Identity()}; }
  static GaussianState thermal(double n) { return {Vec2::Zero(), (n + 0.5) * Mat2::Identity()}; }

  const Vec2& mean() const { return mean_; }
  const Mat2& cov() const { return cov_; }

 private:
  Vec2 mean_;
  Mat2 cov_;
};

struct ReceiverParams {
  double omega_het = hz(1.8e6);
  double sample_rate = 50e6;  ///< samples per second
  double g_tot = 1.0;         ///< V^2 per quantum
  double n_hemt = 20.0;       ///< receiver noise referred to the cavity output
  double phase_drift_rate = 0.0;

  void check() const {
    if (!(sample_rate > omega_het / std::numbers::pi))
      throw std::invalid_argument("receiver.sample_rate violates the Nyquist limit for omega_het");
    if (!(g_tot > 0.0)) throw std::invalid_argument("receiver.g_tot must be > 0");
    if (!(n_hemt >= 0.0)) throw std::invalid_argument("receiver.n_hemt must be >= 0");
    if (!std::isfinite(phase_drift_rate)) throw std::invalid_argument("receiver.phase_drift_rate must be finite");
  }

  friend bool operator==(const ReceiverParams&, const ReceiverParams&) = default;
};

/// Squeezed thermal state parameters; phi is the angle entering the
/// covariance as cos(phi), sin(phi), so it is unique modulo 2*pi.
struct SqueezeParams {
  double r = 0.0;
  double n_sq = 0.0;
  double phi = 0.0;
};

}  // namespace tea
