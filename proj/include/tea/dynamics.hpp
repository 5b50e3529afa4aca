#pragma once

// Mechanical Gaussian dynamics under two-tone driving with the cavity
// adiabatically eliminated:
//
//   dX = A X dt + noise,   dG/dt = A G + G A^T + D
//
// for the quadrature vector X = (X1, X2) = (X_-, X_+) and covariance G.
// Two drift models are provided: the ideal rotating-wave model (A diagonal)
// and the full model with pump detuning, which adds a mechanical frequency
// shift and single-mode squeezing through the off-diagonal drift terms.

#include "tea/model.hpp"
#include "tea/random.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

namespace tea {

struct DriftDiffusion {
  Mat2 A = Mat2::Zero();
  Mat2 D = Mat2::Zero();
};

struct FullTheoryOptions {
  /// Include the pump-power-induced cavity shift kappa/(2 omega_m)(G+ + G-)
  /// in the detuning. With it off the detuning is the static delta_0 alone.
  bool pump_shift = true;
};

namespace detail {

inline void require_adiabatic(const PumpSegment& seg, const DeviceParams& dev) {
  if (std::max(seg.gamma_plus, seg.gamma_minus) >= strong_coupling_limit * dev.kappa)
    throw invalid_regime("max(gamma_plus, gamma_minus) must stay below kappa/4 for adiabatic elimination");
  if (seg.gamma_plus < 0.0 || seg.gamma_minus < 0.0) throw invalid_regime("pump rates must be non-negative");
}

inline PumpSegment scaled(PumpSegment seg, double power) {
  seg.gamma_plus *= power;
  seg.gamma_minus *= power;
  return seg;
}

/// (exp(s t) - 1) / s, continuous through s = 0.
inline double growth_integral(double s, double t) {
  if (std::abs(s * t) < 1e-6) return t * (1.0 + 0.5 * s * t);
  return std::expm1(s * t) / s;
}

inline double max_abs(const Mat2& m) { return m.cwiseAbs().maxCoeff(); }

inline bool is_diagonal(const Mat2& a) { return a(0, 1) == 0.0 && a(1, 0) == 0.0; }

}  // namespace detail

/// Delta_eff = Delta_0 + kappa/(2 omega_m) (Gamma_+ + Gamma_-).
inline double effective_detuning(const PumpSegment& seg, const DeviceParams& dev) {
  return seg.delta_0 + dev.kappa / (2.0 * dev.omega_m) * (seg.gamma_plus + seg.gamma_minus);
}

inline double detuning(const PumpSegment& seg, const DeviceParams& dev, const FullTheoryOptions& opts) {
  return opts.pump_shift ? effective_detuning(seg, dev) : seg.delta_0;
}

/// Single-mode squeezing rate chi = (2 Delta / kappa) sqrt(Gamma_+ Gamma_-).
inline double single_mode_squeezing(const PumpSegment& seg, const DeviceParams& dev, const FullTheoryOptions& opts = {}) {
  return 2.0 * detuning(seg, dev, opts) / dev.kappa * std::sqrt(seg.gamma_plus * seg.gamma_minus);
}

/// Total mechanical frequency shift delta_m - (Delta/kappa)(Gamma_+ + Gamma_-).
inline double mechanical_shift(const PumpSegment& seg, const DeviceParams& dev, const FullTheoryOptions& opts = {}) {
  return seg.delta_m - detuning(seg, dev, opts) / dev.kappa * (seg.gamma_plus + seg.gamma_minus);
}

/// Rotating-wave drift and diffusion at optimal detuning.
inline DriftDiffusion drift_diffusion_rwa(const PumpSegment& seg, const DeviceParams& dev) {
  detail::require_adiabatic(seg, dev);
  if (seg.is_detuned()) throw invalid_regime("rotating-wave model requires delta_0 = delta_m = 0");
  const double sp = std::sqrt(seg.gamma_plus);
  const double sm = std::sqrt(seg.gamma_minus);
  const double thermal = dev.gamma_m * (2.0 * dev.n_m + 1.0);
  const double cavity = 2.0 * dev.n_c + 1.0;
  DriftDiffusion dd;
  dd.A = 0.5 * (seg.gamma_plus - seg.gamma_minus - dev.gamma_m) * Mat2::Identity();
  dd.D(0, 0) = 0.5 * ((sp - sm) * (sp - sm) * cavity + thermal);
  dd.D(1, 1) = 0.5 * ((sp + sm) * (sp + sm) * cavity + thermal);
  return dd;
}

/// Detuned model at a given cavity detuning. The diffusion is assembled
/// from the forcing vector B xi with inputs (X1_in, X2_in, U1_in, U2_in):
/// D = B Q B^T, Q = diag(n_m + 1/2, n_m + 1/2, n_c + 1/2, n_c + 1/2).
inline DriftDiffusion drift_diffusion_full_at(const PumpSegment& seg, const DeviceParams& dev, double delta) {
  detail::require_adiabatic(seg, dev);
  const double sp = std::sqrt(seg.gamma_plus);
  const double sm = std::sqrt(seg.gamma_minus);
  const double k = 2.0 * delta / dev.kappa;
  const double norm = 1.0 / std::sqrt(1.0 + k * k);
  const double a = (sp - sm) * norm;
  const double b = (sp + sm) * norm;

  DriftDiffusion dd;
  const double diag = 0.5 * (seg.gamma_plus - seg.gamma_minus - dev.gamma_m);
  dd.A << diag, seg.delta_m + delta / dev.kappa * (sp - sm) * (sp - sm),
      -seg.delta_m - delta / dev.kappa * (sp + sm) * (sp + sm), diag;

  Eigen::Matrix<double, 2, 4> B;
  const double sg = std::sqrt(dev.gamma_m);
  B << sg, 0.0, a * k, a,
      0.0, sg, b, -b * k;
  const Eigen::Vector4d q(dev.n_m + 0.5, dev.n_m + 0.5, dev.n_c + 0.5, dev.n_c + 0.5);
  dd.D = B * q.asDiagonal() * B.transpose();
  dd.D(1, 0) = dd.D(0, 1);
  return dd;
}

inline DriftDiffusion drift_diffusion_full(const PumpSegment& seg, const DeviceParams& dev, const FullTheoryOptions& opts = {}) {
  return drift_diffusion_full_at(seg, dev, detuning(seg, dev, opts));
}

/// Drift/diffusion for a segment with its pump power scaled by `power`
/// (envelope squared). The full model keeps the detuning of the nominal
/// segment, so envelope edges do not move it.
inline DriftDiffusion drift_diffusion(const PumpSegment& seg, const DeviceParams& dev, Theory theory,
                                      const FullTheoryOptions& opts = {}, double power = 1.0) {
  if (theory == Theory::ideal) {
    PumpSegment s = detail::scaled(seg, power);
    s.delta_0 = s.delta_m = 0.0;
    return drift_diffusion_rwa(s, dev);
  }
  return drift_diffusion_full_at(detail::scaled(seg, power), dev, detuning(seg, dev, opts));
}

// ---------------------------------------------------------------------------
// Covariance integration

/// Linear map and accumulated noise over an interval: X(t) = phi X(0) + n,
/// n ~ N(0, noise).
struct Transition {
  Mat2 phi = Mat2::Identity();
  Mat2 noise = Mat2::Zero();

  Mat2 apply(const Mat2& cov) const {
    Mat2 g = phi * cov * phi.transpose() + noise;
    g(1, 0) = g(0, 1) = 0.5 * (g(0, 1) + g(1, 0));
    return g;
  }
  Transition then(const Transition& next) const { return {next.phi * phi, next.apply(noise)}; }
};

struct IntegratorOptions {
  double rel_tol = 1e-9;
  std::size_t max_steps = std::size_t{1} << 24;
};

namespace detail {

using DriftAt = std::function<DriftDiffusion(double)>;

/// Classic RK4 on (phi, noise) with a fixed step count.
inline Transition rk4(const DriftAt& f, double t, std::size_t n) {
  Transition s;
  const double h = t / static_cast<double>(n);
  auto deriv = [](const DriftDiffusion& dd, const Transition& x) {
    Transition d;
    d.phi = dd.A * x.phi;
    d.noise = dd.A * x.noise + x.noise * dd.A.transpose() + dd.D;
    return d;
  };
  auto axpy = [](const Transition& x, double c, const Transition& d) {
    return Transition{x.phi + c * d.phi, x.noise + c * d.noise};
  };
  for (std::size_t i = 0; i < n; ++i) {
    const double t0 = h * static_cast<double>(i);
    const DriftDiffusion f0 = f(t0), fh = f(t0 + 0.5 * h), f1 = f(t0 + h);
    const Transition k1 = deriv(f0, s);
    const Transition k2 = deriv(fh, axpy(s, 0.5 * h, k1));
    const Transition k3 = deriv(fh, axpy(s, 0.5 * h, k2));
    const Transition k4 = deriv(f1, axpy(s, h, k3));
    s.phi += h / 6.0 * (k1.phi + 2.0 * k2.phi + 2.0 * k3.phi + k4.phi);
    s.noise += h / 6.0 * (k1.noise + 2.0 * k2.noise + 2.0 * k3.noise + k4.noise);
  }
  s.noise(1, 0) = s.noise(0, 1) = 0.5 * (s.noise(0, 1) + s.noise(1, 0));
  return s;
}

inline double rel_change(const Transition& a, const Transition& b) {
  const double phi_scale = std::max(max_abs(b.phi), std::numeric_limits<double>::min());
  const double noise_scale = std::max(max_abs(b.noise), std::numeric_limits<double>::min());
  double e = max_abs(a.phi - b.phi) / phi_scale;
  if (max_abs(b.noise) > 0.0) e = std::max(e, max_abs(a.noise - b.noise) / noise_scale);
  return e;
}

/// RK4 with step halving until the result moves by less than rel_tol.
inline Transition integrate(const DriftAt& f, double t, double rate_bound, const IntegratorOptions& opts) {
  if (t == 0.0) return {};
  std::size_t n = std::max<std::size_t>(4, static_cast<std::size_t>(std::ceil(rate_bound * t / 0.05)));
  Transition coarse = rk4(f, t, n);
  while (true) {
    if (2 * n > opts.max_steps) throw nonconvergence("covariance integrator exceeded its step budget");
    const Transition fine = rk4(f, t, 2 * n);
    if (rel_change(coarse, fine) < opts.rel_tol) return fine;
    coarse = fine;
    n *= 2;
  }
}

inline void require_finite(const DriftDiffusion& dd, double t) {
  if (!dd.A.allFinite() || !dd.D.allFinite() || !std::isfinite(t))
    throw std::invalid_argument("non-finite drift, diffusion or duration");
  if (t < 0.0) throw std::invalid_argument("evolution time must be non-negative");
}

}  // namespace detail

/// Transition over t for constant drift/diffusion. Diagonal drift uses the
/// exact exponential solution; otherwise RK4 with step halving.
inline Transition transition(const DriftDiffusion& dd, double t, const IntegratorOptions& opts = {}) {
  detail::require_finite(dd, t);
  if (t == 0.0) return {};
  Transition tr;
  if (detail::is_diagonal(dd.A)) {
    const double a0 = dd.A(0, 0), a1 = dd.A(1, 1);
    tr.phi = Mat2::Zero();
    tr.phi(0, 0) = std::exp(a0 * t);
    tr.phi(1, 1) = std::exp(a1 * t);
    tr.noise(0, 0) = dd.D(0, 0) * detail::growth_integral(2.0 * a0, t);
    tr.noise(1, 1) = dd.D(1, 1) * detail::growth_integral(2.0 * a1, t);
    tr.noise(0, 1) = tr.noise(1, 0) = dd.D(0, 1) * detail::growth_integral(a0 + a1, t);
    return tr;
  }
  const double rate = detail::max_abs(dd.A);
  Transition exact = detail::integrate([&](double) { return dd; }, t, rate, opts);
  exact.phi = (dd.A * t).exp();
  return exact;
}

inline Mat2 propagate_covariance(const Mat2& cov, const DriftDiffusion& dd, double t, const IntegratorOptions& opts = {}) {
  return transition(dd, t, opts).apply(cov);
}

/// Mean and covariance after time t under constant drift/diffusion.
inline GaussianState evolve_covariance(const GaussianState& state, const DriftDiffusion& dd, double t,
                                       const IntegratorOptions& opts = {}) {
  const Transition tr = transition(dd, t, opts);
  return GaussianState(tr.phi * state.mean(), tr.apply(state.cov()));
}

/// Transition across one pump segment, including its Gaussian edges.
inline Transition segment_transition(const PumpSegment& seg, const DeviceParams& dev, Theory theory,
                                     const FullTheoryOptions& full = {}, const IntegratorOptions& opts = {}) {
  if (seg.duration < 0.0) throw std::invalid_argument("segment duration must be non-negative");
  const DriftDiffusion flat = drift_diffusion(seg, dev, theory, full);
  const bool pumped = seg.gamma_plus > 0.0 || seg.gamma_minus > 0.0;
  const double edge = 2.0 * seg.envelope_sigma;
  if (!pumped || seg.envelope_sigma <= 0.0) return transition(flat, seg.duration, opts);
  const double rate = detail::max_abs(flat.A) + 1.0 / seg.envelope_sigma;
  if (seg.duration <= 2.0 * edge) {
    // Edges overlap: two smooth halves meeting at the pulse centre.
    const double half = 0.5 * seg.duration;
    auto first = [&](double t) {
      const double e = envelope(seg, t);
      return drift_diffusion(seg, dev, theory, full, e * e);
    };
    auto second = [&](double t) {
      const double e = envelope(seg, half + t);
      return drift_diffusion(seg, dev, theory, full, e * e);
    };
    return detail::integrate(first, half, rate, opts).then(detail::integrate(second, half, rate, opts));
  }
  auto rising = [&](double t) {
    const double e = envelope(seg, t);
    return drift_diffusion(seg, dev, theory, full, e * e);
  };
  auto falling = [&](double t) {
    const double e = envelope(seg, seg.duration - edge + t);
    return drift_diffusion(seg, dev, theory, full, e * e);
  };
  const Transition rise = detail::integrate(rising, edge, rate, opts);
  const Transition top = transition(flat, seg.duration - 2.0 * edge, opts);
  const Transition fall = detail::integrate(falling, edge, rate, opts);
  return rise.then(top).then(fall);
}

inline Transition schedule_transition(const PulseSchedule& schedule, const DeviceParams& dev, Theory theory,
                                      const FullTheoryOptions& full = {}, const IntegratorOptions& opts = {}) {
  Transition total;
  for (const auto& seg : schedule) total = total.then(segment_transition(seg, dev, theory, full, opts));
  return total;
}

inline GaussianState evolve(const GaussianState& state, const PulseSchedule& schedule, const DeviceParams& dev,
                            Theory theory = Theory::ideal, const FullTheoryOptions& full = {}) {
  const Transition tr = schedule_transition(schedule, dev, theory, full);
  return GaussianState(tr.phi * state.mean(), tr.apply(state.cov()));
}

// ---------------------------------------------------------------------------
// Closed forms (rotating-wave model)

namespace detail {

inline double noise_rate(const PumpSegment& seg, const DeviceParams& dev, Quadrature q) {
  const double root = std::sqrt(seg.gamma_plus) + sign(q) * std::sqrt(seg.gamma_minus);
  return root * root * (2.0 * dev.n_c + 1.0) + dev.gamma_m * (2.0 * dev.n_m + 1.0);
}

inline void require_rwa(const PumpSegment& seg) {
  if (seg.is_detuned()) throw invalid_regime("closed forms require delta_0 = delta_m = 0");
}

}  // namespace detail

/// <dX^2(t)> of one quadrature for a constant, optimally detuned segment.
inline double variance_closed_form(double v0, const PumpSegment& seg, const DeviceParams& dev, Quadrature q, double t) {
  detail::require_rwa(seg);
  const double s = seg.gamma_plus - seg.gamma_minus - dev.gamma_m;
  return v0 * std::exp(s * t) + 0.5 * detail::noise_rate(seg, dev, q) * detail::growth_integral(s, t);
}

/// High-gain noise referred to the amplifier input.
inline double added_noise_ideal(const PumpSegment& seg, const DeviceParams& dev, Quadrature q) {
  detail::require_rwa(seg);
  if (!(seg.gamma_plus > seg.gamma_minus)) throw not_amplifying("added noise requires gamma_plus > gamma_minus");
  const double s = seg.gamma_plus - seg.gamma_minus - dev.gamma_m;
  if (!(s > 0.0)) throw not_amplifying("gamma_plus - gamma_minus must exceed the mechanical damping");
  return detail::noise_rate(seg, dev, q) / (2.0 * std::abs(s));
}

/// Steady-state variance after dissipative squeezing; the minus quadrature
/// is squeezed.
inline double squeezed_variance_ideal(const PumpSegment& seg, const DeviceParams& dev, Quadrature q) {
  detail::require_rwa(seg);
  if (!(seg.gamma_minus > seg.gamma_plus)) throw not_squeezing("squeezing requires gamma_minus > gamma_plus");
  const double s = seg.gamma_plus - seg.gamma_minus - dev.gamma_m;
  return detail::noise_rate(seg, dev, q) / (2.0 * std::abs(s));
}

inline double energy_gain(const PumpSegment& seg, const DeviceParams& dev, double t) {
  return std::exp((seg.gamma_plus - seg.gamma_minus - dev.gamma_m) * t);
}

/// Noise added by an amplification segment, referred to its input, for the
/// two output quadratures: noise_qq / |row q of phi|^2. Finite-duration
/// version of added_noise_ideal that also covers the full model.
inline Vec2 added_noise_referred(const PumpSegment& seg, const DeviceParams& dev, Theory theory,
                                 const FullTheoryOptions& full = {}) {
  const Transition tr = segment_transition(seg, dev, theory, full);
  Vec2 out;
  for (int q = 0; q < 2; ++q) out(q) = tr.noise(q, q) / tr.phi.row(q).squaredNorm();
  return out;
}

/// Steady state of a stable (dissipative) segment: A G + G A^T + D = 0.
inline Mat2 steady_state(const DriftDiffusion& dd) {
  // Vectorized Lyapunov equation for a 2x2 symmetric unknown (g00, g01, g11).
  const Mat2& a = dd.A;
  Eigen::Matrix3d m;
  m << 2.0 * a(0, 0), 2.0 * a(0, 1), 0.0,
      a(1, 0), a(0, 0) + a(1, 1), a(0, 1),
      0.0, 2.0 * a(1, 0), 2.0 * a(1, 1);
  const Eigen::Vector3d rhs(-dd.D(0, 0), -dd.D(0, 1), -dd.D(1, 1));
  const Eigen::Vector3d g = m.fullPivLu().solve(rhs);
  Mat2 out;
  out << g(0), g(1), g(1), g(2);
  return out;
}

// ---------------------------------------------------------------------------
// Euler-Maruyama trajectories

/// Symmetric square root of a positive semidefinite matrix.
inline Mat2 psd_sqrt(const Mat2& m) {
  const Eigen::SelfAdjointEigenSolver<Mat2> es(m);
  const Vec2 root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose();
}

struct TrajectoryOptions {
  Theory theory = Theory::ideal;
  FullTheoryOptions full{};
  /// Steps per unit of (rate * time); the step never exceeds 1/(50 * rate).
  double steps_per_rate = 400.0;
  unsigned threads = 1;
};

/// One interval of a linear SDE. `shaped`, when set, gives the drift and
/// diffusion at time t into the interval; otherwise `constant` applies.
struct SdePiece {
  double duration = 0.0;
  std::size_t steps = 1;
  DriftDiffusion constant{};
  std::function<DriftDiffusion(double)> shaped{};
};

/// Euler-Maruyama over a sequence of pieces, starting from N(mean, cov).
/// Shot i draws from its own stream derived from (seed, i).
inline std::vector<Vec2> simulate_linear_sde(const Vec2& mean, const Mat2& cov, const std::vector<SdePiece>& pieces,
                                             std::size_t shots, std::uint64_t seed, unsigned threads = 1) {
  if (shots < 1) throw std::invalid_argument("shots must be >= 1");
  const Mat2 init_l = psd_sqrt(cov);
  std::vector<Mat2> roots;
  for (const auto& p : pieces) roots.push_back(psd_sqrt(p.constant.D));

  std::vector<Vec2> out(shots);
  parallel_for(shots, threads, [&](std::size_t i) {
    Rng rng(seed, Stream::trajectory, i);
    Vec2 x = mean + init_l * Vec2(rng.normal(), rng.normal());
    for (std::size_t j = 0; j < pieces.size(); ++j) {
      const SdePiece& p = pieces[j];
      if (p.duration <= 0.0 || p.steps == 0) continue;
      const double h = p.duration / static_cast<double>(p.steps);
      const double sq = std::sqrt(h);
      DriftDiffusion dd = p.constant;
      Mat2 l = roots[j];
      for (std::size_t k = 0; k < p.steps; ++k) {
        if (p.shaped) {
          dd = p.shaped((static_cast<double>(k) + 0.5) * h);
          l = psd_sqrt(dd.D);
        }
        const Vec2 dw(rng.normal(), rng.normal());
        x += h * (dd.A * x) + sq * (l * dw);
      }
    }
    out[i] = x;
  });
  return out;
}

/// Final (X1, X2) of `shots` independent Langevin trajectories through a
/// pulse schedule.
inline std::vector<Vec2> simulate_trajectories(const GaussianState& state, const PulseSchedule& schedule,
                                               const DeviceParams& dev, std::size_t shots, std::uint64_t seed,
                                               const TrajectoryOptions& opts = {}) {
  if (!(opts.steps_per_rate >= 50.0)) throw std::invalid_argument("unstable step size: steps_per_rate must be >= 50");
  std::vector<SdePiece> pieces;
  for (const auto& seg : schedule) {
    SdePiece p;
    p.duration = seg.duration;
    p.constant = drift_diffusion(seg, dev, opts.theory, opts.full);
    double steps = std::ceil(opts.steps_per_rate * detail::max_abs(p.constant.A) * seg.duration);
    if (seg.envelope_sigma > 0.0 && (seg.gamma_plus > 0.0 || seg.gamma_minus > 0.0)) {
      steps = std::max(steps, std::ceil(4.0 * seg.duration / seg.envelope_sigma));
      p.shaped = [&seg, &dev, opts](double t) {
        const double e = envelope(seg, t);
        return drift_diffusion(seg, dev, opts.theory, opts.full, e * e);
      };
    }
    p.steps = static_cast<std::size_t>(std::max(1.0, steps));
    pieces.push_back(std::move(p));
  }
  return simulate_linear_sde(state.mean(), state.cov(), pieces, shots, seed, opts.threads);
}

}  // namespace tea
