#pragma once

// Gaussian state tomography from angle-resolved quadrature marginals.
//
// A sample x taken at angle phi measures e(phi)^T X with e = (cos phi, sin phi),
// so its model variance is e^T G e + delta^2, delta^2 = (1 - eta) / (2 eta).
// The covariance is found by the iterative maximum-likelihood update
//   D = sum e e^T / s^2,  R = sum x^2 e e^T / s^4,  G <- D^-1 R G R D^-1
// started from vacuum, diluted whenever a full step would lower the
// likelihood.

#include "tea/model.hpp"
#include "tea/random.hpp"
#include "tea/stats.hpp"

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace tea {

struct MarginalPoint {
  double phi = 0.0;
  double x = 0.0;
};

struct MarginalDataset {
  std::vector<MarginalPoint> points;
  double eta_q = 1.0;

  /// Gaussian efficiency penalty (1 - eta) / (2 eta).
  double delta2() const { return (1.0 - eta_q) / (2.0 * eta_q); }

  void check() const {
    if (!(eta_q > 0.0 && eta_q <= 1.0)) throw std::invalid_argument("eta_q must lie in (0, 1]");
    std::vector<double> folded;
    for (const auto& p : points) {
      if (!std::isfinite(p.phi) || !std::isfinite(p.x)) throw std::invalid_argument("non-finite marginal sample");
      double a = std::fmod(p.phi, std::numbers::pi);
      if (a < 0.0) a += std::numbers::pi;
      folded.push_back(a);
    }
    std::sort(folded.begin(), folded.end());
    folded.erase(std::unique(folded.begin(), folded.end()), folded.end());
    if (folded.size() < 2) throw std::invalid_argument("marginals need at least two distinct angles");
    double gap = folded.front() + std::numbers::pi - folded.back();
    for (std::size_t i = 1; i < folded.size(); ++i) gap = std::max(gap, folded[i] - folded[i - 1]);
    if (std::numbers::pi - gap < 0.5 * std::numbers::pi - 1e-9)
      throw std::invalid_argument("marginal angles must span at least pi/2");
  }
};

inline Vec2 axis(double phi) { return {std::cos(phi), std::sin(phi)}; }

/// Passive rotation whose first row is the measurement axis e(phi).
inline Mat2 rotation(double phi) {
  const double c = std::cos(phi), s = std::sin(phi);
  Mat2 m;
  m << c, s, -s, c;
  return m;
}

/// Evenly spaced angles over [0, pi).
inline std::vector<double> angle_grid(std::size_t n = 16) {
  std::vector<double> a(n);
  for (std::size_t i = 0; i < n; ++i) a[i] = std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
  return a;
}

inline MarginalDataset sample_marginals(const GaussianState& state, const std::vector<double>& angles,
                                        std::size_t shots_per_angle, double eta_q, std::uint64_t seed) {
  if (!(eta_q > 0.0 && eta_q <= 1.0)) throw std::invalid_argument("eta_q must lie in (0, 1]");
  MarginalDataset d;
  d.eta_q = eta_q;
  d.points.reserve(angles.size() * shots_per_angle);
  for (std::size_t j = 0; j < angles.size(); ++j) {
    const Vec2 e = axis(angles[j]);
    const double sd = std::sqrt(e.dot(state.cov() * e) + d.delta2());
    const double mu = e.dot(state.mean());
    Rng rng(seed, Stream::marginals, j);
    for (std::size_t k = 0; k < shots_per_angle; ++k) d.points.push_back({angles[j], mu + sd * rng.normal()});
  }
  return d;
}

namespace detail {

/// Sufficient statistics: count and sum of x^2 per distinct angle.
struct AngleBin {
  Vec2 e;
  double n = 0.0;
  double s = 0.0;
};

inline std::vector<AngleBin> bin_by_angle(const MarginalDataset& d) {
  std::map<double, AngleBin> bins;
  for (const auto& p : d.points) {
    auto& b = bins[p.phi];
    b.e = axis(p.phi);
    b.n += 1.0;
    b.s += p.x * p.x;
  }
  std::vector<AngleBin> out;
  out.reserve(bins.size());
  for (auto& [phi, b] : bins) out.push_back(b);
  return out;
}

inline double log_likelihood(const std::vector<AngleBin>& bins, const Mat2& g, double delta2) {
  double l = 0.0;
  for (const auto& b : bins) {
    const double v = b.e.dot(g * b.e) + delta2;
    if (!(v > 0.0)) return -std::numeric_limits<double>::infinity();
    l -= 0.5 * (b.n * std::log(two_pi * v) + b.s / v);
  }
  return l;
}

}  // namespace detail

/// Gaussian log-likelihood of zero-mean marginals under state covariance g.
inline double log_likelihood(const MarginalDataset& d, const Mat2& g, bool deconvolve = true) {
  return detail::log_likelihood(detail::bin_by_angle(d), g, deconvolve ? d.delta2() : 0.0);
}

/// Asymptotic (inverse Fisher information) standard errors of the ML
/// estimates of G11, G12, G22 when the true state covariance is g.
inline Eigen::Vector3d covariance_standard_errors(const MarginalDataset& d, const Mat2& g, bool deconvolve = true) {
  const double d2 = deconvolve ? d.delta2() : 0.0;
  Eigen::Matrix3d info = Eigen::Matrix3d::Zero();
  for (const auto& b : detail::bin_by_angle(d)) {
    const double v = b.e.dot(g * b.e) + d2;
    const Eigen::Vector3d a(b.e(0) * b.e(0), 2.0 * b.e(0) * b.e(1), b.e(1) * b.e(1));
    info += b.n / (2.0 * v * v) * a * a.transpose();
  }
  return info.inverse().diagonal().cwiseSqrt();
}

struct ReconstructionOptions {
  std::size_t max_iter = 20000;
  double tol = 1e-10;      ///< max relative change of the entries of G
  bool deconvolve = true;  ///< false: report the noise-broadened covariance
  Mat2 init = zero_point_variance * Mat2::Identity();
};

struct CovarianceFit {
  Mat2 cov = Mat2::Zero();
  std::size_t iterations = 0;
  std::vector<double> log_likelihood;  ///< one entry per accepted iterate, starting with init
};

namespace detail {

inline CovarianceFit fit_bins(const std::vector<AngleBin>& bins, double d2, const ReconstructionOptions& opt) {
  CovarianceFit fit;
  Mat2 g = opt.init;
  double l = detail::log_likelihood(bins, g, d2);
  if (!std::isfinite(l)) throw std::invalid_argument("initial covariance gives a non-finite likelihood");
  fit.log_likelihood.push_back(l);
  for (std::size_t it = 1; it <= opt.max_iter; ++it) {
    Mat2 dm = Mat2::Zero(), rm = Mat2::Zero();
    for (const auto& b : bins) {
      const double v = b.e.dot(g * b.e) + d2;
      const Mat2 p = b.e * b.e.transpose();
      dm += (b.n / v) * p;
      rm += (b.s / (v * v)) * p;
    }
    if (!(std::abs(dm.determinant()) > 1e-300)) throw std::domain_error("singular D matrix in tomography iteration");
    const Mat2 k = dm.inverse() * rm - Mat2::Identity();

    double eps = 1.0;
    Mat2 next;
    double l_next = -std::numeric_limits<double>::infinity();
    for (; eps > 1e-12; eps *= 0.5) {
      const Mat2 step = Mat2::Identity() + eps * k;
      next = step * g * step.transpose();
      next(1, 0) = next(0, 1) = 0.5 * (next(0, 1) + next(1, 0));
      l_next = detail::log_likelihood(bins, next, d2);
      if (l_next >= l) break;
    }
    const double scale = std::max(g.cwiseAbs().maxCoeff(), 1e-300);
    const double change = (next - g).cwiseAbs().maxCoeff() / scale;
    if (!(l_next >= l - 1e-10 * std::abs(l)))
      throw std::logic_error("tomography iteration decreased the log-likelihood");
    if (l_next < l) {
      // no ascent at any dilution: already at the optimum to working precision
      fit.cov = g;
      fit.iterations = it;
      return fit;
    }
    g = next;
    l = l_next;
    fit.log_likelihood.push_back(l);
    if (change < opt.tol) {
      fit.cov = g;
      fit.iterations = it;
      return fit;
    }
  }
  throw nonconvergence("tomography did not converge in " + std::to_string(opt.max_iter) + " iterations");
}

}  // namespace detail

inline CovarianceFit reconstruct_covariance(const MarginalDataset& data, const ReconstructionOptions& opt = {}) {
  data.check();
  return detail::fit_bins(detail::bin_by_angle(data), opt.deconvolve ? data.delta2() : 0.0, opt);
}

inline Mat2 squeeze_to_covariance(const SqueezeParams& sp) {
  const double c = std::cosh(2.0 * sp.r), s = std::sinh(2.0 * sp.r);
  Mat2 g;
  g << c + s * std::cos(sp.phi), -s * std::sin(sp.phi), -s * std::sin(sp.phi), c - s * std::cos(sp.phi);
  return (sp.n_sq + 0.5) * g;
}

struct SqueezeFit {
  SqueezeParams params;
  bool degenerate = false;  ///< r = 0: phi undefined, reported as 0
  bool unphysical = false;  ///< det(cov) < 1/4 beyond tolerance
};

inline SqueezeFit covariance_to_squeeze(const Mat2& cov) {
  if (!cov.allFinite() || std::abs(cov(0, 1) - cov(1, 0)) > 1e-12 * cov.cwiseAbs().maxCoeff())
    throw std::invalid_argument("covariance must be finite and symmetric");
  const Eigen::SelfAdjointEigenSolver<Mat2> es(cov);
  const double lo = es.eigenvalues()(0), hi = es.eigenvalues()(1);
  if (!(lo > 0.0)) throw unphysical_state("covariance is not positive definite");
  SqueezeFit f;
  const double det = lo * hi;
  f.unphysical = det < 0.25 * (1.0 - heisenberg_tolerance);
  f.params.n_sq = std::sqrt(det) - 0.5;
  f.params.r = 0.25 * std::log(hi / lo);
  const double a = cov(0, 0) - cov(1, 1), b = -2.0 * cov(0, 1);
  if (std::hypot(a, b) <= 1e-12 * (hi + lo)) {
    f.degenerate = true;
    f.params.phi = 0.0;
  } else {
    f.params.phi = std::atan2(b, a);
    if (f.params.phi < 0.0) f.params.phi += two_pi;
  }
  return f;
}

/// Measurement angle of least variance, (pi - phi) / 2 folded into [0, pi).
inline double min_variance_angle(const SqueezeParams& sp) {
  double t = std::fmod(0.5 * (std::numbers::pi - sp.phi), std::numbers::pi);
  return t < 0.0 ? t + std::numbers::pi : t;
}

inline double purity(const SqueezeParams& sp) {
  if (!(sp.n_sq >= -1e-12)) throw std::domain_error("purity needs n_sq >= 0");
  return 1.0 / (1.0 + 2.0 * sp.n_sq);
}

/// Number-state populations P_0..P_{N-1} of a zero-mean Gaussian state,
/// from the coefficients of the generating function
/// sum P_n z^n = (q0 + q1 z + q2 z^2)^(-1/2), with M = G - I/2,
/// q0 = 1 + tr M + det M, q1 = -(tr M + 2 det M), q2 = det M.
inline std::vector<double> fock_populations(const SqueezeParams& sp, std::size_t n) {
  if (n < 1) throw std::invalid_argument("Fock truncation must be >= 1");
  // in terms of nu = n_sq + 1/2 and c = cosh 2r
  const double nu = sp.n_sq + 0.5, c = std::cosh(2.0 * sp.r);
  const double q0 = nu * nu + nu * c + 0.25;
  const double q1 = -2.0 * sp.n_sq * (sp.n_sq + 1.0);
  const double q2 = nu * nu - nu * c + 0.25;
  std::vector<double> p(n);
  p[0] = 1.0 / std::sqrt(q0);
  for (std::size_t k = 0; k + 1 < n; ++k) {
    const double kd = static_cast<double>(k);
    const double prev = k > 0 ? p[k - 1] : 0.0;
    p[k + 1] = -((2.0 * kd + 1.0) * q1 * p[k] + 2.0 * kd * q2 * prev) / (2.0 * q0 * (kd + 1.0));
  }
  double sum = 0.0;
  for (double& v : p) {
    v = std::max(v, 0.0);
    sum += v;
  }
  if (1.0 - sum >= 1e-6)
    throw std::domain_error("Fock truncation " + std::to_string(n) + " leaves tail mass " + std::to_string(1.0 - sum));
  return p;
}

/// Populations with the truncation doubled from 60 until the tail is < 1e-6.
inline std::vector<double> fock_populations(const SqueezeParams& sp) {
  for (std::size_t n = 60; n <= (1u << 20); n *= 2) {
    try {
      return fock_populations(sp, n);
    } catch (const std::domain_error&) {
    }
  }
  throw std::domain_error("Fock truncation exceeded 2^20 levels");
}

/// Case-resampling percentile bootstrap. `estimator` maps a dataset to a
/// fixed-length vector of statistics.
inline std::vector<Interval> bootstrap_ci(const MarginalDataset& data,
                                          const std::function<std::vector<double>(const MarginalDataset&)>& estimator,
                                          std::size_t resamples, double level, std::uint64_t seed,
                                          unsigned threads = 1) {
  if (resamples < 200) throw std::invalid_argument("bootstrap needs at least 200 resamples");
  const std::size_t n = data.points.size();
  return bootstrap_percentiles(resamples, level, threads, [&](std::size_t b) -> std::optional<std::vector<double>> {
    Rng rng(seed, Stream::bootstrap, b);
    MarginalDataset re;
    re.eta_q = data.eta_q;
    re.points.resize(n);
    for (auto& p : re.points) p = data.points[rng.index_below(n)];
    return estimator(re);
  });
}

struct ReconstructionResult {
  Mat2 cov = Mat2::Zero();
  SqueezeParams squeeze;
  bool degenerate = false;
  bool unphysical = false;
  std::vector<double> fock_diag;
  double purity = 1.0;
  std::size_t iterations = 0;
  std::map<std::string, Interval> ci;  ///< r, n_sq, phi, purity
  std::vector<Interval> fock_ci;
  double level = 0.9;

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["schema_version"] = 1;
    j["cov"] = {{cov(0, 0), cov(0, 1)}, {cov(1, 0), cov(1, 1)}};
    j["r"] = squeeze.r;
    j["n_sq"] = squeeze.n_sq;
    j["phi"] = squeeze.phi;
    j["phi_degenerate"] = degenerate;
    j["unphysical"] = unphysical;
    j["purity"] = purity;
    j["iterations"] = iterations;
    j["fock_diag"] = fock_diag;
    j["ci_level"] = level;
    nlohmann::ordered_json c = nlohmann::ordered_json::object();
    for (const auto& [k, v] : ci) c[k] = {v.low, v.high};
    j["ci"] = c;
    return j;
  }
};

struct TomographyOptions {
  ReconstructionOptions reconstruction;
  std::size_t resamples = 1000;  ///< 0 disables the bootstrap
  double level = 0.9;
  std::size_t fock_levels = 10;  ///< populations carried through the bootstrap
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Point estimate plus percentile intervals for r, n_sq, phi, purity and the
/// first `fock_levels` populations.
inline ReconstructionResult reconstruct(const MarginalDataset& data, const TomographyOptions& opt = {}) {
  ReconstructionResult res;
  const CovarianceFit fit = reconstruct_covariance(data, opt.reconstruction);
  res.cov = fit.cov;
  res.iterations = fit.iterations;
  const SqueezeFit sf = covariance_to_squeeze(fit.cov);
  res.squeeze = sf.params;
  res.degenerate = sf.degenerate;
  res.unphysical = sf.unphysical;
  res.purity = sf.params.n_sq >= 0.0 ? purity(sf.params) : 1.0 / (1.0 + 2.0 * sf.params.n_sq);
  res.fock_diag = fock_populations(sf.params);
  res.level = opt.level;
  if (opt.resamples == 0) return res;

  const std::size_t nf = std::min(opt.fock_levels, res.fock_diag.size());
  const double phi_hat = sf.params.phi;
  if (opt.resamples < 200) throw std::invalid_argument("bootstrap needs at least 200 resamples");
  // case resampling straight into the angle bins
  std::vector<double> phis;
  for (const auto& p : data.points) phis.push_back(p.phi);
  std::sort(phis.begin(), phis.end());
  phis.erase(std::unique(phis.begin(), phis.end()), phis.end());
  std::vector<std::uint32_t> bin_of(data.points.size());
  std::vector<double> x2(data.points.size());
  for (std::size_t i = 0; i < data.points.size(); ++i) {
    bin_of[i] = static_cast<std::uint32_t>(std::lower_bound(phis.begin(), phis.end(), data.points[i].phi) - phis.begin());
    x2[i] = data.points[i].x * data.points[i].x;
  }
  const double d2 = opt.reconstruction.deconvolve ? data.delta2() : 0.0;
  const std::size_t n = data.points.size();
  const auto ivs = bootstrap_percentiles(
      opt.resamples, opt.level, opt.threads, [&](std::size_t b) -> std::optional<std::vector<double>> {
        Rng rng(opt.seed, Stream::bootstrap, b);
        std::vector<detail::AngleBin> bins(phis.size());
        for (std::size_t k = 0; k < phis.size(); ++k) bins[k].e = axis(phis[k]);
        for (std::size_t i = 0; i < n; ++i) {
          const std::size_t j = rng.index_below(n);
          bins[bin_of[j]].n += 1.0;
          bins[bin_of[j]].s += x2[j];
        }
        std::erase_if(bins, [](const detail::AngleBin& a) { return a.n == 0.0; });
        const SqueezeParams sp = covariance_to_squeeze(detail::fit_bins(bins, d2, opt.reconstruction).cov).params;
        // keep phi on the branch of the point estimate
        const double phi = phi_hat + std::remainder(sp.phi - phi_hat, two_pi);
        std::vector<double> v{sp.r, sp.n_sq, phi, 1.0 / (1.0 + 2.0 * sp.n_sq)};
        const auto pf = fock_populations(sp);
        for (std::size_t k = 0; k < nf; ++k) v.push_back(k < pf.size() ? pf[k] : 0.0);
        return v;
      });
  res.ci["r"] = ivs[0];
  res.ci["n_sq"] = ivs[1];
  res.ci["phi"] = ivs[2];
  res.ci["purity"] = ivs[3];
  res.fock_ci.assign(ivs.begin() + 4, ivs.end());
  return res;
}

/// Reads (phi_rad, x_quanta_sqrt) rows; a header line is skipped. eta_q
/// comes from the JSON metadata file.
inline MarginalDataset read_marginals(const std::string& csv_path, const std::string& json_path) {
  MarginalDataset d;
  std::ifstream meta(json_path);
  if (!meta) throw std::runtime_error("cannot open " + json_path);
  const auto j = nlohmann::json::parse(meta);
  if (!j.contains("eta_q")) throw std::invalid_argument(json_path + ": missing field eta_q");
  d.eta_q = j.at("eta_q").get<double>();
  std::ifstream csv(csv_path);
  if (!csv) throw std::runtime_error("cannot open " + csv_path);
  std::string line;
  std::size_t row = 0;
  while (std::getline(csv, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (row == 1 && line.find_first_of("0123456789") != 0 && line[0] != '-' && line[0] != '.') continue;
    std::istringstream in(line);
    MarginalPoint p;
    char comma = 0;
    if (!(in >> p.phi >> comma >> p.x) || comma != ',')
      throw std::invalid_argument(csv_path + ":" + std::to_string(row) + ": expected phi_rad,x_quanta_sqrt");
    d.points.push_back(p);
  }
  d.check();
  return d;
}

inline void write_marginals(const MarginalDataset& d, const std::string& csv_path, const std::string& json_path) {
  std::ofstream csv(csv_path, std::ios::binary);
  if (!csv) throw std::runtime_error("cannot write " + csv_path);
  csv << "phi_rad,x_quanta_sqrt\n" << std::setprecision(17);
  for (const auto& p : d.points) csv << p.phi << ',' << p.x << '\n';
  std::ofstream js(json_path, std::ios::binary);
  if (!js) throw std::runtime_error("cannot write " + json_path);
  js << nlohmann::ordered_json{{"schema_version", 1}, {"eta_q", d.eta_q}}.dump(2) << '\n';
}

}  // namespace tea
