#pragma once

// Small estimators shared by calibration, tomography and the test-suite.

#include "tea/model.hpp"
#include "tea/random.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace tea {

inline Vec2 sample_mean(const std::vector<Vec2>& xs) {
  if (xs.empty()) throw std::invalid_argument("sample_mean of an empty ensemble");
  Vec2 m = Vec2::Zero();
  for (const auto& x : xs) m += x;
  return m / static_cast<double>(xs.size());
}

/// Unbiased (N-1) sample covariance.
inline Mat2 sample_covariance(const std::vector<Vec2>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("sample covariance needs at least two samples");
  const Vec2 m = sample_mean(xs);
  Mat2 c = Mat2::Zero();
  for (const auto& x : xs) c += (x - m) * (x - m).transpose();
  return c / static_cast<double>(xs.size() - 1);
}

/// Standard errors of the sample covariance entries of a Gaussian ensemble:
/// var(S_ij) = (G_ii G_jj + G_ij^2) / (N - 1).
inline Mat2 covariance_standard_error(const Mat2& g, std::size_t n) {
  Mat2 se;
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) se(i, j) = std::sqrt((g(i, i) * g(j, j) + g(i, j) * g(i, j)) / static_cast<double>(n - 1));
  return se;
}

inline double sample_variance(const std::vector<double>& xs) {
  if (xs.size() < 2) throw std::invalid_argument("sample variance needs at least two samples");
  double m = 0.0;
  for (double x : xs) m += x;
  m /= static_cast<double>(xs.size());
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return s / static_cast<double>(xs.size() - 1);
}

/// Linear-interpolated quantile (type 7) of an unsorted sample.
inline double quantile(std::vector<double> xs, double p) {
  if (xs.empty()) throw std::invalid_argument("quantile of an empty sample");
  std::sort(xs.begin(), xs.end());
  const double h = p * static_cast<double>(xs.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, xs.size() - 1);
  return xs[lo] + (h - static_cast<double>(lo)) * (xs[hi] - xs[lo]);
}

struct LineFit {
  double slope = 0.0;
  double intercept = 0.0;
  double slope_se = 0.0;
  double intercept_se = 0.0;
  double covariance = 0.0;  ///< cov(intercept, slope)
};

/// Weighted least squares y = intercept + slope x. Standard errors use the
/// residual scatter when more than two points are available.
inline LineFit fit_line(const std::vector<double>& x, const std::vector<double>& y, const std::vector<double>& w = {}) {
  const std::size_t n = x.size();
  if (n != y.size() || (!w.empty() && w.size() != n)) throw std::invalid_argument("fit_line: size mismatch");
  if (n < 2) throw std::invalid_argument("fit_line: need at least two points");
  double sw = 0, sx = 0, sy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    sw += wi;
    sx += wi * x[i];
    sy += wi * y[i];
  }
  const double mx = sx / sw, my = sy / sw;
  double sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    sxx += wi * (x[i] - mx) * (x[i] - mx);
    sxy += wi * (x[i] - mx) * (y[i] - my);
  }
  if (!(sxx > 1e-300 * std::max(1.0, mx * mx * sw))) throw std::invalid_argument("degenerate abscissae");
  LineFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  if (n > 2) {
    double rss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double wi = w.empty() ? 1.0 : w[i];
      const double r = y[i] - f.intercept - f.slope * x[i];
      rss += wi * r * r;
    }
    const double s2 = rss / static_cast<double>(n - 2);
    f.slope_se = std::sqrt(s2 / sxx);
    f.intercept_se = std::sqrt(s2 * (1.0 / sw + mx * mx / sxx));
    f.covariance = -mx * s2 / sxx;
  }
  return f;
}

struct Interval {
  double low = 0.0;
  double high = 0.0;
};

/// Percentile bootstrap over several statistics at once. `statistic(b)`
/// evaluates resample b (its cases drawn from a stream indexed by b) and
/// returns nullopt on failure. Fails when more than 5% of resamples fail.
inline std::vector<Interval> bootstrap_percentiles(
    std::size_t resamples, double level, unsigned threads,
    const std::function<std::optional<std::vector<double>>(std::size_t)>& statistic) {
  if (resamples < 1) throw std::invalid_argument("bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  std::vector<std::optional<std::vector<double>>> values(resamples);
  parallel_for(resamples, threads, [&](std::size_t b) {
    try {
      values[b] = statistic(b);
    } catch (const std::exception&) {
      values[b].reset();
    }
  });
  std::vector<std::vector<double>> columns;
  std::size_t failed = 0;
  for (const auto& v : values) {
    if (!v || !std::all_of(v->begin(), v->end(), [](double x) { return std::isfinite(x); })) {
      ++failed;
      continue;
    }
    if (columns.empty()) columns.resize(v->size());
    if (v->size() != columns.size()) throw std::logic_error("bootstrap statistic changed length");
    for (std::size_t j = 0; j < v->size(); ++j) columns[j].push_back((*v)[j]);
  }
  if (static_cast<double>(failed) > 0.05 * static_cast<double>(resamples))
    throw nonconvergence("estimator failed on more than 5% of bootstrap resamples");
  const double tail = 0.5 * (1.0 - level);
  std::vector<Interval> out;
  for (auto& c : columns) out.push_back({quantile(c, tail), quantile(c, 1.0 - tail)});
  return out;
}

inline Interval bootstrap_percentile(std::size_t resamples, double level, unsigned threads,
                                     const std::function<std::optional<double>(std::size_t)>& statistic) {
  return bootstrap_percentiles(resamples, level, threads, [&](std::size_t b) -> std::optional<std::vector<double>> {
    const auto v = statistic(b);
    if (!v) return std::nullopt;
    return std::vector<double>{*v};
  })[0];
}

}  // namespace tea
