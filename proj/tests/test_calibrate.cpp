#include <catch_amalgamated.hpp>

#include "tea/calibrate.hpp"

#include <random>

using namespace tea;
using Catch::Approx;

namespace {

PumpSegment pump(double gp_hz, double gm_hz, double duration = 0.0) {
  PumpSegment s;
  s.gamma_plus = hz(gp_hz);
  s.gamma_minus = hz(gm_hz);
  s.duration = duration;
  return s;
}

PulseSchedule readout(double gp_hz, double gm_hz, double t_amp) {
  return {pump(gp_hz, gm_hz, t_amp), pump(0, 181e3, 20e-6)};
}

ShotRecord noiseless(const Vec2& x, const Readout& ro) {
  ShotRecord a = synthesize_trace(x, ro, 1);
  const ShotRecord b = synthesize_trace(Vec2::Zero(), ro, 1);
  for (std::size_t k = 0; k < a.samples.size(); ++k) a.samples[k] -= b.samples[k];
  return a;
}

}  // namespace

TEST_CASE("dB conversion") {
  CHECK(to_db(0.5) == 0.0);
  CHECK(to_db(0.25) == Approx(-3.0103).margin(1e-4));
  CHECK(to_db(0.0707) == Approx(-8.5).margin(0.01));
  for (double v : {1e-3, 0.3, 7.0, 1e4}) {
    CHECK(to_db(2 * v) - to_db(v) == Approx(10 * std::log10(2.0)).epsilon(1e-12));
    CHECK(from_db(to_db(v)) == Approx(v).epsilon(1e-12));
  }
  CHECK_THROWS(to_db(0.0));
  CHECK_THROWS(to_db(-1.0));
}

TEST_CASE("residual occupancy") {
  CHECK(residual_occupancy(37.0, 36.0) == Approx(0.0).margin(1e-15));
  CHECK(residual_occupancy(35.238, 36.0) == Approx(0.05).margin(1e-4));
  CHECK(residual_occupancy(18.5, 36.0) == Approx(1.0).epsilon(1e-12));
  CHECK_THROWS(residual_occupancy(1.0, 36.0));
  double prev = 1e9;
  for (double r = 1.5; r < 100; r *= 1.3) {
    const double n = residual_occupancy(r, 36.0);
    CHECK(n < prev);
    prev = n;
  }
}

TEST_CASE("sideband-cooling and amplification limits") {
  const DeviceParams d = default_device();
  CHECK(sideband_resolution_floor(d) == Approx(0.00825).margin(1e-5));
  const SidebandLimits lim = sideband_limits(pump(0, 181e3), pump(73e3, 0), d);
  CHECK(lim.n_sb_min == Approx(0.012).margin(0.002));
  CHECK(lim.n_add_min == Approx(0.018).margin(0.002));
  CHECK_THROWS(sideband_limits(pump(0, 10), pump(73e3, 0), d));
  CHECK_THROWS(sideband_limits(pump(0, 181e3), pump(10, 0), d));
}

TEST_CASE("added-noise inference") {
  const double n_m = 36.0;
  SECTION("exact inverse of the ratio model") {
    for (double a : {0.0, 0.03, 0.0706, 0.5, 3.0})
      for (double nsb : {0.0, 0.012, 0.2}) {
        const double r = added_noise_ratio(a, n_m, nsb);
        CHECK(infer_added_noise(r * 1.7, 1.7, n_m, nsb) == Approx(a).margin(1e-12 * (1 + a)));
      }
  }
  SECTION("efficiency at the optimum") {
    const double a = from_db(-8.5);
    CHECK(quantum_efficiency(a) == Approx(0.876).margin(0.001));
  }
  SECTION("lower assumed occupancy is the conservative choice") {
    const double r = added_noise_ratio(0.08, n_m, 0.05);
    double prev = 1e9;
    for (double nsb : {0.0, 0.01, 0.05, 0.1}) {
      const double a = infer_added_noise(r, 1.0, n_m, nsb);
      CHECK(a < prev);
      prev = a;
    }
  }
  SECTION("inconsistent ratios are reported") {
    CHECK_THROWS_AS(infer_added_noise(1.0, 2.0, n_m, 0.0), std::domain_error);
    CHECK_THROWS_AS(infer_added_noise(2.0, 1.0, 1.0, 5.0), inconsistent_calibration);
  }
}

TEST_CASE("squeezing inference") {
  const DeviceParams d = default_device();
  const double n_m = 36.0;
  const PumpSegment amp = pump(73e3, 0, 30e-6);
  const double nadd = n_add_min(amp, d);
  SECTION("no squeezing") {
    const auto [lo, hi] = infer_squeezing(5.0, 5.0, 5.0, n_m, amp, d);
    CHECK(lo == Approx(n_m + 0.5));
    CHECK(hi == Approx(n_m + 0.5));
  }
  SECTION("exact inverse") {
    for (double sq : {0.05, 0.0957, 0.5, 2.0}) {
      const double r = squeezing_ratio(sq, n_m, nadd);
      const double r_anti = squeezing_ratio(4 * sq, n_m, nadd);
      const auto [lo, hi] = infer_squeezing(3.0, 3.0 / r_anti, 3.0 / r, n_m, amp, d);
      CHECK(lo == Approx(sq).epsilon(1e-12));
      CHECK(hi == Approx(4 * sq).epsilon(1e-12));
    }
  }
  SECTION("lowest added noise is the conservative choice") {
    const double r = squeezing_ratio(0.1, n_m, 0.05);
    double prev = 1e9;
    for (double a : {0.0, 0.02, 0.05, 0.1}) {
      const double v = infer_squeezing(r, 1.0, 1.0, n_m, a).first;
      CHECK(v < prev);
      prev = v;
    }
  }
  SECTION("negative results are reported, not clipped") {
    const auto [lo, hi] = infer_squeezing(1000.0, 1.0, 0.1, n_m, nadd);
    CHECK(lo < 0.0);
    CHECK(hi > lo);
  }
  CHECK_THROWS(infer_squeezing(1, 1, 1, n_m, pump(73e3, 10e3), d));
}

TEST_CASE("gain from the amplification envelope") {
  const DeviceParams d = default_device();
  ReceiverParams rx;
  SECTION("noiseless trace") {
    const Readout ro(readout(100e3, 50e3, 20e-6), d, rx);
    const double g = gain_from_envelope(noiseless(Vec2(1, 0), ro), ro);
    CHECK(g == Approx(535.0).epsilon(0.01));
    CHECK(g == Approx(ro.gain()).epsilon(0.01));
  }
  SECTION("balanced pumps") {
    const Readout ro(readout(50e3, 50e3, 20e-6), d, rx);
    CHECK(gain_from_envelope(noiseless(Vec2(0.3, 1), ro), ro) == Approx(1.0).epsilon(0.01));
  }
  SECTION("gain follows theory across a pump-ratio sweep") {
    for (double ratio : {1.1, 1.3, 1.6, 2.0, 2.5}) {
      const PulseSchedule s = readout(ratio * 60e3, 60e3, 30e-6);
      const Readout ro(s, d, rx);
      CHECK(gain_from_envelope(noiseless(Vec2(1, 1), ro), ro) == Approx(energy_gain(s[0], d, 30e-6)).epsilon(0.01));
    }
  }
  SECTION("weak signal is refused") {
    const Readout ro(readout(100e3, 50e3, 20e-6), d, rx);
    CHECK_THROWS_WITH(gain_from_envelope(synthesize_trace(Vec2::Zero(), ro, 3), ro),
                      Catch::Matchers::ContainsSubstring("too weak"));
  }
  SECTION("short windows are refused") {
    const Readout ro(readout(100e3, 50e3, 3e-6), d, rx);
    CHECK_THROWS_WITH(gain_from_envelope(noiseless(Vec2(1, 0), ro), ro), Catch::Matchers::ContainsSubstring("10 heterodyne"));
  }
}

TEST_CASE("thermal sweep fit") {
  SECTION("exact line") {
    const double g = 3.2;
    std::vector<std::pair<double, double>> pts;
    for (double n : {10.0, 20.0, 36.0, 50.0}) pts.emplace_back(n, g * (n + 1));
    const auto f = fit_thermal_sweep(pts);
    CHECK(f.intercept == Approx(g).epsilon(1e-12));
    CHECK(f.n_add == Approx(0.0).margin(1e-12));
  }
  SECTION("injected added noise is recovered") {
    std::mt19937_64 gen(4);
    std::normal_distribution<double> noise(0.0, 0.5);
    std::vector<std::pair<double, double>> pts;
    for (double n = 5; n <= 60; n += 5) pts.emplace_back(n, 2.0 * (n + 1.4 + 1) + noise(gen));
    const auto f = fit_thermal_sweep(pts);
    CHECK(f.n_add_se > 0.0);
    CHECK(std::abs(f.n_add - 1.4) < 3 * f.n_add_se);
  }
  SECTION("degenerate input") {
    CHECK_THROWS_WITH(fit_thermal_sweep({{10, 1}, {10, 2}, {10, 3}}), Catch::Matchers::ContainsSubstring("degenerate"));
    CHECK_THROWS(fit_thermal_sweep({{10, 1}, {20, 2}}));
  }
}

TEST_CASE("calibration records serialize") {
  CalibrationRecord r{"ratio=1.2", "minus", 0.0707, 0.05, 0.09, "y_factor"};
  const auto j = r.to_json();
  CHECK(j["value_db"].get<double>() == Approx(-8.5).margin(0.01));
  CHECK(j["method"] == "y_factor");
}
