#include <catch_amalgamated.hpp>

#include "tea/protocol.hpp"

using namespace tea;
using Catch::Approx;

namespace {

Experiment small(ExperimentKind k) {
  Experiment e = default_experiment(k);
  e.resamples = 200;
  return e;
}

double col(const ExperimentResult& r, std::size_t row, const std::string& name) { return r.table.rows[row][r.table.index(name)]; }

}  // namespace

TEST_CASE("default experiments are well formed") {
  for (auto k : {ExperimentKind::added_noise_sweep, ExperimentKind::squeeze_sweep, ExperimentKind::tomography_run,
                 ExperimentKind::direct_variance_vs_angle, ExperimentKind::thermal_sweep}) {
    const Experiment e = default_experiment(k);
    CHECK_NOTHROW(check_experiment(e));
    CHECK(validate(e.schedule_template, e.device).empty());
    CHECK(parse_experiment_kind(to_string(k)) == k);
  }
  CHECK_FALSE(parse_experiment_kind("nope"));
  CHECK(default_experiment(ExperimentKind::added_noise_sweep).sweep.size() == 12);
  CHECK(default_experiment(ExperimentKind::squeeze_sweep).sweep.front() == Approx(0.1));
  CHECK(default_experiment(ExperimentKind::squeeze_sweep).sweep.back() == Approx(0.9));
}

TEST_CASE("malformed experiments are rejected") {
  Experiment e = small(ExperimentKind::added_noise_sweep);
  e.sweep.clear();
  CHECK_THROWS_WITH(check_experiment(e), Catch::Matchers::ContainsSubstring("sweep"));
  e = small(ExperimentKind::added_noise_sweep);
  e.schedule_template.pop_back();
  CHECK_THROWS_WITH(check_experiment(e), Catch::Matchers::ContainsSubstring("transfer"));
  e = small(ExperimentKind::added_noise_sweep);
  std::swap(e.schedule_template[0], e.schedule_template[1]);
  CHECK_THROWS(check_experiment(e));
  e = small(ExperimentKind::added_noise_sweep);
  e.shots = 1;
  CHECK_THROWS_WITH(check_experiment(e), Catch::Matchers::ContainsSubstring("shots"));
  e = small(ExperimentKind::squeeze_sweep);
  CHECK_THROWS_WITH(run_added_noise_sweep(e), Catch::Matchers::ContainsSubstring("added_noise_sweep"));
}

TEST_CASE("theory curves: main-text minimum, phase-insensitive limit and reduction") {
  const DeviceParams d = default_device();
  const double gm = hz(181e3);
  const auto m = minimize_curve([&](double r) { return ideal_added_noise(r, gm, d, Quadrature::minus); }, 1.1, 4.0);
  // -10.6 dB with the reference device
  CHECK(to_db(m.value) < -10.0);
  CHECK(m.x > 1.1);
  CHECK(m.x < 1.4);
  CHECK(ideal_added_noise(1e4, gm, d, Quadrature::minus) == Approx(0.5).epsilon(0.03));
  CHECK(ideal_added_noise(1e4, gm, d, Quadrature::plus) == Approx(0.5).epsilon(0.03));

  Experiment e = small(ExperimentKind::added_noise_sweep);
  e.overlay = {0.0, 0.0};
  e.full.pump_shift = false;
  const Table t = added_noise_theory(e);
  const PumpSegment amp = e.schedule_template[find_role(e.schedule_template, "amplify")];
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const Vec2 ideal = added_noise_referred(undetuned(with_ratio(amp, e.sweep[i])), d, Theory::ideal);
    CHECK(t.rows[i][t.index("full_minus")] == Approx(ideal(0)).epsilon(1e-12));
    CHECK(t.rows[i][t.index("full_plus")] == Approx(ideal(1)).epsilon(1e-12));
  }
}

TEST_CASE("squeeze theory at zero blue pump is isotropic") {
  Experiment e = small(ExperimentKind::squeeze_sweep);
  e.sweep = {0.0, 0.5};
  const Table t = squeeze_theory(e);
  CHECK(t.rows[0][t.index("ideal_minus")] == Approx(t.rows[0][t.index("ideal_plus")]));
  CHECK(t.rows[1][t.index("ideal_minus")] < t.rows[1][t.index("ideal_plus")]);
}

TEST_CASE("sweeps are independent of the thread count") {
  Experiment e = small(ExperimentKind::added_noise_sweep);
  e.sweep = {1.5, 2.5};
  e.shots = 256;
  e.threads = 1;
  const auto a = run_experiment(e);
  e.threads = 3;
  const auto b = run_experiment(e);
  CHECK(a.table.rows == b.table.rows);
  CHECK(a.doc.dump() == b.doc.dump());
  e.seed = 2;
  CHECK(run_experiment(e).table.rows != a.table.rows);
}

TEST_CASE("added-noise pipeline recovers the generating model at ratio 2") {
  Experiment e = small(ExperimentKind::added_noise_sweep);
  e.sweep = {2.0};
  e.seed = 11;
  const auto r = run_added_noise_sweep(e);
  for (const char* q : {"minus", "plus"}) {
    const std::string suffix = std::string(q) == "minus" ? "" : "_plus";
    const double model = col(r, 0, std::string("model_") + q);
    CHECK(col(r, 0, "ci" + suffix + "_low_quanta") <= model);
    CHECK(model <= col(r, 0, "ci" + suffix + "_high_quanta"));
  }
  CHECK(r.doc["records"].size() == 2);
  CHECK(r.doc["records"][0]["method"] == "y_factor");
}

TEST_CASE("squeeze pipeline at ratio 0.5 matches the steady-state variance") {
  Experiment e = small(ExperimentKind::squeeze_sweep);
  e.sweep = {0.5};
  e.seed = 5;
  const auto r = run_squeeze_sweep(e);
  const PumpSegment prep = with_ratio(e.schedule_template[0], 0.5);
  const double ideal = squeezed_variance_ideal(prep, e.device, Quadrature::minus);
  CHECK(col(r, 0, "ci_low_quanta") <= ideal);
  CHECK(ideal <= col(r, 0, "ci_high_quanta"));
  CHECK(col(r, 0, "sq_minus") < 0.5);
  CHECK(col(r, 0, "sq_plus") > 0.5);
}

TEST_CASE("direct variance: cooled input is flat and every curve is pi-periodic") {
  Experiment e = small(ExperimentKind::direct_variance_vs_angle);
  e.shots = 1024;
  e.sweep.clear();
  for (int i = 0; i < 8; ++i) e.sweep.push_back(std::numbers::pi * i / 4.0);

  SECTION("cooled") {
    e.input_state = SqueezeParams{0.0, 0.02, 0.0};
    const auto r = run_direct_variance_vs_angle(e);
    const double a = r.doc["added_noise_model"].get<double>();
    CHECK(col(r, 0, "model") == Approx((36.5 * (0.52 + a)) / (36.5 + a)).epsilon(1e-9));
    double mean = 0.0, width = 0.0;
    for (std::size_t i = 0; i < r.table.rows.size(); ++i) {
      CHECK(col(r, i, "model") == Approx(col(r, 0, "model")).epsilon(1e-9));
      mean += col(r, i, "total_variance") / 8.0;
      width += (col(r, i, "ci_high_quanta") - col(r, i, "ci_low_quanta")) / 8.0;
    }
    // angles share one thermal reference, so their errors are correlated
    CHECK(std::abs(mean - col(r, 0, "model")) < 3.0 * width / 3.3);
  }
  SECTION("squeezed") {
    const auto r = run_direct_variance_vs_angle(e);
    for (std::size_t i = 0; i < 4; ++i) {
      const double v1 = col(r, i, "total_variance"), v2 = col(r, i + 4, "total_variance");
      const double s1 = col(r, i, "ci_high_quanta") - col(r, i, "ci_low_quanta");
      const double s2 = col(r, i + 4, "ci_high_quanta") - col(r, i + 4, "ci_low_quanta");
      // 90% intervals span about 3.3 standard errors
      CHECK(std::abs(v1 - v2) < 4.0 * std::hypot(s1, s2) / 3.3);
      CHECK(col(r, i, "model") == Approx(col(r, i + 4, "model")).epsilon(1e-9));
    }
  }
}

TEST_CASE("periodic fit recovers the minimum of a sampled sinusoid") {
  std::vector<double> phi, v;
  for (int i = 0; i < 16; ++i) {
    phi.push_back(std::numbers::pi * i / 16.0);
    v.push_back(1.0 - 0.6 * std::cos(2.0 * (phi.back() - 0.83)));
  }
  const auto m = fit_pi_periodic_minimum(phi, v);
  CHECK(m.value == Approx(0.4).epsilon(1e-12));
  CHECK(m.x == Approx(0.83).epsilon(1e-12));
}

TEST_CASE("tomography of a sideband-cooled state is near vacuum") {
  Experiment e = small(ExperimentKind::tomography_run);
  e.input_state = SqueezeParams{0.0, 0.02, 0.0};
  e.shots = 1000;
  const auto r = run_tomography(e);
  CHECK(col(r, 0, "P_n") == Approx(0.98).margin(0.02));
  CHECK(r.table.rows.size() == 10);
}

TEST_CASE("tomography without efficiency correction reconstructs state plus chain noise") {
  Experiment e = small(ExperimentKind::tomography_run);
  e.receiver.n_hemt = 0.0;
  e.eta_q = 1.0;
  e.shots = 4000;
  e.resamples = 200;
  const TomographyRun run = tomography_pipeline(e);
  const Chain chain(e.schedule_template, e.device, e.receiver, e.theory, e.full, true);
  const Mat2 expect = run.truth + chain.added_noise()(0) * Mat2::Identity();
  const Eigen::Vector3d se = covariance_standard_errors(run.data, expect, false);
  const Mat2& g = run.result.cov;
  CHECK(std::abs(g(0, 0) - expect(0, 0)) < 3.0 * se(0));
  CHECK(std::abs(g(0, 1) - expect(0, 1)) < 3.0 * se(1));
  CHECK(std::abs(g(1, 1) - expect(1, 1)) < 3.0 * se(2));
}

TEST_CASE("thermal sweep is linear in the bath occupancy") {
  Experiment e = small(ExperimentKind::thermal_sweep);
  e.shots = 1024;
  const auto r = run_thermal_sweep(e);
  const double slope = r.doc["fit"]["slope"].get<double>();
  const double se = r.doc["fit"]["n_add_se"].get<double>();
  CHECK(slope == Approx(1.0).margin(0.05));
  CHECK(std::abs(r.doc["fit"]["n_add"].get<double>() - r.doc["n_add_model"].get<double>()) < 3.0 * se);
  for (std::size_t i = 0; i < r.table.rows.size(); ++i)
    CHECK(col(r, i, "gain_envelope") == Approx(col(r, i, "gain_model")).epsilon(0.02));
}

TEST_CASE("theory-only runs need no simulation") {
  for (auto k : {ExperimentKind::added_noise_sweep, ExperimentKind::squeeze_sweep, ExperimentKind::tomography_run,
                 ExperimentKind::direct_variance_vs_angle, ExperimentKind::thermal_sweep}) {
    const auto r = run_theory(default_experiment(k));
    CHECK_FALSE(r.table.rows.empty());
    CHECK(r.doc["schema_version"] == 1);
    CHECK(r.doc["mode"] == "theory");
  }
}
