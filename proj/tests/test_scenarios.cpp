#include "biphoton/scenarios.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

#include "biphoton/fitting.hpp"
#include "gtest/gtest.h"

using namespace biphoton;

namespace {

constexpr double kLambda0 = 363.8e-9;
constexpr double kLcoh = 100e-6;

ExperimentConfig base_config(ScenarioKind kind) {
  ExperimentConfig cfg;
  cfg.scenario = kind;
  cfg.rate_scale = 1000.0;
  return cfg;
}

}  // namespace

TEST(HomScenario, NullAtBalancedPositionAndGaussianProfile) {
  const auto sc = build_scenario(base_config(ScenarioKind::hom));
  const SweepSpec sweep{SweepCoordinate::delta_l_prime, -500e-6, 500e-6, 1001};
  const auto trace = run_sweep(sc, sweep);

  // Closed-form oracle evaluated directly: C (1 - exp[-1/2 (x/l_coh)^2]).
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double x = trace.coordinate[i];
    const double expected = 1000.0 * (1.0 - std::exp(-0.5 * (x / kLcoh) * (x / kLcoh)));
    EXPECT_NEAR(trace.r_ab[i], expected, 1e-12 * std::max(1.0, expected));
  }
  EXPECT_NEAR(trace.r_ab[500], 0.0, 1e-9);  // the null at dL' = 0

  // Singles stay constant: the twin reaches both beam-splitter ports.
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_NEAR(trace.r_a[i], 2000.0, 1e-9);
    EXPECT_NEAR(trace.r_b[i], 2000.0, 1e-9);
  }
}

TEST(FransonScenario, MatchesCaseOneClosedForm) {
  auto cfg = base_config(ScenarioKind::franson_fringe);
  const auto sc = build_scenario(cfg);
  const SweepSpec sweep{SweepCoordinate::delta_l, -2e-6, 2e-6, 801};
  const auto trace = run_sweep(sc, sweep);
  const double k0 = 2.0 * std::numbers::pi / kLambda0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double x = trace.coordinate[i];
    const double gamma_p = std::exp(-0.5 * (x / 5e-2) * (x / 5e-2));
    const double expected = 1000.0 * (1.0 + gamma_p * std::cos(k0 * x));
    EXPECT_NEAR(trace.r_ab[i], expected, 1e-9 * std::max(1.0, expected));
    EXPECT_NEAR(trace.r_a[i], 2000.0, 1e-9);
  }
}

TEST(DoublePassScenario, IdlerSweepShowsPumpWavelengthFringesInAllChannels) {
  const auto sc = build_scenario(base_config(ScenarioKind::double_pass));
  const SweepSpec sweep{SweepCoordinate::idler_mirror, -1e-6, 1e-6, 2001};
  const auto trace = run_sweep(sc, sweep);

  // Singles columns are identical to the coincidence column (ideal
  // detection): the twin can only reach the other detector.
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_EQ(trace.r_a[i], trace.r_ab[i]);
    EXPECT_EQ(trace.r_b[i], trace.r_ab[i]);
  }

  // Fringe period equals the pump wavelength within one grid step.
  const double step = trace.coordinate[1] - trace.coordinate[0];
  for (const auto* col : {&trace.r_ab, &trace.r_a, &trace.r_b}) {
    const double period = estimate_fringe_period(trace.coordinate, *col);
    EXPECT_NEAR(period, kLambda0, step);
  }
}

TEST(DoublePassScenario, AntidiagonalSweepGivesDipAtIntegerFringeOrder) {
  auto cfg = base_config(ScenarioKind::double_pass);
  cfg.fixed_delta_l = 4.0 * kLambda0;  // k0 dL = 8 pi: K = -1 branch
  const auto sc = build_scenario(cfg);
  const SweepSpec sweep{SweepCoordinate::antidiagonal_joint_displacement, -500e-6, 500e-6, 1001};
  const auto trace = run_sweep(sc, sweep);

  // delta_L held fixed while delta_L' spans the sweep; aux column carries
  // the per-mirror displacement x/4.
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_NEAR(trace.delta_l[i], cfg.fixed_delta_l, 1e-15);
    EXPECT_NEAR(trace.delta_l_prime[i], trace.coordinate[i], 1e-12);
    EXPECT_NEAR(trace.aux[i], trace.coordinate[i] / 4.0, 1e-18);
  }
  EXPECT_EQ(trace.aux_name, "mirror_displacement_um");

  // Dip: minimum at dL' = 0, approaching C away from it.
  EXPECT_NEAR(trace.r_ab[500], 0.0, 1e-3);
  EXPECT_NEAR(trace.r_ab.front(), 1000.0, 1e-2);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double x = trace.coordinate[i];
    const double expected = 1000.0 * (1.0 - std::exp(-0.5 * (x / kLcoh) * (x / kLcoh)));
    EXPECT_NEAR(trace.r_ab[i], expected, 1e-6 * std::max(1.0, expected));
  }
}

TEST(PartialTraceDemo, SinglesConstantWhileCoincidenceFringes) {
  auto cfg = base_config(ScenarioKind::partial_trace_demo);
  cfg.fringe_visibility = 0.8;
  const auto sc = build_scenario(cfg);
  const SweepSpec sweep{SweepCoordinate::delta_l, -1e-6, 1e-6, 501};
  const auto trace = run_sweep(sc, sweep);
  double lo = trace.r_ab[0], hi = trace.r_ab[0];
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_NEAR(trace.r_a[i], 2000.0, 1e-12 * 2000.0);
    EXPECT_NEAR(trace.r_b[i], 2000.0, 1e-12 * 2000.0);
    lo = std::min(lo, trace.r_ab[i]);
    hi = std::max(hi, trace.r_ab[i]);
  }
  EXPECT_GT(hi - lo, 1000.0);  // coincidences do fringe
}

TEST(PostponedCompensation, EnforcesSeparationWindow) {
  auto cfg = base_config(ScenarioKind::postponed_compensation);
  cfg.fixed_delta_l = 100e-6;  // not >> l_coh
  EXPECT_THROW(build_scenario(cfg), config_error);
  cfg.fixed_delta_l = 2e-2;  // not << l_coh_p
  EXPECT_THROW(build_scenario(cfg), config_error);
  cfg.fixed_delta_l = 1e-3;  // inside (0.5 mm, 1 cm)
  EXPECT_NO_THROW(build_scenario(cfg));
}

TEST(PostponedCompensation, DipDepthSetByPumpEnvelopeAndPhase) {
  auto cfg = base_config(ScenarioKind::postponed_compensation);
  cfg.fixed_delta_l = 1e-3;
  cfg.delta_phi = 0.0;
  const auto sc = build_scenario(cfg);
  const SweepSpec sweep{SweepCoordinate::delta_l_prime, -500e-6, 500e-6, 101};
  const auto trace = run_sweep(sc, sweep);
  const double k0 = 2.0 * std::numbers::pi / kLambda0;
  const double k_const = std::exp(-0.5 * std::pow(1e-3 / 5e-2, 2)) * std::cos(k0 * 1e-3);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const double x = trace.coordinate[i];
    const double expected =
        1000.0 * (1.0 + k_const * std::exp(-0.5 * (x / kLcoh) * (x / kLcoh)));
    EXPECT_NEAR(trace.r_ab[i], expected, 1e-9 * std::max(1.0, expected));
    EXPECT_NEAR(trace.r_a[i], 2000.0, 1e-9);
  }
}

TEST(CustomDiagram, SweepDisplacesRequestedQuantity) {
  auto cfg = base_config(ScenarioKind::custom_diagram);
  cfg.base_diagram.alt_a = {1e-3, 1e-3, 1e-3, 0.0, 0.0, 0.0};
  cfg.base_diagram.alt_b = {1e-3, 1e-3, 1e-3, 0.0, 0.0, 0.0};
  const auto sc = build_scenario(cfg);

  const auto p_dl = sc.params_at(SweepCoordinate::delta_l, 10e-6);
  EXPECT_NEAR(p_dl.delta_l, 10e-6, 1e-18);
  EXPECT_NEAR(p_dl.delta_l_prime, 0.0, 1e-18);

  const auto p_dlp = sc.params_at(SweepCoordinate::delta_l_prime, 10e-6);
  EXPECT_NEAR(p_dlp.delta_l, 0.0, 1e-18);
  EXPECT_NEAR(p_dlp.delta_l_prime, 10e-6, 1e-18);
}

TEST(RunSweep, TwoPointSweepMatchesDirectCalls) {
  const auto sc = build_scenario(base_config(ScenarioKind::hom));
  const SweepSpec sweep{SweepCoordinate::delta_l_prime, -100e-6, 100e-6, 2};
  const auto trace = run_sweep(sc, sweep);
  ASSERT_EQ(trace.size(), 2u);
  EXPECT_EQ(trace.coordinate.front(), -100e-6);
  EXPECT_EQ(trace.coordinate.back(), 100e-6);
  EXPECT_EQ(trace.r_ab.front(), sc.coincidence_at(SweepCoordinate::delta_l_prime, -100e-6));
  EXPECT_EQ(trace.r_ab.back(), sc.coincidence_at(SweepCoordinate::delta_l_prime, 100e-6));
}

TEST(RunSweep, RejectsMismatchedCoordinateAndBadSpecs) {
  const auto sc = build_scenario(base_config(ScenarioKind::hom));
  EXPECT_THROW(run_sweep(sc, {SweepCoordinate::idler_mirror, -1e-6, 1e-6, 100}), config_error);
  EXPECT_THROW(run_sweep(sc, {SweepCoordinate::delta_l_prime, 1e-6, -1e-6, 100}), config_error);
  EXPECT_THROW(run_sweep(sc, {SweepCoordinate::delta_l_prime, -1e-6, 1e-6, 1}), config_error);
}

TEST(RunSweep, DoublePassWarnsWhenDeltaLApproachesPumpCoherence) {
  const auto sc = build_scenario(base_config(ScenarioKind::double_pass));
  // Idler sweep to 6 mm: |delta_L| passes l_coh_p/10 = 5 mm.
  const auto trace = run_sweep(sc, {SweepCoordinate::idler_mirror, -6e-3, 6e-3, 51});
  bool warned = false;
  for (const auto& [k, v] : trace.metadata)
    if (k == "warning" && v.find("l_coh_p") != std::string::npos) warned = true;
  EXPECT_TRUE(warned);

  const auto tame = run_sweep(sc, {SweepCoordinate::idler_mirror, -1e-6, 1e-6, 51});
  for (const auto& [k, v] : tame.metadata) EXPECT_NE(k, "warning");
}

TEST(RunSweep, DetectionAffectsColumns) {
  auto cfg = base_config(ScenarioKind::double_pass);
  cfg.detection.efficiency_a = 0.5;
  cfg.detection.efficiency_b = 0.25;
  cfg.detection.background_a = 1.0;
  const auto sc = build_scenario(cfg);
  const SweepSpec sweep{SweepCoordinate::idler_mirror, -0.5e-6, 0.5e-6, 101};
  const auto trace = run_sweep(sc, sweep);
  const auto ideal = run_sweep(build_scenario(base_config(ScenarioKind::double_pass)), sweep);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_NEAR(trace.r_ab[i], 0.125 * ideal.r_ab[i], 1e-9);
    // Background references the mean interfering singles level C.
    EXPECT_NEAR(trace.r_a[i], 0.5 * (ideal.r_a[i] + 1000.0), 1e-9);
    EXPECT_NEAR(trace.r_b[i], 0.25 * ideal.r_b[i], 1e-9);
  }
}

TEST(AddNoise, LongDwellLimitIsNoiseless) {
  const auto sc = build_scenario(base_config(ScenarioKind::hom));
  const auto trace = run_sweep(sc, {SweepCoordinate::delta_l_prime, -300e-6, 300e-6, 41});
  const auto noisy = add_noise(trace, 1e9, 7);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (trace.r_ab[i] > 1.0)
      EXPECT_NEAR(noisy.r_ab[i], trace.r_ab[i], 1e-3 * trace.r_ab[i]);
  }
}

TEST(AddNoise, ZeroRatesStayZero) {
  const auto sc = build_scenario(base_config(ScenarioKind::hom));
  auto trace = run_sweep(sc, {SweepCoordinate::delta_l_prime, -300e-6, 300e-6, 41});
  for (auto& v : trace.r_ab) v = 0.0;
  const auto noisy = add_noise(trace, 0.1, 99);
  for (double v : noisy.r_ab) EXPECT_EQ(v, 0.0);
}

TEST(AddNoise, PoissonMeanMatchesRate) {
  // 10^4 points at rate 100/s with dwell 10 s: mean count 1000 per point.
  // The sample mean over all points must sit within 4 sqrt(1000)/sqrt(10^4)
  // of the truth, i.e. relative error < 1.3e-3 at 4 sigma.
  SweepTrace trace;
  const std::size_t n = 10000;
  for (std::size_t i = 0; i < n; ++i) {
    trace.coordinate.push_back(double(i));
    trace.delta_l.push_back(0.0);
    trace.delta_l_prime.push_back(0.0);
    trace.r_ab.push_back(100.0);
    trace.r_a.push_back(100.0);
    trace.r_b.push_back(100.0);
  }
  const auto noisy = add_noise(trace, 10.0, 20260810);
  double mean = 0.0;
  for (double v : noisy.r_ab) mean += v;
  mean /= double(n);
  EXPECT_NEAR(mean, 100.0, 100.0 * 4.0 * std::sqrt(1000.0) / 1000.0 / std::sqrt(double(n)));
}

TEST(AddNoise, SeededReproducibility) {
  const auto sc = build_scenario(base_config(ScenarioKind::hom));
  const auto trace = run_sweep(sc, {SweepCoordinate::delta_l_prime, -300e-6, 300e-6, 101});
  const auto n1 = add_noise(trace, 0.5, 1234);
  const auto n2 = add_noise(trace, 0.5, 1234);
  const auto n3 = add_noise(trace, 0.5, 1235);
  EXPECT_EQ(n1.r_ab, n2.r_ab);
  EXPECT_EQ(n1.r_a, n2.r_a);
  EXPECT_EQ(n1.r_b, n2.r_b);
  EXPECT_NE(n1.r_ab, n3.r_ab);
}

TEST(TraceCsv, RoundTripPreservesColumnsAndMetadata) {
  auto cfg = base_config(ScenarioKind::double_pass);
  cfg.fixed_delta_l = 2.0 * kLambda0;
  const auto sc = build_scenario(cfg);
  const auto trace =
      run_sweep(sc, {SweepCoordinate::antidiagonal_joint_displacement, -400e-6, 400e-6, 201});

  std::ostringstream out;
  write_trace_csv(trace, out);
  std::istringstream in(out.str());
  const auto back = read_trace_csv(in);

  ASSERT_EQ(back.size(), trace.size());
  EXPECT_EQ(back.aux_name, trace.aux_name);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    EXPECT_NEAR(back.coordinate[i], trace.coordinate[i], 1e-9 * std::abs(trace.coordinate[i]) + 1e-18);
    EXPECT_NEAR(back.r_ab[i], trace.r_ab[i], 1e-9 * std::max(1.0, trace.r_ab[i]));
  }
  bool found_scenario = false;
  for (const auto& [k, v] : back.metadata)
    if (k == "scenario" && v == "double_pass") found_scenario = true;
  EXPECT_TRUE(found_scenario);
}

TEST(TraceCsv, RejectsCorruptInput) {
  std::istringstream missing_header("1,2,3,4,5,6\n");
  EXPECT_THROW(read_trace_csv(missing_header), data_error);
  std::istringstream bad_row("coordinate_um,delta_L_um,delta_L_prime_um,R_AB,R_A,R_B\n1,2,3\n");
  EXPECT_THROW(read_trace_csv(bad_row), data_error);
  std::istringstream negative("coordinate_um,delta_L_um,delta_L_prime_um,R_AB,R_A,R_B\n1,0,0,-5,1,1\n");
  EXPECT_THROW(read_trace_csv(negative), data_error);
}
