#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/errors.hpp"
#include "biphoton/path_diagram.hpp"
#include "biphoton/rates.hpp"
#include "biphoton/rng.hpp"
#include "biphoton/units.hpp"

namespace biphoton {

enum class ScenarioKind {
  hom,
  franson_fringe,
  double_pass,
  postponed_compensation,
  partial_trace_demo,
  custom_diagram,
};

enum class SweepCoordinate {
  delta_l,
  delta_l_prime,
  idler_mirror,
  antidiagonal_joint_displacement,
  custom,
};

/// Which leg of a custom diagram a custom-coordinate sweep displaces.
enum class DiagramLeg { signal_a, idler_a, pump_a, signal_b, idler_b, pump_b };

inline std::string to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::hom: return "hom";
    case ScenarioKind::franson_fringe: return "franson_fringe";
    case ScenarioKind::double_pass: return "double_pass";
    case ScenarioKind::postponed_compensation: return "postponed_compensation";
    case ScenarioKind::partial_trace_demo: return "partial_trace_demo";
    case ScenarioKind::custom_diagram: return "custom_diagram";
  }
  return "?";
}

inline std::string to_string(SweepCoordinate c) {
  switch (c) {
    case SweepCoordinate::delta_l: return "delta_L";
    case SweepCoordinate::delta_l_prime: return "delta_L_prime";
    case SweepCoordinate::idler_mirror: return "idler_mirror";
    case SweepCoordinate::antidiagonal_joint_displacement: return "antidiagonal_joint_displacement";
    case SweepCoordinate::custom: return "custom";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct ExperimentConfig {
  ScenarioKind scenario = ScenarioKind::hom;

  // Coherence model (degenerate Gaussian unless k_d is set).
  double pump_wavelength = 363.8 * units::nanometer;
  double l_coh = 100.0 * units::micrometer;        // signal-idler coherence length
  double l_coh_pump = 5.0 * units::centimeter;     // pump coherence length
  double k_d = 0.0;                                // rad/m

  // Scenario parameters.
  std::optional<double> delta_phi;        // franson_fringe / postponed_compensation
  double fixed_delta_l = 0.0;             // postponed_compensation, antidiagonal sweeps
  double signal_mirror_offset = 0.0;      // double_pass idler-mirror sweeps
  double fringe_visibility = 1.0;         // partial_trace_demo
  TwoPhotonPathDiagram base_diagram;      // custom_diagram
  DiagramLeg custom_leg = DiagramLeg::signal_a;

  DetectionModel detection;
  double rate_scale = 1.0;  // C, counts/s

  CoherenceModel make_model() const {
    CoherenceModel m = CoherenceModel::gaussian_degenerate(pump_wavelength, l_coh, l_coh_pump);
    if (k_d != 0.0) {
      m.kd = k_d;
      m.degenerate = false;
    }
    return m;
  }

  void validate() const {
    if (!(pump_wavelength > 0.0) || !(l_coh > 0.0) || !(l_coh_pump > 0.0))
      throw config_error("wavelength and coherence lengths must be positive");
    if (!(rate_scale > 0.0) || !std::isfinite(rate_scale))
      throw config_error("rate_scale must be positive");
    if (!std::isfinite(k_d)) throw config_error("k_d must be finite");
    if (fringe_visibility < 0.0 || fringe_visibility > 1.0)
      throw config_error("fringe_visibility must lie in [0, 1]");
    detection.validate();
    if (scenario == ScenarioKind::postponed_compensation) {
      const double lo = 5.0 * l_coh;
      const double hi = l_coh_pump / 5.0;
      if (!(std::abs(fixed_delta_l) > lo && std::abs(fixed_delta_l) < hi))
        throw config_error(
            "postponed_compensation requires 5*l_coh < |fixed_delta_L| < l_coh_p/5");
    }
    if (scenario == ScenarioKind::custom_diagram) base_diagram.validate();
  }
};

// ---------------------------------------------------------------------------
// Sweep specification and trace
// ---------------------------------------------------------------------------

struct SweepSpec {
  SweepCoordinate coordinate = SweepCoordinate::delta_l_prime;
  double start = 0.0;  // m
  double stop = 0.0;   // m
  std::size_t points = 0;

  void validate() const {
    if (!(start < stop) || !std::isfinite(start) || !std::isfinite(stop))
      throw config_error("sweep requires start < stop");
    if (points < 2) throw config_error("sweep requires at least 2 points");
  }

  double value_at(std::size_t i) const {
    return start + (stop - start) * double(i) / double(points - 1);
  }
};

/// Sampled (scan coordinate -> rates) curve. All lengths in meters, rates in
/// counts/s. The aux column carries the per-mirror displacement of
/// antidiagonal sweeps and is empty otherwise.
struct SweepTrace {
  std::vector<double> coordinate;
  std::vector<double> delta_l;
  std::vector<double> delta_l_prime;
  std::vector<double> r_ab;
  std::vector<double> r_a;
  std::vector<double> r_b;
  std::vector<double> aux;
  std::string aux_name;
  std::vector<std::pair<std::string, std::string>> metadata;
  std::uint64_t seed = 0;
  bool noisy = false;

  std::size_t size() const { return coordinate.size(); }

  void validate() const {
    const std::size_t n = coordinate.size();
    if (delta_l.size() != n || delta_l_prime.size() != n || r_ab.size() != n ||
        r_a.size() != n || r_b.size() != n || (!aux.empty() && aux.size() != n))
      throw data_error("sweep trace columns have unequal lengths");
    for (const auto* col : {&r_ab, &r_a, &r_b})
      for (double v : *col)
        if (!std::isfinite(v) || v < 0.0) throw data_error("sweep trace has a negative rate");
  }
};

// ---------------------------------------------------------------------------
// Scenario
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace detail

/// An executable scenario: maps a scan coordinate to the governing biphoton
/// parameters and to the partner structure that determines coincidence and
/// singles rates.
class Scenario {
public:
  explicit Scenario(ExperimentConfig config)
      : config_(std::move(config)), model_(config_.make_model()) {
    config_.validate();
  }

  const ExperimentConfig& config() const { return config_; }
  const CoherenceModel& model() const { return model_; }

  bool coordinate_allowed(SweepCoordinate c) const {
    switch (config_.scenario) {
      case ScenarioKind::hom:
      case ScenarioKind::postponed_compensation:
        return c == SweepCoordinate::delta_l_prime;
      case ScenarioKind::franson_fringe:
      case ScenarioKind::partial_trace_demo:
        return c == SweepCoordinate::delta_l;
      case ScenarioKind::double_pass:
        return c == SweepCoordinate::idler_mirror ||
               c == SweepCoordinate::antidiagonal_joint_displacement;
      case ScenarioKind::custom_diagram:
        return c == SweepCoordinate::delta_l || c == SweepCoordinate::delta_l_prime ||
               c == SweepCoordinate::custom;
    }
    return false;
  }

  void require_coordinate(SweepCoordinate c) const {
    if (!coordinate_allowed(c))
      throw config_error("scenario '" + to_string(config_.scenario) +
                         "' does not support sweep coordinate '" + to_string(c) + "'");
  }

  /// Governing (dL, dL', dphi) at a scan point.
  BiphotonParams params_at(SweepCoordinate c, double x) const {
    require_coordinate(c);
    switch (config_.scenario) {
      case ScenarioKind::hom:
        return {0.0, x, std::numbers::pi};
      case ScenarioKind::franson_fringe:
        return {x, 0.0, config_.delta_phi.value_or(0.0)};
      case ScenarioKind::postponed_compensation:
        return {config_.fixed_delta_l, x, config_.delta_phi.value_or(0.0)};
      case ScenarioKind::partial_trace_demo:
        return {x, 0.0, 0.0};
      case ScenarioKind::double_pass: {
        const auto [xs, xi] = mirror_positions(c, x);
        return double_pass_params(xs, xi);
      }
      case ScenarioKind::custom_diagram:
        return derive_biphoton_params(diagram_at(c, x));
    }
    throw config_error("unknown scenario");
  }

  /// Signal/idler mirror positions for double-pass sweeps.
  std::pair<double, double> mirror_positions(SweepCoordinate c, double x) const {
    if (c == SweepCoordinate::idler_mirror) return {config_.signal_mirror_offset, x};
    // Antidiagonal sweeps are reported in dL' = 4u, u the per-mirror
    // displacement, around the configured fixed dL.
    const double u = x / 4.0;
    return {config_.fixed_delta_l / 2.0 + u, config_.fixed_delta_l / 2.0 - u};
  }

  TwoPhotonPathDiagram diagram_at(SweepCoordinate c, double x) const {
    TwoPhotonPathDiagram d = config_.base_diagram;
    if (c == SweepCoordinate::delta_l) {
      d.alt_a.pump_path += x;
    } else if (c == SweepCoordinate::delta_l_prime) {
      d.alt_a.signal_path += x / 2.0;
      d.alt_a.idler_path -= x / 2.0;
    } else {
      switch (config_.custom_leg) {
        case DiagramLeg::signal_a: d.alt_a.signal_path += x; break;
        case DiagramLeg::idler_a: d.alt_a.idler_path += x; break;
        case DiagramLeg::pump_a: d.alt_a.pump_path += x; break;
        case DiagramLeg::signal_b: d.alt_b.signal_path += x; break;
        case DiagramLeg::idler_b: d.alt_b.idler_path += x; break;
        case DiagramLeg::pump_b: d.alt_b.pump_path += x; break;
      }
    }
    return d;
  }

  /// Ideal coincidence rate R_AB at a scan point.
  double coincidence_at(SweepCoordinate c, double x) const {
    const double rate_scale = config_.rate_scale;
    switch (config_.scenario) {
      case ScenarioKind::double_pass: {
        const auto [xs, xi] = mirror_positions(c, x);
        return double_pass_rate(xs, xi, model_, rate_scale);
      }
      case ScenarioKind::partial_trace_demo:
        return rate_scale * (1.0 + config_.fringe_visibility * std::cos(model_.k0 * x));
      default:
        return coincidence_rate(params_at(c, x), model_, rate_scale);
    }
  }

  /// Partner structure for the partial-trace singles sum. Double-pass and
  /// custom diagrams have a single partner relation (the twin of a photon at
  /// A can only reach B); the beam-splitter scenarios add the complementary
  /// output channel, so their singles are constant.
  CoincidenceMap coincidence_map(SweepCoordinate c) const {
    require_coordinate(c);
    CoincidenceMap map;
    const ScanRateFn ab = [this, c](double x) { return coincidence_at(c, x); };
    switch (config_.scenario) {
      case ScenarioKind::double_pass:
      case ScenarioKind::custom_diagram:
        map.partners["A"] = {{"B", ab}};
        map.partners["B"] = {{"A", ab}};
        break;
      case ScenarioKind::hom: {
        // Bunching channel: both photons leave through the same port.
        const ScanRateFn same = [this](double x) {
          return coincidence_rate({0.0, x, 0.0}, model_, config_.rate_scale);
        };
        map.partners["A"] = {{"B", ab}, {"A", same}};
        map.partners["B"] = {{"A", ab}, {"B", same}};
        break;
      }
      case ScenarioKind::franson_fringe:
      case ScenarioKind::postponed_compensation: {
        // Lossless split: the complementary output port carries the rest of
        // the pair flux, 2C - R_AB.
        const ScanRateFn complement = [this, ab](double x) {
          return 2.0 * config_.rate_scale - ab(x);
        };
        map.partners["A"] = {{"B", ab}, {"B'", complement}};
        map.partners["B"] = {{"A", ab}, {"A'", complement}};
        break;
      }
      case ScenarioKind::partial_trace_demo: {
        const ScanRateFn port2 = [this](double x) {
          return config_.rate_scale *
                 (1.0 - config_.fringe_visibility * std::cos(model_.k0 * x));
        };
        map.partners["A"] = {{"B1", ab}, {"B2", port2}};
        map.partners["B"] = {{"A1", ab}, {"A2", port2}};
        break;
      }
    }
    return map;
  }

  /// Mean interfering singles level, the reference for the detection
  /// background term.
  double singles_baseline() const {
    switch (config_.scenario) {
      case ScenarioKind::double_pass:
      case ScenarioKind::custom_diagram:
        return config_.rate_scale;
      default:
        return 2.0 * config_.rate_scale;
    }
  }

private:
  ExperimentConfig config_;
  CoherenceModel model_;
};

inline Scenario build_scenario(const ExperimentConfig& config) { return Scenario(config); }

// ---------------------------------------------------------------------------
// Sweep engine
// ---------------------------------------------------------------------------

inline SweepTrace run_sweep(const Scenario& scenario, const SweepSpec& sweep) {
  sweep.validate();
  scenario.require_coordinate(sweep.coordinate);
  const ExperimentConfig& cfg = scenario.config();

  SweepTrace trace;
  trace.coordinate.reserve(sweep.points);
  const CoincidenceMap map = scenario.coincidence_map(sweep.coordinate);
  const double baseline = scenario.singles_baseline();
  const bool antidiagonal =
      sweep.coordinate == SweepCoordinate::antidiagonal_joint_displacement;
  if (antidiagonal) trace.aux_name = "mirror_displacement_um";

  double max_abs_delta_l = 0.0;
  for (std::size_t i = 0; i < sweep.points; ++i) {
    const double x = sweep.value_at(i);
    const BiphotonParams p = scenario.params_at(sweep.coordinate, x);
    const double ideal_ab = scenario.coincidence_at(sweep.coordinate, x);
    const double ideal_a = singles_rate("A", map, x);
    const double ideal_b = singles_rate("B", map, x);
    const DetectedRates obs =
        apply_detection(ideal_ab, ideal_a, ideal_b, cfg.detection, baseline, baseline);
    trace.coordinate.push_back(x);
    trace.delta_l.push_back(p.delta_l);
    trace.delta_l_prime.push_back(p.delta_l_prime);
    trace.r_ab.push_back(obs.coincidence);
    trace.r_a.push_back(obs.singles_a);
    trace.r_b.push_back(obs.singles_b);
    if (antidiagonal) trace.aux.push_back(x / 4.0);
    max_abs_delta_l = std::max(max_abs_delta_l, std::abs(p.delta_l));
  }

  trace.metadata = {
      {"scenario", to_string(cfg.scenario)},
      {"coordinate", to_string(sweep.coordinate)},
      {"points", std::to_string(sweep.points)},
      {"start_um", detail::format_g(sweep.start / units::micrometer)},
      {"stop_um", detail::format_g(sweep.stop / units::micrometer)},
      {"lambda0_nm", detail::format_g(cfg.pump_wavelength / units::nanometer)},
      {"l_coh_um", detail::format_g(cfg.l_coh / units::micrometer)},
      {"l_coh_p_um", detail::format_g(cfg.l_coh_pump / units::micrometer)},
      {"k_d_per_m", detail::format_g(cfg.k_d)},
      {"rate_scale", detail::format_g(cfg.rate_scale)},
      {"eta_A", detail::format_g(cfg.detection.efficiency_a)},
      {"eta_B", detail::format_g(cfg.detection.efficiency_b)},
      {"background_A", detail::format_g(cfg.detection.background_a)},
      {"background_B", detail::format_g(cfg.detection.background_b)},
  };
  if (cfg.delta_phi)
    trace.metadata.emplace_back("delta_phi_rad", detail::format_g(*cfg.delta_phi));
  if (cfg.scenario == ScenarioKind::postponed_compensation || antidiagonal)
    trace.metadata.emplace_back("fixed_delta_L_um",
                                detail::format_g(cfg.fixed_delta_l / units::micrometer));

  // Eq. (5) assumes |dL| well inside the pump coherence length.
  if (cfg.scenario == ScenarioKind::double_pass && max_abs_delta_l > cfg.l_coh_pump / 10.0)
    trace.metadata.emplace_back(
        "warning", "double-pass sweep reaches |delta_L| > l_coh_p/10; Eq. (5) form degrades");

  trace.validate();
  return trace;
}

/// Replaces every rate by a Poisson draw with mean rate*dwell_time, divided
/// by dwell_time. Each (point, channel) uses an independent substream of the
/// seed, so results do not depend on evaluation order.
inline SweepTrace add_noise(const SweepTrace& trace, double dwell_time, std::uint64_t seed) {
  if (!(dwell_time > 0.0) || !std::isfinite(dwell_time))
    throw config_error("dwell time must be positive");
  trace.validate();
  SweepTrace out = trace;
  out.seed = seed;
  out.noisy = true;
  std::vector<double>* channels[3] = {&out.r_ab, &out.r_a, &out.r_b};
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      double& rate = (*channels[c])[i];
      const double mean = rate * dwell_time;
      if (mean <= 0.0) {
        rate = 0.0;
        continue;
      }
      auto engine = substream_engine(seed, i * 3 + c);
      std::poisson_distribution<long long> draw(mean);
      rate = double(draw(engine)) / dwell_time;
    }
  }
  out.metadata.emplace_back("noise_dwell_s", detail::format_g(dwell_time));
  out.metadata.emplace_back("noise_seed", std::to_string(seed));
  return out;
}

// ---------------------------------------------------------------------------
// Trace CSV
// ---------------------------------------------------------------------------

inline void write_trace_csv(const SweepTrace& trace, std::ostream& out) {
  trace.validate();
  for (const auto& [k, v] : trace.metadata) out << "# " << k << " = " << v << "\n";
  out << "coordinate_um,delta_L_um,delta_L_prime_um,R_AB,R_A,R_B";
  if (!trace.aux.empty()) out << "," << trace.aux_name;
  out << "\n";
  char buf[64];
  auto put = [&](double v, char sep) {
    std::snprintf(buf, sizeof buf, "%.12g%c", v, sep);
    out << buf;
  };
  for (std::size_t i = 0; i < trace.size(); ++i) {
    put(trace.coordinate[i] / units::micrometer, ',');
    put(trace.delta_l[i] / units::micrometer, ',');
    put(trace.delta_l_prime[i] / units::micrometer, ',');
    put(trace.r_ab[i], ',');
    put(trace.r_a[i], ',');
    if (trace.aux.empty()) {
      put(trace.r_b[i], '\n');
    } else {
      put(trace.r_b[i], ',');
      put(trace.aux[i] / units::micrometer, '\n');
    }
  }
}

inline SweepTrace read_trace_csv(std::istream& in) {
  SweepTrace trace;
  std::string line;
  bool header_seen = false;
  bool has_aux = false;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line[0] == '#') {
      const auto eq = line.find('=');
      if (eq != std::string::npos) {
        auto trim = [](std::string s) {
          const auto b = s.find_first_not_of(" \t#");
          const auto e = s.find_last_not_of(" \t");
          return (b == std::string::npos) ? std::string() : s.substr(b, e - b + 1);
        };
        trace.metadata.emplace_back(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
      }
      continue;
    }
    if (!header_seen) {
      if (line.rfind("coordinate_um,", 0) != 0)
        throw data_error("trace CSV line " + std::to_string(lineno) +
                         ": expected header starting with coordinate_um");
      has_aux = std::count(line.begin(), line.end(), ',') >= 6;
      if (has_aux) trace.aux_name = line.substr(line.rfind(',') + 1);
      header_seen = true;
      continue;
    }
    std::istringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ','))
      row.push_back(detail::parse_strict_double(cell, "trace CSV line " + std::to_string(lineno)));
    if (row.size() != (has_aux ? 7u : 6u))
      throw data_error("trace CSV line " + std::to_string(lineno) + ": wrong column count");
    trace.coordinate.push_back(row[0] * units::micrometer);
    trace.delta_l.push_back(row[1] * units::micrometer);
    trace.delta_l_prime.push_back(row[2] * units::micrometer);
    trace.r_ab.push_back(row[3]);
    trace.r_a.push_back(row[4]);
    trace.r_b.push_back(row[5]);
    if (has_aux) trace.aux.push_back(row[6] * units::micrometer);
  }
  if (!header_seen) throw data_error("trace CSV has no header row");
  trace.validate();
  return trace;
}

}  // namespace biphoton
