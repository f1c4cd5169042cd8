#pragma once

#include <cctype>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "biphoton/errors.hpp"
#include "biphoton/scenarios.hpp"
#include "biphoton/tag_stream.hpp"
#include "biphoton/units.hpp"

namespace biphoton {

// ---------------------------------------------------------------------------
// Value parsing with unit suffixes
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

inline std::pair<double, std::string> split_number_suffix(const std::string& text,
                                                          const std::string& where) {
  const std::string t = trim(text);
  if (t.empty()) throw config_error(where + ": empty value");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end == t.c_str() || !std::isfinite(v))
    throw config_error(where + ": not a number: '" + t + "'");
  return {v, trim(std::string(end))};
}

}  // namespace detail

/// Parses a length. Bare numbers are micrometers; suffixes nm, um, mm, cm, m
/// select other units.
inline double parse_length(const std::string& text, const std::string& where) {
  auto [v, suffix] = detail::split_number_suffix(text, where);
  if (suffix.empty() || suffix == "um") return v * units::micrometer;
  if (suffix == "nm") return v * units::nanometer;
  if (suffix == "mm") return v * units::millimeter;
  if (suffix == "cm") return v * units::centimeter;
  if (suffix == "m") return v * units::meter;
  throw config_error(where + ": unknown length unit '" + suffix + "'");
}

/// Parses a time. Bare numbers are seconds; suffixes s, ms, us, ns, ps.
inline double parse_time(const std::string& text, const std::string& where) {
  auto [v, suffix] = detail::split_number_suffix(text, where);
  if (suffix.empty() || suffix == "s") return v * units::second;
  if (suffix == "ms") return v * units::millisecond;
  if (suffix == "us") return v * units::microsecond;
  if (suffix == "ns") return v * units::nanosecond;
  if (suffix == "ps") return v * units::picosecond;
  throw config_error(where + ": unknown time unit '" + suffix + "'");
}

inline double parse_number(const std::string& text, const std::string& where) {
  auto [v, suffix] = detail::split_number_suffix(text, where);
  if (!suffix.empty()) throw config_error(where + ": unexpected suffix '" + suffix + "'");
  return v;
}

inline long long parse_integer(const std::string& text, const std::string& where) {
  const double v = parse_number(text, where);
  const long long i = std::llround(v);
  if (double(i) != v) throw config_error(where + ": expected an integer");
  return i;
}

// ---------------------------------------------------------------------------
// Config file
// ---------------------------------------------------------------------------

/// Declarative key-value config with [section] headers, '#'/';' comments and
/// 'key = value' entries. Keys are addressed as "section.key".
class ConfigFile {
public:
  struct Entry {
    std::string value;
    int line = 0;  // 0 for values injected by --set overrides or defaults
  };

  static ConfigFile parse(std::istream& in, const std::string& name) {
    ConfigFile cfg;
    cfg.name_ = name;
    std::string line;
    std::string section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find_first_of("#;");
      if (hash != std::string::npos) line.erase(hash);
      const std::string t = detail::trim(line);
      if (t.empty()) continue;
      if (t.front() == '[') {
        if (t.back() != ']')
          throw config_error(name + ":" + std::to_string(lineno) + ": unterminated section header");
        section = detail::trim(t.substr(1, t.size() - 2));
        if (section.empty())
          throw config_error(name + ":" + std::to_string(lineno) + ": empty section name");
        continue;
      }
      const auto eq = t.find('=');
      if (eq == std::string::npos)
        throw config_error(name + ":" + std::to_string(lineno) + ": expected 'key = value'");
      const std::string key = detail::trim(t.substr(0, eq));
      const std::string value = detail::trim(t.substr(eq + 1));
      if (key.empty())
        throw config_error(name + ":" + std::to_string(lineno) + ": empty key");
      if (section.empty())
        throw config_error(name + ":" + std::to_string(lineno) + ": key outside any [section]");
      const std::string full = section + "." + key;
      if (cfg.entries_.count(full))
        throw config_error(name + ":" + std::to_string(lineno) + ": duplicate key '" + full + "'");
      cfg.entries_[full] = {value, lineno};
    }
    return cfg;
  }

  static ConfigFile parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  static ConfigFile from_map(const std::map<std::string, std::string>& entries,
                             const std::string& name) {
    ConfigFile cfg;
    cfg.name_ = name;
    for (const auto& [k, v] : entries) cfg.entries_[k] = {v, 0};
    return cfg;
  }

  /// Applies a --set override of the form section.key=value.
  void apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
      throw config_error("--set expects section.key=value, got '" + assignment + "'");
    const std::string key = detail::trim(assignment.substr(0, eq));
    if (key.find('.') == std::string::npos)
      throw config_error("--set key must be section.key, got '" + key + "'");
    entries_[key] = {detail::trim(assignment.substr(eq + 1)), 0};
  }

  bool has(const std::string& key) const { return entries_.count(key) != 0; }

  const std::string& name() const { return name_; }

  std::string where(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end() || it->second.line == 0) return name_ + ": key '" + key + "'";
    return name_ + ":" + std::to_string(it->second.line) + ": key '" + key + "'";
  }

  std::string require(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end())
      throw config_error(name_ + ": missing required key '" + key + "'");
    return it->second.value;
  }

  std::string get_or(const std::string& key, const std::string& fallback) const {
    const auto it = entries_.find(key);
    return it == entries_.end() ? fallback : it->second.value;
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }

  /// Rejects any key not in the known set, pointing at its line.
  void reject_unknown(const std::set<std::string>& known) const {
    for (const auto& [key, entry] : entries_)
      if (!known.count(key))
        throw config_error(where(key) + ": unknown key");
  }

private:
  std::string name_ = "<config>";
  std::map<std::string, Entry> entries_;
};

// ---------------------------------------------------------------------------
// Sweep run configuration
// ---------------------------------------------------------------------------

struct SweepRun {
  ExperimentConfig experiment;
  SweepSpec sweep;
  std::optional<double> noise_dwell;  // s; noisy runs also need a seed
  std::map<std::string, std::string> resolved;  // every key materialized
};

namespace detail {

inline ScenarioKind scenario_from_string(const std::string& s, const std::string& where) {
  if (s == "hom") return ScenarioKind::hom;
  if (s == "franson_fringe") return ScenarioKind::franson_fringe;
  if (s == "double_pass") return ScenarioKind::double_pass;
  if (s == "postponed_compensation") return ScenarioKind::postponed_compensation;
  if (s == "partial_trace_demo") return ScenarioKind::partial_trace_demo;
  if (s == "custom_diagram") return ScenarioKind::custom_diagram;
  throw config_error(where + ": unknown scenario '" + s + "'");
}

inline SweepCoordinate coordinate_from_string(const std::string& s, const std::string& where) {
  if (s == "delta_L") return SweepCoordinate::delta_l;
  if (s == "delta_L_prime") return SweepCoordinate::delta_l_prime;
  if (s == "idler_mirror") return SweepCoordinate::idler_mirror;
  if (s == "antidiagonal_joint_displacement")
    return SweepCoordinate::antidiagonal_joint_displacement;
  if (s == "custom") return SweepCoordinate::custom;
  throw config_error(where + ": unknown sweep coordinate '" + s + "'");
}

inline DiagramLeg leg_from_string(const std::string& s, const std::string& where) {
  if (s == "signal_a") return DiagramLeg::signal_a;
  if (s == "idler_a") return DiagramLeg::idler_a;
  if (s == "pump_a") return DiagramLeg::pump_a;
  if (s == "signal_b") return DiagramLeg::signal_b;
  if (s == "idler_b") return DiagramLeg::idler_b;
  if (s == "pump_b") return DiagramLeg::pump_b;
  throw config_error(where + ": unknown diagram leg '" + s + "'");
}

inline const std::set<std::string>& sweep_config_keys() {
  static const std::set<std::string> keys = {
      "scenario.type", "scenario.rate_scale", "scenario.delta_phi", "scenario.fixed_delta_L",
      "scenario.signal_mirror_offset", "scenario.fringe_visibility", "scenario.custom_leg",
      "coherence.lambda0", "coherence.l_coh", "coherence.l_coh_p", "coherence.k_d",
      "detection.eta_A", "detection.eta_B", "detection.background_A", "detection.background_B",
      "detection.coincidence_window",
      "sweep.coordinate", "sweep.start", "sweep.stop", "sweep.points",
      "noise.dwell_time",
      "diagram.l_sa", "diagram.l_ia", "diagram.l_pa", "diagram.l_sb", "diagram.l_ib",
      "diagram.l_pb", "diagram.phi_sa", "diagram.phi_ia", "diagram.phi_pa", "diagram.phi_sb",
      "diagram.phi_ib", "diagram.phi_pb",
  };
  return keys;
}

}  // namespace detail

/// Materializes a sweep run from a parsed config. Scenario-required physics
/// keys must be explicit (hom, double_pass and postponed_compensation need
/// coherence.l_coh; postponed_compensation needs scenario.fixed_delta_L;
/// custom_diagram needs the [diagram] section); everything else falls back
/// to the documented defaults.
inline SweepRun load_sweep_config(const ConfigFile& cfg) {
  cfg.reject_unknown(detail::sweep_config_keys());
  SweepRun run;
  auto& resolved = run.resolved;
  auto track = [&](const std::string& key, const std::string& value) {
    resolved[key] = value;
    return value;
  };
  auto length_key = [&](const std::string& key, const std::string& fallback) {
    return parse_length(track(key, cfg.get_or(key, fallback)), cfg.where(key));
  };
  auto number_key = [&](const std::string& key, const std::string& fallback) {
    return parse_number(track(key, cfg.get_or(key, fallback)), cfg.where(key));
  };

  ExperimentConfig& exp = run.experiment;
  exp.scenario = detail::scenario_from_string(track("scenario.type", cfg.require("scenario.type")),
                                              cfg.where("scenario.type"));

  const bool needs_l_coh = exp.scenario == ScenarioKind::hom ||
                           exp.scenario == ScenarioKind::double_pass ||
                           exp.scenario == ScenarioKind::postponed_compensation;
  if (needs_l_coh && !cfg.has("coherence.l_coh"))
    throw config_error(cfg.name() + ": missing required key 'coherence.l_coh' (scenario '" +
                       to_string(exp.scenario) + "' sweeps the signal-idler envelope)");

  exp.pump_wavelength = length_key("coherence.lambda0", "363.8 nm");
  exp.l_coh = length_key("coherence.l_coh", "100");
  exp.l_coh_pump = length_key("coherence.l_coh_p", "5 cm");
  exp.k_d = number_key("coherence.k_d", "0");
  exp.rate_scale = number_key("scenario.rate_scale", "1");

  if (cfg.has("scenario.delta_phi")) {
    if (exp.scenario != ScenarioKind::franson_fringe &&
        exp.scenario != ScenarioKind::postponed_compensation)
      throw config_error(cfg.where("scenario.delta_phi") +
                         ": delta_phi is fixed by this scenario");
    exp.delta_phi = parse_number(track("scenario.delta_phi", cfg.require("scenario.delta_phi")),
                                 cfg.where("scenario.delta_phi"));
  }
  if (cfg.has("scenario.fixed_delta_L") || exp.scenario == ScenarioKind::postponed_compensation) {
    if (exp.scenario != ScenarioKind::postponed_compensation &&
        exp.scenario != ScenarioKind::double_pass)
      throw config_error(cfg.where("scenario.fixed_delta_L") +
                         ": fixed_delta_L applies to postponed_compensation and double_pass");
    if (exp.scenario == ScenarioKind::postponed_compensation && !cfg.has("scenario.fixed_delta_L"))
      throw config_error(cfg.name() + ": missing required key 'scenario.fixed_delta_L'");
    exp.fixed_delta_l = length_key("scenario.fixed_delta_L", "0");
  }
  if (cfg.has("scenario.signal_mirror_offset")) {
    if (exp.scenario != ScenarioKind::double_pass)
      throw config_error(cfg.where("scenario.signal_mirror_offset") +
                         ": signal_mirror_offset applies to double_pass only");
    exp.signal_mirror_offset = length_key("scenario.signal_mirror_offset", "0");
  }
  if (cfg.has("scenario.fringe_visibility")) {
    if (exp.scenario != ScenarioKind::partial_trace_demo)
      throw config_error(cfg.where("scenario.fringe_visibility") +
                         ": fringe_visibility applies to partial_trace_demo only");
    exp.fringe_visibility = number_key("scenario.fringe_visibility", "1");
  }

  if (exp.scenario == ScenarioKind::custom_diagram) {
    for (const char* k : {"l_sa", "l_ia", "l_pa", "l_sb", "l_ib", "l_pb"})
      if (!cfg.has(std::string("diagram.") + k))
        throw config_error(cfg.name() + ": missing required key 'diagram." + std::string(k) +
                           "' for custom_diagram");
    exp.base_diagram.alt_a.signal_path = length_key("diagram.l_sa", "0");
    exp.base_diagram.alt_a.idler_path = length_key("diagram.l_ia", "0");
    exp.base_diagram.alt_a.pump_path = length_key("diagram.l_pa", "0");
    exp.base_diagram.alt_b.signal_path = length_key("diagram.l_sb", "0");
    exp.base_diagram.alt_b.idler_path = length_key("diagram.l_ib", "0");
    exp.base_diagram.alt_b.pump_path = length_key("diagram.l_pb", "0");
    exp.base_diagram.alt_a.signal_phase = number_key("diagram.phi_sa", "0");
    exp.base_diagram.alt_a.idler_phase = number_key("diagram.phi_ia", "0");
    exp.base_diagram.alt_a.pump_phase = number_key("diagram.phi_pa", "0");
    exp.base_diagram.alt_b.signal_phase = number_key("diagram.phi_sb", "0");
    exp.base_diagram.alt_b.idler_phase = number_key("diagram.phi_ib", "0");
    exp.base_diagram.alt_b.pump_phase = number_key("diagram.phi_pb", "0");
    exp.custom_leg = detail::leg_from_string(track("scenario.custom_leg",
                                                   cfg.get_or("scenario.custom_leg", "signal_a")),
                                             cfg.where("scenario.custom_leg"));
  } else if (cfg.has("scenario.custom_leg")) {
    throw config_error(cfg.where("scenario.custom_leg") +
                       ": custom_leg applies to custom_diagram only");
  }

  exp.detection.efficiency_a = number_key("detection.eta_A", "1");
  exp.detection.efficiency_b = number_key("detection.eta_B", "1");
  exp.detection.background_a = number_key("detection.background_A", "0");
  exp.detection.background_b = number_key("detection.background_B", "0");
  exp.detection.coincidence_window =
      parse_time(track("detection.coincidence_window", cfg.get_or("detection.coincidence_window", "1 ns")),
                 cfg.where("detection.coincidence_window"));

  run.sweep.coordinate = detail::coordinate_from_string(
      track("sweep.coordinate", cfg.require("sweep.coordinate")), cfg.where("sweep.coordinate"));
  run.sweep.start = parse_length(track("sweep.start", cfg.require("sweep.start")),
                                 cfg.where("sweep.start"));
  run.sweep.stop = parse_length(track("sweep.stop", cfg.require("sweep.stop")),
                                cfg.where("sweep.stop"));
  const long long points = parse_integer(track("sweep.points", cfg.require("sweep.points")),
                                         cfg.where("sweep.points"));
  if (points < 2) throw config_error(cfg.where("sweep.points") + ": need at least 2 points");
  run.sweep.points = std::size_t(points);

  if (cfg.has("noise.dwell_time")) {
    run.noise_dwell = parse_time(track("noise.dwell_time", cfg.require("noise.dwell_time")),
                                 cfg.where("noise.dwell_time"));
    if (!(*run.noise_dwell > 0.0))
      throw config_error(cfg.where("noise.dwell_time") + ": dwell time must be positive");
  }

  exp.validate();
  run.sweep.validate();
  Scenario probe(exp);
  probe.require_coordinate(run.sweep.coordinate);
  return run;
}

// ---------------------------------------------------------------------------
// Tag generation configuration
// ---------------------------------------------------------------------------

struct TagsRun {
  GenSpec spec;  // seed and duration may be overridden by the CLI
  std::map<std::string, std::string> resolved;
};

namespace detail {

inline const std::set<std::string>& tags_config_keys() {
  static const std::set<std::string> keys = {
      "tags.pair_rate", "tags.eta_A", "tags.eta_B", "tags.background_rate_A",
      "tags.background_rate_B", "tags.jitter_sigma", "tags.duration",
  };
  return keys;
}

}  // namespace detail

inline TagsRun load_tags_config(const ConfigFile& cfg) {
  cfg.reject_unknown(detail::tags_config_keys());
  TagsRun run;
  auto get = [&](const std::string& key, const std::string& fallback) {
    const std::string v = cfg.get_or(key, fallback);
    run.resolved[key] = v;
    return v;
  };
  run.spec.pair_rate = parse_number(get("tags.pair_rate", cfg.require("tags.pair_rate")),
                                    cfg.where("tags.pair_rate"));
  run.spec.efficiency_a = parse_number(get("tags.eta_A", "1"), cfg.where("tags.eta_A"));
  run.spec.efficiency_b = parse_number(get("tags.eta_B", "1"), cfg.where("tags.eta_B"));
  run.spec.background_rate_a =
      parse_number(get("tags.background_rate_A", "0"), cfg.where("tags.background_rate_A"));
  run.spec.background_rate_b =
      parse_number(get("tags.background_rate_B", "0"), cfg.where("tags.background_rate_B"));
  run.spec.jitter_sigma = parse_time(get("tags.jitter_sigma", "0"), cfg.where("tags.jitter_sigma"));
  run.spec.duration = parse_time(get("tags.duration", "1"), cfg.where("tags.duration"));
  run.spec.validate();
  return run;
}

}  // namespace biphoton
