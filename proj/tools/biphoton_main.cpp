// Command-line front end: scenario sweeps, tag synthesis, coincidence
// counting and fringe fitting from declarative config files. Every command
// writes a manifest next to its outputs; seeded commands re-run
// bit-identically from that manifest.

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "biphoton/config.hpp"
#include "biphoton/errors.hpp"
#include "biphoton/fitting.hpp"
#include "biphoton/manifest.hpp"
#include "biphoton/rates.hpp"
#include "biphoton/scenarios.hpp"
#include "biphoton/tag_stream.hpp"
#include "biphoton/units.hpp"
#include "biphoton/version.hpp"

namespace fs = std::filesystem;
using namespace biphoton;

namespace {

constexpr const char* kConfigSchemaHelp = R"(Config file schema (key = value; '#' comments; lengths in micrometers
unless suffixed nm/um/mm/cm/m; times in seconds unless suffixed ms/us/ns/ps):

[scenario]
  type                  hom | franson_fringe | double_pass |
                        postponed_compensation | partial_trace_demo |
                        custom_diagram                       (required)
  rate_scale            C, counts/second                     (default 1)
  delta_phi             radians; franson_fringe and
                        postponed_compensation only          (default 0)
  fixed_delta_L         length; required for
                        postponed_compensation, optional for
                        double_pass antidiagonal sweeps      (default 0)
  signal_mirror_offset  length; double_pass idler sweeps     (default 0)
  fringe_visibility     partial_trace_demo port contrast     (default 1)
  custom_leg            signal_a|idler_a|pump_a|signal_b|idler_b|pump_b

[coherence]
  lambda0               pump wavelength                      (default 363.8 nm)
  l_coh                 signal-idler coherence length; required for
                        hom, double_pass, postponed_compensation
                        (documented default 100)
  l_coh_p               pump coherence length                (default 5 cm)
  k_d                   (k_s0-k_i0)/2 in rad/m; 0 = degenerate (default 0)

[detection]
  eta_A, eta_B          efficiencies in [0,1]                (default 1)
  background_A/_B       background fraction of the mean
                        interfering singles rate             (default 0)
  coincidence_window    time                                 (default 1 ns)

[sweep]
  coordinate            delta_L | delta_L_prime | idler_mirror |
                        antidiagonal_joint_displacement | custom (required)
  start, stop           lengths                              (required)
  points                >= 2                                 (required)

[noise]
  dwell_time            time per point; Poisson noise, needs --seed

[diagram]               custom_diagram only: l_sa l_ia l_pa l_sb l_ib l_pb
                        (lengths) and phi_sa ... phi_pb (radians)

[tags]                  for the 'tags' command:
  pair_rate             pairs/second                         (required)
  eta_A, eta_B          keep probabilities                   (default 1)
  background_rate_A/_B  uncorrelated singles/second          (default 0)
  jitter_sigma          time                                 (default 0)
  duration              time                                 (default 1)
)";

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ConfigFile load_config(const std::string& path, const std::vector<std::string>& overrides) {
  ConfigFile cfg = ConfigFile::parse_file(path);
  for (const auto& o : overrides) cfg.apply_override(o);
  return cfg;
}

// ---------------------------------------------------------------------------
// sweep
// ---------------------------------------------------------------------------

RunManifest execute_sweep(const ConfigFile& cfg, std::optional<std::uint64_t> seed,
                          const fs::path& output) {
  const auto t0 = std::chrono::steady_clock::now();
  SweepRun run = load_sweep_config(cfg);
  const Scenario scenario = build_scenario(run.experiment);
  SweepTrace trace = run_sweep(scenario, run.sweep);
  if (run.noise_dwell) {
    if (!seed) throw config_error("noise.dwell_time is set: noisy sweeps need --seed");
    trace = add_noise(trace, *run.noise_dwell, *seed);
  }
  trace.metadata.emplace_back("tool_version", version_string);

  std::ostringstream csv;
  write_trace_csv(trace, csv);
  atomic_write_file(output, csv.str());

  RunManifest manifest;
  manifest.command = "sweep";
  manifest.seed = seed;
  manifest.config = run.resolved;
  manifest.outputs = {output.string()};
  manifest.duration_seconds = elapsed_since(t0);
  manifest.write(manifest_path_for(output));
  return manifest;
}

// ---------------------------------------------------------------------------
// tags
// ---------------------------------------------------------------------------

std::string serialize_stream(const TagStream& stream, bool csv) {
  std::ostringstream out;
  if (csv)
    write_tag_stream_csv(stream, out);
  else
    write_tag_stream(stream, out);
  return out.str();
}

RunManifest execute_tags(const ConfigFile& cfg, std::uint64_t seed, const fs::path& out_dir,
                         bool also_csv) {
  const auto t0 = std::chrono::steady_clock::now();
  TagsRun run = load_tags_config(cfg);
  run.spec.seed = seed;
  const auto [a, b] = generate_tags(run.spec);

  fs::create_directories(out_dir);
  const fs::path path_a = out_dir / "tags_a.btag";
  const fs::path path_b = out_dir / "tags_b.btag";
  atomic_write_file(path_a, serialize_stream(a, false));
  atomic_write_file(path_b, serialize_stream(b, false));

  RunManifest manifest;
  manifest.command = "tags";
  manifest.seed = seed;
  manifest.config = run.resolved;
  manifest.outputs = {path_a.string(), path_b.string()};
  if (also_csv) {
    const fs::path csv_a = out_dir / "tags_a.csv";
    const fs::path csv_b = out_dir / "tags_b.csv";
    atomic_write_file(csv_a, serialize_stream(a, true));
    atomic_write_file(csv_b, serialize_stream(b, true));
    manifest.outputs.push_back(csv_a.string());
    manifest.outputs.push_back(csv_b.string());
    manifest.config["tags.csv"] = "true";
  }
  manifest.duration_seconds = elapsed_since(t0);
  manifest.write(out_dir / "tags.manifest.json");
  return manifest;
}

// ---------------------------------------------------------------------------
// correlate
// ---------------------------------------------------------------------------

TagStream read_stream_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open tag stream '" + path.string() + "'");
  char magic[4] = {};
  in.read(magic, 4);
  in.clear();
  in.seekg(0);
  try {
    if (std::string(magic, 4) == "BTAG") return read_tag_stream(in);
    return read_tag_stream_csv(in);
  } catch (const data_error& e) {
    throw data_error(path.string() + ": " + e.what());
  }
}

RunManifest execute_correlate(const fs::path& path_a, const fs::path& path_b,
                              const std::string& window_text, const fs::path& output) {
  const auto t0 = std::chrono::steady_clock::now();
  const double window = parse_time(window_text, "--window");
  const TagStream a = read_stream_file(path_a);
  const TagStream b = read_stream_file(path_b);
  const CoincidenceResult res = correlate(a, b, window);

  std::ostringstream csv;
  csv << "coincidences,singles_a,singles_b,window_s,accidental_estimate,duration_s\n";
  char buf[160];
  std::snprintf(buf, sizeof buf, "%llu,%llu,%llu,%.12g,%.12g,%.12g\n",
                static_cast<unsigned long long>(res.coincidences),
                static_cast<unsigned long long>(res.singles_a),
                static_cast<unsigned long long>(res.singles_b), res.window,
                res.accidental_estimate, res.duration);
  csv << buf;
  atomic_write_file(output, csv.str());

  RunManifest manifest;
  manifest.command = "correlate";
  manifest.config = {{"correlate.stream_a", path_a.string()},
                     {"correlate.stream_b", path_b.string()},
                     {"correlate.window", window_text}};
  manifest.outputs = {output.string()};
  manifest.duration_seconds = elapsed_since(t0);
  manifest.write(manifest_path_for(output));
  return manifest;
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

// The fit command works in the CSV's micrometer coordinates, so x0 and sigma
// are reported in um and k in rad/um.
RunManifest execute_fit(const fs::path& trace_path, const std::string& column,
                        const std::string& model_name,
                        const std::map<std::string, std::string>& fixes, const fs::path& output) {
  const auto t0 = std::chrono::steady_clock::now();
  std::ifstream in(trace_path);
  if (!in) throw data_error("cannot open trace '" + trace_path.string() + "'");
  const SweepTrace trace = read_trace_csv(in);

  const std::vector<double>* ys = nullptr;
  if (column == "R_AB") ys = &trace.r_ab;
  else if (column == "R_A") ys = &trace.r_a;
  else if (column == "R_B") ys = &trace.r_b;
  else throw config_error("--column must be R_AB, R_A or R_B");

  std::vector<double> xs_um(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i)
    xs_um[i] = trace.coordinate[i] / units::micrometer;

  FringeModel templ;
  if (model_name == "dip") templ = FringeModel::dip();
  else if (model_name == "fringe") templ = FringeModel::fringe();
  else throw config_error("--model must be dip or fringe");

  for (const auto& [name, value] : fixes) {
    bool found = false;
    for (std::size_t j = 0; j < FringeModel::kCount; ++j) {
      if (name == FringeModel::names[j]) {
        templ.free_mask[j] = false;
        templ.params[j] = parse_number(value, "--fix " + name);
        found = true;
        break;
      }
    }
    if (!found) throw config_error("--fix: unknown parameter '" + name + "'");
  }

  const FringeModel init = initial_guess(xs_um, *ys, templ);
  const FitResult result = fit_trace(xs_um, *ys, init);
  const Annotated vis = dip_visibility(result);

  std::ostringstream csv;
  csv << "converged,iterations,rss,B,V,x0_um,sigma_um,k_per_um,phi,"
         "err_B,err_V,err_x0_um,err_sigma_um,err_k_per_um,err_phi,dip_visibility\n";
  char buf[512];
  const auto& p = result.model.params;
  const auto& e = result.std_errors;
  std::snprintf(buf, sizeof buf,
                "%d,%d,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,"
                "%.12g,%.12g,%.12g,%.12g,%.12g,%.12g,%.12g\n",
                result.converged ? 1 : 0, result.iterations, result.rss, p[0], p[1], p[2], p[3],
                p[4], p[5], e[0], e[1], e[2], e[3], e[4], e[5], vis.value);
  csv << buf;
  atomic_write_file(output, csv.str());

  std::cout << "fit of " << column << " from " << trace_path.string() << "\n";
  std::cout << (result.converged ? "  converged" : "  NOT converged (result flagged)")
            << " after " << result.iterations << " iterations, rss = " << result.rss << "\n";
  for (std::size_t j = 0; j < FringeModel::kCount; ++j) {
    std::snprintf(buf, sizeof buf, "  %-5s = %-14.8g", FringeModel::names[j],
                  result.model.params[j]);
    std::cout << buf;
    if (result.model.free_mask[j])
      std::cout << " +- " << result.std_errors[j] << (result.errors_reliable ? "" : " (unreliable)");
    else
      std::cout << " (fixed)";
    std::cout << "\n";
  }
  std::cout << "  dip visibility |V| = " << vis.value << (vis.reliable ? "" : " (unreliable)")
            << "\n";
  if (result.model.params[FringeModel::kWavenumber] > 0.0)
    std::cout << "  fringe period = "
              << 2.0 * std::numbers::pi / result.model.params[FringeModel::kWavenumber]
              << " um\n";

  RunManifest manifest;
  manifest.command = "fit";
  manifest.config = {{"fit.trace", trace_path.string()},
                     {"fit.column", column},
                     {"fit.model", model_name}};
  for (const auto& [name, value] : fixes) manifest.config["fit.fix." + name] = value;
  manifest.outputs = {output.string()};
  manifest.duration_seconds = elapsed_since(t0);
  manifest.write(manifest_path_for(output));
  return manifest;
}

// ---------------------------------------------------------------------------
// rerun
// ---------------------------------------------------------------------------

fs::path redirect(const fs::path& original, const std::optional<fs::path>& out_dir) {
  if (!out_dir) return original;
  return *out_dir / original.filename();
}

void execute_rerun(const fs::path& manifest_path, const std::optional<fs::path>& out_dir) {
  const RunManifest m = RunManifest::load(manifest_path);
  if (m.command == "sweep") {
    if (m.outputs.empty()) throw data_error("manifest records no outputs");
    const ConfigFile cfg = ConfigFile::from_map(m.config, manifest_path.string());
    execute_sweep(cfg, m.seed, redirect(m.outputs[0], out_dir));
  } else if (m.command == "tags") {
    std::map<std::string, std::string> config = m.config;
    const bool csv = config.count("tags.csv") != 0;
    config.erase("tags.csv");
    const ConfigFile cfg = ConfigFile::from_map(config, manifest_path.string());
    fs::path dir = m.outputs.empty() ? fs::path(".") : fs::path(m.outputs[0]).parent_path();
    if (out_dir) dir = *out_dir;
    execute_tags(cfg, m.seed.value_or(0), dir, csv);
  } else if (m.command == "correlate") {
    execute_correlate(m.config.at("correlate.stream_a"), m.config.at("correlate.stream_b"),
                      m.config.at("correlate.window"),
                      redirect(m.outputs.at(0), out_dir));
  } else if (m.command == "fit") {
    std::map<std::string, std::string> fixes;
    for (const auto& [k, v] : m.config)
      if (k.rfind("fit.fix.", 0) == 0) fixes[k.substr(8)] = v;
    execute_fit(m.config.at("fit.trace"), m.config.at("fit.column"), m.config.at("fit.model"),
                fixes, redirect(m.outputs.at(0), out_dir));
  } else {
    throw data_error("manifest records unknown command '" + m.command + "'");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Two-photon interference toolkit: scenario sweeps, time-tag synthesis,\n"
               "coincidence counting and fringe fitting."};
  app.set_version_flag("--version", version_string);
  app.require_subcommand(1);
  app.footer(kConfigSchemaHelp);

  // sweep
  std::string sweep_config;
  std::string sweep_output;
  std::vector<std::string> sweep_sets;
  std::optional<std::uint64_t> sweep_seed;
  auto* sweep_cmd = app.add_subcommand("sweep", "Run a scenario sweep and write a trace CSV");
  sweep_cmd->add_option("config", sweep_config, "config file path")->required();
  sweep_cmd->add_option("-o,--output", sweep_output, "output trace CSV path")->required();
  sweep_cmd->add_option("--set", sweep_sets, "override a config key: section.key=value");
  sweep_cmd->add_option("--seed", sweep_seed, "RNG seed (required for noisy sweeps)");
  sweep_cmd->footer(kConfigSchemaHelp);
  sweep_cmd->callback([&] {
    execute_sweep(load_config(sweep_config, sweep_sets), sweep_seed, sweep_output);
  });

  // tags
  std::string tags_config;
  std::string tags_outdir;
  std::vector<std::string> tags_sets;
  std::uint64_t tags_seed = 0;
  std::optional<std::string> tags_duration;
  bool tags_csv = false;
  auto* tags_cmd = app.add_subcommand("tags", "Synthesize two binary time-tag streams");
  tags_cmd->add_option("config", tags_config, "config file path ([tags] section)")->required();
  tags_cmd->add_option("-o,--output-dir", tags_outdir, "output directory")->required();
  tags_cmd->add_option("--seed", tags_seed, "RNG seed (default 0)");
  tags_cmd->add_option("--duration", tags_duration,
                       "override tags.duration (time, e.g. '10 s')");
  tags_cmd->add_option("--set", tags_sets, "override a config key: section.key=value");
  tags_cmd->add_flag("--csv", tags_csv, "also write CSV copies of the streams");
  tags_cmd->callback([&] {
    ConfigFile cfg = load_config(tags_config, tags_sets);
    if (tags_duration) cfg.apply_override("tags.duration=" + *tags_duration);
    execute_tags(cfg, tags_seed, tags_outdir, tags_csv);
  });

  // correlate
  std::string corr_a, corr_b, corr_window = "1 ns", corr_output;
  auto* corr_cmd =
      app.add_subcommand("correlate", "Count coincidences between two tag streams");
  corr_cmd->add_option("stream_a", corr_a, "tag stream file (binary or CSV)")->required();
  corr_cmd->add_option("stream_b", corr_b, "tag stream file (binary or CSV)")->required();
  corr_cmd->add_option("-w,--window", corr_window, "coincidence window (time, default 1 ns)");
  corr_cmd->add_option("-o,--output", corr_output, "output CSV path")->required();
  corr_cmd->callback([&] { execute_correlate(corr_a, corr_b, corr_window, corr_output); });

  // fit
  std::string fit_trace_path, fit_column = "R_AB", fit_model = "dip", fit_output;
  std::vector<std::string> fit_fixes;
  auto* fit_cmd = app.add_subcommand("fit", "Fit a fringe/dip model to a trace CSV column");
  fit_cmd->add_option("trace", fit_trace_path, "trace CSV path")->required();
  fit_cmd->add_option("--column", fit_column, "R_AB (default), R_A or R_B");
  fit_cmd->add_option("--model", fit_model, "dip (default) or fringe");
  fit_cmd->add_option("--fix", fit_fixes,
                      "fix a parameter: name=value (B, V, x0, sigma, k, phi; um-based units)");
  fit_cmd->add_option("-o,--output", fit_output, "output CSV path")->required();
  fit_cmd->callback([&] {
    std::map<std::string, std::string> fixes;
    for (const auto& f : fit_fixes) {
      const auto eq = f.find('=');
      if (eq == std::string::npos) throw config_error("--fix expects name=value");
      fixes[f.substr(0, eq)] = f.substr(eq + 1);
    }
    execute_fit(fit_trace_path, fit_column, fit_model, fixes, fit_output);
  });

  // rerun
  std::string rerun_manifest;
  std::optional<std::string> rerun_outdir;
  auto* rerun_cmd =
      app.add_subcommand("rerun", "Re-execute a recorded run from its manifest");
  rerun_cmd->add_option("manifest", rerun_manifest, "manifest JSON path")->required();
  rerun_cmd->add_option("-o,--output-dir", rerun_outdir, "redirect outputs to this directory");
  rerun_cmd->callback([&] {
    execute_rerun(rerun_manifest,
                  rerun_outdir ? std::optional<fs::path>(*rerun_outdir) : std::nullopt);
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const config_error& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
