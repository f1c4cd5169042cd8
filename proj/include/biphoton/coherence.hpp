#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <cstdio>
#include <istream>
#include <limits>
#include <numbers>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/errors.hpp"
#include "biphoton/units.hpp"

namespace biphoton {

// ---------------------------------------------------------------------------
// Spectra
// ---------------------------------------------------------------------------

enum class SpectrumShape { gaussian, sinc_squared_amplitude, tabulated };

/// Optical power spectrum of a field, either parametric (Gaussian or
/// sinc-squared, given by center wavelength and FWHM of the power spectrum)
/// or tabulated as (wavelength, field amplitude) samples. Tabulated
/// amplitudes are field amplitudes; power = amplitude^2.
struct Spectrum {
  SpectrumShape shape = SpectrumShape::gaussian;
  double center_wavelength = 0.0;  // m
  double bandwidth_fwhm = 0.0;     // m, FWHM of the power spectrum (parametric shapes)
  std::vector<std::pair<double, double>> samples;  // (wavelength m, amplitude), tabulated

  static Spectrum gaussian(double center_wavelength, double bandwidth_fwhm) {
    Spectrum s;
    s.shape = SpectrumShape::gaussian;
    s.center_wavelength = center_wavelength;
    s.bandwidth_fwhm = bandwidth_fwhm;
    s.validate();
    return s;
  }

  static Spectrum sinc_squared(double center_wavelength, double bandwidth_fwhm) {
    Spectrum s;
    s.shape = SpectrumShape::sinc_squared_amplitude;
    s.center_wavelength = center_wavelength;
    s.bandwidth_fwhm = bandwidth_fwhm;
    s.validate();
    return s;
  }

  static Spectrum tabulated(std::vector<std::pair<double, double>> samples) {
    Spectrum s;
    s.shape = SpectrumShape::tabulated;
    s.samples = std::move(samples);
    s.validate();
    return s;
  }

  void validate() const {
    if (shape == SpectrumShape::tabulated) {
      if (samples.size() < 8)
        throw config_error("tabulated spectrum needs at least 8 samples");
      for (std::size_t i = 0; i < samples.size(); ++i) {
        auto [wl, amp] = samples[i];
        if (!std::isfinite(wl) || wl <= 0.0)
          throw config_error("tabulated spectrum wavelength must be positive and finite");
        if (!std::isfinite(amp) || amp < 0.0)
          throw config_error("tabulated spectrum amplitudes must be non-negative");
        if (i > 0 && wl <= samples[i - 1].first)
          throw config_error("tabulated spectrum wavelengths must be strictly increasing");
      }
    } else {
      if (!std::isfinite(center_wavelength) || center_wavelength <= 0.0)
        throw config_error("spectrum center wavelength must be positive");
      if (!std::isfinite(bandwidth_fwhm) || bandwidth_fwhm <= 0.0)
        throw config_error("spectrum bandwidth must be positive");
    }
  }
};

// ---------------------------------------------------------------------------
// Correlation envelopes
// ---------------------------------------------------------------------------

enum class EnvelopeKind { closed_form_gaussian, numeric_table };

/// Result of sampling an envelope. Outside a numeric table's grid the value
/// is 0 and out_of_range is set; that is a flagged value, not an error.
struct EnvelopeSample {
  std::complex<double> value{0.0, 0.0};
  bool out_of_range = false;
};

/// Normalized field-correlation envelope gamma(delta): |gamma| <= 1 with
/// modulus 1 at delta = center_offset. Either the closed-form Gaussian
/// exp[-1/2 ((delta-center_offset)/l_coh)^2] or a complex table on a uniform
/// delay grid. Complex values support envelopes that are not centered or not
/// symmetric.
struct CorrelationEnvelope {
  EnvelopeKind kind = EnvelopeKind::closed_form_gaussian;
  double coherence_length = 0.0;  // m, closed form only
  double center_offset = 0.0;     // m
  double grid_min = 0.0;          // m, numeric table only
  double grid_step = 0.0;         // m
  std::vector<std::complex<double>> table;

  static CorrelationEnvelope gaussian(double l_coh, double center_offset = 0.0) {
    if (!(l_coh > 0.0) || !std::isfinite(l_coh))
      throw config_error("coherence length must be positive");
    CorrelationEnvelope e;
    e.kind = EnvelopeKind::closed_form_gaussian;
    e.coherence_length = l_coh;
    e.center_offset = center_offset;
    return e;
  }

  double grid_max() const {
    return table.empty() ? grid_min : grid_min + grid_step * double(table.size() - 1);
  }
};

/// gamma(delta) for a Gaussian spectrum with coherence length l_coh.
inline double gamma_gaussian(double delta, double l_coh) {
  if (!(l_coh > 0.0) || !std::isfinite(l_coh))
    throw config_error("coherence length must be positive");
  const double u = delta / l_coh;
  return std::exp(-0.5 * u * u);
}

/// Samples an envelope at the given delay length. Closed forms are evaluated
/// exactly; numeric tables are linearly interpolated, and delays outside the
/// tabulated range yield the flagged zero sample.
inline EnvelopeSample evaluate_envelope(const CorrelationEnvelope& env, double delta) {
  if (env.kind == EnvelopeKind::closed_form_gaussian) {
    return {std::complex<double>(gamma_gaussian(delta - env.center_offset, env.coherence_length), 0.0), false};
  }
  if (env.table.empty()) throw config_error("numeric envelope has an empty table");
  const double hi = env.grid_max();
  if (delta < env.grid_min || delta > hi) return {std::complex<double>(0.0, 0.0), true};
  const double pos = (delta - env.grid_min) / env.grid_step;
  const auto last = env.table.size() - 1;
  const auto i0 = std::min(static_cast<std::size_t>(pos), last);
  if (i0 == last) return {env.table[last], false};
  const double t = pos - double(i0);
  return {env.table[i0] * (1.0 - t) + env.table[i0 + 1] * t, false};
}

// ---------------------------------------------------------------------------
// Bandwidth <-> coherence length
// ---------------------------------------------------------------------------

enum class BandwidthConvention {
  /// l_coh such that gamma(x) = exp[-1/2 (x/l_coh)^2] pairs with a Gaussian
  /// power spectrum of the given wavelength FWHM:
  /// l_coh = sqrt(2 ln 2)/pi * lambda0^2 / dlambda.
  gaussian_rms_envelope,
  /// The rough textbook estimate lambda0^2 / dlambda.
  simple_lambda_squared,
};

inline double coherence_length_from_bandwidth(
    double lambda0, double dlambda_fwhm,
    BandwidthConvention convention = BandwidthConvention::gaussian_rms_envelope) {
  if (!std::isfinite(lambda0) || lambda0 <= 0.0)
    throw config_error("center wavelength must be positive");
  if (!std::isfinite(dlambda_fwhm) || dlambda_fwhm <= 0.0 || dlambda_fwhm >= lambda0)
    throw config_error("bandwidth must satisfy 0 < dlambda < lambda0");
  switch (convention) {
    case BandwidthConvention::gaussian_rms_envelope:
      return std::sqrt(2.0 * std::numbers::ln2) / std::numbers::pi * lambda0 * lambda0 / dlambda_fwhm;
    case BandwidthConvention::simple_lambda_squared:
      return lambda0 * lambda0 / dlambda_fwhm;
  }
  throw config_error("unknown bandwidth convention");
}

// ---------------------------------------------------------------------------
// Envelope from spectrum (Wiener-Khinchin quadrature)
// ---------------------------------------------------------------------------

/// Uniform delay-length grid, inclusive of both endpoints.
struct DelayGrid {
  double min = 0.0;  // m
  double max = 0.0;  // m
  std::size_t points = 0;

  static DelayGrid symmetric(double half_span, std::size_t points) {
    return {-half_span, half_span, points};
  }

  double step() const { return (max - min) / double(points - 1); }

  void validate() const {
    if (points < 2 || !(min < max) || !std::isfinite(min) || !std::isfinite(max))
      throw config_error("delay grid needs min < max and at least 2 points");
  }
};

namespace detail {

struct SampledPowerSpectrum {
  std::vector<double> wavenumber;  // rad/m, increasing
  std::vector<double> weight;      // quadrature weight * power
};

// Half width at half maximum of sinc^2(x), i.e. the positive root of
// (sin x / x)^2 = 1/2.
inline constexpr double sinc_sq_hwhm = 1.3915573810029581;

inline double power_fwhm_wavenumber(const Spectrum& spec) {
  // Linearized |dk| = 2 pi dlambda / lambda0^2.
  return 2.0 * std::numbers::pi * spec.bandwidth_fwhm /
         (spec.center_wavelength * spec.center_wavelength);
}

inline SampledPowerSpectrum sample_power_spectrum(const Spectrum& spec) {
  SampledPowerSpectrum out;
  if (spec.shape == SpectrumShape::tabulated) {
    // Exact k = 2 pi / lambda conversion; reverse so k increases.
    const std::size_t n = spec.samples.size();
    out.wavenumber.resize(n);
    std::vector<double> power(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto& [wl, amp] = spec.samples[n - 1 - i];
      out.wavenumber[i] = 2.0 * std::numbers::pi / wl;
      power[i] = amp * amp;
    }
    // Trapezoid weights on the non-uniform k grid.
    out.weight.assign(n, 0.0);
    for (std::size_t i = 0; i + 1 < n; ++i) {
      const double dk = out.wavenumber[i + 1] - out.wavenumber[i];
      out.weight[i] += 0.5 * dk * power[i];
      out.weight[i + 1] += 0.5 * dk * power[i + 1];
    }
    return out;
  }

  const double k_center = 2.0 * std::numbers::pi / spec.center_wavelength;
  const double dk_fwhm = power_fwhm_wavenumber(spec);
  std::size_t n = 4097;
  double half_span = 0.0;
  if (spec.shape == SpectrumShape::gaussian) {
    const double sigma_k = dk_fwhm / (2.0 * std::sqrt(2.0 * std::numbers::ln2));
    half_span = 8.0 * sigma_k;
    out.wavenumber.resize(n);
    out.weight.resize(n);
    const double dk = 2.0 * half_span / double(n - 1);
    for (std::size_t i = 0; i < n; ++i) {
      const double k = k_center - half_span + double(i) * dk;
      const double u = (k - k_center) / sigma_k;
      const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
      out.wavenumber[i] = k;
      out.weight[i] = w * dk * std::exp(-0.5 * u * u);
    }
    return out;
  }

  // sinc^2 power spectrum, truncated after the main lobe plus the first 20
  // side lobes on each side.
  const double scale = 2.0 * sinc_sq_hwhm / dk_fwhm;  // argument per rad/m
  half_span = 21.0 * std::numbers::pi / scale;
  n = 16385;  // fine enough to resolve every retained lobe
  out.wavenumber.resize(n);
  out.weight.resize(n);
  const double dk = 2.0 * half_span / double(n - 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double k = k_center - half_span + double(i) * dk;
    const double x = (k - k_center) * scale;
    const double s = (x == 0.0) ? 1.0 : std::sin(x) / x;
    const double w = (i == 0 || i == n - 1) ? 0.5 : 1.0;
    out.wavenumber[i] = k;
    out.weight[i] = w * dk * s * s;
  }
  return out;
}

}  // namespace detail

/// Power-weighted RMS estimate of a spectrum's coherence length,
/// 1/sigma_k. Parametric shapes use their FWHM instead (the sinc^2 shape has
/// no finite second moment). Returns +inf for effectively monochromatic
/// spectra.
inline double estimate_coherence_length(const Spectrum& spec) {
  spec.validate();
  if (spec.shape != SpectrumShape::tabulated) {
    const double dk_fwhm = detail::power_fwhm_wavenumber(spec);
    return 2.0 * std::sqrt(2.0 * std::numbers::ln2) / dk_fwhm;
  }
  const auto sampled = detail::sample_power_spectrum(spec);
  double norm = 0.0, mean = 0.0;
  for (std::size_t i = 0; i < sampled.wavenumber.size(); ++i) {
    norm += sampled.weight[i];
    mean += sampled.weight[i] * sampled.wavenumber[i];
  }
  if (norm <= 0.0) throw config_error("spectrum has zero total power");
  mean /= norm;
  double var = 0.0;
  for (std::size_t i = 0; i < sampled.wavenumber.size(); ++i) {
    const double d = sampled.wavenumber[i] - mean;
    var += sampled.weight[i] * d * d;
  }
  var /= norm;
  if (var <= 0.0) return std::numeric_limits<double>::infinity();
  return 1.0 / std::sqrt(var);
}

/// Builds a numeric-table envelope from a spectrum by quadrature of the
/// correlation integral gamma(delta) = int S(k) exp[i (k - k_mean) delta] dk,
/// normalized so the peak modulus is 1. For a Gaussian spectrum the result
/// matches gamma_gaussian on the grid.
inline CorrelationEnvelope envelope_from_spectrum(const Spectrum& spec, const DelayGrid& grid) {
  spec.validate();
  grid.validate();

  const double l_est = estimate_coherence_length(spec);
  if (std::isfinite(l_est) && grid.step() > l_est / 8.0)
    throw resolution_error("delay grid under-resolved: fewer than 8 points per coherence length");

  const auto sampled = detail::sample_power_spectrum(spec);
  double norm = 0.0, centroid = 0.0;
  for (std::size_t i = 0; i < sampled.wavenumber.size(); ++i) {
    norm += sampled.weight[i];
    centroid += sampled.weight[i] * sampled.wavenumber[i];
  }
  if (norm <= 0.0) throw config_error("spectrum has zero total power");
  centroid /= norm;

  CorrelationEnvelope env;
  env.kind = EnvelopeKind::numeric_table;
  env.center_offset = 0.0;
  env.coherence_length = std::isfinite(l_est) ? l_est : 0.0;
  env.grid_min = grid.min;
  env.grid_step = grid.step();
  env.table.resize(grid.points);
  for (std::size_t j = 0; j < grid.points; ++j) {
    const double delta = grid.min + double(j) * env.grid_step;
    std::complex<double> acc{0.0, 0.0};
    for (std::size_t i = 0; i < sampled.wavenumber.size(); ++i) {
      const double phase = (sampled.wavenumber[i] - centroid) * delta;
      acc += sampled.weight[i] * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    env.table[j] = acc / norm;
  }
  return env;
}

// ---------------------------------------------------------------------------
// Coherence model
// ---------------------------------------------------------------------------

/// Pump and signal-idler correlation envelopes together with the mean pump
/// vacuum wave number k0 and the signal-idler mean wave-number split
/// kd = (k_s0 - k_i0)/2. Degenerate models force kd = 0.
struct CoherenceModel {
  CorrelationEnvelope gamma_pump;  // gamma(dL)
  CorrelationEnvelope gamma_si;    // gamma'(dL')
  double k0 = 0.0;                 // rad/m
  double kd = 0.0;                 // rad/m
  bool degenerate = true;

  /// Degenerate Gaussian model from the pump wavelength and the two
  /// coherence lengths.
  static CoherenceModel gaussian_degenerate(double pump_wavelength, double l_coh_si,
                                            double l_coh_pump) {
    if (!std::isfinite(pump_wavelength) || pump_wavelength <= 0.0)
      throw config_error("pump wavelength must be positive");
    CoherenceModel m;
    m.gamma_pump = CorrelationEnvelope::gaussian(l_coh_pump);
    m.gamma_si = CorrelationEnvelope::gaussian(l_coh_si);
    m.k0 = 2.0 * std::numbers::pi / pump_wavelength;
    m.kd = 0.0;
    m.degenerate = true;
    return m;
  }

  void validate() const {
    if (!(k0 > 0.0) || !std::isfinite(k0)) throw config_error("k0 must be positive");
    if (!std::isfinite(kd)) throw config_error("kd must be finite");
    if (degenerate && kd != 0.0) throw config_error("degenerate model requires kd = 0");
  }
};

// ---------------------------------------------------------------------------
// CSV interfaces
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_strict_double(const std::string& text, const std::string& what) {
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    throw data_error(what + ": not a number: '" + text + "'");
  }
  while (used < text.size() && (text[used] == ' ' || text[used] == '\t' || text[used] == '\r'))
    ++used;
  if (used != text.size()) throw data_error(what + ": trailing characters in '" + text + "'");
  return v;
}

}  // namespace detail

/// Reads a tabulated spectrum from two-column CSV (wavelength_nm, amplitude).
/// Lines starting with '#' and a leading header row are skipped.
inline Spectrum spectrum_from_csv(std::istream& in) {
  std::vector<std::pair<double, double>> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw data_error("spectrum CSV line " + std::to_string(lineno) + ": expected two columns");
    const std::string a = line.substr(0, comma);
    const std::string b = line.substr(comma + 1);
    if (lineno == 1 && a.find_first_not_of("0123456789+-.eE \t\r") != std::string::npos)
      continue;  // header row
    const std::string where = "spectrum CSV line " + std::to_string(lineno);
    samples.emplace_back(detail::parse_strict_double(a, where) * units::nanometer,
                         detail::parse_strict_double(b, where));
  }
  return Spectrum::tabulated(std::move(samples));
}

/// Writes an envelope as CSV rows (delay_um, re, im). Closed forms are not
/// exportable this way; build a table first.
inline void envelope_to_csv(const CorrelationEnvelope& env, std::ostream& out) {
  if (env.kind != EnvelopeKind::numeric_table)
    throw config_error("only numeric-table envelopes are exportable to CSV");
  out << "delay_um,re,im\n";
  char buf[96];
  for (std::size_t i = 0; i < env.table.size(); ++i) {
    const double delay = env.grid_min + double(i) * env.grid_step;
    std::snprintf(buf, sizeof buf, "%.12g,%.12g,%.12g\n", delay / units::micrometer,
                  env.table[i].real(), env.table[i].imag());
    out << buf;
  }
}

}  // namespace biphoton
