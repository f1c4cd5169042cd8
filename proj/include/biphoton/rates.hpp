#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "biphoton/coherence.hpp"
#include "biphoton/errors.hpp"
#include "biphoton/path_diagram.hpp"

namespace biphoton {

// ---------------------------------------------------------------------------
// Detection model
// ---------------------------------------------------------------------------

/// Detector efficiencies, non-interfering singles backgrounds (as fractions
/// of the mean interfering singles rate), and the coincidence window.
struct DetectionModel {
  double efficiency_a = 1.0;
  double efficiency_b = 1.0;
  double background_a = 0.0;
  double background_b = 0.0;
  double coincidence_window = 1e-9;  // s

  static DetectionModel ideal() { return {}; }

  void validate() const {
    for (double eta : {efficiency_a, efficiency_b})
      if (!std::isfinite(eta) || eta < 0.0 || eta > 1.0)
        throw config_error("detection efficiency must lie in [0, 1]");
    for (double b : {background_a, background_b})
      if (!std::isfinite(b) || b < 0.0)
        throw config_error("background fraction must be non-negative");
    if (!(coincidence_window > 0.0) || !std::isfinite(coincidence_window))
      throw config_error("coincidence window must be positive");
  }
};

struct RateParams {
  double rate_scale = 1.0;  // C, counts/s
  DetectionModel detection;

  void validate() const {
    if (!(rate_scale > 0.0) || !std::isfinite(rate_scale))
      throw config_error("rate scale must be positive");
    detection.validate();
  }
};

// ---------------------------------------------------------------------------
// Coincidence rates
// ---------------------------------------------------------------------------

/// Coincidence count rate
///   R_AB = C [1 + gamma(dL) gamma'(dL') cos(k0 dL + kd dL' + dphi)],
/// with complex envelopes entering as modulus times cos(total phase plus
/// envelope phase). Out-of-range table lookups contribute zero coherence, so
/// the rate settles to C.
inline double coincidence_rate(const BiphotonParams& params, const CoherenceModel& model,
                               double rate_scale) {
  if (!(rate_scale > 0.0) || !std::isfinite(rate_scale))
    throw config_error("rate scale must be positive");
  params.validate();
  model.validate();
  const std::complex<double> g = evaluate_envelope(model.gamma_pump, params.delta_l).value;
  const std::complex<double> gp = evaluate_envelope(model.gamma_si, params.delta_l_prime).value;
  const double amplitude = std::abs(g) * std::abs(gp);
  const double phase = model.k0 * params.delta_l + model.kd * params.delta_l_prime +
                       params.delta_phi + std::arg(g) + std::arg(gp);
  return rate_scale * (1.0 + amplitude * std::cos(phase));
}

/// Case I limit (dL' = 0, dphi = 0): fringes of period 2 pi / k0 under the
/// pump envelope as dL is varied.
inline double case1_rate(double delta_l, const CoherenceModel& model, double rate_scale) {
  return coincidence_rate({delta_l, 0.0, 0.0}, model, rate_scale);
}

/// Case II limit (dL and dphi fixed): R = C [1 + K gamma'(dL')] with
/// K = gamma(dL) cos(k0 dL + dphi). A dip for K < 0, a hump for K > 0.
/// Complex envelopes enter through their real projection, which reduces to
/// the plain product in the degenerate centered-Gaussian case.
inline double case2_rate(double delta_l_prime, double fixed_delta_l, double delta_phi,
                         const CoherenceModel& model, double rate_scale) {
  if (!(rate_scale > 0.0) || !std::isfinite(rate_scale))
    throw config_error("rate scale must be positive");
  model.validate();
  const std::complex<double> g = evaluate_envelope(model.gamma_pump, fixed_delta_l).value;
  const double k_const =
      std::abs(g) * std::cos(model.k0 * fixed_delta_l + delta_phi + std::arg(g));
  const std::complex<double> gp = evaluate_envelope(model.gamma_si, delta_l_prime).value;
  const double gp_proj = std::abs(gp) * std::cos(model.kd * delta_l_prime + std::arg(gp));
  return rate_scale * (1.0 + k_const * gp_proj);
}

/// Double-pass coincidence rate
///   R_AB = C {1 - gamma'(2x_s - 2x_i) cos[k0 (x_s + x_i)]},
/// valid while |x_s + x_i| stays well inside the pump coherence length
/// (the pump envelope is taken as 1; callers sweeping close to l_coh_pump
/// should warn, see scenarios).
inline double double_pass_rate(double signal_displacement, double idler_displacement,
                               const CoherenceModel& model, double rate_scale) {
  if (!(rate_scale > 0.0) || !std::isfinite(rate_scale))
    throw config_error("rate scale must be positive");
  model.validate();
  const double delta_l = signal_displacement + idler_displacement;
  const double delta_l_prime = 2.0 * signal_displacement - 2.0 * idler_displacement;
  const std::complex<double> gp = evaluate_envelope(model.gamma_si, delta_l_prime).value;
  return rate_scale *
         (1.0 - std::abs(gp) * std::cos(model.k0 * delta_l + model.kd * delta_l_prime + std::arg(gp)));
}

// ---------------------------------------------------------------------------
// Partial-trace singles (Eq.-style sum over partner positions)
// ---------------------------------------------------------------------------

/// Rate of one coincidence channel as a function of the scan coordinate.
using ScanRateFn = std::function<double(double)>;

/// For each detector position X, the partner positions Y_i its twin can reach
/// and the corresponding coincidence-rate functions R_XY_i.
struct CoincidenceMap {
  std::map<std::string, std::vector<std::pair<std::string, ScanRateFn>>> partners;
};

/// One-photon count rate at a detector position: the sum of the coincidence
/// rates with every position the twin can reach, evaluated at the current
/// scan coordinate.
inline double singles_rate(const std::string& position, const CoincidenceMap& map,
                           double scan_value) {
  const auto it = map.partners.find(position);
  if (it == map.partners.end() || it->second.empty())
    throw model_error("detector '" + position + "' has no partner positions");
  double sum = 0.0;
  for (const auto& [partner, rate_fn] : it->second) sum += rate_fn(scan_value);
  return sum;
}

// ---------------------------------------------------------------------------
// Detection mapping
// ---------------------------------------------------------------------------

struct DetectedRates {
  double coincidence = 0.0;
  double singles_a = 0.0;
  double singles_b = 0.0;
};

/// Maps ideal rates to observed ones. Coincidences scale by eta_A eta_B;
/// each singles channel scales by its efficiency after adding the constant
/// background (background fraction times the mean interfering singles rate,
/// i.e. the level the interference modulates around). Singles visibility is
/// thereby diluted by 1/(1+background) while coincidence visibility is
/// unchanged, and dip/hump positions never move.
inline DetectedRates apply_detection(double ideal_coincidence, double ideal_singles_a,
                                     double ideal_singles_b, const DetectionModel& det,
                                     double mean_singles_a, double mean_singles_b) {
  det.validate();
  return {det.efficiency_a * det.efficiency_b * ideal_coincidence,
          det.efficiency_a * (ideal_singles_a + det.background_a * mean_singles_a),
          det.efficiency_b * (ideal_singles_b + det.background_b * mean_singles_b)};
}

// ---------------------------------------------------------------------------
// Trace visibility
// ---------------------------------------------------------------------------

/// Fringe visibility (max - min)/(max + min) of a rate trace; 0 for the
/// all-zero trace. Distinct from the baseline-referenced dip visibility
/// computed by the fitting module.
inline double visibility(std::span<const double> values) {
  if (values.empty()) throw data_error("visibility of an empty trace");
  double lo = values[0], hi = values[0];
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0) throw data_error("negative or non-finite rate in trace");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (hi == 0.0) return 0.0;
  return (hi - lo) / (hi + lo);
}

}  // namespace biphoton
