#pragma once

#include <cmath>
#include <numbers>

#include "biphoton/coherence.hpp"
#include "biphoton/errors.hpp"

namespace biphoton {

/// One pathway by which a pump photon is down-converted and the resulting
/// pair reaches the detectors. Lengths are optical path lengths in meters;
/// phases are the non-dynamical extras (reflection, geometric) in radians,
/// stored unreduced.
struct PathAlternative {
  double pump_path = 0.0;
  double signal_path = 0.0;
  double idler_path = 0.0;
  double pump_phase = 0.0;
  double signal_phase = 0.0;
  double idler_phase = 0.0;

  void validate() const {
    for (double l : {pump_path, signal_path, idler_path})
      if (!std::isfinite(l) || l < 0.0)
        throw input_domain_error("path lengths must be finite and non-negative");
    for (double p : {pump_phase, signal_phase, idler_phase})
      if (!std::isfinite(p)) throw input_domain_error("phases must be finite");
  }
};

/// Ordered pair of interfering two-photon alternatives.
struct TwoPhotonPathDiagram {
  PathAlternative alt_a;
  PathAlternative alt_b;

  void validate() const {
    alt_a.validate();
    alt_b.validate();
  }
};

/// The three quantities that fully parameterize temporal two-photon
/// interference: the biphoton path-length difference dL, the biphoton
/// path-asymmetry-length difference dL', and the net extra phase dphi.
struct BiphotonParams {
  double delta_l = 0.0;        // m
  double delta_l_prime = 0.0;  // m
  double delta_phi = 0.0;      // rad, unreduced

  void validate() const {
    if (!std::isfinite(delta_l) || !std::isfinite(delta_l_prime) || !std::isfinite(delta_phi))
      throw input_domain_error("biphoton parameters must be finite");
  }
};

/// Derives (dL, dL', dphi) from a path diagram:
///   dL   = (l_sa + l_ia)/2 + l_pa - (l_sb + l_ib)/2 - l_pb
///   dL'  = (l_sa - l_ia) - (l_sb - l_ib)
///   dphi = (phi_sa + phi_ia + phi_pa) - (phi_sb + phi_ib + phi_pb)
inline BiphotonParams derive_biphoton_params(const TwoPhotonPathDiagram& diagram) {
  diagram.validate();
  const PathAlternative& a = diagram.alt_a;
  const PathAlternative& b = diagram.alt_b;
  BiphotonParams p;
  p.delta_l = ((a.signal_path + a.idler_path) / 2.0 + a.pump_path) -
              ((b.signal_path + b.idler_path) / 2.0 + b.pump_path);
  p.delta_l_prime = (a.signal_path - a.idler_path) - (b.signal_path - b.idler_path);
  p.delta_phi = (a.signal_phase + a.idler_phase + a.pump_phase) -
                (b.signal_phase + b.idler_phase + b.pump_phase);
  return p;
}

/// Parameters for the double-pass setup: signal and idler mirror
/// displacements from the balanced position (positive = away from the
/// crystal) map to (x_s + x_i, 2x_s - 2x_i, pi).
inline BiphotonParams double_pass_params(double signal_displacement, double idler_displacement) {
  if (!std::isfinite(signal_displacement) || !std::isfinite(idler_displacement))
    throw input_domain_error("mirror displacements must be finite");
  return {signal_displacement + idler_displacement,
          2.0 * signal_displacement - 2.0 * idler_displacement, std::numbers::pi};
}

/// Crystal-to-mirror and crystal-to-detector distances of a double-pass
/// setup in its balanced position.
struct DoublePassGeometry {
  double mirror_distance = 0.10;  // m, same for signal, idler and pump mirrors
  double signal_arm = 1.2;        // m, crystal to detector A
  double idler_arm = 1.2;         // m, crystal to detector B
};

/// Builds the explicit path diagram of the double-pass setup. Alternative a
/// converts on the forward pass (signal and idler bounce off their mirrors,
/// picking up a pi reflection phase each); alternative b converts on the
/// backward pass (the pump bounces off its mirror). Deriving parameters from
/// this diagram reproduces double_pass_params.
inline TwoPhotonPathDiagram make_double_pass_diagram(double signal_displacement,
                                                     double idler_displacement,
                                                     const DoublePassGeometry& geom = {}) {
  const double d = geom.mirror_distance;
  TwoPhotonPathDiagram diagram;
  diagram.alt_a.pump_path = 0.0;
  diagram.alt_a.signal_path = 2.0 * (d + signal_displacement) + geom.signal_arm;
  diagram.alt_a.idler_path = 2.0 * (d + idler_displacement) + geom.idler_arm;
  diagram.alt_a.signal_phase = std::numbers::pi;
  diagram.alt_a.idler_phase = std::numbers::pi;
  diagram.alt_b.pump_path = 2.0 * d;
  diagram.alt_b.signal_path = geom.signal_arm;
  diagram.alt_b.idler_path = geom.idler_arm;
  diagram.alt_b.pump_phase = std::numbers::pi;
  diagram.validate();
  return diagram;
}

enum class Distinguishability { coherent, partial, distinguishable };

/// Classifies how distinguishable the two alternatives are from the degree of
/// two-photon coherence gamma(dL) gamma'(dL'): coherent when the product is
/// >= 1 - threshold, distinguishable when <= threshold, partial otherwise.
inline Distinguishability classify_distinguishability(const BiphotonParams& params,
                                                      const CoherenceModel& model,
                                                      double threshold = 0.05) {
  if (!(threshold > 0.0) || !(threshold < 1.0))
    throw config_error("distinguishability threshold must lie in (0, 1)");
  params.validate();
  model.validate();
  const double degree = std::abs(evaluate_envelope(model.gamma_pump, params.delta_l).value) *
                        std::abs(evaluate_envelope(model.gamma_si, params.delta_l_prime).value);
  if (degree >= 1.0 - threshold) return Distinguishability::coherent;
  if (degree <= threshold) return Distinguishability::distinguishable;
  return Distinguishability::partial;
}

}  // namespace biphoton
