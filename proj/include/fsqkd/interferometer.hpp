#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <utility>

#include "fsqkd/jones.hpp"
#include "fsqkd/rng.hpp"

namespace fsqkd {

inline constexpr double kSpeedOfLight = 299792458.0;  // m/s

enum class InterferometerKind { FMI, FSMI };

/// Lengths and times that set the phase-modulation timing budget of the long
/// arm. pm_transit_length is the optical path of one pass through the PM;
/// pm_fm_gap is the fiber between PM and FM (FMI only).
struct ArmGeometry {
  double pm_transit_length_m = 0.102;
  double pm_fm_gap_m = 0.0;
  double group_index = 1.468;
  double pulse_width_s = 0.0;
  double modulator_rise_fall_s = 0.0;

  bool valid() const {
    return pm_transit_length_m >= 0.0 && pm_fm_gap_m >= 0.0 &&
           group_index >= 1.0 && pulse_width_s >= 0.0 &&
           modulator_rise_fall_s >= 0.0;
  }
};

/// Component imperfection knobs. Defaults are ideal; the calibrated values
/// used to reproduce the measured visibility live in the simulation config.
struct ComponentImperfections {
  double fr_angle_error_rad = 0.0;
  // Power extinction ratio of the Sagnac PBS; +inf means a perfect splitter.
  double pbs_extinction_db = std::numeric_limits<double>::infinity();
  // Power-split deviation of the receiver BS: T = (1+x)/2, R = (1-x)/2.
  double bs_split_imbalance = 0.0;

  bool ideal() const {
    return fr_angle_error_rad == 0.0 && std::isinf(pbs_extinction_db) &&
           bs_split_imbalance == 0.0;
  }
};

/// One asymmetric interferometer (Alice's or Bob's). The short arm holds a
/// Faraday mirror; the long arm holds PM+FM (FMI) or a PBS + 90 deg Faraday
/// rotator + PM Sagnac loop (FSMI). arm_birefringence models the reciprocal
/// lead fiber of the long arm.
struct InterferometerModel {
  InterferometerKind kind = InterferometerKind::FSMI;
  double long_arm_phase_rad = 0.0;
  double short_arm_phase_rad = 0.0;
  JonesMatrix arm_birefringence = JonesMatrix::identity();
  ComponentImperfections imperfections;

  bool valid() const {
    return arm_birefringence.reciprocity == Reciprocity::Reciprocal &&
           arm_birefringence.finite();
  }
};

namespace detail {

// PBS port matrices with finite extinction. The transmitted port keeps H,
// the reflected port keeps V; a fraction 1/(1+ER) of the wrong polarization
// leaks through each port.
inline std::pair<JonesMatrix, JonesMatrix> pbs_ports(double extinction_db) {
  double leak = 0.0;
  if (std::isfinite(extinction_db)) {
    leak = 1.0 / (1.0 + std::pow(10.0, extinction_db / 10.0));
  }
  const double keep = std::sqrt(1.0 - leak);
  const double spill = std::sqrt(leak);
  const JonesMatrix transmit =
      JonesMatrix::diagonal({keep, 0.0}, {spill, 0.0});
  const JonesMatrix reflect = JonesMatrix::diagonal({spill, 0.0}, {keep, 0.0});
  return {transmit, reflect};
}

}  // namespace detail

/// Transfer matrix of the long arm (BS port to BS port) with modulation
/// phase applied. With ideal components and identity lead birefringence both
/// kinds reduce to e^{i phi} * FM; lead birefringence contributes only its
/// determinant phase by the Faraday compensation identity.
inline JonesMatrix long_arm_transfer(const InterferometerModel& model,
                                     double pm_phase_rad) {
  if (!model.valid()) {
    throw std::invalid_argument("interferometer model fails its invariants");
  }
  const JonesMatrix lead = model.arm_birefringence;
  const Complex static_phase = std::polar(1.0, model.long_arm_phase_rad);
  const OpticalElement pm = PhaseModulator{pm_phase_rad, ModulatedAxis::V};

  JonesMatrix core;
  if (model.kind == InterferometerKind::FMI) {
    // forward PM, Faraday mirror, backward PM
    core = element_matrix(pm, Direction::Backward) *
           faraday_mirror_matrix(model.imperfections.fr_angle_error_rad) *
           element_matrix(pm, Direction::Forward);
  } else {
    // Sagnac loop: V part runs counter-clockwise (PM first, then the 90 deg
    // rotator), H part clockwise (rotator first, then PM); the same PBS
    // splits and recombines.
    auto [transmit, reflect] =
        detail::pbs_ports(model.imperfections.pbs_extinction_db);
    const JonesMatrix fr90 = JonesMatrix::rotation(
        -std::numbers::pi / 2.0 + model.imperfections.fr_angle_error_rad,
        Reciprocity::NonReciprocal);
    const JonesMatrix pm_fwd = element_matrix(pm, Direction::Forward);
    const JonesMatrix pm_bwd = element_matrix(pm, Direction::Backward);
    const JonesMatrix ccw = transmit * fr90 * pm_fwd * reflect;
    const JonesMatrix cw = reflect * pm_bwd * fr90 * transmit;
    core = ccw + cw;
  }
  return (lead.transpose() * core * lead) * static_phase;
}

/// Transfer matrix of the short arm (plain Faraday mirror plus static phase).
inline JonesMatrix short_arm_transfer(const InterferometerModel& model) {
  return faraday_mirror_matrix(model.imperfections.fr_angle_error_rad) *
         std::polar(1.0, model.short_arm_phase_rad);
}

/// Sweeps random inputs, phases and shared lead birefringence and returns the
/// largest entrywise deviation between the FMI and FSMI long-arm outputs.
/// Deterministic for a fixed seed.
inline double equivalence_report(
    std::size_t trials, std::uint64_t seed,
    const ComponentImperfections& imperfections = {}) {
  if (trials < 1) throw std::invalid_argument("equivalence_report: trials >= 1");
  RngStream rng(derive_seed(seed, StreamDomain::Equivalence));
  double worst = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    const JonesVector input = random_polarization(rng);
    const double phi = rng.angle();
    const JonesMatrix lead = random_su2(rng);

    InterferometerModel fmi{InterferometerKind::FMI, 0.0, 0.0, lead,
                            imperfections};
    InterferometerModel fsmi{InterferometerKind::FSMI, 0.0, 0.0, lead,
                             imperfections};
    const JonesVector out_fmi = long_arm_transfer(fmi, phi) * input;
    const JonesVector out_fsmi = long_arm_transfer(fsmi, phi) * input;
    worst = std::max(worst, max_entry_deviation(out_fmi, out_fsmi));
  }
  return worst;
}

/// Central-bin interference visibility of the two matched paths
/// (Alice-long/Bob-short vs Alice-short/Bob-long) through a channel unitary.
/// With ideal components this is 1 for every unitary channel; Bob's BS
/// imbalance yields the two-beam value 2r/(1+r^2).
inline double system_visibility(const InterferometerModel& alice,
                                const InterferometerModel& bob,
                                const JonesMatrix& channel_unitary,
                                const JonesVector& input = JonesVector::horizontal()) {
  if (!channel_unitary.is_unitary(1e-9)) {
    throw std::invalid_argument("system_visibility: channel must be unitary");
  }
  const double imbalance = bob.imperfections.bs_split_imbalance;
  const double amp_short = (1.0 + imbalance) / 2.0;  // monitored-port weight
  const double amp_long = (1.0 - imbalance) / 2.0;

  const JonesVector v1 = (short_arm_transfer(bob) *
                          (channel_unitary * (long_arm_transfer(alice, 0.0) * input))) *
                         Complex{amp_short, 0.0};
  const JonesVector v2 = (long_arm_transfer(bob, 0.0) *
                          (channel_unitary * (short_arm_transfer(alice) * input))) *
                         Complex{amp_long, 0.0};

  const double denom = v1.squared_norm() + v2.squared_norm();
  if (denom <= 0.0) return 0.0;
  return std::min(1.0, 2.0 * std::abs(inner_product(v1, v2)) / denom);
}

/// Two-detector central-bin weights for phase difference phi_a - phi_b at a
/// given system visibility. w1 + w2 == 1 exactly.
inline std::pair<double, double> click_weights(double phi_a, double phi_b,
                                               double v_sys) {
  if (v_sys < 0.0 || v_sys > 1.0) {
    throw std::invalid_argument("click_weights: visibility must be in [0,1]");
  }
  double w1 = 0.5 * (1.0 + v_sys * std::cos(phi_a - phi_b));
  w1 = std::clamp(w1, 0.0, 1.0);
  return {w1, 1.0 - w1};
}

/// Maximum clock rate sustained by a flat-top phase modulation scheme. The
/// FMI must hold the voltage across both PM passes of one pulse; in the FSMI
/// both counter-propagating parts cross the PM simultaneously.
inline double max_clock_rate(const ArmGeometry& geometry,
                             InterferometerKind kind) {
  if (!geometry.valid()) {
    throw std::invalid_argument("max_clock_rate: invalid geometry");
  }
  double transit_s = 0.0;
  if (kind == InterferometerKind::FMI) {
    transit_s = 2.0 * geometry.group_index *
                (geometry.pm_fm_gap_m + geometry.pm_transit_length_m) /
                kSpeedOfLight;
  } else {
    transit_s = geometry.group_index * geometry.pm_transit_length_m /
                kSpeedOfLight;
  }
  const double flat_top = transit_s + geometry.pulse_width_s;
  const double period = 2.0 * (flat_top + geometry.modulator_rise_fall_s);
  if (period <= 0.0) {
    throw std::domain_error("max_clock_rate: degenerate geometry gives no finite rate");
  }
  return 1.0 / period;
}

/// Insertion-loss contribution of the PM: twice in the FMI (forward and
/// backward pass), once in the FSMI.
inline double pm_insertion_loss(InterferometerKind kind, double il_pm_db) {
  if (il_pm_db < 0.0) {
    throw std::invalid_argument("pm_insertion_loss: loss must be >= 0 dB");
  }
  return kind == InterferometerKind::FMI ? 2.0 * il_pm_db : il_pm_db;
}

}  // namespace fsqkd
