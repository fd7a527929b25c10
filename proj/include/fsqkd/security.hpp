#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace fsqkd {

/// Raised when the decoy-state bounds come out vacuous (Y1 lower bound not
/// positive). Callers must not silently treat this as a zero rate.
class VacuousBoundsError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary Shannon entropy, H2(0) = H2(1) = 0 by continuity.
inline double binary_entropy(double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw std::domain_error("binary_entropy: argument must be in [0,1]");
  }
  if (x == 0.0 || x == 1.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

/// Observed gain and QBER of one intensity class.
struct ClassRate {
  std::string label;
  double mu = 0.0;
  double gain = 0.0;   // Q: detections per sent pulse (pre-sifting)
  double qber = 0.0;   // E: errors per sifted detection
  double sent = 0.0;   // pulses sent in this class
};

struct ObservedRates {
  std::vector<ClassRate> classes;

  // Classes ordered mu descending: signal, decoy1, decoy2.
  std::array<const ClassRate*, 3> three_intensity() const {
    if (classes.size() != 3) {
      throw std::invalid_argument(
          "three-intensity analysis requires exactly the signal and two decoy classes");
    }
    std::array<const ClassRate*, 3> out{&classes[0], &classes[1], &classes[2]};
    std::sort(out.begin(), out.end(),
              [](const ClassRate* a, const ClassRate* b) { return a->mu > b->mu; });
    if (!(out[0]->mu > out[1]->mu && out[1]->mu > out[2]->mu && out[2]->mu >= 0.0)) {
      throw std::invalid_argument("decoy analysis requires mu > nu1 > nu2 >= 0");
    }
    return out;
  }
};

/// Single-photon bounds produced by the three-intensity decoy analysis.
struct DecoyEstimates {
  double y0 = 0.0;        // vacuum/background yield estimate
  double y1_lower = 0.0;  // single-photon yield lower bound
  double e1_upper = 0.0;  // single-photon error upper bound
  double q1_lower = 0.0;  // single-photon gain lower bound, Y1_L * mu * e^-mu
};

struct SecurityConfig {
  double ec_efficiency = 1.16;   // f >= 1
  double epsilon_total = 1e-10;  // total failure probability budget
  double sift_factor = 0.5;      // q, basis-match probability
  double clock_rate_hz = 1e9;
  double signal_probability = 29.0 / 32.0;

  void validate() const {
    if (ec_efficiency < 1.0) throw std::invalid_argument("ec efficiency must be >= 1");
    if (!(epsilon_total > 0.0 && epsilon_total < 1.0)) {
      throw std::invalid_argument("epsilon_total must be in (0,1)");
    }
    if (!(sift_factor > 0.0 && sift_factor <= 1.0)) {
      throw std::invalid_argument("sift factor must be in (0,1]");
    }
    if (clock_rate_hz <= 0.0) throw std::invalid_argument("clock rate must be > 0");
    if (!(signal_probability > 0.0 && signal_probability <= 1.0)) {
      throw std::invalid_argument("signal probability must be in (0,1]");
    }
  }
};

struct KeyRateTerms {
  double q_signal = 0.0;       // observed signal gain
  double e_signal = 0.0;       // observed signal QBER
  double ec_bits_per_pulse = 0.0;  // Q_mu * f * H2(E_mu)
  double pa_bits_per_pulse = 0.0;  // Q1_L * (1 - H2(e1_U))
  double net_bits_per_pulse = 0.0;
};

struct KeyRateReport {
  double rate_bits_per_s = 0.0;
  bool clamped_to_zero = false;  // formula was negative (or e1 >= 1/2)
  KeyRateTerms terms;
  ObservedRates observed;
  DecoyEstimates estimates;
  SecurityConfig config;
  bool finite_size = false;
};

/// Standard weak-coherent channel model: the gain and QBER a phase-coding
/// system with system transmittance eta_sys, background yield Y0 and
/// intrinsic error e_d produces for a pulse of mean photon number mu.
/// Serves as the afterpulse-free oracle the Monte Carlo path is checked
/// against.
struct AnalyticRates {
  double gain = 0.0;
  double qber = 0.0;
};

inline AnalyticRates analytic_yields(double eta_sys, double y0, double e_d,
                                     double mu) {
  if (!(eta_sys >= 0.0 && eta_sys <= 1.0) || !(y0 >= 0.0 && y0 <= 1.0) ||
      !(e_d >= 0.0 && e_d <= 1.0) || mu < 0.0) {
    throw std::invalid_argument("analytic_yields: inputs outside their domains");
  }
  const double absorbed = std::exp(-eta_sys * mu);
  const double gain = 1.0 - (1.0 - y0) * absorbed;
  // background errors are random (e0 = 1/2)
  const double eq = 0.5 * y0 + e_d * (1.0 - absorbed);
  AnalyticRates rates;
  rates.gain = gain;
  rates.qber = gain > 0.0 ? std::min(1.0, eq / gain) : 0.0;
  return rates;
}

/// Three-intensity decoy-state bounds (classes mu > nu1 > nu2 >= 0). The
/// vacuum yield is extrapolated from the two decoy classes and degrades to
/// the vacuum+weak form when nu2 == 0.
inline DecoyEstimates decoy_bounds(const ObservedRates& obs) {
  const auto cls = obs.three_intensity();
  const ClassRate& sig = *cls[0];
  const ClassRate& d1 = *cls[1];
  const ClassRate& d2 = *cls[2];
  if (!(sig.gain > 0.0 && d1.gain > 0.0 && d2.gain > 0.0)) {
    throw std::invalid_argument("decoy_bounds: gains must be positive");
  }
  const double mu = sig.mu, nu1 = d1.mu, nu2 = d2.mu;
  auto clamp01 = [](double x) { return std::clamp(x, 0.0, 1.0); };

  const double y0 = clamp01(
      std::max(0.0, (nu1 * d2.gain * std::exp(nu2) - nu2 * d1.gain * std::exp(nu1)) /
                        (nu1 - nu2)));

  const double y1_raw =
      (mu / (mu * nu1 - nu1 * nu1)) *
      (d1.gain * std::exp(nu1) -
       sig.gain * std::exp(mu) * (nu1 * nu1) / (mu * mu) -
       ((mu * mu - nu1 * nu1) / (mu * mu)) * y0);
  const double y1_lower = clamp01(y1_raw);
  if (y1_lower <= 0.0) {
    throw VacuousBoundsError(
        "decoy_bounds: single-photon yield lower bound is not positive");
  }

  const double e1_upper = clamp01(
      (d1.qber * d1.gain * std::exp(nu1) - 0.5 * y0) / (y1_lower * nu1));

  DecoyEstimates est;
  est.y0 = y0;
  est.y1_lower = y1_lower;
  est.e1_upper = e1_upper;
  est.q1_lower = clamp01(y1_lower * mu * std::exp(-mu));
  return est;
}

/// Secure key rate in bits/s. The privacy-amplification term uses the
/// single-photon bounds; a negative balance (or e1 >= 1/2) clamps to zero
/// with the clamp flagged.
inline KeyRateReport secure_key_rate(const ObservedRates& obs,
                                     const DecoyEstimates& est,
                                     const SecurityConfig& cfg) {
  cfg.validate();
  const auto cls = obs.three_intensity();
  const ClassRate& sig = *cls[0];

  KeyRateReport report;
  report.observed = obs;
  report.estimates = est;
  report.config = cfg;
  report.terms.q_signal = sig.gain;
  report.terms.e_signal = sig.qber;
  report.terms.ec_bits_per_pulse =
      sig.gain * cfg.ec_efficiency * binary_entropy(sig.qber);

  if (est.e1_upper >= 0.5) {
    report.clamped_to_zero = true;
    report.terms.pa_bits_per_pulse = 0.0;
    report.terms.net_bits_per_pulse = 0.0;
    report.rate_bits_per_s = 0.0;
    return report;
  }
  report.terms.pa_bits_per_pulse =
      est.q1_lower * (1.0 - binary_entropy(est.e1_upper));
  const double net =
      report.terms.pa_bits_per_pulse - report.terms.ec_bits_per_pulse;
  report.terms.net_bits_per_pulse = std::max(0.0, net);
  report.clamped_to_zero = net < 0.0;
  report.rate_bits_per_s = cfg.clock_rate_hz * cfg.signal_probability *
                           cfg.sift_factor * report.terms.net_bits_per_pulse;
  return report;
}

/// Two-sided concentration half-width for an observed frequency over n
/// trials at per-quantity failure probability eps.
inline double hoeffding_half_width(double n, double eps) {
  if (n <= 0.0) throw std::invalid_argument("hoeffding_half_width: n must be > 0");
  if (!(eps > 0.0 && eps < 1.0)) {
    throw std::invalid_argument("hoeffding_half_width: eps must be in (0,1)");
  }
  return std::sqrt(std::log(2.0 / eps) / (2.0 * n));
}

namespace detail {

inline double candidate_rate(const ObservedRates& obs, const SecurityConfig& cfg) {
  try {
    return secure_key_rate(obs, decoy_bounds(obs), cfg).rate_bits_per_s;
  } catch (const VacuousBoundsError&) {
    return 0.0;  // adversarial corner kills the bounds: rate floor
  }
}

}  // namespace detail

/// Worst-case finite-size shift. Every observed frequency (Q and E of the
/// three classes) gets a two-sided Hoeffding half-width with the failure
/// budget split evenly across the six estimates; the shift directions are
/// chosen, by exhaustive search over {-delta, 0, +delta} per quantity, to
/// minimize the resulting key rate. The zero shift is included, so the
/// adjusted rate can never exceed the unadjusted one.
inline ObservedRates finite_size_adjust(const ObservedRates& obs,
                                        const SecurityConfig& cfg) {
  cfg.validate();
  const auto cls = obs.three_intensity();
  std::array<double, 3> delta_gain{}, delta_qber{};
  const double eps_each = cfg.epsilon_total / 6.0;
  for (int i = 0; i < 3; ++i) {
    const double sent = cls[i]->sent;
    if (sent <= 0.0) {
      throw std::invalid_argument("finite_size_adjust: sent count missing for a class");
    }
    delta_gain[i] = hoeffding_half_width(sent, eps_each);
    // QBER is a frequency over sifted detections
    const double n_err = std::max(1.0, sent * cfg.sift_factor * cls[i]->gain);
    delta_qber[i] = hoeffding_half_width(n_err, eps_each);
  }

  std::array<std::size_t, 3> index{};
  for (int i = 0; i < 3; ++i) {
    index[i] = static_cast<std::size_t>(cls[i] - obs.classes.data());
  }

  ObservedRates best = obs;
  double best_rate = std::numeric_limits<double>::infinity();
  for (int mask = 0; mask < 729; ++mask) {  // 3^6 sign combinations
    ObservedRates candidate = obs;
    int m = mask;
    bool valid = true;
    for (int i = 0; i < 3; ++i) {
      const int sg = m % 3 - 1;
      m /= 3;
      const int se = m % 3 - 1;
      m /= 3;
      ClassRate& c = candidate.classes[index[i]];
      c.gain = std::clamp(c.gain + sg * delta_gain[i], 0.0, 1.0);
      c.qber = std::clamp(c.qber + se * delta_qber[i], 0.0, 1.0);
      if (c.gain <= 0.0) valid = false;
    }
    if (!valid) continue;
    const double rate = detail::candidate_rate(candidate, cfg);
    if (rate < best_rate) {
      best_rate = rate;
      best = candidate;
    }
  }
  return best;
}

}  // namespace fsqkd
