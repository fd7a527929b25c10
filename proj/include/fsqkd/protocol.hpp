#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <thread>
#include <vector>

#include "fsqkd/config.hpp"
#include "fsqkd/interferometer.hpp"
#include "fsqkd/physical.hpp"
#include "fsqkd/security.hpp"

namespace fsqkd {

// ---------------------------------------------------------------------------
// Encoding / decoding / sifting

enum class Basis { Z, X };

/// Alice's phase choice: Z encodes bits as {0, pi}, X as {pi/2, 3pi/2}.
struct EncodingChoice {
  Basis basis = Basis::Z;
  int bit = 0;
  double phi_a = 0.0;
};

inline EncodingChoice make_encoding(Basis basis, int bit) {
  const double base = basis == Basis::Z ? 0.0 : std::numbers::pi / 2.0;
  return {basis, bit, base + (bit ? std::numbers::pi : 0.0)};
}

/// Bob's measurement basis: phi_b = 0 reads Z, pi/2 reads X.
struct DecodingChoice {
  Basis basis = Basis::Z;
  double phi_b = 0.0;
};

inline DecodingChoice make_decoding(Basis basis) {
  return {basis, basis == Basis::Z ? 0.0 : std::numbers::pi / 2.0};
}

struct SiftResult {
  bool kept = false;
  int bit = 0;
  bool error = false;
};

/// Standard BB84 sifting: discard non-detections and basis mismatches;
/// detector 1 is the constructive port (delta-phi = 0 <-> bit 0).
inline SiftResult sift(const EncodingChoice& alice, const DecodingChoice& bob,
                       GateOutcome outcome) {
  if (outcome == GateOutcome::None) return {};
  if (alice.basis != bob.basis) return {};
  const int bit = outcome == GateOutcome::Click1 ? 0 : 1;
  return {true, bit, bit != alice.bit};
}

// ---------------------------------------------------------------------------
// Tallies

struct ClassTally {
  std::uint64_t sent = 0;
  std::uint64_t detections = 0;  // resolved clicks before sifting
  std::uint64_t sifted = 0;      // basis-matched detections
  std::uint64_t errors = 0;      // wrong bits among sifted detections

  void merge(const ClassTally& o) {
    sent += o.sent;
    detections += o.detections;
    sifted += o.sifted;
    errors += o.errors;
  }
};

/// Counts gathered over one tally interval (the ~10 s points of the gain and
/// QBER time series).
struct IntervalTally {
  std::uint64_t interval_index = 0;
  double t_start_s = 0.0;
  double duration_s = 0.0;
  bool accelerated = false;
  std::vector<ClassTally> per_class;

  double gain(std::size_t c) const {
    return per_class[c].sent == 0
               ? 0.0
               : static_cast<double>(per_class[c].detections) /
                     static_cast<double>(per_class[c].sent);
  }

  double qber(std::size_t c) const {
    return per_class[c].sifted == 0
               ? 0.0
               : static_cast<double>(per_class[c].errors) /
                     static_cast<double>(per_class[c].sifted);
  }
};

inline std::vector<ClassTally> merge_tallies(const std::vector<IntervalTally>& tallies) {
  std::vector<ClassTally> total;
  for (const auto& t : tallies) {
    if (total.size() < t.per_class.size()) total.resize(t.per_class.size());
    for (std::size_t c = 0; c < t.per_class.size(); ++c) total[c].merge(t.per_class[c]);
  }
  return total;
}

/// Observed per-class rates for the security pipeline. The gain estimate is
/// taken from sifted detections normalized by the sifting factor, which is
/// the same estimator the tally-file route uses, so both paths agree exactly.
inline ObservedRates observed_rates(const std::vector<ClassTally>& totals,
                                    const SourceConfig& source,
                                    double sift_factor) {
  ObservedRates obs;
  for (std::size_t c = 0; c < totals.size(); ++c) {
    ClassRate r;
    r.label = source.classes[c].label;
    r.mu = source.classes[c].mu;
    r.sent = static_cast<double>(totals[c].sent);
    if (totals[c].sent > 0) {
      r.gain = static_cast<double>(totals[c].sifted) /
               (sift_factor * static_cast<double>(totals[c].sent));
    }
    if (totals[c].sifted > 0) {
      r.qber = static_cast<double>(totals[c].errors) /
               static_cast<double>(totals[c].sifted);
    }
    obs.classes.push_back(std::move(r));
  }
  return obs;
}

// ---------------------------------------------------------------------------
// Derived optical quantities shared by both engine modes

namespace detail {

struct LinkBudget {
  double eta_link = 0.0;  // channel * receiver, photon survival to the SPD
  double eta_sys = 0.0;   // eta_link * mean detector efficiency
};

inline LinkBudget link_budget(const SimulationConfig& cfg) {
  LinkBudget lb;
  lb.eta_link = channel_transmittance(cfg.channel) * cfg.receiver_transmittance();
  lb.eta_sys = lb.eta_link * cfg.detector.mean_efficiency();
  return lb;
}

// Tracks the slowly varying interferometric visibility along the scrambler
// trajectory, refreshing a cached value often enough to follow the 30 Hz
// disturbance.
class VisibilityTracker {
 public:
  VisibilityTracker(const SimulationConfig& cfg, const InterferometerModel& model)
      : model_(model),
        scrambler_(cfg.channel),
        refresh_dt_(cfg.channel.scramble_rate_hz > 0.0
                        ? 1.0 / (64.0 * cfg.channel.scramble_rate_hz)
                        : std::numeric_limits<double>::infinity()) {}

  double at(double t_s) {
    if (!have_value_ || t_s - last_t_ >= refresh_dt_ || t_s < last_t_) {
      cached_ = system_visibility(model_, model_, scrambler_.unitary_at(t_s));
      last_t_ = t_s;
      have_value_ = true;
    }
    return cached_;
  }

  // Mean visibility over [t0, t0+span], sampled at n points.
  double average(double t0, double span, int n = 64) {
    double acc = 0.0;
    for (int k = 0; k < n; ++k) {
      acc += system_visibility(
          model_, model_, scrambler_.unitary_at(t0 + span * (k + 0.5) / n));
    }
    return acc / n;
  }

 private:
  InterferometerModel model_;
  ScramblerTrajectory scrambler_;
  double refresh_dt_;
  double last_t_ = 0.0;
  double cached_ = 1.0;
  bool have_value_ = false;
};

}  // namespace detail

/// Interferometric visibility of the configured system through the scrambled
/// channel at time t. Channel-independent (hence constant) unless the
/// configuration carries compensation-breaking imperfections.
inline double interferometric_visibility(const SimulationConfig& cfg, double t_s = 0.0) {
  const InterferometerModel model = cfg.interferometer_model();
  return system_visibility(model, model, scrambler_unitary(t_s, cfg.channel));
}

/// Effective per-detection error probability during keying: the fringe error
/// (1 - V)/2 with the fast-modulation phase jitter of both parties folded in.
/// This is the e_d the analytic gain/QBER oracle must be fed to match the
/// Monte Carlo session.
inline double effective_error_rate(const SimulationConfig& cfg, double t_s = 0.0) {
  const double sigma2 =
      2.0 * cfg.session.phase_jitter_rad * cfg.session.phase_jitter_rad;
  const double v_eff =
      interferometric_visibility(cfg, t_s) * std::exp(-sigma2 / 2.0);
  return 0.5 * (1.0 - v_eff);
}

// ---------------------------------------------------------------------------
// Session engine

enum class RunMode { Auto, PerGate, Accelerated };

struct SessionOptions {
  double duration_s = 10.0;
  double interval_s = 10.0;
  std::uint64_t seed = 1;
  RunMode mode = RunMode::Auto;
  std::uint64_t start_interval = 0;  // offset of the first interval index
  unsigned workers = 1;
  double accelerated_threshold_gates = 1e9;
};

namespace detail {

// Expected per-class rates of the running system, afterpulse steady state
// included. This is the analytic_yields channel model extended with the
// ambient afterpulse hazard generated by the full pulse mix.
struct ExpectedRates {
  std::vector<double> gain;   // physical detection probability per pulse
  std::vector<double> qber;   // error probability per sifted detection
  double total_click_rate = 0.0;
};

inline ExpectedRates expected_rates(const SimulationConfig& cfg, double v_interferometric) {
  const LinkBudget lb = link_budget(cfg);
  const double sigma2 = 2.0 * cfg.session.phase_jitter_rad * cfg.session.phase_jitter_rad;
  const double v_eff = v_interferometric * std::exp(-sigma2 / 2.0);
  const double e_d = 0.5 * (1.0 - v_eff);
  const double dark_each = cfg.detector.dark_count_per_gate / 2.0;

  const auto& classes = cfg.source.classes;
  ExpectedRates rates;
  rates.gain.resize(classes.size());
  rates.qber.resize(classes.size());

  double total = 0.0;
  for (int iter = 0; iter < 4; ++iter) {  // afterpulse fixed point
    const double hazard = 0.5 * cfg.detector.afterpulse_total * total;
    double next_total = 0.0;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      const double a = classes[c].mu * lb.eta_sys;
      const double survive = std::exp(-a);
      const double q_c = 1.0 - survive * (1.0 - dark_each) * (1.0 - dark_each) *
                                   (1.0 - hazard) * (1.0 - hazard);
      rates.gain[c] = q_c;
      const double photon_part = 1.0 - survive;
      const double eq = e_d * photon_part + 0.5 * (q_c - photon_part);
      rates.qber[c] = q_c > 0.0 ? std::min(1.0, std::max(0.0, eq / q_c)) : 0.0;
      next_total += classes[c].probability * q_c;
    }
    total = next_total;
  }
  rates.total_click_rate = total;
  return rates;
}

inline IntervalTally run_interval_per_gate(const SimulationConfig& cfg,
                                           const SessionOptions& opt,
                                           std::uint64_t interval_index,
                                           double duration_s) {
  const LinkBudget lb = link_budget(cfg);
  const InterferometerModel model = cfg.interferometer_model();
  const double clock = cfg.source.clock_rate_hz;
  const auto gates = static_cast<std::uint64_t>(std::llround(duration_s * clock));
  const double t0 = static_cast<double>(interval_index) *
                    (opt.interval_s > 0.0 ? opt.interval_s : duration_s);
  const double jitter = cfg.session.phase_jitter_rad;

  RngStream rng(derive_seed(opt.seed, StreamDomain::Session, interval_index));
  VisibilityTracker visibility(cfg, model);
  DetectorState detector_state;

  IntervalTally tally;
  tally.interval_index = interval_index;
  tally.t_start_s = t0;
  tally.duration_s = duration_s;
  tally.per_class.resize(cfg.source.classes.size());

  for (std::uint64_t g = 0; g < gates; ++g) {
    const double t = t0 + static_cast<double>(g) / clock;
    const PulseState pulse = draw_pulse(cfg.source, rng);
    const Basis alice_basis = rng.bernoulli(0.5) ? Basis::X : Basis::Z;
    const int alice_bit = rng.bernoulli(0.5) ? 1 : 0;
    const Basis bob_basis = rng.bernoulli(0.5) ? Basis::X : Basis::Z;
    const EncodingChoice enc = make_encoding(alice_basis, alice_bit);
    const DecodingChoice dec = make_decoding(bob_basis);

    double phi_a = enc.phi_a;
    double phi_b = dec.phi_b;
    if (jitter > 0.0) {
      phi_a += jitter * rng.gaussian();
      phi_b += jitter * rng.gaussian();
    }

    const auto [w1, w2] = click_weights(phi_a, phi_b, visibility.at(t));
    const double lambda = pulse.mu * lb.eta_link;
    const GateResult result = detect_gate(lambda * w1, lambda * w2,
                                          cfg.detector, detector_state, g, rng);

    ClassTally& ct = tally.per_class[pulse.class_index];
    ct.sent += 1;
    if (result.outcome != GateOutcome::None) {
      ct.detections += 1;
      const SiftResult s = sift(enc, dec, result.outcome);
      if (s.kept) {
        ct.sifted += 1;
        if (s.error) ct.errors += 1;
      }
    }
  }
  return tally;
}

inline IntervalTally run_interval_accelerated(const SimulationConfig& cfg,
                                              const SessionOptions& opt,
                                              std::uint64_t interval_index,
                                              double duration_s) {
  const double clock = cfg.source.clock_rate_hz;
  const auto gates = static_cast<std::uint64_t>(std::llround(duration_s * clock));
  const double t0 = static_cast<double>(interval_index) *
                    (opt.interval_s > 0.0 ? opt.interval_s : duration_s);

  RngStream rng(derive_seed(opt.seed, StreamDomain::Session, interval_index));
  const InterferometerModel model = cfg.interferometer_model();
  VisibilityTracker visibility(cfg, model);
  const double v_mean = visibility.average(t0, duration_s);
  const ExpectedRates rates = expected_rates(cfg, v_mean);
  const double q = cfg.security.sift_factor;

  IntervalTally tally;
  tally.interval_index = interval_index;
  tally.t_start_s = t0;
  tally.duration_s = duration_s;
  tally.accelerated = true;
  tally.per_class.resize(cfg.source.classes.size());

  // multinomial split of the interval's gates across classes
  std::uint64_t remaining = gates;
  double prob_remaining = 1.0;
  for (std::size_t c = 0; c < cfg.source.classes.size(); ++c) {
    const bool last = c + 1 == cfg.source.classes.size();
    const double p = cfg.source.classes[c].probability;
    std::uint64_t sent = remaining;
    if (!last) {
      const double cond = prob_remaining > 0.0 ? std::min(1.0, p / prob_remaining) : 0.0;
      sent = rng.binomial(remaining, cond);
    }
    remaining -= sent;
    prob_remaining -= p;

    ClassTally& ct = tally.per_class[c];
    ct.sent = sent;
    ct.detections = rng.binomial(sent, rates.gain[c]);
    ct.sifted = rng.binomial(ct.detections, q);
    ct.errors = rng.binomial(ct.sifted, rates.qber[c]);
  }
  return tally;
}

template <class Fn>
inline void run_sharded(std::size_t jobs, unsigned workers, Fn&& fn) {
  if (workers <= 1 || jobs <= 1) {
    for (std::size_t i = 0; i < jobs; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  const unsigned n = std::min<unsigned>(workers, static_cast<unsigned>(jobs));
  pool.reserve(n);
  for (unsigned w = 0; w < n; ++w) {
    pool.emplace_back([&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= jobs) return;
        fn(i);
      }
    });
  }
  for (auto& t : pool) t.join();
}

}  // namespace detail

/// Runs a decoy-state BB84 session and returns one tally per interval.
/// Deterministic for a fixed seed: every interval draws from its own
/// substream keyed by absolute interval index, so results are independent of
/// worker count and a run can be split and merged bit-exactly.
inline std::vector<IntervalTally> run_session(const SimulationConfig& cfg,
                                              const SessionOptions& opt) {
  cfg.validate();
  if (opt.duration_s <= 0.0) throw std::invalid_argument("run_session: duration must be > 0");
  if (opt.interval_s <= 0.0 || opt.interval_s > opt.duration_s) {
    throw std::invalid_argument("run_session: need 0 < interval <= duration");
  }

  const double clock = cfg.source.clock_rate_hz;
  const double total_gates = opt.duration_s * clock;
  bool accelerated = false;
  switch (opt.mode) {
    case RunMode::PerGate: accelerated = false; break;
    case RunMode::Accelerated: accelerated = true; break;
    case RunMode::Auto: accelerated = total_gates > opt.accelerated_threshold_gates; break;
  }

  const auto n_intervals = static_cast<std::size_t>(
      std::ceil(opt.duration_s / opt.interval_s - 1e-9));
  std::vector<IntervalTally> tallies(n_intervals);
  detail::run_sharded(n_intervals, opt.workers, [&](std::size_t i) {
    const std::uint64_t index = opt.start_interval + i;
    const double remaining = opt.duration_s - static_cast<double>(i) * opt.interval_s;
    const double duration = std::min(opt.interval_s, remaining);
    tallies[i] = accelerated
                     ? detail::run_interval_accelerated(cfg, opt, index, duration)
                     : detail::run_interval_per_gate(cfg, opt, index, duration);
  });
  return tallies;
}

// ---------------------------------------------------------------------------
// Visibility scan: fringe contrast from a driving-voltage sweep

/// Interference-fringe visibility from extreme counts of one scan.
inline double visibility_from_counts(std::uint64_t c_max, std::uint64_t c_min) {
  if (c_max < c_min) throw std::invalid_argument("visibility_from_counts: c_max < c_min");
  if (c_max == 0) throw std::invalid_argument("visibility_from_counts: all counts are zero");
  return static_cast<double>(c_max - c_min) / static_cast<double>(c_max + c_min);
}

/// Modulator drive mapping: phase = pi * V / v_pi.
struct VppMapping {
  double v_pi = 4.5;

  double phase(double volts) const {
    if (v_pi <= 0.0) throw std::invalid_argument("VppMapping: v_pi must be > 0");
    return std::numbers::pi * volts / v_pi;
  }
};

struct ScanPoint {
  double voltage = 0.0;
  std::uint64_t counts = 0;
};

struct ScanResult {
  std::vector<ScanPoint> points;
  double visibility = 0.0;
};

namespace detail {

// Steady-state channel-1 click probability at one scan step.
inline double scan_click_probability(const SimulationConfig& cfg, double lambda1) {
  const double p_photon = 1.0 - std::exp(-cfg.detector.efficiency[0] * lambda1);
  const double dark_each = cfg.detector.dark_count_per_gate / 2.0;
  double p = p_photon;
  for (int iter = 0; iter < 3; ++iter) {
    const double hazard = cfg.detector.afterpulse_total * p;
    p = 1.0 - (1.0 - p_photon) * (1.0 - dark_each) * (1.0 - hazard);
  }
  return p;
}

}  // namespace detail

/// One driving-voltage scan: Bob's PM sweeps v_start..v_stop while Alice's
/// phase stays fixed; channel-1 counts are recorded per step after dwelling
/// dwell_cycles gates, and the fringe visibility is computed from the extreme
/// counts. Runs against the live scrambler trajectory.
inline ScanResult visibility_scan(const SimulationConfig& cfg, const VppMapping& mapping,
                                  std::uint64_t seed, std::uint64_t scan_index = 0,
                                  RunMode mode = RunMode::Accelerated) {
  cfg.validate();
  const detail::LinkBudget lb = detail::link_budget(cfg);
  const InterferometerModel model = cfg.interferometer_model();
  detail::VisibilityTracker visibility(cfg, model);
  RngStream rng(derive_seed(seed, StreamDomain::Scan, scan_index));

  const double clock = cfg.source.clock_rate_hz;
  const double dwell_s = static_cast<double>(cfg.scan.dwell_cycles) / clock;
  const double t_begin = static_cast<double>(scan_index) * cfg.scan.period_s;

  ScanResult result;
  std::uint64_t c_max = 0;
  std::uint64_t c_min = std::numeric_limits<std::uint64_t>::max();
  std::size_t step = 0;
  for (double volts = cfg.scan.v_start; volts <= cfg.scan.v_stop + 1e-9;
       volts += cfg.scan.v_step, ++step) {
    const double t = t_begin + static_cast<double>(step) * dwell_s;
    const double v_sys = visibility.at(t);
    double drive = volts;
    if (cfg.scan.voltage_sigma_v > 0.0) {
      drive += cfg.scan.voltage_sigma_v * rng.gaussian();
    }
    const auto [w1, w2] = click_weights(0.0, mapping.phase(drive), v_sys);
    const double lambda1 = cfg.scan.mu * lb.eta_link * w1;

    std::uint64_t counts = 0;
    if (mode == RunMode::PerGate) {
      DetectorState state;
      const double lambda2 = cfg.scan.mu * lb.eta_link * w2;
      for (std::uint64_t g = 0; g < cfg.scan.dwell_cycles; ++g) {
        const GateResult r =
            detect_gate(lambda1, lambda2, cfg.detector, state, g, rng);
        if (r.outcome == GateOutcome::Click1 || r.double_click) ++counts;
      }
    } else {
      const double p1 = detail::scan_click_probability(cfg, lambda1);
      counts = rng.poisson(static_cast<double>(cfg.scan.dwell_cycles) * p1);
    }
    result.points.push_back({volts, counts});
    c_max = std::max(c_max, counts);
    c_min = std::min(c_min, counts);
  }
  result.visibility = (c_max == 0) ? 0.0 : visibility_from_counts(c_max, c_min);
  return result;
}

}  // namespace fsqkd
