#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include "fsqkd/jones.hpp"
#include "fsqkd/rng.hpp"

namespace fsqkd {

// ---------------------------------------------------------------------------
// Source

struct IntensityClass {
  std::string label;
  double mu = 0.0;          // mean photons per pulse at the channel input
  double probability = 0.0;
};

struct SourceConfig {
  double clock_rate_hz = 1e9;
  std::vector<IntensityClass> classes = {
      {"signal", 0.48, 29.0 / 32.0},
      {"decoy1", 0.07, 2.0 / 32.0},
      {"decoy2", 0.002, 1.0 / 32.0},
  };
  bool phase_randomized = true;

  void validate() const {
    if (clock_rate_hz <= 0.0) throw std::invalid_argument("clock rate must be > 0");
    if (classes.empty()) throw std::invalid_argument("at least one intensity class");
    double total = 0.0;
    for (const auto& c : classes) {
      if (c.mu < 0.0) throw std::invalid_argument("mean photon number must be >= 0");
      if (c.probability < 0.0) throw std::invalid_argument("class probability must be >= 0");
      total += c.probability;
    }
    if (std::abs(total - 1.0) > 1e-9) {
      throw std::invalid_argument("class probabilities must sum to 1");
    }
  }
};

/// One emitted pulse: intensity class, its mean photon number and the
/// laser's random global phase. The global phase is carried for completeness
/// but no downstream observable depends on it when phase_randomized is set.
struct PulseState {
  std::size_t class_index = 0;
  double mu = 0.0;
  double global_phase = 0.0;
};

inline PulseState draw_pulse(const SourceConfig& source, RngStream& rng) {
  const double u = rng.uniform01();
  const double phase = source.phase_randomized ? rng.angle() : 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < source.classes.size(); ++i) {
    acc += source.classes[i].probability;
    if (u < acc || i + 1 == source.classes.size()) {
      return {i, source.classes[i].mu, phase};
    }
  }
  return {0, source.classes[0].mu, phase};
}

// ---------------------------------------------------------------------------
// Channel

struct ChannelConfig {
  double length_km = 50.0;
  double attenuation_db_per_km = 0.2;
  double scramble_rate_hz = 30.0;
  std::uint64_t scrambler_seed = 1;

  void validate() const {
    if (length_km < 0.0) throw std::invalid_argument("fiber length must be >= 0");
    if (attenuation_db_per_km < 0.0) throw std::invalid_argument("attenuation must be >= 0");
    if (scramble_rate_hz < 0.0) throw std::invalid_argument("scramble rate must be >= 0");
  }
};

inline double channel_transmittance(const ChannelConfig& channel) {
  channel.validate();
  return std::pow(10.0, -channel.attenuation_db_per_km * channel.length_km / 10.0);
}

namespace detail {

struct Quaternion {
  std::array<double, 4> q{1.0, 0.0, 0.0, 0.0};
  double phase = 0.0;  // extra U(1) factor so keyframes cover U(2)
};

inline Quaternion scrambler_keyframe(std::uint64_t seed, std::uint64_t index) {
  SplitMixRng rng(derive_seed(seed, StreamDomain::Scrambler, index));
  Quaternion kf;
  kf.q = haar_quaternion(rng);
  kf.phase = 2.0 * std::numbers::pi * rng.uniform01();
  return kf;
}

// Spherical linear interpolation between unit quaternions (shortest path).
inline std::array<double, 4> slerp(const std::array<double, 4>& a,
                                   std::array<double, 4> b, double s) {
  double dot = a[0] * b[0] + a[1] * b[1] + a[2] * b[2] + a[3] * b[3];
  if (dot < 0.0) {  // SU(2) double cover: take the near representative
    for (double& x : b) x = -x;
    dot = -dot;
  }
  std::array<double, 4> out{};
  if (dot > 1.0 - 1e-12) {
    for (int i = 0; i < 4; ++i) out[i] = a[i] + s * (b[i] - a[i]);
  } else {
    const double theta = std::acos(std::min(1.0, dot));
    const double inv_sin = 1.0 / std::sin(theta);
    const double wa = std::sin((1.0 - s) * theta) * inv_sin;
    const double wb = std::sin(s * theta) * inv_sin;
    for (int i = 0; i < 4; ++i) out[i] = wa * a[i] + wb * b[i];
  }
  double n2 = 0.0;
  for (double x : out) n2 += x * x;
  const double inv = 1.0 / std::sqrt(n2);
  for (double& x : out) x *= inv;
  return out;
}

}  // namespace detail

/// Continuous polarization-scrambler trajectory: Haar-random keyframe
/// unitaries every 1/scramble_rate seconds, geodesically interpolated in
/// between. Caches the active keyframe pair, so sequential evaluation during
/// a session costs one slerp per call.
class ScramblerTrajectory {
 public:
  explicit ScramblerTrajectory(const ChannelConfig& channel)
      : seed_(channel.scrambler_seed), rate_(channel.scramble_rate_hz) {}

  JonesMatrix unitary_at(double t_s) const {
    if (t_s < 0.0) throw std::invalid_argument("scrambler time must be >= 0");
    if (rate_ <= 0.0) {
      const auto kf = keyframe(0);
      return materialize(kf.q, kf.phase);
    }
    const double pos = t_s * rate_;
    const auto index = static_cast<std::uint64_t>(pos);
    const double s = pos - static_cast<double>(index);
    if (!cache_valid_ || index != cached_index_) {
      cached_a_ = keyframe(index);
      cached_b_ = keyframe(index + 1);
      cached_index_ = index;
      cache_valid_ = true;
    }
    const auto q = detail::slerp(cached_a_.q, cached_b_.q, s);
    const double phase =
        cached_a_.phase + s * (cached_b_.phase - cached_a_.phase);
    return materialize(q, phase);
  }

 private:
  detail::Quaternion keyframe(std::uint64_t index) const {
    return detail::scrambler_keyframe(seed_, index);
  }

  static JonesMatrix materialize(const std::array<double, 4>& q, double phase) {
    return detail::su2_from_quaternion(q) * std::polar(1.0, phase);
  }

  std::uint64_t seed_;
  double rate_;
  mutable bool cache_valid_ = false;
  mutable std::uint64_t cached_index_ = 0;
  mutable detail::Quaternion cached_a_, cached_b_;
};

/// Channel unitary at time t. Convenience wrapper over ScramblerTrajectory
/// for one-off evaluation.
inline JonesMatrix scrambler_unitary(double t_s, const ChannelConfig& channel) {
  return ScramblerTrajectory(channel).unitary_at(t_s);
}

// ---------------------------------------------------------------------------
// Detection

struct DetectorConfig {
  std::array<double, 2> efficiency{0.20, 0.20};
  double dark_count_per_gate = 2e-6;  // total across both channels
  double afterpulse_total = 0.011;    // expected afterpulses per recorded click
  std::uint32_t afterpulse_window = 100;  // gates the hazard is spread over
  std::uint32_t dead_time_gates = 0;      // optional, off by default

  void validate() const {
    for (double eta : efficiency) {
      if (eta < 0.0 || eta > 1.0) throw std::invalid_argument("efficiency in [0,1]");
    }
    if (dark_count_per_gate < 0.0 || dark_count_per_gate > 1.0) {
      throw std::invalid_argument("dark count probability in [0,1]");
    }
    if (afterpulse_total < 0.0 || afterpulse_total > 1.0) {
      throw std::invalid_argument("afterpulse probability in [0,1]");
    }
    if (afterpulse_total > 0.0 && afterpulse_window == 0) {
      throw std::invalid_argument("afterpulse window must be > 0");
    }
  }

  double mean_efficiency() const { return 0.5 * (efficiency[0] + efficiency[1]); }
};

/// Per-channel memory of recent clicks feeding the afterpulse hazard.
class DetectorState {
 public:
  void record_click(int channel, std::uint64_t gate_index) {
    recent_[channel].push_back(gate_index);
    last_click_gate_ = gate_index;
    has_clicked_ = true;
  }

  // Number of clicks on `channel` within the trailing `window` gates.
  std::size_t hazard_count(int channel, std::uint64_t gate_index,
                           std::uint32_t window) {
    auto& buf = recent_[channel];
    while (!buf.empty() && buf.front() + window < gate_index) buf.pop_front();
    return buf.size();
  }

  bool in_dead_time(std::uint64_t gate_index, std::uint32_t dead_gates) const {
    return dead_gates > 0 && has_clicked_ &&
           gate_index < last_click_gate_ + dead_gates;
  }

  void reset() {
    recent_[0].clear();
    recent_[1].clear();
    has_clicked_ = false;
  }

 private:
  std::array<std::deque<std::uint64_t>, 2> recent_;
  std::uint64_t last_click_gate_ = 0;
  bool has_clicked_ = false;
};

enum class GateOutcome { None, Click1, Click2 };

struct GateResult {
  GateOutcome outcome = GateOutcome::None;
  bool double_click = false;
};

/// One gated detection attempt on the double-channel SPD. lambda1/lambda2 are
/// the mean photon numbers arriving at each channel input; efficiency, dark
/// counts and the afterpulse hazard combine per channel, and simultaneous
/// clicks are resolved by a fair coin.
inline GateResult detect_gate(double lambda1, double lambda2,
                              const DetectorConfig& det, DetectorState& state,
                              std::uint64_t gate_index, RngStream& rng) {
  if (lambda1 < 0.0 || lambda2 < 0.0) {
    throw std::invalid_argument("detect_gate: mean photon numbers must be >= 0");
  }
  if (state.in_dead_time(gate_index, det.dead_time_gates)) return {};

  const double dark_each = det.dark_count_per_gate / 2.0;
  std::array<double, 2> lambda{lambda1, lambda2};
  std::array<bool, 2> clicked{false, false};
  for (int c = 0; c < 2; ++c) {
    const double p_photon = 1.0 - std::exp(-det.efficiency[c] * lambda[c]);
    double p_afterpulse = 0.0;
    if (det.afterpulse_total > 0.0) {
      const double per_gate = det.afterpulse_total / det.afterpulse_window;
      p_afterpulse =
          static_cast<double>(state.hazard_count(c, gate_index, det.afterpulse_window)) *
          per_gate;
    }
    const double p_click =
        1.0 - (1.0 - p_photon) * (1.0 - dark_each) * (1.0 - p_afterpulse);
    clicked[c] = rng.bernoulli(p_click);
  }

  GateResult result;
  if (clicked[0] && clicked[1]) {
    result.double_click = true;
    result.outcome = rng.bernoulli(0.5) ? GateOutcome::Click1 : GateOutcome::Click2;
  } else if (clicked[0]) {
    result.outcome = GateOutcome::Click1;
  } else if (clicked[1]) {
    result.outcome = GateOutcome::Click2;
  }
  // Both avalanches feed the afterpulse hazard even when the reported
  // outcome is squashed to a single channel.
  if (clicked[0]) state.record_click(0, gate_index);
  if (clicked[1]) state.record_click(1, gate_index);
  return result;
}

}  // namespace fsqkd
