#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>

#include "fsqkd/interferometer.hpp"
#include "fsqkd/physical.hpp"
#include "fsqkd/security.hpp"

namespace fsqkd {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Voltage-scan settings for the interference-visibility procedure.
struct ScanSettings {
  double v_start = 0.0;
  double v_stop = 9.0;
  double v_step = 0.01;
  double v_pi = 4.5;                        // volts per pi phase shift
  std::uint64_t dwell_cycles = 1ull << 19;  // gates per voltage step
  double period_s = 1.0;                    // one scan per emulated second
  double mu = 1.5;                          // pulse intensity during scans
  double voltage_sigma_v = 0.005;           // per-step voltage setting noise

  void validate() const {
    if (!(v_pi > 0.0)) throw ConfigError("scan.v_pi must be > 0");
    if (!(v_step > 0.0)) throw ConfigError("scan.v_step must be > 0");
    if (v_stop <= v_start) throw ConfigError("scan voltage range is empty");
    if (dwell_cycles == 0) throw ConfigError("scan.dwell_cycles must be > 0");
    if (period_s <= 0.0) throw ConfigError("scan.period_s must be > 0");
    if (mu < 0.0 || voltage_sigma_v < 0.0) throw ConfigError("scan noise fields must be >= 0");
  }
};

struct SessionSettings {
  double interval_s = 10.0;       // tally interval
  double phase_jitter_rad = 0.1512;  // per-modulator RMS phase error at clock speed

  void validate() const {
    if (interval_s <= 0.0) throw ConfigError("session.interval_s must be > 0");
    if (phase_jitter_rad < 0.0) throw ConfigError("session.phase_jitter_rad must be >= 0");
  }
};

/// Full simulator configuration. Defaults reproduce the reference system:
/// 1 GHz clock, three-intensity decoy source, 50 km scrambled channel and the
/// calibrated receiver documented in docs/calibration.md.
struct SimulationConfig {
  SourceConfig source;
  ChannelConfig channel;
  DetectorConfig detector;
  double receiver_loss_db = 6.9;  // circulator + interferometer + PM at Bob
  ArmGeometry geometry;
  InterferometerKind kind = InterferometerKind::FSMI;
  ComponentImperfections imperfections{0.0,
                                       std::numeric_limits<double>::infinity(),
                                       0.072};
  double long_arm_phase_rad = 0.0;   // static path-length phase of the long arm
  double short_arm_phase_rad = 0.0;  // and of the short arm
  ScanSettings scan;
  SessionSettings session;
  SecurityConfig security;

  InterferometerModel interferometer_model() const {
    InterferometerModel m;
    m.kind = kind;
    m.long_arm_phase_rad = long_arm_phase_rad;
    m.short_arm_phase_rad = short_arm_phase_rad;
    m.imperfections = imperfections;
    return m;
  }

  double receiver_transmittance() const {
    return std::pow(10.0, -receiver_loss_db / 10.0);
  }

  // Channel-input photon -> detected-photon efficiency (detector included).
  double system_efficiency() const {
    return channel_transmittance(channel) * receiver_transmittance() *
           detector.mean_efficiency();
  }

  void validate() const {
    try {
      source.validate();
      channel.validate();
      detector.validate();
      security.validate();
    } catch (const std::invalid_argument& err) {
      throw ConfigError(err.what());
    }
    scan.validate();
    session.validate();
    if (receiver_loss_db < 0.0) throw ConfigError("receiver_loss_db must be >= 0");
    if (!geometry.valid()) throw ConfigError("interferometer geometry is invalid");
    if (imperfections.bs_split_imbalance <= -1.0 ||
        imperfections.bs_split_imbalance >= 1.0) {
      throw ConfigError("bs_split_imbalance must be in (-1,1)");
    }
    if (std::isfinite(imperfections.pbs_extinction_db) &&
        imperfections.pbs_extinction_db < 0.0) {
      throw ConfigError("pbs_extinction_db must be >= 0");
    }
  }
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

inline double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t consumed = 0;
    const double x = std::stod(value, &consumed);
    if (consumed != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: cannot parse '" + value + "' for key " + key);
  }
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& value) {
  try {
    std::size_t consumed = 0;
    const std::uint64_t x = std::stoull(value, &consumed);
    if (consumed != value.size()) throw std::invalid_argument(value);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: cannot parse '" + value + "' for key " + key);
  }
}

inline bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw ConfigError("config: cannot parse '" + value + "' for key " + key);
}

}  // namespace detail

/// Flat section.key = value map parsed from an INI-style document.
/// '#' and ';' start comments; unknown keys are rejected.
inline std::map<std::string, std::string> parse_key_values(std::istream& in) {
  std::map<std::string, std::string> entries;
  std::string line;
  std::string section;
  while (std::getline(in, line)) {
    const auto comment = line.find_first_of("#;");
    if (comment != std::string::npos) line = line.substr(0, comment);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("config: malformed section: " + line);
      section = detail::trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("config: expected key = value: " + line);
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: empty key in line: " + line);
    entries[section.empty() ? key : section + "." + key] = value;
  }
  return entries;
}

inline void apply_config_entries(SimulationConfig& cfg,
                                 const std::map<std::string, std::string>& entries) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_u64;
  auto class_ref = [&cfg](std::size_t i) -> IntensityClass& {
    if (cfg.source.classes.size() < 3) cfg.source.classes.resize(3);
    return cfg.source.classes[i];
  };
  for (const auto& [key, value] : entries) {
    if (key == "source.clock_rate_hz") cfg.source.clock_rate_hz = parse_double(key, value);
    else if (key == "source.signal_mu") class_ref(0).mu = parse_double(key, value);
    else if (key == "source.signal_probability") class_ref(0).probability = parse_double(key, value);
    else if (key == "source.decoy1_mu") class_ref(1).mu = parse_double(key, value);
    else if (key == "source.decoy1_probability") class_ref(1).probability = parse_double(key, value);
    else if (key == "source.decoy2_mu") class_ref(2).mu = parse_double(key, value);
    else if (key == "source.decoy2_probability") class_ref(2).probability = parse_double(key, value);
    else if (key == "source.phase_randomized") cfg.source.phase_randomized = parse_bool(key, value);
    else if (key == "channel.length_km") cfg.channel.length_km = parse_double(key, value);
    else if (key == "channel.attenuation_db_per_km") cfg.channel.attenuation_db_per_km = parse_double(key, value);
    else if (key == "channel.scramble_rate_hz") cfg.channel.scramble_rate_hz = parse_double(key, value);
    else if (key == "channel.scrambler_seed") cfg.channel.scrambler_seed = parse_u64(key, value);
    else if (key == "detector.efficiency_1") cfg.detector.efficiency[0] = parse_double(key, value);
    else if (key == "detector.efficiency_2") cfg.detector.efficiency[1] = parse_double(key, value);
    else if (key == "detector.dark_count_per_gate") cfg.detector.dark_count_per_gate = parse_double(key, value);
    else if (key == "detector.afterpulse_total") cfg.detector.afterpulse_total = parse_double(key, value);
    else if (key == "detector.afterpulse_window") cfg.detector.afterpulse_window = static_cast<std::uint32_t>(parse_u64(key, value));
    else if (key == "detector.dead_time_gates") cfg.detector.dead_time_gates = static_cast<std::uint32_t>(parse_u64(key, value));
    else if (key == "receiver.insertion_loss_db") cfg.receiver_loss_db = parse_double(key, value);
    else if (key == "interferometer.kind") {
      if (value == "fmi") cfg.kind = InterferometerKind::FMI;
      else if (value == "fsmi") cfg.kind = InterferometerKind::FSMI;
      else throw ConfigError("config: interferometer.kind must be fmi or fsmi");
    }
    else if (key == "interferometer.pm_transit_length_m") cfg.geometry.pm_transit_length_m = parse_double(key, value);
    else if (key == "interferometer.pm_fm_gap_m") cfg.geometry.pm_fm_gap_m = parse_double(key, value);
    else if (key == "interferometer.group_index") cfg.geometry.group_index = parse_double(key, value);
    else if (key == "interferometer.pulse_width_s") cfg.geometry.pulse_width_s = parse_double(key, value);
    else if (key == "interferometer.modulator_rise_fall_s") cfg.geometry.modulator_rise_fall_s = parse_double(key, value);
    else if (key == "interferometer.long_arm_phase_rad") cfg.long_arm_phase_rad = parse_double(key, value);
    else if (key == "interferometer.short_arm_phase_rad") cfg.short_arm_phase_rad = parse_double(key, value);
    else if (key == "interferometer.fr_angle_error_rad") cfg.imperfections.fr_angle_error_rad = parse_double(key, value);
    else if (key == "interferometer.pbs_extinction_db") cfg.imperfections.pbs_extinction_db = parse_double(key, value);
    else if (key == "interferometer.bs_split_imbalance") cfg.imperfections.bs_split_imbalance = parse_double(key, value);
    else if (key == "scan.v_start") cfg.scan.v_start = parse_double(key, value);
    else if (key == "scan.v_stop") cfg.scan.v_stop = parse_double(key, value);
    else if (key == "scan.v_step") cfg.scan.v_step = parse_double(key, value);
    else if (key == "scan.v_pi") cfg.scan.v_pi = parse_double(key, value);
    else if (key == "scan.dwell_cycles") cfg.scan.dwell_cycles = parse_u64(key, value);
    else if (key == "scan.period_s") cfg.scan.period_s = parse_double(key, value);
    else if (key == "scan.mu") cfg.scan.mu = parse_double(key, value);
    else if (key == "scan.voltage_sigma_v") cfg.scan.voltage_sigma_v = parse_double(key, value);
    else if (key == "session.interval_s") cfg.session.interval_s = parse_double(key, value);
    else if (key == "session.phase_jitter_rad") cfg.session.phase_jitter_rad = parse_double(key, value);
    else if (key == "security.ec_efficiency") cfg.security.ec_efficiency = parse_double(key, value);
    else if (key == "security.epsilon_total") cfg.security.epsilon_total = parse_double(key, value);
    else if (key == "security.sift_factor") cfg.security.sift_factor = parse_double(key, value);
    else throw ConfigError("config: unknown key: " + key);
  }
  // security block mirrors the source settings unless overridden
  cfg.security.clock_rate_hz = cfg.source.clock_rate_hz;
  if (!cfg.source.classes.empty()) {
    cfg.security.signal_probability = cfg.source.classes[0].probability;
  }
}

inline SimulationConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  SimulationConfig cfg;
  apply_config_entries(cfg, parse_key_values(in));
  cfg.validate();
  return cfg;
}

inline SimulationConfig config_from_string(const std::string& text) {
  std::istringstream in(text);
  SimulationConfig cfg;
  apply_config_entries(cfg, parse_key_values(in));
  cfg.validate();
  return cfg;
}

/// Fully resolved configuration in the same format load_config accepts.
inline std::string print_config(const SimulationConfig& cfg) {
  auto num = [](double x) {
    char buf[64];
    auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, p);
  };
  std::ostringstream out;
  out << "[source]\n";
  out << "clock_rate_hz = " << num(cfg.source.clock_rate_hz) << "\n";
  out << "signal_mu = " << num(cfg.source.classes[0].mu) << "\n";
  out << "signal_probability = " << num(cfg.source.classes[0].probability) << "\n";
  out << "decoy1_mu = " << num(cfg.source.classes[1].mu) << "\n";
  out << "decoy1_probability = " << num(cfg.source.classes[1].probability) << "\n";
  out << "decoy2_mu = " << num(cfg.source.classes[2].mu) << "\n";
  out << "decoy2_probability = " << num(cfg.source.classes[2].probability) << "\n";
  out << "phase_randomized = " << (cfg.source.phase_randomized ? "true" : "false") << "\n";
  out << "\n[channel]\n";
  out << "length_km = " << num(cfg.channel.length_km) << "\n";
  out << "attenuation_db_per_km = " << num(cfg.channel.attenuation_db_per_km) << "\n";
  out << "scramble_rate_hz = " << num(cfg.channel.scramble_rate_hz) << "\n";
  out << "scrambler_seed = " << cfg.channel.scrambler_seed << "\n";
  out << "\n[detector]\n";
  out << "efficiency_1 = " << num(cfg.detector.efficiency[0]) << "\n";
  out << "efficiency_2 = " << num(cfg.detector.efficiency[1]) << "\n";
  out << "dark_count_per_gate = " << num(cfg.detector.dark_count_per_gate) << "\n";
  out << "afterpulse_total = " << num(cfg.detector.afterpulse_total) << "\n";
  out << "afterpulse_window = " << cfg.detector.afterpulse_window << "\n";
  out << "dead_time_gates = " << cfg.detector.dead_time_gates << "\n";
  out << "\n[receiver]\n";
  out << "insertion_loss_db = " << num(cfg.receiver_loss_db) << "\n";
  out << "\n[interferometer]\n";
  out << "kind = " << (cfg.kind == InterferometerKind::FMI ? "fmi" : "fsmi") << "\n";
  out << "pm_transit_length_m = " << num(cfg.geometry.pm_transit_length_m) << "\n";
  out << "pm_fm_gap_m = " << num(cfg.geometry.pm_fm_gap_m) << "\n";
  out << "group_index = " << num(cfg.geometry.group_index) << "\n";
  out << "pulse_width_s = " << num(cfg.geometry.pulse_width_s) << "\n";
  out << "modulator_rise_fall_s = " << num(cfg.geometry.modulator_rise_fall_s) << "\n";
  out << "long_arm_phase_rad = " << num(cfg.long_arm_phase_rad) << "\n";
  out << "short_arm_phase_rad = " << num(cfg.short_arm_phase_rad) << "\n";
  out << "fr_angle_error_rad = " << num(cfg.imperfections.fr_angle_error_rad) << "\n";
  out << "pbs_extinction_db = " << num(cfg.imperfections.pbs_extinction_db) << "\n";
  out << "bs_split_imbalance = " << num(cfg.imperfections.bs_split_imbalance) << "\n";
  out << "\n[scan]\n";
  out << "v_start = " << num(cfg.scan.v_start) << "\n";
  out << "v_stop = " << num(cfg.scan.v_stop) << "\n";
  out << "v_step = " << num(cfg.scan.v_step) << "\n";
  out << "v_pi = " << num(cfg.scan.v_pi) << "\n";
  out << "dwell_cycles = " << cfg.scan.dwell_cycles << "\n";
  out << "period_s = " << num(cfg.scan.period_s) << "\n";
  out << "mu = " << num(cfg.scan.mu) << "\n";
  out << "voltage_sigma_v = " << num(cfg.scan.voltage_sigma_v) << "\n";
  out << "\n[session]\n";
  out << "interval_s = " << num(cfg.session.interval_s) << "\n";
  out << "phase_jitter_rad = " << num(cfg.session.phase_jitter_rad) << "\n";
  out << "\n[security]\n";
  out << "ec_efficiency = " << num(cfg.security.ec_efficiency) << "\n";
  out << "epsilon_total = " << num(cfg.security.epsilon_total) << "\n";
  out << "sift_factor = " << num(cfg.security.sift_factor) << "\n";
  return out.str();
}

}  // namespace fsqkd
