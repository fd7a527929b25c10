#pragma once

#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "fsqkd/config.hpp"
#include "fsqkd/protocol.hpp"
#include "fsqkd/security.hpp"
#include "fsqkd/version.hpp"

namespace fsqkd {

using json = nlohmann::ordered_json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shortest round-trip decimal form; shared by every CSV writer so outputs
/// are byte-stable across runs.
inline std::string format_number(double x) {
  if (!std::isfinite(x)) throw IoError("refusing to write non-finite number");
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof(buf), x);
  if (ec != std::errc{}) throw IoError("number formatting failed");
  return std::string(buf, p);
}

inline constexpr std::string_view kManifestName = "manifest.json";
inline constexpr std::string_view kManifestComment = "# manifest=manifest.json";

/// Provenance record for one CLI invocation. Data files reference it by name;
/// the manifest itself carries wall-clock timestamps and is therefore the one
/// output that differs between otherwise identical runs.
struct RunManifest {
  std::string subcommand;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  std::string config_ini;
  std::vector<std::string> outputs;
  bool accelerated = false;

  void write(const std::filesystem::path& out_dir) const {
    json j;
    j["artifact_version"] = std::string(kArtifactVersion);
    j["subcommand"] = subcommand;
    j["seed"] = seed;
    j["workers"] = workers;
    j["accelerated"] = accelerated;
    j["outputs"] = outputs;
    j["config_ini"] = config_ini;
    const auto now = std::chrono::system_clock::now();
    j["created_unix_ns"] =
        std::chrono::duration_cast<std::chrono::nanoseconds>(now.time_since_epoch())
            .count();
    std::ofstream out(out_dir / kManifestName, std::ios::binary);
    if (!out) throw IoError("cannot write manifest in " + out_dir.string());
    out << j.dump(2) << "\n";
  }
};

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// CSV writers. Every file starts with the manifest reference comment and a
// header row; all numeric cells go through format_number.

class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::string& header)
      : out_(path, std::ios::binary) {
    if (!out_) throw IoError("cannot open " + path.string() + " for writing");
    out_ << kManifestComment << "\n" << header << "\n";
  }

  void row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out_ << ",";
      out_ << cells[i];
    }
    out_ << "\n";
  }

 private:
  std::ofstream out_;
};

inline void write_interval_series_csv(const std::filesystem::path& path,
                                      const std::vector<IntervalTally>& tallies,
                                      const SourceConfig& source) {
  CsvWriter csv(path,
                "interval_index,t_start_s,class,mu,sent,detections,sifted,errors,"
                "gain,qber");
  for (const auto& t : tallies) {
    for (std::size_t c = 0; c < t.per_class.size(); ++c) {
      const ClassTally& ct = t.per_class[c];
      csv.row({std::to_string(t.interval_index), format_number(t.t_start_s),
               source.classes[c].label, format_number(source.classes[c].mu),
               std::to_string(ct.sent), std::to_string(ct.detections),
               std::to_string(ct.sifted), std::to_string(ct.errors),
               format_number(t.gain(c)), format_number(t.qber(c))});
    }
  }
}

/// Block average of every `block` adjacent interval points, the smoothing the
/// reference time-series plots use.
inline void write_smoothed_series_csv(const std::filesystem::path& path,
                                      const std::vector<IntervalTally>& tallies,
                                      const SourceConfig& source,
                                      std::size_t block = 200) {
  CsvWriter csv(path, "block_index,t_mid_s,class,mu,gain_avg,qber_avg");
  if (tallies.empty()) return;
  const std::size_t n_classes = tallies.front().per_class.size();
  for (std::size_t begin = 0, block_index = 0; begin < tallies.size();
       begin += block, ++block_index) {
    const std::size_t end = std::min(begin + block, tallies.size());
    const double t_mid = 0.5 * (tallies[begin].t_start_s +
                                tallies[end - 1].t_start_s +
                                tallies[end - 1].duration_s);
    for (std::size_t c = 0; c < n_classes; ++c) {
      double gain_acc = 0.0, qber_acc = 0.0;
      for (std::size_t i = begin; i < end; ++i) {
        gain_acc += tallies[i].gain(c);
        qber_acc += tallies[i].qber(c);
      }
      const double n = static_cast<double>(end - begin);
      csv.row({std::to_string(block_index), format_number(t_mid),
               source.classes[c].label, format_number(source.classes[c].mu),
               format_number(gain_acc / n), format_number(qber_acc / n)});
    }
  }
}

/// Aggregate tally file consumed by the key-rate analyzer. detections and
/// errors are sifted counts; the analyzer recovers the physical gain as
/// detections / (sift_factor * sent).
inline void write_tally_csv(const std::filesystem::path& path,
                            const std::vector<ClassTally>& totals,
                            const SourceConfig& source) {
  CsvWriter csv(path, "class,mu,sent,detections,errors");
  for (std::size_t c = 0; c < totals.size(); ++c) {
    csv.row({source.classes[c].label, format_number(source.classes[c].mu),
             std::to_string(totals[c].sent), std::to_string(totals[c].sifted),
             std::to_string(totals[c].errors)});
  }
}

inline ObservedRates read_tally_csv(const std::filesystem::path& path,
                                    double sift_factor) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open tally file " + path.string());
  ObservedRates obs;
  std::string line;
  bool header_seen = false;
  while (std::getline(in, line)) {
    if (line.empty() || line.front() == '#') continue;
    if (!header_seen) {
      if (line != "class,mu,sent,detections,errors") {
        throw IoError("tally file: unexpected header: " + line);
      }
      header_seen = true;
      continue;
    }
    std::istringstream row(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (cells.size() != 5) throw IoError("tally file: malformed row: " + line);
    try {
      ClassRate r;
      r.label = cells[0];
      r.mu = std::stod(cells[1]);
      const double sent = std::stod(cells[2]);
      const double detections = std::stod(cells[3]);
      const double errors = std::stod(cells[4]);
      if (sent <= 0.0 || detections < 0.0 || errors < 0.0 || errors > detections) {
        throw IoError("tally file: counts violate invariants: " + line);
      }
      r.sent = sent;
      r.gain = detections / (sift_factor * sent);
      r.qber = detections > 0.0 ? errors / detections : 0.0;
      obs.classes.push_back(std::move(r));
    } catch (const IoError&) {
      throw;
    } catch (const std::exception&) {
      throw IoError("tally file: cannot parse row: " + line);
    }
  }
  if (!header_seen) throw IoError("tally file: missing header");
  if (obs.classes.empty()) throw IoError("tally file: no data rows");
  return obs;
}

// ---------------------------------------------------------------------------
// JSON views of the security reports

inline json to_json(const DecoyEstimates& est) {
  return json{{"y0", est.y0},
              {"y1_lower", est.y1_lower},
              {"e1_upper", est.e1_upper},
              {"q1_lower", est.q1_lower}};
}

inline json to_json(const ObservedRates& obs) {
  json arr = json::array();
  for (const auto& c : obs.classes) {
    arr.push_back(json{{"label", c.label},
                       {"mu", c.mu},
                       {"gain", c.gain},
                       {"qber", c.qber},
                       {"sent", c.sent}});
  }
  return arr;
}

inline json to_json(const KeyRateReport& report) {
  json j;
  j["rate_bits_per_s"] = report.rate_bits_per_s;
  j["clamped_to_zero"] = report.clamped_to_zero;
  j["finite_size"] = report.finite_size;
  j["terms"] = json{{"q_signal", report.terms.q_signal},
                    {"e_signal", report.terms.e_signal},
                    {"ec_bits_per_pulse", report.terms.ec_bits_per_pulse},
                    {"pa_bits_per_pulse", report.terms.pa_bits_per_pulse},
                    {"net_bits_per_pulse", report.terms.net_bits_per_pulse}};
  j["estimates"] = to_json(report.estimates);
  j["observed"] = to_json(report.observed);
  j["security"] = json{{"ec_efficiency", report.config.ec_efficiency},
                       {"epsilon_total", report.config.epsilon_total},
                       {"sift_factor", report.config.sift_factor},
                       {"clock_rate_hz", report.config.clock_rate_hz},
                       {"signal_probability", report.config.signal_probability}};
  return j;
}

}  // namespace fsqkd
