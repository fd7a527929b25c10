#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "fsqkd/io.hpp"
#include "fsqkd/protocol.hpp"

namespace fsqkd {

inline constexpr int kExitOk = 0;
inline constexpr int kExitCheckFailed = 1;
inline constexpr int kExitBadInput = 2;

/// Shared invocation context for the CLI subcommands.
struct CommandContext {
  SimulationConfig config;
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "out";
  unsigned workers = 1;
  RunMode mode = RunMode::Auto;
};

/// "300", "300s", "10m", "24h", "7d" -> seconds.
inline double parse_duration_s(const std::string& text) {
  if (text.empty()) throw std::invalid_argument("empty duration");
  double scale = 1.0;
  std::string number = text;
  switch (text.back()) {
    case 's': scale = 1.0; number.pop_back(); break;
    case 'm': scale = 60.0; number.pop_back(); break;
    case 'h': scale = 3600.0; number.pop_back(); break;
    case 'd': scale = 86400.0; number.pop_back(); break;
    default: break;
  }
  double value = 0.0;
  std::size_t consumed = 0;
  try {
    value = std::stod(number, &consumed);
  } catch (const std::exception&) {
    throw std::invalid_argument("cannot parse duration: " + text);
  }
  if (consumed != number.size() || value <= 0.0) {
    throw std::invalid_argument("cannot parse duration: " + text);
  }
  return value * scale;
}

namespace detail {

inline void prepare_out_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string());
}

inline RunManifest make_manifest(const CommandContext& ctx, std::string subcommand) {
  RunManifest manifest;
  manifest.subcommand = std::move(subcommand);
  manifest.seed = ctx.seed;
  manifest.workers = ctx.workers;
  manifest.config_ini = print_config(ctx.config);
  return manifest;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// equivalence: FMI vs FSMI long-arm sweep

inline int cmd_equivalence(const CommandContext& ctx, std::uint64_t trials,
                           double fr_angle_error_rad = 0.0) {
  detail::prepare_out_dir(ctx.out_dir);
  ComponentImperfections imperfections;
  imperfections.fr_angle_error_rad = fr_angle_error_rad;
  const bool report_only = !imperfections.ideal();

  const double threshold = 1e-10;
  const double max_deviation = equivalence_report(trials, ctx.seed, imperfections);
  const bool pass = max_deviation < threshold;

  json j;
  j["manifest"] = std::string(kManifestName);
  j["trials"] = trials;
  j["seed"] = ctx.seed;
  j["max_deviation"] = max_deviation;
  j["threshold"] = threshold;
  j["fr_angle_error_rad"] = fr_angle_error_rad;
  j["report_only"] = report_only;
  j["pass"] = pass;
  write_json_file(ctx.out_dir / "equivalence.json", j);

  RunManifest manifest = detail::make_manifest(ctx, "equivalence");
  manifest.outputs = {"equivalence.json"};
  manifest.write(ctx.out_dir);

  std::cout << "equivalence: trials=" << trials << " max_deviation=" << max_deviation
            << (report_only ? " (report only)" : (pass ? " PASS" : " FAIL")) << "\n";
  if (report_only) return kExitOk;
  return pass ? kExitOk : kExitCheckFailed;
}

// ---------------------------------------------------------------------------
// visibility: repeated voltage scans against the running scrambler

struct VisibilitySummary {
  std::size_t n_scans = 0;
  double mean = 0.0;
  double stddev = 0.0;
  bool accelerated = true;
};

inline VisibilitySummary run_visibility_series(const CommandContext& ctx,
                                               double duration_s,
                                               std::vector<double>& visibilities) {
  const SimulationConfig& cfg = ctx.config;
  cfg.validate();
  const auto n_scans = static_cast<std::size_t>(
      std::max(1.0, std::floor(duration_s / cfg.scan.period_s)));
  const double steps = (cfg.scan.v_stop - cfg.scan.v_start) / cfg.scan.v_step + 1.0;
  const double total_gates =
      static_cast<double>(n_scans) * steps * static_cast<double>(cfg.scan.dwell_cycles);

  bool accelerated = true;
  switch (ctx.mode) {
    case RunMode::PerGate: accelerated = false; break;
    case RunMode::Accelerated: accelerated = true; break;
    case RunMode::Auto: accelerated = total_gates > 1e9; break;
  }
  const RunMode scan_mode = accelerated ? RunMode::Accelerated : RunMode::PerGate;
  const VppMapping mapping{cfg.scan.v_pi};

  visibilities.assign(n_scans, 0.0);
  detail::run_sharded(n_scans, ctx.workers, [&](std::size_t i) {
    visibilities[i] = visibility_scan(cfg, mapping, ctx.seed, i, scan_mode).visibility;
  });

  VisibilitySummary summary;
  summary.n_scans = n_scans;
  summary.accelerated = accelerated;
  double acc = 0.0;
  for (double v : visibilities) acc += v;
  summary.mean = acc / static_cast<double>(n_scans);
  double var = 0.0;
  for (double v : visibilities) var += (v - summary.mean) * (v - summary.mean);
  summary.stddev = n_scans > 1 ? std::sqrt(var / static_cast<double>(n_scans - 1)) : 0.0;
  return summary;
}

inline int cmd_visibility(const CommandContext& ctx, double duration_s) {
  if (duration_s <= 0.0) throw std::invalid_argument("visibility: duration must be > 0");
  detail::prepare_out_dir(ctx.out_dir);

  std::vector<double> visibilities;
  const VisibilitySummary summary = run_visibility_series(ctx, duration_s, visibilities);

  {
    CsvWriter csv(ctx.out_dir / "visibility.csv", "t_s,visibility");
    for (std::size_t i = 0; i < visibilities.size(); ++i) {
      csv.row({format_number(static_cast<double>(i) * ctx.config.scan.period_s),
               format_number(visibilities[i])});
    }
  }
  {
    // fixed 0.05 % bins anchored at multiples of the width
    const double width = 5e-4;
    const auto [lo_it, hi_it] =
        std::minmax_element(visibilities.begin(), visibilities.end());
    const auto lo_bin = static_cast<long long>(std::floor(*lo_it / width));
    const auto hi_bin = static_cast<long long>(std::floor(*hi_it / width));
    std::vector<std::uint64_t> histogram(static_cast<std::size_t>(hi_bin - lo_bin + 1), 0);
    for (double v : visibilities) {
      const auto bin = static_cast<long long>(std::floor(v / width)) - lo_bin;
      histogram[static_cast<std::size_t>(bin)] += 1;
    }
    CsvWriter csv(ctx.out_dir / "visibility_hist.csv", "bin_lo,bin_hi,count");
    for (std::size_t b = 0; b < histogram.size(); ++b) {
      const double lo = static_cast<double>(lo_bin + static_cast<long long>(b)) * width;
      csv.row({format_number(lo), format_number(lo + width),
               std::to_string(histogram[b])});
    }
  }

  json j;
  j["manifest"] = std::string(kManifestName);
  j["n_scans"] = summary.n_scans;
  j["duration_s"] = duration_s;
  j["mean_visibility"] = summary.mean;
  j["std_visibility"] = summary.stddev;
  j["accelerated"] = summary.accelerated;
  write_json_file(ctx.out_dir / "visibility_summary.json", j);

  RunManifest manifest = detail::make_manifest(ctx, "visibility");
  manifest.accelerated = summary.accelerated;
  manifest.outputs = {"visibility.csv", "visibility_hist.csv", "visibility_summary.json"};
  manifest.write(ctx.out_dir);

  std::cout << "visibility: scans=" << summary.n_scans << " mean=" << summary.mean
            << " std=" << summary.stddev << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------------------
// qkd: session time series plus the security pipeline

inline int cmd_qkd(const CommandContext& ctx, double duration_s, double interval_s) {
  detail::prepare_out_dir(ctx.out_dir);
  const SimulationConfig& cfg = ctx.config;

  SessionOptions options;
  options.duration_s = duration_s;
  options.interval_s = interval_s;
  options.seed = ctx.seed;
  options.mode = ctx.mode;
  options.workers = ctx.workers;
  const std::vector<IntervalTally> tallies = run_session(cfg, options);
  const bool accelerated = !tallies.empty() && tallies.front().accelerated;

  write_interval_series_csv(ctx.out_dir / "qkd_series.csv", tallies, cfg.source);
  write_smoothed_series_csv(ctx.out_dir / "qkd_smoothed.csv", tallies, cfg.source);
  const std::vector<ClassTally> totals = merge_tallies(tallies);
  write_tally_csv(ctx.out_dir / "tally.csv", totals, cfg.source);

  RunManifest manifest = detail::make_manifest(ctx, "qkd");
  manifest.accelerated = accelerated;
  manifest.outputs = {"qkd_series.csv", "qkd_smoothed.csv", "tally.csv", "keyrate.json"};
  manifest.write(ctx.out_dir);

  const ObservedRates observed =
      observed_rates(totals, cfg.source, cfg.security.sift_factor);
  json j;
  j["manifest"] = std::string(kManifestName);
  j["accelerated"] = accelerated;
  int exit_code = kExitOk;
  try {
    const DecoyEstimates est = decoy_bounds(observed);
    KeyRateReport asymptotic = secure_key_rate(observed, est, cfg.security);
    j["asymptotic"] = to_json(asymptotic);

    const ObservedRates shifted = finite_size_adjust(observed, cfg.security);
    KeyRateReport finite = secure_key_rate(shifted, decoy_bounds(shifted), cfg.security);
    finite.finite_size = true;
    j["finite_size"] = to_json(finite);

    std::cout << "qkd: intervals=" << tallies.size()
              << (accelerated ? " (accelerated)" : " (per-gate)")
              << " asymptotic_rate=" << asymptotic.rate_bits_per_s
              << " finite_size_rate=" << finite.rate_bits_per_s << " bits/s\n";
  } catch (const VacuousBoundsError& err) {
    j["vacuous_bounds"] = true;
    j["error"] = err.what();
    std::cout << "qkd: decoy bounds vacuous: " << err.what() << "\n";
    exit_code = kExitCheckFailed;
  } catch (const std::invalid_argument& err) {
    // e.g. a decoy class with zero detections in a very short run
    j["error"] = std::string("security analysis impossible on these tallies: ") +
                 err.what();
    std::cout << "qkd: " << j["error"].get<std::string>() << "\n";
    exit_code = kExitCheckFailed;
  }
  write_json_file(ctx.out_dir / "keyrate.json", j);
  return exit_code;
}

// ---------------------------------------------------------------------------
// keyrate: pure analysis of a tally file

inline int cmd_keyrate(const CommandContext& ctx, const std::filesystem::path& tally_path) {
  detail::prepare_out_dir(ctx.out_dir);
  const ObservedRates observed =
      read_tally_csv(tally_path, ctx.config.security.sift_factor);

  RunManifest manifest = detail::make_manifest(ctx, "keyrate");
  manifest.outputs = {"keyrate.json"};
  manifest.write(ctx.out_dir);

  json j;
  j["manifest"] = std::string(kManifestName);
  j["tally_file"] = tally_path.string();
  int exit_code = kExitOk;
  try {
    const DecoyEstimates est = decoy_bounds(observed);
    KeyRateReport asymptotic = secure_key_rate(observed, est, ctx.config.security);
    j["asymptotic"] = to_json(asymptotic);

    const ObservedRates shifted = finite_size_adjust(observed, ctx.config.security);
    KeyRateReport finite =
        secure_key_rate(shifted, decoy_bounds(shifted), ctx.config.security);
    finite.finite_size = true;
    j["finite_size"] = to_json(finite);
    std::cout << "keyrate: asymptotic=" << asymptotic.rate_bits_per_s
              << " finite_size=" << finite.rate_bits_per_s << " bits/s"
              << (asymptotic.clamped_to_zero ? " (clamped)" : "") << "\n";
  } catch (const VacuousBoundsError& err) {
    j["vacuous_bounds"] = true;
    j["error"] = err.what();
    std::cout << "keyrate: decoy bounds vacuous: " << err.what() << "\n";
    exit_code = kExitCheckFailed;
  }
  write_json_file(ctx.out_dir / "keyrate.json", j);
  return exit_code;
}

// ---------------------------------------------------------------------------
// analysis: clock-rate and insertion-loss comparison of the two structures

inline int cmd_analysis(const CommandContext& ctx, double pm_loss_db) {
  detail::prepare_out_dir(ctx.out_dir);
  const ArmGeometry& geometry = ctx.config.geometry;
  if (!geometry.valid()) throw std::invalid_argument("analysis: invalid geometry");

  json rows = json::array();
  {
    CsvWriter csv(ctx.out_dir / "analysis.csv",
                  "kind,max_clock_rate_hz,pm_insertion_loss_db");
    for (const auto kind : {InterferometerKind::FMI, InterferometerKind::FSMI}) {
      const std::string name = kind == InterferometerKind::FMI ? "fmi" : "fsmi";
      const double rate = max_clock_rate(geometry, kind);
      const double loss = pm_insertion_loss(kind, pm_loss_db);
      rows.push_back(json{{"kind", name},
                          {"max_clock_rate_hz", rate},
                          {"pm_insertion_loss_db", loss}});
      csv.row({name, format_number(rate), format_number(loss)});
      std::cout << name << ": max clock rate " << rate / 1e6 << " MHz, PM insertion loss "
                << loss << " dB\n";
    }
  }

  json j;
  j["manifest"] = std::string(kManifestName);
  j["pm_loss_db_input"] = pm_loss_db;
  j["geometry"] = json{{"pm_transit_length_m", geometry.pm_transit_length_m},
                       {"pm_fm_gap_m", geometry.pm_fm_gap_m},
                       {"group_index", geometry.group_index},
                       {"pulse_width_s", geometry.pulse_width_s},
                       {"modulator_rise_fall_s", geometry.modulator_rise_fall_s}};
  j["rows"] = rows;
  write_json_file(ctx.out_dir / "analysis.json", j);

  RunManifest manifest = detail::make_manifest(ctx, "analysis");
  manifest.outputs = {"analysis.csv", "analysis.json"};
  manifest.write(ctx.out_dir);
  return kExitOk;
}

}  // namespace fsqkd
