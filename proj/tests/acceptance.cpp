// Acceptance suite: runs the ten system-level criteria end to end and prints
// one PASS/FAIL line per criterion. Exits nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "fsqkd/commands.hpp"
#include "fsqkd/protocol.hpp"

using namespace fsqkd;

namespace {

struct Criterion {
  int id;
  std::string name;
  std::function<bool(std::string&)> run;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6g", x);
  return buf;
}

// Two-sided Poisson acceptance band at the 3-sigma confidence level
// (~99.73%). Gaussian band for large means, exact tail sums otherwise.
bool poisson_within_3sigma(double observed, double mean, std::string& detail) {
  if (mean >= 100.0) {
    const bool ok = std::abs(observed - mean) <= 3.0 * std::sqrt(mean);
    if (!ok) detail += " [obs " + fmt(observed) + " vs mean " + fmt(mean) + "]";
    return ok;
  }
  const double tail = (1.0 - 0.9973002039) / 2.0;
  double p = std::exp(-mean);
  double cdf = p;
  long lo = 0;
  while (cdf < tail && lo < 100000) {
    ++lo;
    p *= mean / static_cast<double>(lo);
    cdf += p;
  }
  // lo is the smallest k with P(X <= k) >= tail/... step back one to be safe
  long hi = lo;
  while (cdf < 1.0 - tail && hi < 1000000) {
    ++hi;
    p *= mean / static_cast<double>(hi);
    cdf += p;
  }
  const bool ok = observed >= static_cast<double>(lo > 0 ? lo - 1 : 0) &&
                  observed <= static_cast<double>(hi);
  if (!ok) {
    detail += " [obs " + fmt(observed) + " outside Poisson(" + fmt(mean) + ") band " +
              fmt(static_cast<double>(lo)) + ".." + fmt(static_cast<double>(hi)) + "]";
  }
  return ok;
}

std::filesystem::path work_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("fsqkd_acceptance_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

std::string slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// ---------------------------------------------------------------------------

bool criterion_equivalence(std::string& detail) {
  const double dev = equivalence_report(10000, 20240201);
  detail = "max deviation " + fmt(dev) + " (threshold 1e-10)";
  return dev < 1e-10;
}

bool criterion_channel_robustness(std::string& detail) {
  InterferometerModel alice, bob;  // ideal FSMI pair
  RngStream rng(derive_seed(7, StreamDomain::Haar));
  double worst = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const double v = system_visibility(alice, bob, random_su2(rng));
    worst = std::max(worst, std::abs(v - 1.0));
  }
  detail = "max |V-1| " + fmt(worst) + " over 1000 Haar channels (threshold 1e-9)";
  return worst < 1e-9;
}

bool criterion_faraday_compensation(std::string& detail) {
  RngStream rng(derive_seed(11, StreamDomain::Haar));
  const JonesMatrix fm = faraday_mirror_matrix();
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    JonesMatrix b = random_su2(rng);
    // arbitrary reciprocal matrices, not just unitaries
    if (i % 2) {
      b.m00 *= rng.uniform(0.5, 1.5);
      b.m11 *= rng.uniform(0.5, 1.5);
      b.m01 *= rng.uniform(0.5, 1.5);
      b.m10 *= rng.uniform(0.5, 1.5);
    }
    worst = std::max(worst,
                     max_entry_deviation(faraday_roundtrip(b), fm * b.determinant()));
  }
  detail = "max deviation " + fmt(worst) + " over 10000 matrices (threshold 1e-12)";
  return worst < 1e-12;
}

bool criterion_visibility_statistics(std::string& detail) {
  CommandContext ctx;
  ctx.seed = 20240204;
  ctx.workers = 4;
  ctx.mode = RunMode::Accelerated;
  std::vector<double> visibilities;
  const VisibilitySummary summary =
      run_visibility_series(ctx, 86400.0, visibilities);
  detail = "24 h: mean V " + fmt(summary.mean) + " (target 0.9935 +- 0.0030), std " +
           fmt(summary.stddev) + " (band [0.0005, 0.0030])";
  const bool mean_ok = std::abs(summary.mean - 0.9935) <= 0.0030;
  const bool std_ok = summary.stddev >= 0.0005 && summary.stddev <= 0.0030;
  return mean_ok && std_ok;
}

bool criterion_qber_reproduction(std::string& detail) {
  SimulationConfig cfg;
  SessionOptions opt;
  opt.duration_s = 3600.0;
  opt.interval_s = 10.0;
  opt.seed = 20240205;
  opt.mode = RunMode::Accelerated;
  opt.workers = 4;
  const auto totals = merge_tallies(run_session(cfg, opt));
  const double e_signal = static_cast<double>(totals[0].errors) / totals[0].sifted;
  const double e_decoy1 = static_cast<double>(totals[1].errors) / totals[1].sifted;
  const double e_decoy2 = static_cast<double>(totals[2].errors) / totals[2].sifted;
  detail = "1 h: QBER signal " + fmt(100 * e_signal) + "% (band [1.9, 2.5]), decoy1 " +
           fmt(100 * e_decoy1) + "% (band [4.5, 6.5]), decoy2 " + fmt(100 * e_decoy2) +
           "% (band [30, 45])";
  return e_signal >= 0.019 && e_signal <= 0.025 && e_decoy1 >= 0.045 &&
         e_decoy1 <= 0.065 && e_decoy2 >= 0.30 && e_decoy2 <= 0.45;
}

bool criterion_oracle_equivalence(std::string& detail) {
  SimulationConfig cfg;
  cfg.detector.afterpulse_total = 0.0;  // oracle models the afterpulse-free system
  SessionOptions opt;
  opt.duration_s = 0.01;  // 1e7 gates
  opt.interval_s = 0.01;
  opt.seed = 20240206;
  opt.mode = RunMode::PerGate;
  const auto totals = merge_tallies(run_session(cfg, opt));

  const double eta_sys = cfg.system_efficiency();
  const double y0 = cfg.detector.dark_count_per_gate;
  const double e_d = effective_error_rate(cfg);
  const double q = cfg.security.sift_factor;

  bool ok = true;
  detail = "1e7 pulses vs analytic oracle:";
  for (std::size_t c = 0; c < totals.size(); ++c) {
    const AnalyticRates oracle =
        analytic_yields(eta_sys, y0, e_d, cfg.source.classes[c].mu);
    const double sent = static_cast<double>(totals[c].sent);
    const double expected_sifted = sent * q * oracle.gain;
    const double expected_errors = expected_sifted * oracle.qber;
    detail += " " + cfg.source.classes[c].label + " sifted " +
              std::to_string(totals[c].sifted) + "/" + fmt(expected_sifted) +
              " errors " + std::to_string(totals[c].errors) + "/" +
              fmt(expected_errors);
    ok = poisson_within_3sigma(static_cast<double>(totals[c].sifted),
                               expected_sifted, detail) &&
         ok;
    ok = poisson_within_3sigma(static_cast<double>(totals[c].errors),
                               expected_errors, detail) &&
         ok;
  }
  return ok;
}

bool criterion_decoy_sandwich(std::string& detail) {
  RngStream rng(derive_seed(2718, StreamDomain::Test));
  int violations = 0;
  for (int i = 0; i < 100; ++i) {
    const double eta = std::pow(10.0, rng.uniform(-4.0, 0.0));
    const double y0 = rng.uniform(0.0, 1e-4);
    const double e_d = rng.uniform(0.0, 0.05);
    ObservedRates obs;
    const double mus[3] = {0.48, 0.07, 0.002};
    const char* labels[3] = {"signal", "decoy1", "decoy2"};
    for (int k = 0; k < 3; ++k) {
      const AnalyticRates r = analytic_yields(eta, y0, e_d, mus[k]);
      obs.classes.push_back({labels[k], mus[k], r.gain, r.qber, 1e12});
    }
    try {
      const DecoyEstimates est = decoy_bounds(obs);
      const double y1_true = y0 + eta * (1.0 - y0);
      const double e1_true = (0.5 * y0 + e_d * eta) / y1_true;
      if (est.y1_lower > y1_true + 1e-12 || est.e1_upper < e1_true - 1e-12) {
        ++violations;
      }
    } catch (const VacuousBoundsError&) {
      ++violations;
    }
  }
  detail = std::to_string(violations) + " violations over 100 random parameter sets";
  return violations == 0;
}

bool criterion_key_rate(std::string& detail) {
  SimulationConfig cfg;
  SessionOptions opt;
  opt.duration_s = 7.0 * 86400.0;
  opt.interval_s = 10.0;
  opt.seed = 20240208;
  opt.mode = RunMode::Accelerated;
  opt.workers = 4;
  const auto totals = merge_tallies(run_session(cfg, opt));
  const ObservedRates observed =
      observed_rates(totals, cfg.source, cfg.security.sift_factor);

  const KeyRateReport asymptotic =
      secure_key_rate(observed, decoy_bounds(observed), cfg.security);
  const ObservedRates shifted = finite_size_adjust(observed, cfg.security);
  const KeyRateReport finite =
      secure_key_rate(shifted, decoy_bounds(shifted), cfg.security);

  detail = "7 d: asymptotic " + fmt(asymptotic.rate_bits_per_s) +
           " bits/s (band [153k, 612k]), finite-size " + fmt(finite.rate_bits_per_s) +
           " bits/s (strictly lower, band [102k, 918k])";
  const bool asymptotic_ok = asymptotic.rate_bits_per_s >= 306000.0 / 2.0 &&
                             asymptotic.rate_bits_per_s <= 306000.0 * 2.0;
  const bool finite_ok = finite.rate_bits_per_s < asymptotic.rate_bits_per_s &&
                         finite.rate_bits_per_s >= 306000.0 / 3.0 &&
                         finite.rate_bits_per_s <= 306000.0 * 3.0;
  return asymptotic_ok && finite_ok;
}

bool criterion_clock_rate(std::string& detail) {
  ArmGeometry geometry;  // calibrated: zero gap, 0.102 m transit
  const double fmi = max_clock_rate(geometry, InterferometerKind::FMI);
  const double fsmi = max_clock_rate(geometry, InterferometerKind::FSMI);
  detail = "FMI " + fmt(fmi / 1e6) + " MHz (500 +- 20%), FSMI " + fmt(fsmi / 1e9) +
           " GHz (>= 1)";
  return fmi >= 4e8 && fmi <= 6e8 && fsmi >= 1e9;
}

bool criterion_determinism(std::string& detail) {
  const auto dir_a = work_dir("det_a");
  const auto dir_b = work_dir("det_b");
  const auto dir_c = work_dir("det_c");
  CommandContext ctx;
  ctx.seed = 20240210;
  ctx.out_dir = dir_a;
  ctx.workers = 1;
  if (cmd_qkd(ctx, 600.0, 10.0) != kExitOk) {
    detail = "first run failed";
    return false;
  }
  ctx.out_dir = dir_b;
  if (cmd_qkd(ctx, 600.0, 10.0) != kExitOk) {
    detail = "second run failed";
    return false;
  }
  ctx.out_dir = dir_c;
  ctx.workers = 4;
  if (cmd_qkd(ctx, 600.0, 10.0) != kExitOk) {
    detail = "multi-worker run failed";
    return false;
  }
  for (const char* name :
       {"qkd_series.csv", "qkd_smoothed.csv", "tally.csv", "keyrate.json"}) {
    const std::string a = slurp(dir_a / name);
    if (a.empty() || a != slurp(dir_b / name) || a != slurp(dir_c / name)) {
      detail = std::string(name) + " differs across runs or worker counts";
      return false;
    }
  }
  detail = "byte-identical CSV/JSON across repeated runs and worker counts 1 vs 4";
  return true;
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {1, "FMI-FSMI long-arm equivalence", criterion_equivalence},
      {2, "channel-disturbance robustness", criterion_channel_robustness},
      {3, "Faraday compensation theorem", criterion_faraday_compensation},
      {4, "24 h visibility statistics", criterion_visibility_statistics},
      {5, "QBER reproduction", criterion_qber_reproduction},
      {6, "Monte Carlo vs analytic oracle", criterion_oracle_equivalence},
      {7, "decoy-bound sandwich", criterion_decoy_sandwich},
      {8, "secure key rate", criterion_key_rate},
      {9, "clock-rate analysis", criterion_clock_rate},
      {10, "deterministic outputs", criterion_determinism},
  };

  int failures = 0;
  for (const auto& criterion : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string detail;
    bool pass = false;
    try {
      pass = criterion.run(detail);
    } catch (const std::exception& err) {
      detail = std::string("exception: ") + err.what();
    }
    std::printf("[%s] criterion %2d: %s — %s [%.1f s]\n", pass ? "PASS" : "FAIL",
                criterion.id, criterion.name.c_str(), detail.c_str(),
                seconds_since(t0));
    std::fflush(stdout);
    if (!pass) ++failures;
  }
  if (failures) {
    std::printf("%d of %zu acceptance criteria FAILED\n", failures, criteria.size());
    return 1;
  }
  std::printf("all %zu acceptance criteria passed\n", criteria.size());
  return 0;
}
