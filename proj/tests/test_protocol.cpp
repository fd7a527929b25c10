#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "fsqkd/protocol.hpp"

using namespace fsqkd;

namespace {

// Calibrated defaults with every stochastic imperfection switched off.
SimulationConfig noiseless_config() {
  SimulationConfig cfg;
  cfg.imperfections = ComponentImperfections{};
  cfg.session.phase_jitter_rad = 0.0;
  cfg.detector.dark_count_per_gate = 0.0;
  cfg.detector.afterpulse_total = 0.0;
  cfg.scan.voltage_sigma_v = 0.0;
  return cfg;
}

}  // namespace

TEST_CASE("encoding phases follow the BB84 mapping") {
  CHECK(make_encoding(Basis::Z, 0).phi_a == 0.0);
  CHECK(make_encoding(Basis::Z, 1).phi_a == std::numbers::pi);
  CHECK(make_encoding(Basis::X, 0).phi_a == std::numbers::pi / 2.0);
  CHECK(make_encoding(Basis::X, 1).phi_a == 3.0 * std::numbers::pi / 2.0);
  CHECK(make_decoding(Basis::Z).phi_b == 0.0);
  CHECK(make_decoding(Basis::X).phi_b == std::numbers::pi / 2.0);
}

TEST_CASE("sifting") {
  const EncodingChoice z0 = make_encoding(Basis::Z, 0);
  const EncodingChoice z1 = make_encoding(Basis::Z, 1);
  const DecodingChoice z = make_decoding(Basis::Z);
  const DecodingChoice x = make_decoding(Basis::X);

  // constructive port convention
  const SiftResult keep = sift(z0, z, GateOutcome::Click1);
  CHECK(keep.kept);
  CHECK(keep.bit == 0);
  CHECK_FALSE(keep.error);

  // basis mismatch discards regardless of outcome
  CHECK_FALSE(sift(z0, x, GateOutcome::Click1).kept);
  CHECK_FALSE(sift(z0, x, GateOutcome::Click2).kept);

  // wrong detector on a matched basis flags an error
  const SiftResult wrong = sift(z1, z, GateOutcome::Click1);
  CHECK(wrong.kept);
  CHECK(wrong.error);

  CHECK_FALSE(sift(z0, z, GateOutcome::None).kept);
}

TEST_CASE("visibility_from_counts") {
  CHECK(visibility_from_counts(199, 1) == Catch::Approx(0.99).epsilon(1e-12));
  CHECK(visibility_from_counts(1234, 1234) == 0.0);
  CHECK(visibility_from_counts(307, 1) ==
        Catch::Approx(0.993506493506493506).epsilon(1e-15));
  CHECK_THROWS_AS(visibility_from_counts(0, 0), std::invalid_argument);
  CHECK_THROWS_AS(visibility_from_counts(1, 2), std::invalid_argument);

  // invariant under common scaling
  RngStream rng(13);
  for (int i = 0; i < 200; ++i) {
    const auto a = 1 + (rng.bits() % 1000);
    const auto b = a + (rng.bits() % 1000);
    const auto k = 1 + (rng.bits() % 50);
    REQUIRE(visibility_from_counts(k * b, k * a) ==
            Catch::Approx(visibility_from_counts(b, a)).epsilon(1e-12));
  }
}

TEST_CASE("noiseless session has zero QBER and positive detections") {
  SimulationConfig cfg = noiseless_config();
  SessionOptions opt;
  opt.duration_s = 5e-4;  // 5e5 gates
  opt.interval_s = 5e-4;
  opt.mode = RunMode::PerGate;
  opt.seed = 31;
  const auto tallies = run_session(cfg, opt);
  REQUIRE(tallies.size() == 1);
  std::uint64_t detections = 0, errors = 0, sifted = 0;
  for (const auto& ct : tallies[0].per_class) {
    detections += ct.detections;
    sifted += ct.sifted;
    errors += ct.errors;
    REQUIRE(ct.errors <= ct.sifted);
    REQUIRE(ct.sifted <= ct.detections);
    REQUIRE(ct.detections <= ct.sent);
  }
  CHECK(detections > 100);
  CHECK(sifted > 0);
  CHECK(errors == 0);
}

TEST_CASE("sifting keeps the basis-matched half of detections") {
  SimulationConfig cfg = noiseless_config();
  SessionOptions opt;
  opt.duration_s = 2e-3;
  opt.interval_s = 2e-3;
  opt.mode = RunMode::PerGate;
  opt.seed = 32;
  const auto tallies = run_session(cfg, opt);
  std::uint64_t detections = 0, sifted = 0;
  for (const auto& ct : tallies[0].per_class) {
    detections += ct.detections;
    sifted += ct.sifted;
  }
  const double sigma = std::sqrt(detections * 0.25);
  CHECK(std::abs(static_cast<double>(sifted) - 0.5 * detections) < 3.0 * sigma);
}

TEST_CASE("dark-count-only session has QBER 1/2") {
  SimulationConfig cfg = noiseless_config();
  for (auto& c : cfg.source.classes) c.mu = 0.0;
  cfg.detector.dark_count_per_gate = 2e-3;
  SessionOptions opt;
  opt.duration_s = 1e-3;  // 1e6 gates, ~2000 dark clicks
  opt.interval_s = 1e-3;
  opt.mode = RunMode::PerGate;
  opt.seed = 33;
  const auto tallies = run_session(cfg, opt);
  std::uint64_t sifted = 0, errors = 0;
  for (const auto& ct : tallies[0].per_class) {
    sifted += ct.sifted;
    errors += ct.errors;
  }
  REQUIRE(sifted > 200);
  const double qber = static_cast<double>(errors) / static_cast<double>(sifted);
  CHECK(std::abs(qber - 0.5) < 3.0 * std::sqrt(0.25 / static_cast<double>(sifted)));
}

TEST_CASE("session tallies replay bit-exactly and merge across splits") {
  SimulationConfig cfg;  // calibrated defaults

  for (const RunMode mode : {RunMode::PerGate, RunMode::Accelerated}) {
    SessionOptions opt;
    opt.duration_s = mode == RunMode::PerGate ? 4e-4 : 40.0;
    opt.interval_s = mode == RunMode::PerGate ? 1e-4 : 10.0;
    opt.mode = mode;
    opt.seed = 77;

    const auto full = run_session(cfg, opt);
    const auto replay = run_session(cfg, opt);
    REQUIRE(full.size() == 4);
    for (std::size_t i = 0; i < full.size(); ++i) {
      for (std::size_t c = 0; c < full[i].per_class.size(); ++c) {
        REQUIRE(full[i].per_class[c].sent == replay[i].per_class[c].sent);
        REQUIRE(full[i].per_class[c].detections == replay[i].per_class[c].detections);
        REQUIRE(full[i].per_class[c].sifted == replay[i].per_class[c].sifted);
        REQUIRE(full[i].per_class[c].errors == replay[i].per_class[c].errors);
      }
    }

    // workers must not change anything
    SessionOptions threaded = opt;
    threaded.workers = 4;
    const auto parallel = run_session(cfg, threaded);
    for (std::size_t i = 0; i < full.size(); ++i) {
      REQUIRE(full[i].per_class[0].sifted == parallel[i].per_class[0].sifted);
      REQUIRE(full[i].per_class[2].errors == parallel[i].per_class[2].errors);
    }

    // two half-duration runs with the same seed merge into the full run
    SessionOptions first = opt, second = opt;
    first.duration_s = opt.duration_s / 2.0;
    second.duration_s = opt.duration_s / 2.0;
    second.start_interval = 2;
    const auto half_a = run_session(cfg, first);
    const auto half_b = run_session(cfg, second);
    const auto merged_halves = merge_tallies(half_a);
    const auto merged_second = merge_tallies(half_b);
    const auto merged_full = merge_tallies(full);
    for (std::size_t c = 0; c < merged_full.size(); ++c) {
      REQUIRE(merged_halves[c].sent + merged_second[c].sent == merged_full[c].sent);
      REQUIRE(merged_halves[c].sifted + merged_second[c].sifted ==
              merged_full[c].sifted);
      REQUIRE(merged_halves[c].errors + merged_second[c].errors ==
              merged_full[c].errors);
    }
  }
}

TEST_CASE("no observable depends on the pulse global phase") {
  // The detection chain consumes (class, mu) and the modulator phases only.
  // Shift every drawn global phase by a constant and rerun the downstream
  // pipeline on an identically seeded residual stream: outcomes must match.
  SimulationConfig cfg;
  const double shift = std::numbers::pi / 3.0;
  SourceConfig source = cfg.source;
  const double eta_link =
      channel_transmittance(cfg.channel) * cfg.receiver_transmittance();

  RngStream draw_a(911), draw_b(911);
  RngStream residual_a(912), residual_b(912);
  DetectorState state_a, state_b;
  std::uint64_t agreements = 0;
  for (std::uint64_t g = 0; g < 100000; ++g) {
    PulseState pa = draw_pulse(source, draw_a);
    PulseState pb = draw_pulse(source, draw_b);
    pb.global_phase = std::fmod(pb.global_phase + shift, 2.0 * std::numbers::pi);

    const double phi_a = residual_a.bernoulli(0.5) ? std::numbers::pi : 0.0;
    const double phi_b_choice = residual_b.bernoulli(0.5) ? std::numbers::pi : 0.0;
    REQUIRE(phi_a == phi_b_choice);

    const auto [w1a, w2a] = click_weights(phi_a, 0.0, 1.0);
    const auto [w1b, w2b] = click_weights(phi_b_choice, 0.0, 1.0);
    const GateResult ra = detect_gate(pa.mu * eta_link * w1a, pa.mu * eta_link * w2a,
                                      cfg.detector, state_a, g, residual_a);
    const GateResult rb = detect_gate(pb.mu * eta_link * w1b, pb.mu * eta_link * w2b,
                                      cfg.detector, state_b, g, residual_b);
    REQUIRE(ra.outcome == rb.outcome);
    if (ra.outcome != GateOutcome::None) ++agreements;
  }
  CHECK(agreements > 0);
}

TEST_CASE("accelerated mode reproduces the per-gate statistics") {
  SimulationConfig cfg;  // calibrated defaults, afterpulse on
  SessionOptions per_gate;
  per_gate.duration_s = 0.02;  // 2e7 gates
  per_gate.interval_s = 0.02;
  per_gate.mode = RunMode::PerGate;
  per_gate.seed = 500;
  const auto mc = merge_tallies(run_session(cfg, per_gate));

  SessionOptions accelerated = per_gate;
  accelerated.mode = RunMode::Accelerated;
  const auto fast = merge_tallies(run_session(cfg, accelerated));

  for (std::size_t c = 0; c < mc.size(); ++c) {
    const double n_mc = static_cast<double>(mc[c].sent);
    const double q_mc = static_cast<double>(mc[c].detections) / n_mc;
    const double q_fast =
        static_cast<double>(fast[c].detections) / static_cast<double>(fast[c].sent);
    const double sigma = std::sqrt(q_mc / n_mc) * std::sqrt(2.0);
    INFO("class " << c << " gain mc=" << q_mc << " fast=" << q_fast);
    REQUIRE(std::abs(q_mc - q_fast) < 5.0 * sigma);
  }
}

TEST_CASE("noiseless scan traces a clean fringe with unit visibility") {
  SimulationConfig cfg = noiseless_config();
  cfg.scan.dwell_cycles = 4096;
  cfg.scan.v_step = 0.05;
  const VppMapping mapping{cfg.scan.v_pi};

  for (const RunMode mode : {RunMode::Accelerated, RunMode::PerGate}) {
    const ScanResult scan = visibility_scan(cfg, mapping, 2024, 0, mode);
    INFO((mode == RunMode::PerGate ? "per-gate" : "accelerated"));
    REQUIRE(scan.visibility == 1.0);  // fringe minimum has exactly zero counts
    REQUIRE(scan.points.size() == 181);
    // counts at the fringe maximum follow (1+cos)/2 within Poisson noise
    const double eta_link =
        channel_transmittance(cfg.channel) * cfg.receiver_transmittance();
    const double p_max =
        1.0 - std::exp(-cfg.detector.efficiency[0] * cfg.scan.mu * eta_link);
    const double expect = static_cast<double>(cfg.scan.dwell_cycles) * p_max;
    REQUIRE(std::abs(static_cast<double>(scan.points.front().counts) - expect) <
            5.0 * std::sqrt(expect));
  }
}

TEST_CASE("scan replays bit-exactly for a fixed seed") {
  SimulationConfig cfg;
  cfg.scan.dwell_cycles = 2048;
  cfg.scan.v_step = 0.1;
  const VppMapping mapping{cfg.scan.v_pi};
  const ScanResult a = visibility_scan(cfg, mapping, 7, 3, RunMode::Accelerated);
  const ScanResult b = visibility_scan(cfg, mapping, 7, 3, RunMode::Accelerated);
  REQUIRE(a.points.size() == b.points.size());
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    REQUIRE(a.points[i].counts == b.points[i].counts);
  }
  CHECK(a.visibility == b.visibility);
}

TEST_CASE("dark counts alone yield a flat trace with near-zero visibility") {
  SimulationConfig cfg = noiseless_config();
  cfg.scan.mu = 0.0;
  cfg.detector.dark_count_per_gate = 0.05;  // raised so counts resolve the flatness
  const VppMapping mapping{cfg.scan.v_pi};
  const ScanResult scan = visibility_scan(cfg, mapping, 99, 0, RunMode::Accelerated);
  CHECK(scan.visibility < 0.05);
}
