#include <exception>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "fsqkd/commands.hpp"
#include "fsqkd/config.hpp"
#include "fsqkd/version.hpp"

namespace {

fsqkd::RunMode parse_mode(const std::string& text) {
  if (text == "auto") return fsqkd::RunMode::Auto;
  if (text == "on") return fsqkd::RunMode::Accelerated;
  if (text == "off") return fsqkd::RunMode::PerGate;
  throw CLI::ValidationError("--accelerated must be auto, on or off");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Faraday-Sagnac-Michelson QKD simulator"};
  app.set_version_flag("--version", std::string(fsqkd::kArtifactVersion));
  app.require_subcommand(0, 1);

  std::string config_path;
  std::string out_dir = "out";
  std::string accelerated = "auto";
  std::uint64_t seed = 1;
  unsigned workers = 1;
  bool print_config_flag = false;

  app.add_option("--config", config_path, "configuration file (key = value sections)");
  app.add_option("--seed", seed, "master seed for all random streams");
  app.add_option("--out", out_dir, "output directory");
  app.add_option("--workers", workers, "worker threads for sharded runs")
      ->check(CLI::Range(1u, 256u));
  app.add_option("--accelerated", accelerated,
                 "expected-value mode: auto, on or off")
      ->check(CLI::IsMember({"auto", "on", "off"}));
  app.add_flag("--print-config", print_config_flag,
               "print the fully resolved configuration and exit");

  // equivalence
  auto* equivalence = app.add_subcommand(
      "equivalence", "sweep random inputs through the FMI and FSMI long arms");
  equivalence->fallthrough();
  std::uint64_t trials = 10000;
  double fr_error = 0.0;
  equivalence->add_option("--trials", trials, "number of random trials");
  equivalence->add_option("--fr-error-rad", fr_error,
                          "Faraday rotator angle error; nonzero switches to report-only");

  // visibility
  auto* visibility = app.add_subcommand(
      "visibility", "repeated voltage scans; emits per-scan visibility series");
  visibility->fallthrough();
  std::string vis_duration = "24h";
  visibility->add_option("--duration", vis_duration, "emulated duration (e.g. 24h)");

  // qkd
  auto* qkd = app.add_subcommand(
      "qkd", "decoy-state BB84 session; emits gain/QBER series and key rate");
  qkd->fallthrough();
  std::string qkd_duration = "1h";
  std::string qkd_interval = "10s";
  qkd->add_option("--duration", qkd_duration, "session duration (e.g. 1h, 7d)");
  qkd->add_option("--interval", qkd_interval, "tally interval (e.g. 10s)");

  // keyrate
  auto* keyrate = app.add_subcommand(
      "keyrate", "compute the secure key rate from a tally file");
  keyrate->fallthrough();
  std::string tally_path;
  keyrate->add_option("--tally", tally_path, "tally CSV file")->required();

  // analysis
  auto* analysis = app.add_subcommand(
      "analysis", "clock-rate and PM insertion-loss comparison, FMI vs FSMI");
  analysis->fallthrough();
  double pm_loss_db = 3.0;
  analysis->add_option("--pm-loss-db", pm_loss_db, "single-pass PM insertion loss");

  CLI11_PARSE(app, argc, argv);

  try {
    fsqkd::CommandContext ctx;
    if (!config_path.empty()) ctx.config = fsqkd::load_config(config_path);
    ctx.config.validate();
    ctx.seed = seed;
    ctx.out_dir = out_dir;
    ctx.workers = workers;
    ctx.mode = parse_mode(accelerated);

    if (print_config_flag) {
      std::cout << fsqkd::print_config(ctx.config);
      return fsqkd::kExitOk;
    }
    if (equivalence->parsed()) return fsqkd::cmd_equivalence(ctx, trials, fr_error);
    if (visibility->parsed()) {
      return fsqkd::cmd_visibility(ctx, fsqkd::parse_duration_s(vis_duration));
    }
    if (qkd->parsed()) {
      return fsqkd::cmd_qkd(ctx, fsqkd::parse_duration_s(qkd_duration),
                            fsqkd::parse_duration_s(qkd_interval));
    }
    if (keyrate->parsed()) return fsqkd::cmd_keyrate(ctx, tally_path);
    if (analysis->parsed()) return fsqkd::cmd_analysis(ctx, pm_loss_db);

    std::cout << app.help();
    return fsqkd::kExitOk;
  } catch (const fsqkd::VacuousBoundsError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return fsqkd::kExitCheckFailed;
  } catch (const fsqkd::ConfigError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return fsqkd::kExitBadInput;
  } catch (const fsqkd::IoError& err) {
    std::cerr << "error: " << err.what() << "\n";
    return fsqkd::kExitBadInput;
  } catch (const std::invalid_argument& err) {
    std::cerr << "error: " << err.what() << "\n";
    return fsqkd::kExitBadInput;
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << "\n";
    return fsqkd::kExitCheckFailed;
  }
}
