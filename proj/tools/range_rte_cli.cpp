// range_rte: relative transform estimation from ranges and odometry.
//
//   range_rte estimate --config cfg.json --odom-a a.csv --odom-b b.csv --ranges r.csv
//   range_rte simulate --config sweep.json --out results/
//   range_rte fim      --config fim.json
//   range_rte drift    --config drift.json
//
// Exit codes: 0 success, 2 parse/config error, 3 insufficient or singular
// data, 4 solver failure.

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "range_rte/cli.hpp"

namespace {

void add_common(CLI::App* sub, range_rte::cli::CommandArgs& args,
                std::uint64_t& seed, std::string& estimator) {
  sub->add_option("--config", args.config, "JSON configuration file");
  sub->add_option("--seed", seed, "Override the configured seed");
  sub->add_option("--estimator", estimator, "qcqp | sdp | nls");
  sub->add_option("--out", args.out, "Output directory")->capture_default_str();
}

void add_logs(CLI::App* sub, std::string& a, std::string& b, std::string& r) {
  sub->add_option("--odom-a", a, "Host odometry CSV (t,px,py,pz,qx,qy,qz,qw)");
  sub->add_option("--odom-b", b, "Target odometry CSV");
  sub->add_option("--ranges", r, "Range CSV (t,d)");
}

}  // namespace

int main(int argc, char** argv) {
  namespace rc = range_rte::cli;
  CLI::App app{"Relative transform estimation from ranges and odometry"};
  app.require_subcommand(1);

  rc::CommandArgs args;
  std::uint64_t seed = 0;
  std::string estimator, odom_a, odom_b, ranges;

  auto* estimate = app.add_subcommand("estimate", "Estimate the transform from logs");
  add_common(estimate, args, seed, estimator);
  add_logs(estimate, odom_a, odom_b, ranges);
  estimate->add_flag("--timing", args.timing, "Record wall-clock timings");

  auto* simulate = app.add_subcommand("simulate", "Monte-Carlo simulation sweep");
  add_common(simulate, args, seed, estimator);
  simulate->add_flag("--timing", args.timing, "Record per-trial solve times");

  auto* fim = app.add_subcommand("fim", "Fisher information analysis");
  add_common(fim, args, seed, estimator);
  add_logs(fim, odom_a, odom_b, ranges);

  auto* drift = app.add_subcommand("drift", "Sliding-window drift correction scenario");
  add_common(drift, args, seed, estimator);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc_cli = app.exit(e);
    return rc_cli == 0 ? 0 : rc::kExitParse;
  }

  for (auto* sub : {estimate, simulate, fim, drift}) {
    if (sub->count("--seed")) args.seed = seed;
    if (sub->count("--estimator")) args.estimator = estimator;
  }
  if (!odom_a.empty()) args.odom_a = odom_a;
  if (!odom_b.empty()) args.odom_b = odom_b;
  if (!ranges.empty()) args.ranges = ranges;

  if (estimate->parsed()) return rc::cmd_estimate(args);
  if (simulate->parsed()) return rc::cmd_simulate(args);
  if (fim->parsed()) return rc::cmd_fim(args);
  return rc::cmd_drift(args);
}
