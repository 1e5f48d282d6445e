// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit when any
// criterion fails.

#include <algorithm>
#include <cstdarg>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "range_rte/cli.hpp"
#include "range_rte/estimators.hpp"
#include "range_rte/fisher.hpp"
#include "range_rte/measurement.hpp"
#include "range_rte/simulation.hpp"
#include "sdp_instances.hpp"

using namespace range_rte;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, ...) __attribute__((format(printf, 1, 2)));
std::string fmt(const char* f, ...) {
  char buf[512];
  va_list ap;
  va_start(ap, f);
  std::vsnprintf(buf, sizeof(buf), f, ap);
  va_end(ap);
  return buf;
}

Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

double heading_error(const Transform4DoF& a, const Transform4DoF& b) {
  return std::abs(wrap_angle(a.theta - b.theta));
}

// 1 ---------------------------------------------------------------------------
Outcome jacobian_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(101);
  std::uniform_real_distribution<double> head(-std::numbers::pi, std::numbers::pi);
  const double h = 1e-6;
  double worst = 0.0;
  int bad = 0;
  for (int n = 0; n < 1000; ++n) {
    const Transform4DoF tf(random_vec(rng, 10.0), head(rng));
    const Vec3 pa = random_vec(rng, 3.0), pb = random_vec(rng, 3.0);
    const Vec4 analytic = range_jacobian(tf, pa, pb).row();
    for (int j = 0; j < 4; ++j) {
      Transform4DoF plus = tf, minus = tf;
      if (j < 3) {
        plus.t(j) += h;
        minus.t(j) -= h;
      } else {
        plus.theta += h;
        minus.theta -= h;
      }
      const double fd = (true_range(plus, pa, pb) - true_range(minus, pa, pb)) / (2 * h);
      const double e = std::abs(fd - analytic(j));
      worst = std::max(worst, e);
      if (e > 1e-5) ++bad;
    }
  }
  const double secs = seconds_since(t0);
  return {bad == 0 && secs < 5.0,
          fmt("1000 instances, max |analytic - fd| = %.2e (tol 1e-5), %.3f s (limit 5 s)", worst,
              secs)};
}

// 2 ---------------------------------------------------------------------------
Outcome determinant_check() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(202);
  std::uniform_int_distribution<int> kdist(4, 10);
  std::uniform_real_distribution<double> head(-std::numbers::pi, std::numbers::pi);
  double worst = 0.0;
  for (int n = 0; n < 200; ++n) {
    const Transform4DoF tf(random_vec(rng, 5.0), head(rng));
    SyncedDataset ds;
    ds.sigma_r = 0.1;
    const int k = kdist(rng);
    for (int i = 0; i < k; ++i) {
      SyncedSample s;
      s.t = i;
      s.pa = random_vec(rng, 1.0);
      s.pb = random_vec(rng, 1.0);
      s.d = true_range(tf, s.pa, s.pb);
      ds.samples.push_back(s);
    }
    const double direct = fim(tf, ds).F.determinant();
    const double geo = det_fim_geometric(tf, ds);
    worst = std::max(worst, std::abs(geo - direct) / std::abs(direct));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-8 && secs < 30.0,
          fmt("200 instances, max relative difference %.2e (tol 1e-8), %.3f s (limit 30 s)", worst,
              secs)};
}

// 3 ---------------------------------------------------------------------------
Outcome noiseless_check() {
  ScenarioConfig cfg;
  cfg.d0 = 3.0;
  cfg.D = 1.0;
  cfg.sigma_r = 0.0;
  cfg.sigma_o = 0.0;
  cfg.seed = 303;
  double et_sdp = 0, eth_sdp = 0, et_q = 0, eth_q = 0, ratio = 0;
  int failures = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    const auto td = synthesize_trial(cfg, i);
    try {
      const auto s = sdp_estimate(td.noisy);
      et_sdp = std::max(et_sdp, (s.theta_hat.t - td.truth.t).norm());
      eth_sdp = std::max(eth_sdp, heading_error(s.theta_hat, td.truth));
      ratio = std::max(ratio, s.solver.eig_ratio);
      EstimatorOptions eo;
      eo.restart_seed = td.restart_seed;
      const auto q = qcqp_estimate(td.noisy, eo);
      et_q = std::max(et_q, (q.theta_hat.t - td.truth.t).norm());
      eth_q = std::max(eth_q, heading_error(q.theta_hat, td.truth));
    } catch (const Error&) {
      ++failures;
    }
  }
  const bool pass = failures == 0 && et_sdp <= 1e-6 && eth_sdp <= 1e-6 && et_q <= 1e-6 &&
                    eth_q <= 1e-6 && ratio <= 1e-6;
  return {pass, fmt("100 instances, sdp max e_t %.1e e_theta %.1e, qcqp max e_t %.1e e_theta "
                    "%.1e, max lambda2/lambda1 %.1e (tol 1e-6), failures %d",
                    et_sdp, eth_sdp, et_q, eth_q, ratio, failures)};
}

// 4 ---------------------------------------------------------------------------
Outcome singularity_check() {
  std::string detail;
  bool pass = true;
  for (auto kind : {SingularKind::kParallel, SingularKind::kPlanarLinear,
                    SingularKind::kStaticTarget, SingularKind::kStaticHost}) {
    int detected = 0;
    for (std::uint64_t s = 0; s < 50; ++s) {
      ScenarioConfig cfg;
      cfg.sigma_r = 0.1;
      Rng rng = make_rng(404, static_cast<std::uint64_t>(kind), s);
      const Scenario sc = singular_scenario(kind, cfg, rng);

      // Rank at sigma = 0: noise-free geometry, relative eigenvalue cut.
      SyncedDataset exact = sc.noiseless;
      exact.sigma_r = kMinSigmaR;
      const auto eig0 = solvers::eig_sym(fim(sc.truth, exact).F);
      int rank = 0;
      for (int i = 0; i < 4; ++i) rank += eig0.values(i) > 1e-10 * eig0.values(0) ? 1 : 0;

      SyncedDataset noisy_sigma = sc.noiseless;
      noisy_sigma.sigma_r = 0.1;
      const auto flags = singularity_report(fim(sc.truth, noisy_sigma).F);
      bool stated = false;
      switch (kind) {
        case SingularKind::kParallel:
        case SingularKind::kPlanarLinear:
          stated = flags.translation_unobservable();
          break;
        case SingularKind::kStaticTarget:
          stated = flags.heading_unobservable();
          break;
        case SingularKind::kStaticHost:
          stated = flags.translation_unobservable() && flags.heading_unobservable();
          break;
      }
      if (rank < 4 && flags.kappa > 1e6 && stated) ++detected;
    }
    pass = pass && detected == 50;
    detail += fmt("%s %d/50  ", to_string(kind), detected);
  }
  return {pass, detail + "(rank<4 at sigma=0, kappa>1e6 at sigma_r=0.1, stated parameters flagged)"};
}

// 5 ---------------------------------------------------------------------------
Outcome efficiency_check() {
  const auto t0 = Clock::now();
  bool pass = true;
  std::string detail;
  for (std::size_t k : {40u, 60u, 80u}) {
    ScenarioConfig cfg;
    cfg.d0 = 3.0;
    cfg.D = 1.0;
    cfg.sigma_r = 0.1;
    cfg.sigma_o = 0.001;
    cfg.trials = 100;
    cfg.n_poses = k;
    cfg.seed = 505;
    const auto st = monte_carlo_run(cfg, Estimator::kQcqp);
    const double rt = st.mse_t / st.crlb_t_mean;
    const double rth = st.mse_theta / st.crlb_theta_mean;
    pass = pass && st.failures == 0 && rt >= 1.0 && rt <= 3.0 && rth >= 1.0 && rth <= 3.0;
    detail += fmt("k=%zu MSE/CRLB t %.2f theta %.2f; ", k, rt, rth);
  }
  const double secs = seconds_since(t0);
  pass = pass && secs < 300.0;
  return {pass, detail + fmt("band [1, 3], %.1f s (limit 300 s)", secs)};
}

// 6 ---------------------------------------------------------------------------
// Bootstrap confidence that RMSE_t(hi) >= RMSE_t(lo), resampling trials.
double bootstrap_confidence(const std::vector<double>& lo, const std::vector<double>& hi,
                            std::mt19937_64& rng, int B = 2000) {
  auto rmse_resample = [&](const std::vector<double>& v) {
    std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
    double acc = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double e = v[pick(rng)];
      acc += e * e;
    }
    return std::sqrt(acc / static_cast<double>(v.size()));
  };
  int hold = 0;
  for (int b = 0; b < B; ++b) hold += rmse_resample(hi) >= rmse_resample(lo) ? 1 : 0;
  return static_cast<double>(hold) / B;
}

Outcome trend_check() {
  std::mt19937_64 boot(606);
  bool pass = true;
  std::string detail;
  for (auto est : {Estimator::kQcqp, Estimator::kSdp}) {
    auto cell = [&](double d0, double D) {
      ScenarioConfig cfg;
      cfg.d0 = d0;
      cfg.D = D;
      cfg.sigma_r = 0.1;
      cfg.sigma_o = 0.001;
      cfg.trials = 100;
      cfg.seed = 606;
      return monte_carlo_run(cfg, est);
    };
    // Nondecreasing in d0 at D = 2.
    std::vector<ErrorStats> by_d0{cell(1, 2), cell(5, 2), cell(10, 2)};
    // Nonincreasing in D at d0 = 5: order the cells so larger error comes last.
    std::vector<ErrorStats> by_D{cell(5, 2), cell(5, 1), cell(5, 0.5)};
    detail += std::string(to_string(est)) + ": d0 {1,5,10} rmse ";
    for (const auto& s : by_d0) detail += fmt("%.3f ", s.rmse_t);
    detail += "conf ";
    for (int i = 0; i < 2; ++i) {
      const double c = bootstrap_confidence(by_d0[i].e_t, by_d0[i + 1].e_t, boot);
      pass = pass && c >= 0.95;
      detail += fmt("%.3f ", c);
    }
    detail += "| D {0.5,1,2} rmse ";
    for (int i = 2; i >= 0; --i) detail += fmt("%.3f ", by_D[i].rmse_t);
    detail += "conf ";
    for (int i = 0; i < 2; ++i) {
      const double c = bootstrap_confidence(by_D[i].e_t, by_D[i + 1].e_t, boot);
      pass = pass && c >= 0.95;
      detail += fmt("%.3f ", c);
    }
    detail += "; ";
  }
  return {pass, detail + "(bootstrap B=2000, need >= 0.95)"};
}

// 7 ---------------------------------------------------------------------------
Outcome drift_check() {
  ScenarioConfig cfg;
  cfg.seed = 707;
  cfg.drift = DriftConfig{};
  cfg.drift->sigma_t = 0.1;
  cfg.drift->sigma_theta = 0.1;
  cfg.drift->duration = 600.0;
  cfg.drift->window = 50;
  const auto r = drift_scenario(cfg, Estimator::kQcqp);
  const double ratio = r.rmse_corrected / r.rmse_nc;
  return {ratio < 0.25, fmt("corrected RMSE %.3f m, no-correction RMSE %.3f m, ratio %.3f "
                            "(limit 0.25), windows %zu skipped %zu failed %zu",
                            r.rmse_corrected, r.rmse_nc, ratio, r.windows, r.skipped, r.failed)};
}

// 8 ---------------------------------------------------------------------------
Outcome debias_check() {
  bool pass = true;
  std::string detail;
  std::mt19937_64 rng(808);
  for (auto [d, sigma] : {std::pair{1.0, 0.1}, std::pair{5.0, 0.3}}) {
    // Library values at the noise-free range.
    SyncedDataset ds;
    ds.sigma_r = sigma;
    ds.samples.push_back(SyncedSample{0.0, d, Vec3::Zero(), Vec3::Zero()});
    const auto st = debias_squared(ds);
    const double mean_formula = d * d - st.s(0);
    const double var_formula = st.sigma_s_diag(0);

    // Antithetic pairs (eta, -eta): 10^6 draws in total.
    std::normal_distribution<double> g(0.0, sigma);
    const int pairs = 500000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < pairs; ++i) {
      const double eta = g(rng);
      for (double e : {eta, -eta}) {
        const double nu = 2.0 * d * e + e * e;
        sum += nu;
        sum2 += nu * nu;
      }
    }
    const double n = 2.0 * pairs;
    const double mean = sum / n;
    const double var = sum2 / n - mean * mean;
    const double em = std::abs(mean - mean_formula) / mean_formula;
    const double ev = std::abs(var - var_formula) / var_formula;
    pass = pass && em <= 0.01 && ev <= 0.01;
    detail += fmt("(d=%g, sigma=%g) mean rel err %.2e, var rel err %.2e; ", d, sigma, em, ev);
  }
  return {pass, detail + "tol 1e-2"};
}

// 9 ---------------------------------------------------------------------------
Outcome outlier_check() {
  int spikes_missed = 0;
  std::size_t clean_total = 0, clean_rejected = 0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    std::mt19937_64 rng(9000 + s);
    std::normal_distribution<double> g(0.0, 0.03);
    std::uniform_real_distribution<double> spike(0.5, 3.0);
    std::uniform_int_distribution<int> where(20, 199);
    std::vector<RangeSample> clean, spiked;
    const int at = where(rng);
    const double height = spike(rng);
    for (int i = 0; i < 200; ++i) {
      const double v = 3.0 + g(rng);
      clean.push_back(RangeSample{static_cast<double>(i), v});
      spiked.push_back(RangeSample{static_cast<double>(i), i == at ? 3.0 + height : v});
    }
    const auto rc = sliding_outlier_filter(clean, 20, 0.005);
    clean_total += clean.size();
    clean_rejected += rc.rejected;
    const auto rs = sliding_outlier_filter(spiked, 20, 0.005);
    bool spike_kept = false;
    for (const auto& r : rs.accepted) spike_kept = spike_kept || r.t == at;
    if (spike_kept) ++spikes_missed;
  }
  const double false_rate = static_cast<double>(clean_rejected) / static_cast<double>(clean_total);
  return {spikes_missed == 0 && false_rate < 0.01,
          fmt("1000 streams, spikes missed %d, clean false rejection %.4f%% (limit 1%%)",
              spikes_missed, 100.0 * false_rate)};
}

// 10 --------------------------------------------------------------------------
Outcome sdp_check() {
  std::mt19937_64 rng(1010);
  double worst_gap = 0.0, worst_obj = 0.0;
  int worst_iter = 0, not_optimal = 0;
  std::vector<double> ms;
  for (int n = 0; n < 50; ++n) {
    const auto inst = make_rank_one_sdp(rng);
    const auto t0 = Clock::now();
    const auto sol = solvers::sdp_solve(inst.problem, 1e-10, 200);
    ms.push_back(1e3 * seconds_since(t0));
    if (sol.diag.status != solvers::SdpStatus::kOptimal) ++not_optimal;
    worst_gap = std::max(worst_gap, sol.diag.gap);
    worst_obj = std::max(worst_obj, std::abs(sol.diag.primal_obj - inst.optimum));
    worst_iter = std::max(worst_iter, sol.diag.iterations);
  }
  std::nth_element(ms.begin(), ms.begin() + 25, ms.end());
  const double median = ms[25];
  return {not_optimal == 0 && worst_gap <= 1e-7 && worst_obj <= 1e-6 && worst_iter <= 200 &&
              median < 50.0,
          fmt("50 problems, max gap %.1e (tol 1e-7), max objective error %.1e (tol 1e-6), max "
              "iterations %d, median %.2f ms, non-optimal %d",
              worst_gap, worst_obj, worst_iter, median, not_optimal)};
}

// 11 --------------------------------------------------------------------------
Outcome reproducibility_check() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "range_rte_acceptance_repro";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path cfg_path = dir / "config.json";
  std::ofstream(cfg_path) << R"({"seed": 1111, "trials": 24, "n_poses": 20,
                                 "estimators": ["qcqp", "sdp", "nls"],
                                 "sweep": [{"d0_m": 3.0}, {"d0_m": 6.0, "D_m": 2.0}]})";
  std::vector<std::string> outputs;
  std::ostringstream err;
  bool ran = true;
  for (const char* threads : {"1", "4", "8"}) {
    ::setenv("RANGE_RTE_THREADS", threads, 1);
    cli::CommandArgs args;
    args.config = cfg_path.string();
    args.out = (dir / threads).string();
    fs::create_directories(args.out);
    ran = ran && cli::cmd_simulate(args, err) == cli::kExitOk;
    outputs.push_back(cli::read_file(fs::path(args.out) / "results.csv"));
  }
  ::unsetenv("RANGE_RTE_THREADS");
  fs::remove_all(dir);
  const bool same = outputs[0] == outputs[1] && outputs[0] == outputs[2];
  return {ran && same, fmt("results.csv %zu bytes, identical across 1/4/8 threads: %s",
                           outputs[0].size(), same ? "yes" : "no")};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"jacobian finite differences", jacobian_check},
      {"determinant equivalence", determinant_check},
      {"noiseless exactness", noiseless_check},
      {"singularity detection", singularity_check},
      {"CRLB efficiency", efficiency_check},
      {"difficulty trends", trend_check},
      {"drift correction", drift_check},
      {"squared-distance debiasing", debias_check},
      {"outlier filter", outlier_check},
      {"SDP solver", sdp_check},
      {"reproducibility", reproducibility_check},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first,
                o.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
