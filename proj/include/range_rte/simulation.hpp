#pragma once

// Monte-Carlo scenario generation: ground truth, random trajectories, noise
// injection, degenerate configurations, estimator sweeps and a drifting
// long-range scenario for the sliding-window tracker.

#include <Eigen/Core>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "range_rte/core_geometry.hpp"
#include "range_rte/error.hpp"
#include "range_rte/estimators.hpp"
#include "range_rte/fisher.hpp"
#include "range_rte/measurement.hpp"

namespace range_rte {

using Rng = std::mt19937_64;

/// Independent generator for (seed, stream, index); the same triple always
/// yields the same sequence regardless of scheduling.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream, std::uint64_t index) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

// ---------------------------------------------------------------------------
// Parallel loop

/// Worker count: RANGE_RTE_THREADS when set, hardware concurrency otherwise.
inline unsigned worker_count() {
  if (const char* env = std::getenv("RANGE_RTE_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<unsigned>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

/// Runs fn(i) for i in [0, n) on up to `threads` workers. Each index is
/// processed exactly once; callers write results by index.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn,
                         unsigned threads = worker_count()) {
  threads = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
  if (threads <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

// ---------------------------------------------------------------------------
// Configuration

// Where heading increments rotate the drifting frame: about the target's
// current position (odometry error accumulating along the path) or about the
// target frame origin.
enum class DriftPivot { kBody, kOrigin };

inline const char* to_string(DriftPivot p) {
  return p == DriftPivot::kBody ? "body" : "origin";
}

inline DriftPivot parse_drift_pivot(const std::string& s) {
  if (s == "body") return DriftPivot::kBody;
  if (s == "origin") return DriftPivot::kOrigin;
  throw Error(ErrorCode::kConfig, "unknown drift pivot '" + s + "'");
}

struct DriftConfig {
  double sigma_t = 0.1;      // m / sqrt(s), per axis
  double sigma_theta = 0.1;  // rad / sqrt(s)
  double duration = 600.0;   // s
  std::size_t window = 50;
  std::size_t stride = 10;
  double rate_hz = 10.0;
  DriftPivot pivot = DriftPivot::kBody;
};

struct ScenarioConfig {
  double d0 = 3.0;
  double D = 1.0;
  std::size_t n_poses = 20;
  double sigma_r = 0.1;
  double sigma_o = 0.001;
  std::size_t trials = 100;
  std::uint64_t seed = 1;
  LeverArm arm_a;
  LeverArm arm_b;
  bool use_d0 = true;
  std::optional<DriftConfig> drift;

  void validate() const {
    if (!(d0 > 0.0)) throw Error(ErrorCode::kConfig, "scenario: d0 must be positive");
    if (!(D >= 0.0)) throw Error(ErrorCode::kConfig, "scenario: D must be nonnegative");
    if (!(sigma_r >= 0.0) || !(sigma_o >= 0.0)) {
      throw Error(ErrorCode::kConfig, "scenario: noise levels must be nonnegative");
    }
    if (n_poses < 1) throw Error(ErrorCode::kConfig, "scenario: n_poses must be >= 1");
    if (trials < 1) throw Error(ErrorCode::kConfig, "scenario: trials must be >= 1");
    if (drift) {
      if (!(drift->sigma_t >= 0.0) || !(drift->sigma_theta >= 0.0) ||
          !(drift->duration > 0.0) || !(drift->rate_hz > 0.0)) {
        throw Error(ErrorCode::kConfig, "scenario: invalid drift block");
      }
      if (drift->window < 10 || drift->stride < 1) {
        throw Error(ErrorCode::kConfig, "scenario: drift window >= 10 and stride >= 1");
      }
    }
  }
};

// Weighting floor for noiseless runs; the measurement model needs sigma > 0.
inline constexpr double kMinSigmaR = 1e-6;

// ---------------------------------------------------------------------------
// Ground truth and trajectories

inline Vec3 uniform_unit_vector(Rng& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  Vec3 v;
  do {
    v = Vec3(g(rng), g(rng), g(rng));
  } while (v.norm() < 1e-12);
  return v.normalized();
}

inline double uniform_heading(Rng& rng) {
  std::uniform_real_distribution<double> u(-std::numbers::pi, std::numbers::pi);
  return u(rng);
}

/// |t| = d0 with uniform direction, heading uniform in [-pi, pi).
inline Transform4DoF sample_ground_truth(double d0, Rng& rng) {
  if (!(d0 > 0.0)) throw Error(ErrorCode::kConfig, "sample_ground_truth: d0 must be positive");
  Transform4DoF tf;
  tf.t = d0 * uniform_unit_vector(rng);
  tf.theta = uniform_heading(rng);
  return tf;
}

inline Quat yaw_quaternion(double yaw) {
  return Quat(Eigen::AngleAxisd(yaw, Vec3::UnitZ()));
}

/// Gaussian random walk from the origin, step std D/2, reflected radially
/// back into the ball of radius D. Unit time steps, random yaw per pose.
inline std::vector<Pose> generate_trajectory(double D, std::size_t n_poses, Rng& rng) {
  if (!(D >= 0.0) || n_poses < 1) {
    throw Error(ErrorCode::kConfig, "generate_trajectory: need D >= 0, n_poses >= 1");
  }
  std::normal_distribution<double> step(0.0, 1.0);
  std::vector<Pose> out;
  out.reserve(n_poses);
  Vec3 p = Vec3::Zero();
  for (std::size_t i = 0; i < n_poses; ++i) {
    if (i > 0 && D > 0.0) {
      p += 0.5 * D * Vec3(step(rng), step(rng), step(rng));
      const double r = p.norm();
      if (r > D) {
        double folded = std::fmod(r, 2.0 * D);
        if (folded > D) folded = 2.0 * D - folded;
        p *= folded / r;
      }
    }
    Pose pose;
    pose.t = static_cast<double>(i);
    pose.p = p;
    pose.q = yaw_quaternion(uniform_heading(rng));
    out.push_back(pose);
  }
  return out;
}

/// Pairs trajectories pose-by-pose, applies lever arms, adds range and
/// position noise, and records the noisy first inter-origin distance (it
/// shares the first range's noise draw).
inline SyncedDataset synthesize_measurements(const Transform4DoF& truth,
                                             const std::vector<Pose>& traj_a,
                                             const std::vector<Pose>& traj_b,
                                             const ScenarioConfig& cfg, Rng& rng) {
  if (traj_a.size() != traj_b.size() || traj_a.empty()) {
    throw Error(ErrorCode::kConfig, "synthesize_measurements: trajectory length mismatch");
  }
  std::normal_distribution<double> g(0.0, 1.0);
  SyncedDataset ds;
  ds.sigma_r = std::max(cfg.sigma_r, kMinSigmaR);
  ds.samples.reserve(traj_a.size());
  double first_noise = 0.0;
  for (std::size_t i = 0; i < traj_a.size(); ++i) {
    const Vec3 pa = antenna_world_position(traj_a[i], cfg.arm_a);
    const Vec3 pb = antenna_world_position(traj_b[i], cfg.arm_b);
    SyncedSample s;
    s.t = traj_a[i].t;
    const double eta = cfg.sigma_r * g(rng);
    if (i == 0) first_noise = eta;
    s.d = true_range(truth, pa, pb) + eta;
    s.pa = pa + cfg.sigma_o * Vec3(g(rng), g(rng), g(rng));
    s.pb = pb + cfg.sigma_o * Vec3(g(rng), g(rng), g(rng));
    ds.samples.push_back(s);
  }
  // d0 is the first range ever received, taken between the frame origins.
  const double d0_noisy = truth.t.norm() + first_noise;
  if (cfg.use_d0 && d0_noisy > 0.0) ds.d0 = d0_noisy;
  return ds;
}

// ---------------------------------------------------------------------------
// Degenerate configurations

enum class SingularKind { kParallel, kPlanarLinear, kStaticTarget, kStaticHost };

inline const char* to_string(SingularKind k) {
  switch (k) {
    case SingularKind::kParallel: return "parallel";
    case SingularKind::kPlanarLinear: return "planar_linear";
    case SingularKind::kStaticTarget: return "static_target";
    case SingularKind::kStaticHost: return "static_host";
  }
  return "unknown";
}

inline SingularKind parse_singular_kind(const std::string& s) {
  if (s == "parallel") return SingularKind::kParallel;
  if (s == "planar_linear") return SingularKind::kPlanarLinear;
  if (s == "static_target") return SingularKind::kStaticTarget;
  if (s == "static_host") return SingularKind::kStaticHost;
  throw Error(ErrorCode::kConfig, "unknown singular scenario '" + s + "'");
}

struct Scenario {
  Transform4DoF truth;
  SyncedDataset dataset;        // noisy
  SyncedDataset noiseless;      // same geometry, exact ranges and positions
};

/// Builds antenna tracks realizing the named degeneracy exactly. Lever arms
/// are not applied: the tracks are the antenna positions.
inline Scenario singular_scenario(SingularKind kind, const ScenarioConfig& cfg, Rng& rng) {
  const Transform4DoF truth = sample_ground_truth(cfg.d0, rng);
  const Mat3 c = heading_rotation(truth.theta);
  const std::size_t n = cfg.n_poses;
  std::vector<Vec3> pa(n, Vec3::Zero()), pb(n, Vec3::Zero());
  const double D = cfg.D > 0.0 ? cfg.D : 1.0;
  switch (kind) {
    case SingularKind::kParallel: {
      // Identical displacements in the host frame: C pb_i = pa_i.
      const auto traj = generate_trajectory(D, n, rng);
      for (std::size_t i = 0; i < n; ++i) {
        pa[i] = traj[i].p;
        pb[i] = c.transpose() * pa[i];
      }
      break;
    }
    case SingularKind::kPlanarLinear: {
      // Both agents on lines through their origins, inside the plane spanned
      // by t and the host's direction of travel.
      const Vec3 m = uniform_unit_vector(rng);
      Vec3 normal = truth.t.cross(m);
      if (normal.norm() < 1e-9) normal = truth.t.unitOrthogonal();
      normal.normalize();
      const Vec3 in_plane = normal.cross(truth.t.normalized());
      std::uniform_real_distribution<double> ang(-std::numbers::pi, std::numbers::pi);
      const double phi = ang(rng);
      const Vec3 m_target = std::cos(phi) * truth.t.normalized() + std::sin(phi) * in_plane;
      std::uniform_real_distribution<double> pos(-D, D);
      for (std::size_t i = 0; i < n; ++i) {
        pa[i] = pos(rng) * m;
        pb[i] = c.transpose() * (pos(rng) * m_target);
      }
      break;
    }
    case SingularKind::kStaticTarget: {
      const auto traj = generate_trajectory(D, n, rng);
      for (std::size_t i = 0; i < n; ++i) pa[i] = traj[i].p;
      break;
    }
    case SingularKind::kStaticHost: {
      const auto traj = generate_trajectory(D, n, rng);
      for (std::size_t i = 0; i < n; ++i) pb[i] = traj[i].p;
      break;
    }
  }
  std::normal_distribution<double> g(0.0, 1.0);
  Scenario sc;
  sc.truth = truth;
  sc.noiseless.sigma_r = std::max(cfg.sigma_r, kMinSigmaR);
  sc.dataset.sigma_r = sc.noiseless.sigma_r;
  for (std::size_t i = 0; i < n; ++i) {
    SyncedSample exact{static_cast<double>(i), true_range(truth, pa[i], pb[i]), pa[i], pb[i]};
    sc.noiseless.samples.push_back(exact);
    SyncedSample noisy = exact;
    noisy.d += cfg.sigma_r * g(rng);
    noisy.pa += cfg.sigma_o * Vec3(g(rng), g(rng), g(rng));
    noisy.pb += cfg.sigma_o * Vec3(g(rng), g(rng), g(rng));
    sc.dataset.samples.push_back(noisy);
  }
  if (cfg.use_d0) {
    sc.noiseless.d0 = truth.t.norm();
    const double first_noise = sc.dataset.samples[0].d - sc.noiseless.samples[0].d;
    sc.dataset.d0 = std::max(1e-9, truth.t.norm() + first_noise);
  }
  return sc;
}

// ---------------------------------------------------------------------------
// Monte-Carlo runs

struct TrialResult {
  std::size_t trial = 0;
  bool ok = false;
  std::string status;
  double e_t = std::numeric_limits<double>::quiet_NaN();
  double e_theta = std::numeric_limits<double>::quiet_NaN();
  double crlb_t = std::numeric_limits<double>::quiet_NaN();
  double crlb_theta = std::numeric_limits<double>::quiet_NaN();
  double solve_ms = 0.0;
  Transform4DoF truth;
  Transform4DoF estimate;
};

struct ErrorStats {
  std::vector<TrialResult> trials;
  std::vector<double> e_t;      // successful trials only, in trial order
  std::vector<double> e_theta;
  std::size_t failures = 0;
  double rmse_t = 0.0, rmse_theta = 0.0;
  double mse_t = 0.0, mse_theta = 0.0;
  double crlb_t_mean = 0.0, crlb_theta_mean = 0.0;
  double solve_ms_mean = 0.0;
};

/// Aggregates in trial order so the result does not depend on scheduling.
inline ErrorStats aggregate(std::vector<TrialResult> trials) {
  ErrorStats st;
  st.trials = std::move(trials);
  std::size_t n_crlb = 0;
  for (const auto& t : st.trials) {
    if (!t.ok) {
      ++st.failures;
      continue;
    }
    st.e_t.push_back(t.e_t);
    st.e_theta.push_back(t.e_theta);
    st.mse_t += t.e_t * t.e_t;
    st.mse_theta += t.e_theta * t.e_theta;
    st.solve_ms_mean += t.solve_ms;
    if (std::isfinite(t.crlb_t) && std::isfinite(t.crlb_theta)) {
      st.crlb_t_mean += t.crlb_t;
      st.crlb_theta_mean += t.crlb_theta;
      ++n_crlb;
    }
  }
  const std::size_t n_ok = st.e_t.size();
  if (n_ok > 0) {
    st.mse_t /= static_cast<double>(n_ok);
    st.mse_theta /= static_cast<double>(n_ok);
    st.solve_ms_mean /= static_cast<double>(n_ok);
  }
  st.rmse_t = std::sqrt(st.mse_t);
  st.rmse_theta = std::sqrt(st.mse_theta);
  if (n_crlb > 0) {
    st.crlb_t_mean /= static_cast<double>(n_crlb);
    st.crlb_theta_mean /= static_cast<double>(n_crlb);
  } else {
    st.crlb_t_mean = st.crlb_theta_mean = std::numeric_limits<double>::infinity();
  }
  return st;
}

inline constexpr std::uint64_t kStreamTrials = 0x7472;

struct TrialData {
  Transform4DoF truth;
  std::vector<Pose> traj_a;
  std::vector<Pose> traj_b;
  SyncedDataset exact;  // noise-free ranges and positions
  SyncedDataset noisy;
  std::uint64_t restart_seed = 0;
};

/// Everything a trial draws from its generator, in a fixed order.
inline TrialData synthesize_trial(const ScenarioConfig& cfg, std::size_t trial) {
  Rng rng = make_rng(cfg.seed, kStreamTrials, trial);
  TrialData td;
  td.truth = sample_ground_truth(cfg.d0, rng);
  td.traj_a = generate_trajectory(cfg.D, cfg.n_poses, rng);
  td.traj_b = generate_trajectory(cfg.D, cfg.n_poses, rng);

  ScenarioConfig exact_cfg = cfg;
  exact_cfg.sigma_r = 0.0;
  exact_cfg.sigma_o = 0.0;
  Rng unused = rng;
  td.exact = synthesize_measurements(td.truth, td.traj_a, td.traj_b, exact_cfg, unused);
  td.exact.sigma_r = std::max(cfg.sigma_r, kMinSigmaR);
  td.noisy = synthesize_measurements(td.truth, td.traj_a, td.traj_b, cfg, rng);
  td.restart_seed = rng();
  return td;
}

/// One Monte-Carlo trial: fresh truth, trajectories and noise. The CRLB is
/// evaluated at the truth on the noise-free geometry.
inline TrialResult run_trial(const ScenarioConfig& cfg, Estimator estimator,
                             std::size_t trial, const EstimatorOptions& base = {}) {
  const TrialData td = synthesize_trial(cfg, trial);
  TrialResult tr;
  tr.trial = trial;
  tr.truth = td.truth;
  try {
    const auto f = fim(tr.truth, td.exact);
    tr.crlb_t = f.crlb_t;
    tr.crlb_theta = f.crlb_theta;
  } catch (const Error&) {
  }

  EstimatorOptions eo = base;
  eo.restart_seed = td.restart_seed;
  const SyncedDataset& ds = td.noisy;
  const auto start = std::chrono::steady_clock::now();
  try {
    const auto rep = run_estimator(estimator, ds, eo);
    tr.estimate = rep.theta_hat;
    if (!rep.theta_hat.is_finite()) {
      tr.status = "non_finite";
    } else {
      tr.ok = true;
      tr.status = rep.solver.status;
      tr.e_t = (rep.theta_hat.t - tr.truth.t).norm();
      tr.e_theta = std::abs(wrap_angle(rep.theta_hat.theta - tr.truth.theta));
    }
  } catch (const Error& e) {
    tr.status = to_string(e.code());
  }
  tr.solve_ms = std::chrono::duration<double, std::milli>(
                    std::chrono::steady_clock::now() - start)
                    .count();
  return tr;
}

inline ErrorStats monte_carlo_run(const ScenarioConfig& cfg, Estimator estimator,
                                  const EstimatorOptions& base = {},
                                  unsigned threads = worker_count()) {
  cfg.validate();
  std::vector<TrialResult> results(cfg.trials);
  parallel_for(
      cfg.trials, [&](std::size_t i) { results[i] = run_trial(cfg, estimator, i, base); },
      threads);
  return aggregate(std::move(results));
}

// ---------------------------------------------------------------------------
// Drift scenario

struct DriftResult {
  std::vector<double> t;          // sample times with an estimate available
  std::vector<double> err_nc;     // aligned-position error, no correction
  std::vector<double> err_corrected;
  double rmse_nc = 0.0;
  double rmse_corrected = 0.0;
  std::size_t windows = 0;
  std::size_t skipped = 0;
  std::size_t failed = 0;
  std::vector<WindowEstimate> window_estimates;
  std::vector<Transform4DoF> truth_at_window;  // drifted truth at each window end
};

inline constexpr std::uint64_t kStreamDrift = 0x6472;

/// Long scenario: a host with exact localization sweeps a sinuous 3D path;
/// the target scans a wide circle while its odometry frame drifts as a
/// random walk on (t, theta). Corrected positions use the sliding-window
/// estimate held from the latest window; the baseline keeps the initial
/// transform.
inline DriftResult drift_scenario(const ScenarioConfig& cfg, Estimator estimator,
                                  const EstimatorOptions& base = {}) {
  cfg.validate();
  if (!cfg.drift) throw Error(ErrorCode::kConfig, "drift_scenario: drift block missing");
  const DriftConfig& dc = *cfg.drift;
  Rng rng = make_rng(cfg.seed, kStreamDrift, 0);
  std::normal_distribution<double> g(0.0, 1.0);

  const double dt = 1.0 / dc.rate_hz;
  const auto n = static_cast<std::size_t>(std::floor(dc.duration * dc.rate_hz));
  const Transform4DoF t0 = sample_ground_truth(cfg.d0, rng);
  const double phase_b = uniform_heading(rng);
  const double two_pi = 2.0 * std::numbers::pi;

  // Both agents travel the same 20 m circle, a few meters apart. The target
  // adds a small wobble on every axis, the host a larger sinuous one.
  auto target_world = [&](double t) {
    const double w = two_pi / 120.0;
    const Vec3 circle(20.0 * (std::cos(w * t + phase_b) - std::cos(phase_b)),
                      20.0 * (std::sin(w * t + phase_b) - std::sin(phase_b)), 0.0);
    const Vec3 wobble(0.8 * std::sin(two_pi * t / 6.0), 0.8 * std::sin(two_pi * t / 7.0),
                      1.0 * std::sin(two_pi * t / 5.0));
    return Vec3(t0.t + circle + wobble);
  };
  auto host_world = [&](double t) {
    const double w = two_pi / 120.0;
    const Vec3 circle(20.0 * (std::cos(w * t + phase_b) - std::cos(phase_b)),
                      20.0 * (std::sin(w * t + phase_b) - std::sin(phase_b)), 0.0);
    const Vec3 wobble(3.0 * std::sin(two_pi * t / 5.0), 3.0 * std::sin(two_pi * t / 4.0),
                      2.0 * std::sin(two_pi * t / 3.0));
    return Vec3(circle + wobble);
  };

  SyncedDataset stream;
  stream.sigma_r = std::max(cfg.sigma_r, kMinSigmaR);
  std::vector<Transform4DoF> truth_k;
  std::vector<Vec3> target_true;
  truth_k.reserve(n);
  target_true.reserve(n);
  Transform4DoF tk = t0;
  const double sdt = std::sqrt(dt);
  for (std::size_t k = 0; k < n; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Vec3 q = target_world(t);
    if (k > 0) {
      const Vec3 dtk = dc.sigma_t * sdt * Vec3(g(rng), g(rng), g(rng));
      const double dtheta = dc.sigma_theta * sdt * g(rng);
      if (dc.pivot == DriftPivot::kBody) {
        // Rotate about q so the target's odometry position stays continuous.
        const Vec3 pb_prev = heading_rotation(tk.theta).transpose() * (q - tk.t);
        tk.theta += dtheta;
        tk.t = q - heading_rotation(tk.theta) * pb_prev;
      } else {
        tk.theta += dtheta;
      }
      tk.t += dtk;
    }
    const Vec3 pa = host_world(t);
    // Drifting target odometry: q = t_k + C_k pb.
    const Vec3 pb = heading_rotation(tk.theta).transpose() * (q - tk.t);
    SyncedSample s;
    s.t = t;
    s.d = (q - pa).norm() + cfg.sigma_r * g(rng);
    s.pa = pa + cfg.sigma_o * Vec3(g(rng), g(rng), g(rng));
    s.pb = pb + cfg.sigma_o * Vec3(g(rng), g(rng), g(rng));
    stream.samples.push_back(s);
    truth_k.push_back(tk);
    target_true.push_back(q);
  }

  SlidingWindowOptions so;
  so.window = dc.window;
  so.stride = dc.stride;
  so.estimator = estimator;
  so.estimator_opts = base;
  const auto windows = sliding_window_estimate(stream, so);

  DriftResult out;
  out.windows = windows.size();
  std::size_t w = 0;
  std::optional<Transform4DoF> held;
  double acc_nc = 0.0, acc_c = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    // Sample k is aligned by the first window that contains it as one of its
    // newest samples; skipped windows keep the previous estimate.
    while (w < windows.size() && windows[w].last < k) ++w;
    if (w < windows.size() && windows[w].first <= k) {
      for (std::size_t j = 0; j <= w; ++j) {
        if (windows[w - j].has_estimate) {
          held = windows[w - j].estimate;
          break;
        }
      }
    }
    if (!held) continue;
    const Vec3& pb = stream.samples[k].pb;
    const double e_nc = (apply_transform(t0, pb) - target_true[k]).norm();
    const double e_c = (apply_transform(*held, pb) - target_true[k]).norm();
    out.t.push_back(stream.samples[k].t);
    out.err_nc.push_back(e_nc);
    out.err_corrected.push_back(e_c);
    acc_nc += e_nc * e_nc;
    acc_c += e_c * e_c;
  }
  for (const auto& win : windows) {
    if (win.skipped) ++out.skipped;
    if (win.failed) ++out.failed;
    out.truth_at_window.push_back(truth_k[win.last]);
  }
  if (!out.t.empty()) {
    out.rmse_nc = std::sqrt(acc_nc / static_cast<double>(out.t.size()));
    out.rmse_corrected = std::sqrt(acc_c / static_cast<double>(out.t.size()));
  }
  out.window_estimates = windows;
  return out;
}

}  // namespace range_rte
