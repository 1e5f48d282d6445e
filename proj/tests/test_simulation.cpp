#include <gtest/gtest.h>

#include <atomic>
#include <cmath>
#include <vector>

#include "range_rte/simulation.hpp"

using namespace range_rte;

TEST(GroundTruth, NormEqualsD0AndDirectionsAreUniform) {
  Rng rng = make_rng(1, 0, 0);
  const int n = 20000;
  Vec3 mean = Vec3::Zero();
  double heading_mean = 0.0, heading_sq = 0.0;
  for (int i = 0; i < n; ++i) {
    const auto tf = sample_ground_truth(7.5, rng);
    EXPECT_NEAR(tf.t.norm(), 7.5, 1e-12);
    mean += tf.t / 7.5;
    heading_mean += tf.theta;
    heading_sq += tf.theta * tf.theta;
  }
  mean /= n;
  // Uniform direction: each component has mean 0 and variance 1/3.
  EXPECT_LT(mean.cwiseAbs().maxCoeff(), 4.0 * std::sqrt(1.0 / 3.0 / n));
  // Uniform heading on [-pi, pi): mean 0, variance pi^2 / 3.
  const double var = std::numbers::pi * std::numbers::pi / 3.0;
  EXPECT_LT(std::abs(heading_mean / n), 4.0 * std::sqrt(var / n));
  EXPECT_NEAR(heading_sq / n, var, 0.05 * var);
}

TEST(GroundTruth, RejectsNonPositiveD0) {
  Rng rng = make_rng(1, 0, 0);
  EXPECT_THROW(sample_ground_truth(0.0, rng), Error);
}

TEST(Trajectory, StaysInBallAndStartsAtOrigin) {
  Rng rng = make_rng(2, 0, 0);
  for (double D : {0.5, 1.0, 5.0}) {
    const auto traj = generate_trajectory(D, 200, rng);
    ASSERT_EQ(traj.size(), 200u);
    EXPECT_EQ(traj[0].p, Vec3::Zero());
    for (std::size_t i = 0; i < traj.size(); ++i) {
      EXPECT_LE(traj[i].p.norm(), D * (1.0 + 1e-12));
      EXPECT_TRUE(traj[i].is_valid());
      if (i > 0) {
        EXPECT_GT(traj[i].t, traj[i - 1].t);
      }
    }
  }
  for (const auto& p : generate_trajectory(0.0, 10, rng)) EXPECT_EQ(p.p, Vec3::Zero());
}

TEST(Trajectory, DeterministicForSameStream) {
  Rng a = make_rng(5, 1, 3), b = make_rng(5, 1, 3), c = make_rng(5, 1, 4);
  const auto ta = generate_trajectory(1.0, 30, a);
  const auto tb = generate_trajectory(1.0, 30, b);
  const auto tc = generate_trajectory(1.0, 30, c);
  bool differs = false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    EXPECT_EQ(ta[i].p, tb[i].p);
    differs = differs || ta[i].p != tc[i].p;
  }
  EXPECT_TRUE(differs);
}

TEST(Measurements, NoiselessRangesAreExact) {
  ScenarioConfig cfg;
  cfg.sigma_r = 0.0;
  cfg.sigma_o = 0.0;
  const auto td = synthesize_trial(cfg, 0);
  for (const auto& s : td.noisy.samples) {
    EXPECT_NEAR(s.d, true_range(td.truth, s.pa, s.pb), 1e-12);
  }
  ASSERT_TRUE(td.noisy.d0.has_value());
  EXPECT_NEAR(*td.noisy.d0, cfg.d0, 1e-12);
  EXPECT_EQ(td.noisy.sigma_r, kMinSigmaR);
}

TEST(Measurements, RangeNoiseHasConfiguredSpread) {
  ScenarioConfig cfg;
  cfg.sigma_r = 0.2;
  cfg.sigma_o = 0.0;
  cfg.n_poses = 20000;
  const auto td = synthesize_trial(cfg, 0);
  double acc = 0.0, acc2 = 0.0;
  for (std::size_t i = 0; i < td.noisy.size(); ++i) {
    const double e = td.noisy.samples[i].d - td.exact.samples[i].d;
    acc += e;
    acc2 += e * e;
  }
  const double n = static_cast<double>(td.noisy.size());
  const double sd = std::sqrt(acc2 / n - (acc / n) * (acc / n));
  EXPECT_NEAR(sd, 0.2, 0.03 * 0.2);
  // The noisy initial distance shares the first range's noise draw.
  const double first = td.noisy.samples[0].d - td.exact.samples[0].d;
  EXPECT_NEAR(*td.noisy.d0, cfg.d0 + first, 1e-12);
}

TEST(Measurements, LeverArmMovesAntennaByAtMostItsLength) {
  ScenarioConfig cfg;
  cfg.sigma_r = 0.0;
  cfg.sigma_o = 0.0;
  const auto plain = synthesize_trial(cfg, 2);
  cfg.arm_a = LeverArm{Vec3(0.3, 0.0, 0.1)};
  cfg.arm_b = LeverArm{Vec3(0.0, -0.2, 0.0)};
  const auto armed = synthesize_trial(cfg, 2);
  for (std::size_t i = 0; i < plain.exact.size(); ++i) {
    EXPECT_NEAR((armed.exact.samples[i].pa - plain.exact.samples[i].pa).norm(),
                cfg.arm_a.r.norm(), 1e-12);
    EXPECT_LE(std::abs(armed.exact.samples[i].d - plain.exact.samples[i].d),
              cfg.arm_a.r.norm() + cfg.arm_b.r.norm() + 1e-12);
  }
}

TEST(SingularScenario, ConstructionsHaveTheirDefiningProperty) {
  ScenarioConfig cfg;
  cfg.sigma_r = 0.1;
  for (std::uint64_t s = 0; s < 10; ++s) {
    for (auto kind : {SingularKind::kParallel, SingularKind::kPlanarLinear,
                      SingularKind::kStaticTarget, SingularKind::kStaticHost}) {
      Rng rng = make_rng(3, 0, s);
      const auto sc = singular_scenario(kind, cfg, rng);
      const Mat3 c = heading_rotation(sc.truth.theta);
      ASSERT_EQ(sc.noiseless.size(), cfg.n_poses);
      for (const auto& smp : sc.noiseless.samples) {
        EXPECT_NEAR(smp.d, true_range(sc.truth, smp.pa, smp.pb), 1e-12);
        switch (kind) {
          case SingularKind::kParallel:
            EXPECT_LT((c * smp.pb - smp.pa).norm(), 1e-12);
            break;
          case SingularKind::kPlanarLinear: {
            const Vec3 normal = sc.truth.t.cross(smp.pa.norm() > 1e-9 ? smp.pa : Vec3(c * smp.pb));
            if (normal.norm() > 1e-9) {
              EXPECT_LT(std::abs(normal.normalized().dot(c * smp.pb)), 1e-9);
            }
            break;
          }
          case SingularKind::kStaticTarget:
            EXPECT_EQ(smp.pb, Vec3::Zero());
            break;
          case SingularKind::kStaticHost:
            EXPECT_EQ(smp.pa, Vec3::Zero());
            break;
        }
      }
      const auto eig = solvers::eig_sym(fim(sc.truth, sc.noiseless).F);
      EXPECT_LT(eig.values(3), 1e-9 * eig.values(0)) << to_string(kind);
    }
  }
}

TEST(ParseNames, SingularKindAndPivot) {
  for (auto k : {SingularKind::kParallel, SingularKind::kPlanarLinear, SingularKind::kStaticTarget,
                 SingularKind::kStaticHost}) {
    EXPECT_EQ(parse_singular_kind(to_string(k)), k);
  }
  EXPECT_THROW(parse_singular_kind("circle"), Error);
  EXPECT_EQ(parse_drift_pivot("origin"), DriftPivot::kOrigin);
  EXPECT_THROW(parse_drift_pivot("middle"), Error);
}

TEST(ParallelFor, VisitsEveryIndexOnce) {
  for (unsigned threads : {1u, 3u, 8u}) {
    std::vector<std::atomic<int>> hits(1000);
    parallel_for(hits.size(), [&](std::size_t i) { hits[i].fetch_add(1); }, threads);
    for (const auto& h : hits) EXPECT_EQ(h.load(), 1);
  }
}

TEST(MonteCarlo, IdenticalAcrossThreadCounts) {
  ScenarioConfig cfg;
  cfg.trials = 12;
  cfg.n_poses = 15;
  const auto one = monte_carlo_run(cfg, Estimator::kQcqp, {}, 1);
  const auto four = monte_carlo_run(cfg, Estimator::kQcqp, {}, 4);
  ASSERT_EQ(one.trials.size(), four.trials.size());
  for (std::size_t i = 0; i < one.trials.size(); ++i) {
    EXPECT_EQ(one.trials[i].status, four.trials[i].status);
    EXPECT_EQ(one.trials[i].estimate.t, four.trials[i].estimate.t);
    EXPECT_EQ(one.trials[i].estimate.theta, four.trials[i].estimate.theta);
  }
  EXPECT_EQ(one.rmse_t, four.rmse_t);
}

TEST(MonteCarlo, HeadingErrorNotBelowBound) {
  ScenarioConfig cfg;
  cfg.trials = 100;
  cfg.use_d0 = false;
  cfg.n_poses = 40;
  const auto st = monte_carlo_run(cfg, Estimator::kQcqp);
  EXPECT_EQ(st.failures, 0u);
  EXPECT_GE(st.mse_theta, 0.8 * st.crlb_theta_mean);
  EXPECT_GE(st.mse_t, 0.8 * st.crlb_t_mean);
}

TEST(MonteCarlo, AggregateSkipsFailures) {
  std::vector<TrialResult> rs(3);
  rs[0].ok = true;
  rs[0].e_t = 3.0;
  rs[0].e_theta = 0.0;
  rs[2].ok = true;
  rs[2].e_t = 4.0;
  rs[2].e_theta = 0.0;
  const auto st = aggregate(rs);
  EXPECT_EQ(st.failures, 1u);
  EXPECT_NEAR(st.mse_t, 12.5, 1e-12);
  EXPECT_TRUE(std::isinf(st.crlb_t_mean));
}

TEST(Drift, ZeroDriftIsTrackedClosely) {
  ScenarioConfig cfg;
  cfg.sigma_r = 0.05;
  cfg.drift = DriftConfig{};
  cfg.drift->sigma_t = 0.0;
  cfg.drift->sigma_theta = 0.0;
  cfg.drift->duration = 120.0;
  const auto res = drift_scenario(cfg, Estimator::kQcqp);
  ASSERT_FALSE(res.t.empty());
  EXPECT_LT(res.rmse_corrected, 0.5);
  // Only position noise separates the baseline from the truth.
  EXPECT_LT(res.rmse_nc, 10.0 * cfg.sigma_o);
}

TEST(Drift, CorrectionBeatsUncorrectedOdometry) {
  ScenarioConfig cfg;
  cfg.sigma_r = 0.05;
  cfg.drift = DriftConfig{};
  cfg.drift->duration = 300.0;
  const auto res = drift_scenario(cfg, Estimator::kQcqp);
  EXPECT_LT(res.rmse_corrected, res.rmse_nc);
  EXPECT_EQ(res.truth_at_window.size(), res.windows);
}

TEST(Drift, MissingBlockIsConfigError) {
  ScenarioConfig cfg;
  EXPECT_THROW(drift_scenario(cfg, Estimator::kQcqp), Error);
}
