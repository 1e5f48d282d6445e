#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "range_rte/estimators.hpp"
#include "range_rte/simulation.hpp"

using namespace range_rte;

namespace {

Vec3 random_vec(std::mt19937_64& rng, double scale) {
  std::uniform_real_distribution<double> u(-scale, scale);
  return Vec3(u(rng), u(rng), u(rng));
}

ScenarioConfig noiseless_config(bool use_d0) {
  ScenarioConfig cfg;
  cfg.sigma_r = 0.0;
  cfg.sigma_o = 0.0;
  cfg.D = 2.0;
  cfg.n_poses = 30;
  cfg.use_d0 = use_d0;
  cfg.seed = 17;
  return cfg;
}

double heading_error(const Transform4DoF& a, const Transform4DoF& b) {
  return std::abs(wrap_angle(a.theta - b.theta));
}

}  // namespace

TEST(LiftedState, LiftIsConsistent) {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 100; ++i) {
    const Transform4DoF tf(random_vec(rng, 10.0), 0.07 * i - 3.0);
    const auto x = LiftedState::lift(tf);
    EXPECT_LT(x.consistency_residual(), 1e-12);
    const Transform4DoF back = extract_transform(x);
    EXPECT_LT((back.t - tf.t).norm(), 1e-12);
    EXPECT_LT(heading_error(back, tf), 1e-12);
  }
}

TEST(DataRow, ReproducesSquaredRangeResidual) {
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    const Transform4DoF tf(random_vec(rng, 5.0), 0.05 * i);
    SyncedSample s;
    s.pa = random_vec(rng, 3.0);
    s.pb = random_vec(rng, 3.0);
    const double d2 = (apply_transform(tf, s.pb) - s.pa).squaredNorm();
    const double s_i = d2 + 0.3;
    const double v = build_data_row(s, s_i) * LiftedState::lift(tf).x;
    EXPECT_NEAR(v, d2 - s_i, 1e-10 * std::max(1.0, d2));
  }
}

TEST(LiftingConstraints, HoldAtLiftedTruth) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    const Transform4DoF tf(random_vec(rng, 8.0), 0.1 * i - 2.0);
    const Vec9 x = LiftedState::lift(tf).x;
    const auto cons = lifting_constraints(tf.t.norm());
    ASSERT_EQ(cons.size(), 5u);
    for (const auto& c : cons) {
      EXPECT_NEAR(x.dot(c.P * x), c.r, 1e-10 * std::max(1.0, c.r));
      EXPECT_LT((c.P - c.P.transpose()).norm(), 1e-15);
    }
  }
  EXPECT_EQ(lifting_constraints(std::nullopt).size(), 4u);
}

TEST(Qcqp, CostMatchesDirectEvaluationAndVanishesAtTruth) {
  const auto td = synthesize_trial(noiseless_config(true), 0);
  const auto stats = debias_squared(td.exact);
  const auto prob = assemble_qcqp(td.exact, stats);
  const Vec9 x = LiftedState::lift(td.truth).x;
  EXPECT_LT(sdwls_cost(td.truth, td.exact, stats), 1e-6);
  // The quadratic form carries roundoff proportional to ||P0|| ||x||^2.
  EXPECT_LT(prob.cost(td.truth), 1e-13 * prob.P0.norm() * x.squaredNorm());

  ScenarioConfig noisy_cfg = noiseless_config(true);
  noisy_cfg.sigma_r = 0.1;
  const auto tn = synthesize_trial(noisy_cfg, 1);
  const auto st2 = debias_squared(tn.noisy);
  const auto p2 = assemble_qcqp(tn.noisy, st2);
  const Transform4DoF probe(tn.truth.t + Vec3(0.2, -0.1, 0.3), tn.truth.theta + 0.2);
  const double direct = sdwls_cost(probe, tn.noisy, st2);
  EXPECT_NEAR(p2.cost(probe), direct, 1e-8 * direct);
}

TEST(Estimators, NoiselessRecoveryIsExact) {
  for (bool use_d0 : {true, false}) {
    const auto cfg = noiseless_config(use_d0);
    for (std::size_t trial = 0; trial < 5; ++trial) {
      const auto td = synthesize_trial(cfg, trial);
      for (auto which : {Estimator::kQcqp, Estimator::kSdp}) {
        const auto rep = run_estimator(which, td.exact);
        EXPECT_LT((rep.theta_hat.t - td.truth.t).norm(), 1e-6) << to_string(which);
        EXPECT_LT(heading_error(rep.theta_hat, td.truth), 1e-6) << to_string(which);
      }
      EstimatorOptions eo;
      eo.warm_start = Transform4DoF(td.truth.t + Vec3(0.3, 0.3, -0.2), td.truth.theta + 0.3);
      const auto nls = run_estimator(Estimator::kNls, td.exact, eo);
      EXPECT_LT((nls.theta_hat.t - td.truth.t).norm(), 1e-6);
      EXPECT_LT(heading_error(nls.theta_hat, td.truth), 1e-6);
    }
  }
}

TEST(Sdp, NoiselessRelaxationIsRankOne) {
  const auto td = synthesize_trial(noiseless_config(true), 3);
  const auto rep = sdp_estimate(td.exact);
  EXPECT_EQ(rep.solver.rank, 1);
  EXPECT_LT(rep.solver.eig_ratio, 1e-6);
  EXPECT_TRUE(rep.solver.converged);
}

TEST(Qcqp, CostNoWorseThanSdpOrNlsPoint) {
  ScenarioConfig cfg = noiseless_config(false);
  cfg.sigma_r = 0.1;
  cfg.sigma_o = 0.001;
  cfg.n_poses = 20;
  cfg.D = 1.0;
  for (std::size_t trial = 0; trial < 8; ++trial) {
    const auto td = synthesize_trial(cfg, trial);
    const auto stats = debias_squared(td.noisy);
    const auto prob = assemble_qcqp(td.noisy, stats);
    const auto q = qcqp_estimate(td.noisy);
    const double cq = prob.cost(q.theta_hat);
    const double tol = 1e-9 * std::max(1.0, cq);
    EXPECT_LE(cq, prob.cost(sdp_estimate(td.noisy).theta_hat) + tol);
    EstimatorOptions eo;
    eo.warm_start = td.truth;
    EXPECT_LE(cq, prob.cost(nls_estimate(td.noisy, td.truth, eo).theta_hat) + tol);
  }
}

TEST(Estimators, ReportCarriesUncertainty) {
  ScenarioConfig cfg = noiseless_config(true);
  cfg.sigma_r = 0.05;
  const auto td = synthesize_trial(cfg, 0);
  const auto rep = qcqp_estimate(td.noisy);
  ASSERT_TRUE(rep.std_errors.has_value());
  for (int i = 0; i < 4; ++i) EXPECT_GT((*rep.std_errors)(i), 0.0);
  EXPECT_TRUE(std::isfinite(rep.kappa));
  EXPECT_FALSE(rep.flags.configuration_singular);
}

TEST(ParseEstimator, NamesRoundTripAndUnknownThrows) {
  for (auto e : {Estimator::kQcqp, Estimator::kSdp, Estimator::kNls}) {
    EXPECT_EQ(parse_estimator(to_string(e)), e);
  }
  try {
    parse_estimator("gauss");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfig);
  }
}

TEST(RankOneRecovery, ScalesToUnitHomogenizer) {
  const Transform4DoF tf(Vec3(1, -2, 3), 0.4);
  const Vec9 x = LiftedState::lift(tf).x;
  const Mat9 X = 4.0 * x * x.transpose();
  const auto r = recover_rank_one(X);
  EXPECT_LT((r.x - x).norm(), 1e-12);
  EXPECT_THROW(recover_rank_one(Mat9::Zero()), Error);
}

TEST(ExtractTransform, VanishingHeadingThrows) {
  LiftedState s;
  s.x(8) = 1.0;
  try {
    extract_transform(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHeadingUndefined);
  }
}

TEST(SlidingWindow, RejectsBadConfiguration) {
  SyncedDataset ds;
  SlidingWindowOptions so;
  so.window = 5;
  EXPECT_THROW(sliding_window_estimate(ds, so), Error);
  so.window = 20;
  so.stride = 0;
  EXPECT_THROW(sliding_window_estimate(ds, so), Error);
}

TEST(SlidingWindow, StaticTransformTrackedAndStaticStretchSkipped) {
  std::mt19937_64 rng(9);
  const Transform4DoF tf(Vec3(3, -1, 0.5), 1.1);
  SyncedDataset ds;
  ds.sigma_r = 1e-6;
  for (int i = 0; i < 100; ++i) {
    SyncedSample s;
    s.t = i;
    if (i < 60) {
      s.pa = random_vec(rng, 2.0);
      s.pb = random_vec(rng, 2.0);
    }
    s.d = true_range(tf, s.pa, s.pb);
    ds.samples.push_back(s);
  }
  SlidingWindowOptions so;
  so.window = 20;
  so.stride = 20;
  const auto wins = sliding_window_estimate(ds, so);
  ASSERT_EQ(wins.size(), 5u);
  for (std::size_t i = 0; i < 3; ++i) {
    ASSERT_TRUE(wins[i].has_estimate);
    EXPECT_LT((wins[i].estimate.t - tf.t).norm(), 1e-5);
  }
  EXPECT_TRUE(wins[3].skipped);
  EXPECT_TRUE(wins[4].skipped);
  EXPECT_TRUE(wins[4].has_estimate);
  EXPECT_EQ(wins[4].estimate.t, wins[2].estimate.t);
}
