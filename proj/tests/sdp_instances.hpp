#pragma once

// Random standard-form SDPs whose unique optimum is a known rank-one matrix:
// X* = x x', a dual slack S* with S* x = 0 and rank n - 1, and
// C = S* + sum_i y_i A_i.

#include <Eigen/Dense>

#include <random>

#include "range_rte/solvers/sdp.hpp"

struct RankOneSdp {
  range_rte::solvers::SdpStandardForm problem;
  Eigen::VectorXd x;
  double optimum = 0.0;
};

inline RankOneSdp make_rank_one_sdp(std::mt19937_64& rng, int n = 9, int m = 5) {
  std::normal_distribution<double> g(0.0, 1.0);
  auto gauss = [&](int r, int c) {
    Eigen::MatrixXd a(r, c);
    for (int i = 0; i < r; ++i)
      for (int j = 0; j < c; ++j) a(i, j) = g(rng);
    return a;
  };
  RankOneSdp out;
  out.x = gauss(n, 1);
  Eigen::VectorXd y = gauss(m, 1);

  Eigen::HouseholderQR<Eigen::MatrixXd> qr(out.x);
  const Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(n, n);
  const Eigen::MatrixXd perp = q.rightCols(n - 1);
  Eigen::VectorXd lam(n - 1);
  std::uniform_real_distribution<double> u(0.5, 2.0);
  for (int i = 0; i < n - 1; ++i) lam(i) = u(rng);
  const Eigen::MatrixXd s = perp * lam.asDiagonal() * perp.transpose();

  auto& p = out.problem;
  p.b.resize(m);
  p.C = s;
  for (int i = 0; i < m; ++i) {
    const Eigen::MatrixXd r = gauss(n, n);
    const Eigen::MatrixXd a = 0.5 * (r + r.transpose());
    p.A.push_back(a);
    p.b(i) = out.x.dot(a * out.x);
    p.C += y(i) * a;
  }
  out.optimum = p.b.dot(y);
  return out;
}
