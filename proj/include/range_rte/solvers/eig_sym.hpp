#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <limits>

namespace range_rte::solvers {

struct EigenPairs {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // column i pairs with values(i)
};

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
/// Only the lower triangle of `m` is read.
inline EigenPairs eig_sym(const Eigen::MatrixXd& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m);
  EigenPairs out;
  out.values = solver.eigenvalues().reverse();
  out.vectors = solver.eigenvectors().rowwise().reverse();
  return out;
}

/// lambda_max / lambda_min, or +inf when the smallest eigenvalue is not
/// positive.
inline double condition_number(const Eigen::VectorXd& descending_values) {
  const double hi = descending_values(0);
  const double lo = descending_values(descending_values.size() - 1);
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

/// Pseudo-inverse through the eigendecomposition; eigenvalues below
/// `rel_cutoff * lambda_max` are treated as zero.
inline Eigen::MatrixXd pinv_sym(const EigenPairs& eig, double rel_cutoff) {
  const double cut = rel_cutoff * std::max(0.0, eig.values(0));
  Eigen::VectorXd inv = Eigen::VectorXd::Zero(eig.values.size());
  for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
    if (eig.values(i) > cut && eig.values(i) > 0.0) inv(i) = 1.0 / eig.values(i);
  }
  return eig.vectors * inv.asDiagonal() * eig.vectors.transpose();
}

}  // namespace range_rte::solvers
