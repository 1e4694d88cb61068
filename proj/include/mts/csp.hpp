#pragma once

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <string>

#include "mts/dataset.hpp"
#include "mts/lda.hpp"
#include "mts/sym_matrix.hpp"

namespace mts {

// Spatial filters maximizing the variance ratio between two classes. Columns
// hold m_per_class class-A filters (largest generalized eigenvalues first)
// followed by m_per_class class-B filters (smallest first), each normalized so
// f'(S_a + S_b)f = 1.
struct CspFilters {
  Eigen::MatrixXd filters;
  Eigen::VectorXd gen_eigenvalues;
  int per_class;
};

// Solves S_a f = gamma (S_a + S_b) f through symmetric whitening of the sum.
inline CspFilters csp_filters(const SymMatrix& s_a, const SymMatrix& s_b, int m_per_class,
                              double ridge = kAutoRidge) {
  const Eigen::Index p = s_a.size();
  if (s_b.size() != p)
    throw std::invalid_argument("csp_filters: class covariances are " + std::to_string(p) +
                                " and " + std::to_string(s_b.size()));
  if (m_per_class < 1 || 2 * m_per_class > p)
    throw std::invalid_argument("csp_filters: m_per_class must satisfy 1 <= m <= p/2, got " +
                                std::to_string(m_per_class) + " with p=" + std::to_string(p));
  Eigen::MatrixXd sum = s_a.mat() + s_b.mat();
  if (ridge == kAutoRidge) ridge = 1e-8 * sum.trace() / static_cast<double>(p);
  sum.diagonal().array() += ridge;

  const EigDecomp sum_eig = eig_sym(SymMatrix(sum));
  if (sum_eig.eigenvalues.minCoeff() <= 0.0)
    throw std::runtime_error("csp_filters: S_a + S_b is not invertible after ridge");
  const Eigen::MatrixXd inv_sqrt = sum_eig.eigenvectors *
                                   sum_eig.eigenvalues.cwiseSqrt().cwiseInverse().asDiagonal() *
                                   sum_eig.eigenvectors.transpose();

  const EigDecomp inner = eig_sym(SymMatrix(inv_sqrt * s_a.mat() * inv_sqrt));

  const int m = m_per_class;
  CspFilters out;
  out.per_class = m;
  out.filters.resize(p, 2 * m);
  out.gen_eigenvalues.resize(2 * m);
  for (int i = 0; i < m; ++i) {  // class A: largest ratios
    out.filters.col(i) = inv_sqrt * inner.eigenvectors.col(i);
    out.gen_eigenvalues(i) = inner.eigenvalues(i);
  }
  for (int i = 0; i < m; ++i) {  // class B: smallest ratios
    out.filters.col(m + i) = inv_sqrt * inner.eigenvectors.col(p - 1 - i);
    out.gen_eigenvalues(m + i) = inner.eigenvalues(p - 1 - i);
  }
  const Eigen::MatrixXd raw_sum = s_a.mat() + s_b.mat();
  for (int i = 0; i < 2 * m; ++i) {
    const double q = out.filters.col(i).dot(raw_sum * out.filters.col(i));
    if (!(q > 0.0))
      throw std::runtime_error("csp_filters: filter " + std::to_string(i) +
                               " has non-positive total variance");
    out.filters.col(i) /= std::sqrt(q);
  }
  return out;
}

// Log of the unbiased sample variance of each filtered signal.
inline Eigen::VectorXd csp_features(const Dataset& trial, const CspFilters& filters) {
  if (trial.dims() != filters.filters.rows())
    throw std::invalid_argument("csp_features: trial has " + std::to_string(trial.dims()) +
                                " dimensions, filters expect " +
                                std::to_string(filters.filters.rows()));
  const Eigen::Index m = filters.filters.cols();
  const auto n = static_cast<double>(trial.samples());
  Eigen::VectorXd features(m);
  for (Eigen::Index i = 0; i < m; ++i) {
    const Eigen::VectorXd y = trial.data.transpose() * filters.filters.col(i);
    const double var = (y.array() - y.mean()).square().sum() / (n - 1.0);
    if (var <= 0.0)
      throw std::runtime_error("csp_features: filtered signal " + std::to_string(i) +
                               " has zero variance");
    features(i) = std::log(var);
  }
  return features;
}

}  // namespace mts
