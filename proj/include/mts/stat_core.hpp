#pragma once

#include <Eigen/Core>

#include <cmath>
#include <span>
#include <stdexcept>
#include <string>

#include "mts/dataset.hpp"
#include "mts/sym_matrix.hpp"

namespace mts {

inline Eigen::VectorXd sample_mean(const Dataset& x) { return x.data.rowwise().mean(); }

// Sample covariance with divisor n (not n-1), centered at the sample mean.
inline SymMatrix sample_covariance(const Dataset& x) {
  const Eigen::VectorXd mu = sample_mean(x);
  const Eigen::MatrixXd centered = x.data.colwise() - mu;
  return SymMatrix(centered * centered.transpose() / static_cast<double>(x.samples()));
}

// Unweighted average of the per-dataset sample covariances. Used as the
// default covariance source when whitening mean-shrinkage intensities.
inline SymMatrix average_covariance(std::span<const Dataset> sets) {
  if (sets.empty()) throw std::invalid_argument("average_covariance: no datasets given");
  const Eigen::Index p = sets.front().dims();
  Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(p, p);
  for (const Dataset& d : sets) {
    if (d.dims() != p)
      throw std::invalid_argument("average_covariance: dimension mismatch (" +
                                  std::to_string(d.dims()) + " vs " + std::to_string(p) + ")");
    acc += sample_covariance(d).mat();
  }
  return SymMatrix(acc / static_cast<double>(sets.size()));
}

// Whitening variants. `full` maps the covariance to the identity; `partial(k)`
// rescales only the top k principal components down to the variance of the
// (k+1)-th, leaving the rest untouched.
struct WhitenMode {
  bool full_mode;
  int top_k;  // meaningful for partial only

  static WhitenMode full() { return {true, 0}; }
  static WhitenMode partial(int k) {
    if (k < 1) throw std::invalid_argument("WhitenMode::partial: k must be >= 1, got " + std::to_string(k));
    return {false, k};
  }
};

inline constexpr double kAutoEigenvalueFloor = -1.0;

// Full: W = R diag(g)^(-1/2) R' so that W S W' = I.
// Partial(k): W = R diag(d) R' with d_i = sqrt(g_{k+1}/g_i) on the top k
// eigenvalues (descending) and 1 elsewhere.
// `floor` is an absolute eigenvalue threshold for the full mode; the default
// resolves to 1e-12 times the largest eigenvalue.
inline Eigen::MatrixXd whitening_transform(const SymMatrix& s, WhitenMode mode,
                                           double floor = kAutoEigenvalueFloor) {
  const EigDecomp eig = eig_sym(s);
  const Eigen::Index p = s.size();
  Eigen::VectorXd d(p);
  if (mode.full_mode) {
    const double max_ev = eig.eigenvalues.size() > 0 ? eig.eigenvalues(0) : 0.0;
    const double threshold = floor == kAutoEigenvalueFloor ? 1e-12 * max_ev : floor;
    for (Eigen::Index i = 0; i < p; ++i) {
      if (eig.eigenvalues(i) < threshold)
        throw std::runtime_error("whitening_transform: eigenvalue " + std::to_string(i) +
                                 " (" + std::to_string(eig.eigenvalues(i)) +
                                 ") is below the floor; regularize the covariance first");
      d(i) = 1.0 / std::sqrt(eig.eigenvalues(i));
    }
  } else {
    const int k = mode.top_k;
    if (k >= p)
      throw std::invalid_argument("whitening_transform: partial(k) requires k < p, got k=" +
                                  std::to_string(k) + " with p=" + std::to_string(p));
    const double ref = eig.eigenvalues(k);  // (k+1)-th in descending order
    d.setOnes();
    for (Eigen::Index i = 0; i < k; ++i)
      if (eig.eigenvalues(i) > 0.0 && ref >= 0.0) d(i) = std::sqrt(ref / eig.eigenvalues(i));
  }
  return eig.eigenvectors * d.asDiagonal() * eig.eigenvectors.transpose();
}

}  // namespace mts
