#pragma once

#include <Eigen/Core>

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mts/dataset.hpp"
#include "mts/qp.hpp"
#include "mts/stat_core.hpp"
#include "mts/sym_matrix.hpp"

namespace mts {

struct MeanMtsOptions {
  // Caps each auxiliary data point's weight at the weight of an original data
  // point. On by default: it is cheap and stabilizes the program.
  bool weight_constraint = true;
  std::optional<WhitenMode> whiten;
  // Covariance used to build the whitener; defaults to the average sample
  // covariance over the primary and all auxiliary datasets.
  std::optional<SymMatrix> covariance_for_whitening;
};

struct MeanShrinkage {
  Eigen::VectorXd estimate;
  Eigen::VectorXd lambda;
  SymMatrix a_hat;
  Eigen::VectorXd b_hat;
  double objective;
};

// A_hat[k][l] = sum_i (mu^k_i - mu_i)(mu^l_i - mu_i): the Gram matrix of the
// target-minus-estimate difference vectors.
inline SymMatrix estimate_A_mean(const Eigen::VectorXd& mu_hat,
                                 std::span<const Eigen::VectorXd> targets) {
  if (targets.empty()) throw std::invalid_argument("estimate_A_mean: no targets");
  const Eigen::Index p = mu_hat.size();
  const auto k = static_cast<Eigen::Index>(targets.size());
  Eigen::MatrixXd diffs(p, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    if (targets[static_cast<std::size_t>(j)].size() != p)
      throw std::invalid_argument("estimate_A_mean: target " + std::to_string(j) +
                                  " has length " +
                                  std::to_string(targets[static_cast<std::size_t>(j)].size()) +
                                  ", expected " + std::to_string(p));
    diffs.col(j) = targets[static_cast<std::size_t>(j)] - mu_hat;
  }
  return SymMatrix(diffs.transpose() * diffs);
}

// b_hat = sum_i var(mu_i) with var(mu_i) = (1/(n(n-1))) sum_t (x_it - mu_i)^2.
// All K components are equal: the targets come from independent data, so their
// covariance with the sample mean vanishes.
inline Eigen::VectorXd estimate_b_mean(const Dataset& x, int num_targets) {
  if (num_targets < 1) throw std::invalid_argument("estimate_b_mean: need at least one target");
  const auto n = static_cast<double>(x.samples());
  const Eigen::VectorXd mu = sample_mean(x);
  const double total = (x.data.colwise() - mu).squaredNorm();
  return Eigen::VectorXd::Constant(num_targets, total / (n * (n - 1.0)));
}

// Rows encoding lambda_k / n_k + (1/n) sum_l lambda_l <= 1/n, i.e. no
// auxiliary data point may outweigh an original one.
inline std::vector<LinearConstraint> weight_constraint_rows(Eigen::Index n,
                                                            std::span<const Eigen::Index> n_k) {
  if (n < 1) throw std::invalid_argument("weight_constraint_rows: n must be >= 1");
  const auto k = static_cast<Eigen::Index>(n_k.size());
  std::vector<LinearConstraint> rows;
  rows.reserve(n_k.size());
  for (Eigen::Index j = 0; j < k; ++j) {
    if (n_k[static_cast<std::size_t>(j)] < 1)
      throw std::invalid_argument("weight_constraint_rows: n_k must be >= 1");
    Eigen::VectorXd row = Eigen::VectorXd::Constant(k, 1.0 / static_cast<double>(n));
    row(j) += 1.0 / static_cast<double>(n_k[static_cast<std::size_t>(j)]);
    rows.push_back({std::move(row), 1.0 / static_cast<double>(n)});
  }
  return rows;
}

// Multi-target shrinkage of the sample mean toward the sample means of the
// auxiliary datasets. Whitening, when enabled, affects only the estimation of
// the intensities; the final convex combination is taken in original
// coordinates.
inline MeanShrinkage mts_mean(const Dataset& x, std::span<const Dataset> aux,
                              const MeanMtsOptions& opts = {}) {
  if (aux.empty()) throw std::invalid_argument("mts_mean: need at least one auxiliary dataset");
  const Eigen::Index p = x.dims();
  for (const Dataset& d : aux)
    if (d.dims() != p)
      throw std::invalid_argument("mts_mean: auxiliary dataset" +
                                  (d.label.empty() ? std::string{} : " '" + d.label + "'") +
                                  " has " + std::to_string(d.dims()) + " dimensions, expected " +
                                  std::to_string(p));

  const Eigen::VectorXd mu = sample_mean(x);
  std::vector<Eigen::VectorXd> target_means;
  target_means.reserve(aux.size());
  for (const Dataset& d : aux) target_means.push_back(sample_mean(d));

  SymMatrix a_hat = SymMatrix::identity(0);
  Eigen::VectorXd b_hat;
  if (opts.whiten) {
    SymMatrix source = opts.covariance_for_whitening
                           ? *opts.covariance_for_whitening
                           : [&] {
                               std::vector<Dataset> all;
                               all.reserve(aux.size() + 1);
                               all.push_back(x);
                               all.insert(all.end(), aux.begin(), aux.end());
                               return average_covariance(all);
                             }();
    if (source.size() != p)
      throw std::invalid_argument("mts_mean: whitening covariance is " +
                                  std::to_string(source.size()) + "x" +
                                  std::to_string(source.size()) + ", expected " +
                                  std::to_string(p));
    const Eigen::MatrixXd w = whitening_transform(source, *opts.whiten);
    std::vector<Eigen::VectorXd> wt;
    wt.reserve(target_means.size());
    for (const auto& t : target_means) wt.push_back(w * t);
    a_hat = estimate_A_mean(w * mu, wt);
    b_hat = estimate_b_mean(Dataset(w * x.data, x.label), static_cast<int>(aux.size()));
  } else {
    a_hat = estimate_A_mean(mu, target_means);
    b_hat = estimate_b_mean(x, static_cast<int>(aux.size()));
  }

  std::vector<LinearConstraint> extras;
  if (opts.weight_constraint) {
    std::vector<Eigen::Index> sizes;
    sizes.reserve(aux.size());
    for (const Dataset& d : aux) sizes.push_back(d.samples());
    extras = weight_constraint_rows(x.samples(), sizes);
  }

  const QpSolution sol = solve(QpProblem(a_hat, b_hat, std::move(extras)));

  Eigen::VectorXd estimate = (1.0 - sol.lambda.sum()) * mu;
  for (Eigen::Index k = 0; k < sol.lambda.size(); ++k)
    estimate += sol.lambda(k) * target_means[static_cast<std::size_t>(k)];

  return {std::move(estimate), sol.lambda, std::move(a_hat), std::move(b_hat), sol.objective};
}

}  // namespace mts
