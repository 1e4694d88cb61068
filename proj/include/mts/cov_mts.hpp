#pragma once

#include <Eigen/Core>

#include <cmath>
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

// One covariance shrinkage target: a structured estimator derived from the
// sample covariance, or the sample covariance of an auxiliary dataset.
struct TargetSpec {
  enum class Kind { kIdentityScaled, kDiagonal, kConstCorr, kAuxDataset };

  Kind kind;
  std::optional<Dataset> aux;

  static TargetSpec identity_scaled() { return {Kind::kIdentityScaled, std::nullopt}; }
  static TargetSpec diagonal() { return {Kind::kDiagonal, std::nullopt}; }
  static TargetSpec const_corr() { return {Kind::kConstCorr, std::nullopt}; }
  static TargetSpec aux_dataset(Dataset d) { return {Kind::kAuxDataset, std::move(d)}; }

  std::string name() const {
    switch (kind) {
      case Kind::kIdentityScaled: return "identity";
      case Kind::kDiagonal: return "diag";
      case Kind::kConstCorr: return "const-corr";
      case Kind::kAuxDataset: return aux && !aux->label.empty() ? "aux:" + aux->label : "aux";
    }
    return "?";
  }
};

struct CovMtsOptions {
  std::optional<WhitenMode> whiten;
  // Skip centering in the variance-of-covariance product moments; restores the
  // zero-mean setting of the simulation studies.
  bool assume_zero_mean = false;
};

struct CovShrinkage {
  SymMatrix estimate;
  Eigen::VectorXd lambda;
  SymMatrix a_hat;
  Eigen::VectorXd b_hat;
  double objective;
  std::vector<SymMatrix> targets;  // built in original coordinates
};

inline SymMatrix build_target(const TargetSpec& spec, const SymMatrix& s) {
  const Eigen::Index p = s.size();
  switch (spec.kind) {
    case TargetSpec::Kind::kIdentityScaled:
      return SymMatrix(Eigen::MatrixXd::Identity(p, p) * (s.trace() / static_cast<double>(p)));
    case TargetSpec::Kind::kDiagonal:
      return SymMatrix(Eigen::MatrixXd(s.mat().diagonal().asDiagonal()));
    case TargetSpec::Kind::kConstCorr: {
      for (Eigen::Index i = 0; i < p; ++i)
        if (s(i, i) <= 0.0)
          throw std::runtime_error("build_target: const-corr needs positive variances, but S(" +
                                   std::to_string(i) + "," + std::to_string(i) + ") = " +
                                   std::to_string(s(i, i)));
      double r_sum = 0.0;
      for (Eigen::Index i = 0; i < p; ++i)
        for (Eigen::Index j = i + 1; j < p; ++j)
          r_sum += s(i, j) / std::sqrt(s(i, i) * s(j, j));
      const double pairs = static_cast<double>(p) * static_cast<double>(p - 1) / 2.0;
      const double r_bar = pairs > 0.0 ? r_sum / pairs : 0.0;
      Eigen::MatrixXd f(p, p);
      for (Eigen::Index i = 0; i < p; ++i) {
        f(i, i) = s(i, i);
        for (Eigen::Index j = i + 1; j < p; ++j) {
          f(i, j) = std::sqrt(s(i, i) * s(j, j)) * r_bar;
          f(j, i) = f(i, j);
        }
      }
      return SymMatrix(std::move(f));
    }
    case TargetSpec::Kind::kAuxDataset:
      if (!spec.aux) throw std::invalid_argument("build_target: aux target without dataset");
      if (spec.aux->dims() != p)
        throw std::invalid_argument("build_target: auxiliary dataset has " +
                                    std::to_string(spec.aux->dims()) + " dimensions, expected " +
                                    std::to_string(p));
      return sample_covariance(*spec.aux);
  }
  throw std::logic_error("build_target: unknown target kind");
}

// A_hat[k][l] = sum_ij (T^k_ij - S_ij)(T^l_ij - S_ij): Frobenius inner
// products of the difference matrices.
inline SymMatrix estimate_A_cov(const SymMatrix& s, std::span<const SymMatrix> targets) {
  if (targets.empty()) throw std::invalid_argument("estimate_A_cov: no targets");
  const Eigen::Index p = s.size();
  const auto k = static_cast<Eigen::Index>(targets.size());
  Eigen::MatrixXd diffs(p * p, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const SymMatrix& t = targets[static_cast<std::size_t>(j)];
    if (t.size() != p)
      throw std::invalid_argument("estimate_A_cov: target " + std::to_string(j) + " is " +
                                  std::to_string(t.size()) + "x" + std::to_string(t.size()) +
                                  ", expected " + std::to_string(p));
    diffs.col(j) = (t.mat() - s.mat()).reshaped();
  }
  return SymMatrix(diffs.transpose() * diffs);
}

// b_hat = sum_ij var(S_ij) with
//   var(S_ij) = (1/((n-1)n)) sum_s (w_ijs - mean_s w_ij.)^2,  w_ijs = x_is x_js
// over centered data (raw when assume_zero_mean). Using
// sum_s (w - mean)^2 = sum_s w^2 - n mean^2 the double sum collapses to
// elementwise squares and one Gram product. All K components are equal.
inline Eigen::VectorXd estimate_b_cov(const Dataset& x, int num_targets, bool assume_zero_mean) {
  if (num_targets < 1) throw std::invalid_argument("estimate_b_cov: need at least one target");
  const auto n = static_cast<double>(x.samples());
  Eigen::MatrixXd centered = x.data;
  if (!assume_zero_mean) centered.colwise() -= sample_mean(x).eval();
  const Eigen::MatrixXd squared = centered.cwiseProduct(centered);
  const Eigen::MatrixXd prod_mean = centered * centered.transpose() / n;
  const double total = (squared * squared.transpose()).sum() - n * prod_mean.squaredNorm();
  return Eigen::VectorXd::Constant(num_targets, total / ((n - 1.0) * n));
}

// Multi-target shrinkage of the sample covariance. Whitening, when enabled,
// maps the data through W built from S for the estimation of A_hat and b_hat
// only; the combination is taken in original coordinates.
inline CovShrinkage mts_cov(const Dataset& x, std::span<const TargetSpec> specs,
                            const CovMtsOptions& opts = {}) {
  if (specs.empty()) throw std::invalid_argument("mts_cov: need at least one target");
  const SymMatrix s = sample_covariance(x);
  const auto k = static_cast<int>(specs.size());

  std::vector<SymMatrix> targets;
  targets.reserve(specs.size());
  for (const TargetSpec& spec : specs) targets.push_back(build_target(spec, s));

  SymMatrix a_hat = SymMatrix::identity(0);
  Eigen::VectorXd b_hat;
  if (opts.whiten) {
    const Eigen::MatrixXd w = whitening_transform(s, *opts.whiten);
    const Dataset wx(w * x.data, x.label);
    const SymMatrix s_w = sample_covariance(wx);
    std::vector<SymMatrix> targets_w;
    targets_w.reserve(specs.size());
    for (const TargetSpec& spec : specs) {
      if (spec.kind == TargetSpec::Kind::kAuxDataset)
        targets_w.push_back(sample_covariance(Dataset(w * spec.aux->data, spec.aux->label)));
      else
        targets_w.push_back(build_target(spec, s_w));
    }
    a_hat = estimate_A_cov(s_w, targets_w);
    b_hat = estimate_b_cov(wx, k, opts.assume_zero_mean);
  } else {
    a_hat = estimate_A_cov(s, targets);
    b_hat = estimate_b_cov(x, k, opts.assume_zero_mean);
  }

  const QpSolution sol = solve(QpProblem(a_hat, b_hat));

  if (sol.lambda.sum() == 0.0)
    return {s, sol.lambda, std::move(a_hat), std::move(b_hat), sol.objective, std::move(targets)};

  Eigen::MatrixXd combined = (1.0 - sol.lambda.sum()) * s.mat();
  for (int j = 0; j < k; ++j)
    combined += sol.lambda(j) * targets[static_cast<std::size_t>(j)].mat();
  return {SymMatrix(std::move(combined)), sol.lambda, std::move(a_hat), std::move(b_hat),
          sol.objective, std::move(targets)};
}

}  // namespace mts
