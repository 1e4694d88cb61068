#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <stdexcept>
#include <string>
#include <utility>

#include "mts/sym_matrix.hpp"

namespace mts {

inline constexpr double kAutoRidge = -1.0;

// Linear discriminant: predicts class A iff weight'x + bias > 0.
struct LdaModel {
  Eigen::VectorXd weight;
  double bias;
  std::pair<std::string, std::string> class_labels{"A", "B"};

  bool predict_a(const Eigen::VectorXd& x) const { return weight.dot(x) + bias > 0.0; }
  const std::string& predict(const Eigen::VectorXd& x) const {
    return predict_a(x) ? class_labels.first : class_labels.second;
  }
};

// weight = (cov + ridge I)^-1 (mean_a - mean_b), bias centers the boundary
// between the class means. Default ridge is 1e-8 * trace/p.
inline LdaModel lda_train(const Eigen::VectorXd& mean_a, const Eigen::VectorXd& mean_b,
                          const SymMatrix& cov, double ridge = kAutoRidge) {
  const Eigen::Index p = cov.size();
  if (mean_a.size() != p || mean_b.size() != p)
    throw std::invalid_argument("lda_train: mean lengths " + std::to_string(mean_a.size()) + "/" +
                                std::to_string(mean_b.size()) + " do not match covariance size " +
                                std::to_string(p));
  if (ridge == kAutoRidge) ridge = 1e-8 * cov.trace() / static_cast<double>(p);
  if (ridge < 0.0) throw std::invalid_argument("lda_train: ridge must be >= 0");
  Eigen::MatrixXd reg = cov.mat();
  reg.diagonal().array() += ridge;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(reg);
  Eigen::VectorXd w = ldlt.solve(mean_a - mean_b);
  if (ldlt.info() != Eigen::Success || !w.allFinite())
    throw std::runtime_error("lda_train: covariance is singular even after ridge");
  const double bias = -w.dot(mean_a + mean_b) / 2.0;
  return {std::move(w), bias};
}

// Fraction of correctly classified columns, classes weighted by sample count.
inline double lda_accuracy(const LdaModel& model, const Eigen::MatrixXd& class_a_obs,
                           const Eigen::MatrixXd& class_b_obs) {
  Eigen::Index correct = 0;
  for (Eigen::Index j = 0; j < class_a_obs.cols(); ++j)
    if (model.weight.dot(class_a_obs.col(j)) + model.bias > 0.0) ++correct;
  for (Eigen::Index j = 0; j < class_b_obs.cols(); ++j)
    if (!(model.weight.dot(class_b_obs.col(j)) + model.bias > 0.0)) ++correct;
  return static_cast<double>(correct) /
         static_cast<double>(class_a_obs.cols() + class_b_obs.cols());
}

}  // namespace mts
