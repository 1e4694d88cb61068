#pragma once

#include <Eigen/Core>
#include <Eigen/Eigenvalues>

#include <stdexcept>
#include <string>
#include <utility>

namespace mts {

// Symmetric p x p matrix. Construction symmetrizes (M+M')/2, which removes
// the asymmetric round-off that would otherwise accumulate ahead of
// eigendecompositions.
class SymMatrix {
 public:
  explicit SymMatrix(Eigen::MatrixXd m) : m_(std::move(m)) {
    if (m_.rows() != m_.cols())
      throw std::invalid_argument("SymMatrix: matrix is " + std::to_string(m_.rows()) + "x" +
                                  std::to_string(m_.cols()) + ", expected square");
    if (!m_.allFinite()) throw std::invalid_argument("SymMatrix: non-finite entry");
    m_ = ((m_ + m_.transpose()) / 2.0).eval();
  }

  static SymMatrix identity(Eigen::Index p) { return SymMatrix(Eigen::MatrixXd::Identity(p, p)); }

  const Eigen::MatrixXd& mat() const { return m_; }
  Eigen::Index size() const { return m_.rows(); }
  double trace() const { return m_.trace(); }

  double operator()(Eigen::Index i, Eigen::Index j) const { return m_(i, j); }

 private:
  Eigen::MatrixXd m_;
};

// Eigendecomposition with eigenvalues sorted descending and orthogonal
// eigenvector columns.
struct EigDecomp {
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd eigenvectors;  // columns, aligned with eigenvalues

  Eigen::MatrixXd reconstruct() const {
    return eigenvectors * eigenvalues.asDiagonal() * eigenvectors.transpose();
  }
};

inline EigDecomp eig_sym(const SymMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(m.mat());
  if (solver.info() != Eigen::Success)
    throw std::runtime_error("eig_sym: eigendecomposition failed to converge for " +
                             std::to_string(m.size()) + "x" + std::to_string(m.size()) +
                             " matrix");
  // Eigen reports ascending order; flip to descending.
  const Eigen::Index p = m.size();
  EigDecomp out;
  out.eigenvalues = solver.eigenvalues().reverse();
  out.eigenvectors = solver.eigenvectors().rowwise().reverse();
  (void)p;
  return out;
}

}  // namespace mts
