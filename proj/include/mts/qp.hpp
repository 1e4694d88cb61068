#pragma once

#include <Eigen/Core>
#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "mts/sym_matrix.hpp"

namespace mts {

// One linear inequality row . lambda <= rhs.
struct LinearConstraint {
  Eigen::VectorXd row;
  double rhs;
};

// The shrinkage-intensity program: minimize 1/2 l'Al - b'l over l >= 0,
// sum(l) <= 1, plus optional extra linear inequalities. A is a Gram matrix by
// construction in the estimators, hence PSD.
struct QpProblem {
  SymMatrix a;
  Eigen::VectorXd b;
  std::vector<LinearConstraint> extra_constraints;

  QpProblem(SymMatrix a_in, Eigen::VectorXd b_in, std::vector<LinearConstraint> extras = {})
      : a(std::move(a_in)), b(std::move(b_in)), extra_constraints(std::move(extras)) {
    const Eigen::Index k = b.size();
    if (a.size() != k)
      throw std::invalid_argument("QpProblem: A is " + std::to_string(a.size()) + "x" +
                                  std::to_string(a.size()) + " but b has length " +
                                  std::to_string(k));
    if (!b.allFinite()) throw std::invalid_argument("QpProblem: non-finite entry in b");
    for (std::size_t j = 0; j < extra_constraints.size(); ++j) {
      const auto& c = extra_constraints[j];
      if (c.row.size() != k)
        throw std::invalid_argument("QpProblem: extra constraint " + std::to_string(j) +
                                    " has length " + std::to_string(c.row.size()) +
                                    ", expected " + std::to_string(k));
      if (!c.row.allFinite() || !std::isfinite(c.rhs))
        throw std::invalid_argument("QpProblem: non-finite entry in extra constraint " +
                                    std::to_string(j));
    }
    if (k > 0) {
      const double tol = 1e-10 * std::max(a.trace() / static_cast<double>(k), 0.0) +
                         1e-13 * (1.0 + a.mat().cwiseAbs().maxCoeff());
      if (eig_sym(a).eigenvalues.minCoeff() < -tol)
        throw std::invalid_argument("QpProblem: A is not PSD within tolerance");
    }
  }

  int num_targets() const { return static_cast<int>(b.size()); }
};

enum class ConstraintKind { kNonNegative, kBudget, kExtra };

// Identifies one constraint of the program: lambda_k >= 0, the budget
// sum(lambda) <= 1, or extra constraint j.
struct ConstraintRef {
  ConstraintKind kind;
  int index;  // lambda index / extra index; 0 for the budget row

  friend bool operator==(const ConstraintRef&, const ConstraintRef&) = default;

  std::string to_string() const {
    switch (kind) {
      case ConstraintKind::kNonNegative: return "nonneg[" + std::to_string(index) + "]";
      case ConstraintKind::kBudget: return "budget";
      case ConstraintKind::kExtra: return "extra[" + std::to_string(index) + "]";
    }
    return "?";
  }
};

struct QpSolution {
  Eigen::VectorXd lambda;
  double objective;
  std::vector<ConstraintRef> active_set;
  // Scale-normalized max of stationarity, primal violation and complementarity;
  // NaN for grid solutions.
  double kkt_residual = std::numeric_limits<double>::quiet_NaN();
};

inline double qp_objective(const QpProblem& prob, const Eigen::VectorXd& lambda) {
  if (lambda.size() != prob.b.size())
    throw std::invalid_argument("qp_objective: lambda has length " + std::to_string(lambda.size()) +
                                ", expected " + std::to_string(prob.b.size()));
  return 0.5 * lambda.dot(prob.a.mat() * lambda) - prob.b.dot(lambda);
}

namespace detail {

// Constraint system in the fixed order the tie-breaking rules refer to:
// rows 0..K-1 nonnegativity, row K the budget, then the extras. Extra rows are
// rescaled to unit inf-norm; `extra_origin` maps them back to user indices.
struct ConstraintSystem {
  Eigen::MatrixXd g;  // m x K
  Eigen::VectorXd h;  // m
  std::vector<ConstraintRef> refs;
  std::vector<int> extra_origin;
};

inline ConstraintSystem build_constraints(const QpProblem& prob) {
  const int k = prob.num_targets();
  std::vector<Eigen::VectorXd> rows;
  std::vector<double> rhs;
  ConstraintSystem sys;
  for (int i = 0; i < k; ++i) {
    rows.push_back(-Eigen::VectorXd::Unit(k, i));
    rhs.push_back(0.0);
    sys.refs.push_back({ConstraintKind::kNonNegative, i});
  }
  rows.push_back(Eigen::VectorXd::Ones(k));
  rhs.push_back(1.0);
  sys.refs.push_back({ConstraintKind::kBudget, 0});
  for (std::size_t j = 0; j < prob.extra_constraints.size(); ++j) {
    const auto& c = prob.extra_constraints[j];
    const double norm = c.row.cwiseAbs().maxCoeff();
    if (norm == 0.0) {
      if (c.rhs < 0.0)
        throw std::runtime_error("qp solve: infeasible extra constraints {" + std::to_string(j) +
                                 "}: zero row with negative bound");
      continue;  // 0 <= rhs always holds
    }
    rows.push_back(c.row / norm);
    rhs.push_back(c.rhs / norm);
    sys.refs.push_back({ConstraintKind::kExtra, static_cast<int>(j)});
    sys.extra_origin.push_back(static_cast<int>(j));
  }
  const auto m = static_cast<Eigen::Index>(rows.size());
  sys.g.resize(m, k);
  sys.h.resize(m);
  for (Eigen::Index r = 0; r < m; ++r) {
    sys.g.row(r) = rows[static_cast<std::size_t>(r)];
    sys.h(r) = rhs[static_cast<std::size_t>(r)];
  }
  return sys;
}

struct ActiveSetState {
  Eigen::VectorXd x;
  std::vector<int> working;    // constraint indices treated as equalities
  Eigen::VectorXd multipliers;  // aligned with `working`
};

// Primal active-set iteration for min 1/2 x'Hx - c'x s.t. Gx <= h. H must be
// positive definite and the start feasible with an independent working set.
// Ties (which constraint to drop or to add) go to the lowest constraint index.
inline ActiveSetState active_set_min(const Eigen::MatrixXd& h_mat, const Eigen::VectorXd& c,
                                     const Eigen::MatrixXd& g, const Eigen::VectorXd& h,
                                     Eigen::VectorXd x, std::vector<int> working) {
  const Eigen::Index dim = x.size();
  const Eigen::Index m = h.size();
  const double scale =
      std::max({1.0, h_mat.cwiseAbs().maxCoeff(), c.size() ? c.cwiseAbs().maxCoeff() : 0.0});
  const double tol_mult = 1e-12 * scale;
  const double tol_dir = 1e-13;
  const int max_iter = 60 * static_cast<int>(m + dim) + 60;

  Eigen::VectorXd mult;
  for (int iter = 0; iter < max_iter; ++iter) {
    const auto nw = static_cast<Eigen::Index>(working.size());
    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(dim + nw, dim + nw);
    kkt.topLeftCorner(dim, dim) = h_mat;
    for (Eigen::Index r = 0; r < nw; ++r) {
      kkt.block(dim + r, 0, 1, dim) = g.row(working[static_cast<std::size_t>(r)]);
      kkt.block(0, dim + r, dim, 1) = g.row(working[static_cast<std::size_t>(r)]).transpose();
    }
    Eigen::VectorXd rhs(dim + nw);
    rhs.head(dim) = c - h_mat * x;
    rhs.tail(nw).setZero();
    const Eigen::VectorXd sol = Eigen::FullPivLU<Eigen::MatrixXd>(kkt).solve(rhs);
    const Eigen::VectorXd d = sol.head(dim);
    mult = sol.tail(nw);

    if (d.cwiseAbs().maxCoeff() <= tol_dir * std::max(1.0, x.cwiseAbs().maxCoeff())) {
      int drop = -1;
      for (Eigen::Index r = 0; r < nw; ++r) {
        if (mult(r) < -tol_mult) {
          const int cidx = working[static_cast<std::size_t>(r)];
          if (drop == -1 || cidx < drop) drop = cidx;
        }
      }
      if (drop == -1) return {std::move(x), std::move(working), std::move(mult)};
      working.erase(std::find(working.begin(), working.end(), drop));
      continue;
    }

    double alpha = 1.0;
    int block = -1;
    for (Eigen::Index j = 0; j < m; ++j) {
      if (std::find(working.begin(), working.end(), static_cast<int>(j)) != working.end())
        continue;
      const double step = g.row(j).dot(d);
      if (step <= 1e-14 * d.cwiseAbs().maxCoeff()) continue;
      const double slack = std::max(h(j) - g.row(j).dot(x), 0.0);
      const double a_j = slack / step;
      if (a_j < alpha - 1e-15 || (a_j <= alpha + 1e-15 && block != -1 && j < block)) {
        alpha = std::min(a_j, alpha);
        block = static_cast<int>(j);
      }
    }
    x += alpha * d;
    if (block >= 0) working.push_back(block);
  }
  throw std::runtime_error("qp solve: active-set iteration did not terminate");
}

// Phase 1: minimize the maximum violation of the extra constraints over the
// simplex via an auxiliary slack variable. Returns a feasible lambda or throws
// naming the extras that cannot hold jointly with the simplex.
inline Eigen::VectorXd feasible_start(const ConstraintSystem& sys, int k) {
  const Eigen::Index m = sys.h.size();
  const Eigen::Index dim = k + 1;  // (lambda, t)
  const Eigen::Index me = m - k - 1;
  Eigen::MatrixXd g2(m + 1, dim);
  Eigen::VectorXd h2(m + 1);
  for (Eigen::Index r = 0; r < k + 1; ++r) {  // simplex rows, no slack
    g2.row(r).head(k) = sys.g.row(r);
    g2(r, k) = 0.0;
    h2(r) = sys.h(r);
  }
  for (Eigen::Index e = 0; e < me; ++e) {  // extras relaxed by t
    g2.row(k + 1 + e).head(k) = sys.g.row(k + 1 + e);
    g2(k + 1 + e, k) = -1.0;
    h2(k + 1 + e) = sys.h(k + 1 + e);
  }
  g2.row(m).setZero();
  g2(m, k) = -1.0;  // t >= 0
  h2(m) = 0.0;

  Eigen::MatrixXd h_mat = 1e-8 * Eigen::MatrixXd::Identity(dim, dim);
  h_mat(k, k) = 1.0;
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(dim);
  double t0 = 0.0;
  int worst = -1;
  for (Eigen::Index e = 0; e < me; ++e) {
    if (-h2(k + 1 + e) > t0) {
      t0 = -h2(k + 1 + e);
      worst = static_cast<int>(k + 1 + e);
    }
  }
  x0(k) = t0;
  std::vector<int> w0;
  for (int i = 0; i < k; ++i) w0.push_back(i);
  if (worst >= 0) w0.push_back(worst);
  const ActiveSetState res =
      active_set_min(h_mat, Eigen::VectorXd::Zero(dim), g2, h2, x0, w0);
  if (res.x(k) > 1e-10) {
    std::string bad;
    for (Eigen::Index e = 0; e < me; ++e) {
      if (sys.g.row(k + 1 + e).dot(res.x.head(k)) > sys.h(k + 1 + e) + 1e-10) {
        if (!bad.empty()) bad += ", ";
        bad += std::to_string(sys.extra_origin[static_cast<std::size_t>(e)]);
      }
    }
    throw std::runtime_error("qp solve: infeasible extra constraints {" + bad +
                             "}: no lambda satisfies them jointly with the simplex");
  }
  return res.x.head(k).cwiseMax(0.0);
}

}  // namespace detail

// Exact solve via a primal active-set method on the KKT system. Singular or
// near-singular A (duplicate targets) gets a ridge of
// 1e-10 * max(trace(A)/K, 1) before solving; the reported solution and
// objective are those of the ridged problem.
inline QpSolution solve(const QpProblem& prob) {
  const int k = prob.num_targets();
  if (k == 0) return {Eigen::VectorXd(), 0.0, {}, 0.0};

  Eigen::MatrixXd a_eff = prob.a.mat();
  const double ridge = 1e-10 * std::max(prob.a.trace() / static_cast<double>(k), 1.0);
  if (eig_sym(prob.a).eigenvalues.minCoeff() < ridge)
    a_eff += ridge * Eigen::MatrixXd::Identity(k, k);

  const detail::ConstraintSystem sys = detail::build_constraints(prob);
  Eigen::VectorXd x0 = Eigen::VectorXd::Zero(k);
  bool origin_feasible = true;
  for (Eigen::Index j = k + 1; j < sys.h.size(); ++j)
    if (sys.h(j) < 0.0) origin_feasible = false;
  std::vector<int> w0;
  if (origin_feasible) {
    for (int i = 0; i < k; ++i) w0.push_back(i);
  } else {
    x0 = detail::feasible_start(sys, k);
    for (int i = 0; i < k; ++i)
      if (x0(i) == 0.0) w0.push_back(i);
  }

  detail::ActiveSetState res = detail::active_set_min(a_eff, prob.b, sys.g, sys.h, x0, w0);

  // Working nonnegativity rows are exact zeros.
  for (std::size_t r = 0; r < res.working.size(); ++r)
    if (res.working[r] < k) res.x(res.working[r]) = 0.0;

  QpSolution sol;
  sol.lambda = res.x;
  sol.objective = 0.5 * res.x.dot(a_eff * res.x) - prob.b.dot(res.x);

  const double scale = std::max(
      {1.0, a_eff.cwiseAbs().maxCoeff(), prob.b.size() ? prob.b.cwiseAbs().maxCoeff() : 0.0});
  Eigen::VectorXd grad = a_eff * res.x - prob.b;
  double stationarity = 0.0;
  double complementarity = 0.0;
  for (std::size_t r = 0; r < res.working.size(); ++r) {
    grad += res.multipliers(static_cast<Eigen::Index>(r)) * sys.g.row(res.working[r]).transpose();
    const double slack = sys.h(res.working[r]) - sys.g.row(res.working[r]).dot(res.x);
    complementarity =
        std::max(complementarity, std::abs(res.multipliers(static_cast<Eigen::Index>(r)) * slack));
  }
  stationarity = grad.cwiseAbs().maxCoeff();
  double primal = 0.0;
  for (Eigen::Index j = 0; j < sys.h.size(); ++j)
    primal = std::max(primal, sys.g.row(j).dot(res.x) - sys.h(j));
  sol.kkt_residual = std::max({stationarity / scale, primal, complementarity / scale});

  for (Eigen::Index j = 0; j < sys.h.size(); ++j)
    if (std::abs(sys.g.row(j).dot(res.x) - sys.h(j)) <= 1e-10 * std::max(1.0, std::abs(sys.h(j))))
      sol.active_set.push_back(sys.refs[static_cast<std::size_t>(j)]);
  return sol;
}

// Exhaustive evaluation over the grid {lambda_k in {0, 1/g, ..., 1},
// sum <= 1, extras satisfied}. Test oracle; exact only to grid resolution.
inline QpSolution brute_force_solve(const QpProblem& prob, int grid_steps) {
  const int k = prob.num_targets();
  if (k > 4)
    throw std::invalid_argument("brute_force_solve: K=" + std::to_string(k) +
                                " exceeds the supported maximum of 4");
  if (grid_steps < 100)
    throw std::invalid_argument("brute_force_solve: grid_steps must be >= 100, got " +
                                std::to_string(grid_steps));
  if (k == 0) return {Eigen::VectorXd(), 0.0, {}, std::numeric_limits<double>::quiet_NaN()};

  const double g = grid_steps;
  const Eigen::MatrixXd& a = prob.a.mat();
  const auto& extras = prob.extra_constraints;
  const auto ne = extras.size();

  std::vector<int> idx(static_cast<std::size_t>(k), 0);
  std::vector<int> best_idx;
  double best_val = std::numeric_limits<double>::infinity();

  // Per-level partial state: objective value, cross terms, extra-row sums.
  std::vector<double> partial_val(static_cast<std::size_t>(k) + 1, 0.0);
  Eigen::MatrixXd cross = Eigen::MatrixXd::Zero(k + 1, k);  // cross(level, l) = sum_{i<level} A(i,l) lam_i
  Eigen::MatrixXd ext = Eigen::MatrixXd::Zero(k + 1, static_cast<Eigen::Index>(ne));

  auto recurse = [&](auto&& self, int level, int remaining) -> void {
    if (level == k - 1) {
      const double c2 = 0.5 * a(level, level);
      const double c1 = cross(level, level) - prob.b(level);
      for (int t = 0; t <= remaining; ++t) {
        const double lam = t / g;
        bool ok = true;
        for (std::size_t j = 0; j < ne; ++j) {
          const double lhs = ext(level, static_cast<Eigen::Index>(j)) + extras[j].row(level) * lam;
          if (lhs > extras[j].rhs + 1e-12 * std::max(1.0, std::abs(extras[j].rhs))) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;
        const double val = partial_val[static_cast<std::size_t>(level)] + lam * (c1 + c2 * lam);
        if (val < best_val) {
          best_val = val;
          idx[static_cast<std::size_t>(level)] = t;
          best_idx = idx;
        }
      }
      return;
    }
    for (int t = 0; t <= remaining; ++t) {
      const double lam = t / g;
      idx[static_cast<std::size_t>(level)] = t;
      partial_val[static_cast<std::size_t>(level) + 1] =
          partial_val[static_cast<std::size_t>(level)] +
          lam * (cross(level, level) - prob.b(level)) + 0.5 * a(level, level) * lam * lam;
      for (int l = level + 1; l < k; ++l) cross(level + 1, l) = cross(level, l) + a(level, l) * lam;
      for (std::size_t j = 0; j < ne; ++j)
        ext(level + 1, static_cast<Eigen::Index>(j)) =
            ext(level, static_cast<Eigen::Index>(j)) + extras[j].row(level) * lam;
      self(self, level + 1, remaining - t);
    }
  };
  recurse(recurse, 0, grid_steps);

  if (best_idx.empty()) throw std::runtime_error("brute_force_solve: no feasible grid point");

  QpSolution sol;
  sol.lambda.resize(k);
  for (int i = 0; i < k; ++i) sol.lambda(i) = best_idx[static_cast<std::size_t>(i)] / g;
  sol.objective = qp_objective(prob, sol.lambda);
  const detail::ConstraintSystem sys = detail::build_constraints(prob);
  for (Eigen::Index j = 0; j < sys.h.size(); ++j)
    if (std::abs(sys.g.row(j).dot(sol.lambda) - sys.h(j)) <=
        1e-10 * std::max(1.0, std::abs(sys.h(j))))
      sol.active_set.push_back(sys.refs[static_cast<std::size_t>(j)]);
  return sol;
}

}  // namespace mts
