#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mts/cov_mts.hpp"
#include "mts/csp.hpp"
#include "mts/dataset.hpp"
#include "mts/lda.hpp"
#include "mts/mean_mts.hpp"
#include "mts/metrics.hpp"
#include "mts/qp.hpp"
#include "mts/rng.hpp"
#include "mts/stat_core.hpp"
#include "mts/sym_matrix.hpp"

namespace mts {

enum class Regime { kLdl, kFoldl };

enum class Scenario {
  kSim1MeanLdl,
  kSim1MeanFoldl,
  kSim2Lda,
  kSim3CovLdl,
  kSim3CovFoldl,
  kSim4CovTargets,
  kSim5Csp,
};

inline const std::vector<std::pair<Scenario, std::string>>& scenario_names() {
  static const std::vector<std::pair<Scenario, std::string>> names = {
      {Scenario::kSim1MeanLdl, "sim1_mean_ldl"},   {Scenario::kSim1MeanFoldl, "sim1_mean_foldl"},
      {Scenario::kSim2Lda, "sim2_lda"},            {Scenario::kSim3CovLdl, "sim3_cov_ldl"},
      {Scenario::kSim3CovFoldl, "sim3_cov_foldl"}, {Scenario::kSim4CovTargets, "sim4_cov_targets"},
      {Scenario::kSim5Csp, "sim5_csp"},
  };
  return names;
}

inline std::string scenario_name(Scenario s) {
  for (const auto& [sc, name] : scenario_names())
    if (sc == s) return name;
  return "?";
}

inline Scenario parse_scenario(const std::string& name) {
  for (const auto& [sc, n] : scenario_names())
    if (n == name) return sc;
  std::string valid;
  for (const auto& [sc, n] : scenario_names()) {
    if (!valid.empty()) valid += ", ";
    valid += n;
  }
  throw std::invalid_argument("unknown scenario '" + name + "'; valid scenarios: " + valid);
}

inline bool scenario_uses_accuracy(Scenario s) {
  return s == Scenario::kSim2Lda || s == Scenario::kSim5Csp;
}

// Full parameterization of one Monte Carlo sweep. The sweep values are p for
// sim 1/3, kappa for sim 2, phi (degrees) for sim 4 and w for sim 5.
struct SimConfig {
  Scenario scenario = Scenario::kSim1MeanLdl;
  std::vector<double> sweep;
  int reps_model = 100;
  int reps_noise = 5;
  std::uint64_t seed = 0;

  bool spike = false;     // sim 2 / sim 5
  int p = 100;            // sim 4 dimensionality
  int m_per_class = 3;    // sim 5 CSP filters per class
  int test_samples = 200; // sim 2 test observations per class
  int test_trials = 50;   // sim 5 test trials per class
  int trial_length = 20;  // sim 5 trial length

  void validate() const {
    if (sweep.empty()) throw std::invalid_argument("SimConfig: sweep must be nonempty");
    if (reps_model < 1 || reps_noise < 1)
      throw std::invalid_argument("SimConfig: repetition counts must be >= 1");
    switch (scenario) {
      case Scenario::kSim1MeanLdl:
      case Scenario::kSim1MeanFoldl:
        for (double v : sweep)
          if (v < 2 || v != std::floor(v))
            throw std::invalid_argument("SimConfig: sim1 sweep values are dimensions p >= 2");
        break;
      case Scenario::kSim3CovLdl:
      case Scenario::kSim3CovFoldl:
        for (double v : sweep)
          if (v < 4 || v != std::floor(v))
            throw std::invalid_argument("SimConfig: sim3 sweep values are dimensions p >= 4");
        break;
      case Scenario::kSim2Lda:
        if (test_samples < 1) throw std::invalid_argument("SimConfig: test_samples must be >= 1");
        break;
      case Scenario::kSim4CovTargets:
        if (p < 4 || p % 2 != 0)
          throw std::invalid_argument("SimConfig: sim4 requires even p >= 4");
        for (double v : sweep)
          if (v < 0.0 || v > 90.0)
            throw std::invalid_argument("SimConfig: sim4 sweep values are angles in [0, 90]");
        break;
      case Scenario::kSim5Csp:
        for (double v : sweep)
          if (v < 0.0 || v > 1.0)
            throw std::invalid_argument("SimConfig: sim5 sweep values are blends w in [0, 1]");
        if (m_per_class < 1) throw std::invalid_argument("SimConfig: m_per_class must be >= 1");
        if (trial_length < 2) throw std::invalid_argument("SimConfig: trial_length must be >= 2");
        if (test_trials < 1) throw std::invalid_argument("SimConfig: test_trials must be >= 1");
        break;
    }
  }
};

enum class MetricKind { kSquaredError, kAccuracy };

inline std::string metric_name(MetricKind m) {
  return m == MetricKind::kSquaredError ? "squared_error" : "accuracy";
}

// One repetition of one estimator at one sweep point.
struct RunRecord {
  int sweep_index = 0;
  double sweep_value = 0.0;
  int model_index = 0;
  int rep_index = 0;
  std::string estimator;
  MetricKind metric = MetricKind::kSquaredError;
  double value = 0.0;
  Eigen::VectorXd lambda;  // empty when the estimator has no intensities
  std::uint64_t seed_used = 0;
  bool ok = true;
  std::string message;
};

// ---------------------------------------------------------------------------
// Generators. Each simulation splits into a model stage (latent parameters,
// drawn once per model index) and a noise stage (data, drawn once per
// repetition); the gen_* convenience functions run both off a single stream.
// ---------------------------------------------------------------------------

struct MeanProblem {
  Dataset x;
  std::vector<Dataset> aux;
  Eigen::VectorXd true_mean;
};

struct CovProblem {
  Dataset x;
  std::vector<Dataset> aux;
  SymMatrix true_cov;
};

struct TwoClassMeanProblem {
  Dataset x_a, x_b;
  std::vector<Dataset> aux_a, aux_b;
  Dataset test_a, test_b;
};

struct CspProblem {
  Dataset x_a, x_b;
  std::vector<Dataset> aux_a, aux_b;
  std::vector<Dataset> test_a, test_b;  // trials
};

inline Eigen::VectorXd log_spaced_eigenvalues(int p) {
  Eigen::VectorXd g(p);
  for (int i = 0; i < p; ++i)
    g(i) = std::pow(10.0, 2.0 * static_cast<double>(i) / (static_cast<double>(p) - 1.0) - 1.0);
  return g;
}

// Orthogonal rotation constrained to angle phi: one Givens rotation per plane
// of a uniformly random disjoint pairing of the coordinates. Identity at
// phi = 0; `exclude` keeps one coordinate out of the pairing.
inline Eigen::MatrixXd constrained_rotation(int p, double phi_degrees, std::mt19937_64& rng,
                                            int exclude = -1) {
  std::vector<int> allowed;
  allowed.reserve(static_cast<std::size_t>(p));
  for (int i = 0; i < p; ++i)
    if (i != exclude) allowed.push_back(i);
  const std::vector<int> perm = sample_permutation(static_cast<int>(allowed.size()), rng);
  const double a = phi_degrees * std::numbers::pi / 180.0;
  const double c = std::cos(a);
  const double s = std::sin(a);
  Eigen::MatrixXd r = Eigen::MatrixXd::Identity(p, p);
  for (std::size_t t = 0; 2 * t + 1 < perm.size(); ++t) {
    const int i = allowed[static_cast<std::size_t>(perm[2 * t])];
    const int j = allowed[static_cast<std::size_t>(perm[2 * t + 1])];
    r(i, i) = c;
    r(j, j) = c;
    r(i, j) = -s;
    r(j, i) = s;
  }
  return r;
}

// --- Simulation 1: shrinkage of the mean toward additional datasets --------

struct Sim1Model {
  int p;
  Eigen::Index n, n_aux;
  std::vector<Eigen::VectorXd> aux_means;
};

inline Sim1Model make_sim1_model(int p, Regime regime, std::mt19937_64& rng) {
  if (p < 2) throw std::invalid_argument("sim1: p must be >= 2");
  const Eigen::Index n = regime == Regime::kLdl ? p : 50;
  const double etas[4] = {1.0 / (5.0 * std::sqrt(static_cast<double>(p))), 0.5 / 5.0, 1.0 / 5.0,
                          2.0 / 5.0};
  Sim1Model model{p, n, n, {}};
  for (double eta : etas) model.aux_means.push_back(sample_signs(p, rng) * eta);
  return model;
}

inline MeanProblem draw_sim1_data(const Sim1Model& model, std::mt19937_64& rng) {
  MeanProblem prob{Dataset(sample_gaussian(model.p, model.n, rng), "primary"),
                   {},
                   Eigen::VectorXd::Zero(model.p)};
  for (std::size_t k = 0; k < model.aux_means.size(); ++k)
    prob.aux.emplace_back(
        sample_gaussian(model.p, model.n_aux, rng).colwise() + model.aux_means[k],
        "aux" + std::to_string(k + 1));
  return prob;
}

inline MeanProblem gen_sim1(int p, Regime regime, std::mt19937_64& rng) {
  const Sim1Model model = make_sim1_model(p, regime, rng);
  return draw_sim1_data(model, rng);
}

// --- Simulation 2: mean shrinkage inside an LDA classifier -----------------

inline constexpr double kPhiInv08 = 0.8416212335729142;  // standard normal quantile at 0.8
inline constexpr int kSim2Dim = 50;

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

struct Sim2Model {
  Eigen::VectorXd gamma;           // covariance eigenvalues after rescaling (and spike)
  Eigen::VectorXd mean_a, mean_b;  // rescaled class means
  std::vector<Eigen::VectorXd> aux_means_a, aux_means_b;
  Eigen::Index n = 50, n_aux = 100;
};

inline Sim2Model make_sim2_model(double kappa, bool spike, std::mt19937_64& rng) {
  const int p = kSim2Dim;
  Sim2Model model;
  model.gamma = log_spaced_eigenvalues(p);
  // Per-dimension mean difference calibrated so the Bayes classifier reaches
  // 80% accuracy; rescaling scales means and noise alike, so it is preserved.
  const double delta = 2.0 * kPhiInv08 / std::sqrt(static_cast<double>(p));
  Eigen::VectorXd base_a = Eigen::VectorXd::Constant(p, delta / 2.0);
  Eigen::VectorXd base_b = Eigen::VectorXd::Constant(p, -delta / 2.0);
  if (spike) {
    model.gamma(p - 1) *= 100.0;
    base_a(p - 1) = 0.0;  // spiked direction made non-discriminative
    base_b(p - 1) = 0.0;
  }
  const double eta_base[4] = {0.25, 0.5, 1.0, 2.0};
  std::vector<Eigen::VectorXd> offs_a, offs_b;
  for (double e : eta_base) offs_a.push_back(sample_signs(p, rng) * (std::pow(10.0, kappa) * e));
  for (double e : eta_base) offs_b.push_back(sample_signs(p, rng) * (std::pow(10.0, kappa) * e));
  const Eigen::VectorXd scale = model.gamma.cwiseSqrt();
  model.mean_a = scale.cwiseProduct(base_a);
  model.mean_b = scale.cwiseProduct(base_b);
  for (int k = 0; k < 4; ++k) {
    model.aux_means_a.push_back(scale.cwiseProduct(base_a + offs_a[static_cast<std::size_t>(k)]));
    model.aux_means_b.push_back(scale.cwiseProduct(base_b + offs_b[static_cast<std::size_t>(k)]));
  }
  return model;
}

// Accuracy of the Bayes rule for the true model (diagonal covariance).
inline double sim2_bayes_accuracy(const Sim2Model& model) {
  const Eigen::VectorXd diff = model.mean_a - model.mean_b;
  const double q = (diff.array().square() / model.gamma.array()).sum();
  return normal_cdf(std::sqrt(q) / 2.0);
}

inline TwoClassMeanProblem draw_sim2_data(const Sim2Model& model, std::mt19937_64& rng,
                                          int test_samples) {
  const int p = kSim2Dim;
  const Eigen::VectorXd scale = model.gamma.cwiseSqrt();
  auto draw = [&](const Eigen::VectorXd& mean, Eigen::Index n, const std::string& tag) {
    Eigen::MatrixXd z = sample_gaussian(p, n, rng);
    z.array().colwise() *= scale.array();
    return Dataset(z.colwise() + mean, tag);
  };
  Dataset x_a = draw(model.mean_a, model.n, "a");
  Dataset x_b = draw(model.mean_b, model.n, "b");
  std::vector<Dataset> aux_a, aux_b;
  for (int k = 0; k < 4; ++k)
    aux_a.push_back(draw(model.aux_means_a[static_cast<std::size_t>(k)], model.n_aux,
                         "aux_a" + std::to_string(k + 1)));
  for (int k = 0; k < 4; ++k)
    aux_b.push_back(draw(model.aux_means_b[static_cast<std::size_t>(k)], model.n_aux,
                         "aux_b" + std::to_string(k + 1)));
  // test sets drawn last so the training draws do not depend on the test size
  Dataset test_a = draw(model.mean_a, test_samples, "test_a");
  Dataset test_b = draw(model.mean_b, test_samples, "test_b");
  return {std::move(x_a),  std::move(x_b),    std::move(aux_a),
          std::move(aux_b), std::move(test_a), std::move(test_b)};
}

inline TwoClassMeanProblem gen_sim2(double kappa, bool spike, std::mt19937_64& rng,
                                    int test_samples = 200) {
  const Sim2Model model = make_sim2_model(kappa, spike, rng);
  return draw_sim2_data(model, rng, test_samples);
}

// --- Simulation 3: covariance shrinkage toward additional datasets ---------

struct Sim3Model {
  Eigen::VectorXd gamma;
  std::vector<Eigen::VectorXd> gamma_aux;
  Eigen::Index n, n_aux;
};

inline Sim3Model make_sim3_model(int p, Regime regime) {
  if (p < 4) throw std::invalid_argument("sim3: p must be >= 4");
  Sim3Model model;
  model.gamma = log_spaced_eigenvalues(p);
  model.n = regime == Regime::kLdl ? p : 50;
  model.n_aux = model.n;
  const double etas[4] = {1.0 / (10.0 * std::sqrt(static_cast<double>(p))), 1.0 / 10.0, 2.5 / 10.0,
                          5.0 / 10.0};
  for (double eta : etas) {
    Eigen::VectorXd g = model.gamma;
    g(p - 1) = eta * static_cast<double>(p);  // replace the largest eigenvalue
    model.gamma_aux.push_back(std::move(g));
  }
  return model;
}

inline CovProblem draw_sim3_data(const Sim3Model& model, std::mt19937_64& rng) {
  const auto p = model.gamma.size();
  auto draw = [&](const Eigen::VectorXd& gamma, Eigen::Index n, const std::string& tag) {
    Eigen::MatrixXd z = sample_gaussian(p, n, rng);
    z.array().colwise() *= gamma.cwiseSqrt().array();
    return Dataset(std::move(z), tag);
  };
  CovProblem prob{draw(model.gamma, model.n, "primary"),
                  {},
                  SymMatrix(Eigen::MatrixXd(model.gamma.asDiagonal()))};
  for (std::size_t k = 0; k < model.gamma_aux.size(); ++k)
    prob.aux.push_back(draw(model.gamma_aux[k], model.n_aux, "aux" + std::to_string(k + 1)));
  return prob;
}

inline CovProblem gen_sim3(int p, Regime regime, std::mt19937_64& rng) {
  return draw_sim3_data(make_sim3_model(p, regime), rng);
}

// --- Simulation 4: identity target plus rotated additional datasets --------

struct Sim4Model {
  Eigen::VectorXd gamma;
  std::vector<Eigen::MatrixXd> aux_transforms;  // R_k diag(sqrt(gamma))
  Eigen::Index n;
  std::vector<Eigen::Index> n_aux;
};

inline Sim4Model make_sim4_model(int p, double phi_degrees, std::mt19937_64& rng) {
  if (p < 4 || p % 2 != 0) throw std::invalid_argument("sim4: p must be even and >= 4");
  if (phi_degrees < 0.0 || phi_degrees > 90.0)
    throw std::invalid_argument("sim4: phi must lie in [0, 90]");
  Sim4Model model;
  model.gamma = log_spaced_eigenvalues(p);
  model.n = p;
  model.n_aux = {p / 2, p, 2 * p, 4 * p};
  const Eigen::MatrixXd sqrt_c = model.gamma.cwiseSqrt().asDiagonal();
  for (int k = 0; k < 4; ++k)
    model.aux_transforms.push_back(constrained_rotation(p, phi_degrees, rng) * sqrt_c);
  return model;
}

inline CovProblem draw_sim4_data(const Sim4Model& model, std::mt19937_64& rng) {
  const auto p = model.gamma.size();
  Eigen::MatrixXd z = sample_gaussian(p, model.n, rng);
  z.array().colwise() *= model.gamma.cwiseSqrt().array();
  CovProblem prob{Dataset(std::move(z), "primary"),
                  {},
                  SymMatrix(Eigen::MatrixXd(model.gamma.asDiagonal()))};
  for (std::size_t k = 0; k < model.aux_transforms.size(); ++k)
    prob.aux.emplace_back(
        model.aux_transforms[k] * sample_gaussian(p, model.n_aux[k], rng),
        "aux" + std::to_string(k + 1));
  return prob;
}

inline CovProblem gen_sim4(int p, double phi_degrees, std::mt19937_64& rng) {
  return draw_sim4_data(make_sim4_model(p, phi_degrees, rng), rng);
}

// --- Simulation 5: covariance shrinkage for CSP ----------------------------

inline constexpr int kSim5Dim = 50;
inline constexpr int kSim5RescaleCount = 10;

struct Sim5Model {
  Eigen::MatrixXd cov_a, cov_b;
  std::vector<Eigen::MatrixXd> aux_cov_a, aux_cov_b;
  Eigen::MatrixXd chol_a, chol_b;
  std::vector<Eigen::MatrixXd> aux_chol_a, aux_chol_b;
  Eigen::Index n = 200;
};

namespace detail {

// Multiplies P randomly chosen eigenvalues by 1 + i/P, i = 1..P.
inline Eigen::VectorXd rescale_random_eigenvalues(const Eigen::VectorXd& gamma,
                                                  std::mt19937_64& rng, int exclude) {
  const int p = static_cast<int>(gamma.size());
  std::vector<int> allowed;
  for (int i = 0; i < p; ++i)
    if (i != exclude) allowed.push_back(i);
  const std::vector<int> perm = sample_permutation(static_cast<int>(allowed.size()), rng);
  Eigen::VectorXd g = gamma;
  for (int i = 0; i < kSim5RescaleCount; ++i) {
    const int idx = allowed[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
    g(idx) *= 1.0 + static_cast<double>(i + 1) / kSim5RescaleCount;
  }
  return g;
}

inline Eigen::MatrixXd cholesky_factor(const Eigen::MatrixXd& cov) {
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("sim5: covariance is not positive definite");
  return llt.matrixL();
}

}  // namespace detail

inline Sim5Model make_sim5_model(double w, std::span<const double> phi_list, bool spike,
                                 std::mt19937_64& rng) {
  if (w < 0.0 || w > 1.0) throw std::invalid_argument("sim5: w must lie in [0, 1]");
  if (phi_list.size() != 4) throw std::invalid_argument("sim5: phi_list must have 4 entries");
  const int p = kSim5Dim;
  Eigen::VectorXd gamma = log_spaced_eigenvalues(p);
  int exclude = -1;
  if (spike) {
    gamma(p - 1) *= 100.0;
    exclude = p - 1;  // spiked direction kept out of rescaling and rotations
  }
  Sim5Model model;
  model.cov_a = detail::rescale_random_eigenvalues(gamma, rng, exclude).asDiagonal();
  model.cov_b = detail::rescale_random_eigenvalues(gamma, rng, exclude).asDiagonal();
  for (int k = 0; k < 4; ++k) {
    for (const auto* side : {&model.cov_a, &model.cov_b}) {
      const Eigen::MatrixXd diff =
          detail::rescale_random_eigenvalues(gamma, rng, exclude).asDiagonal();
      const Eigen::MatrixXd rot = constrained_rotation(p, phi_list[static_cast<std::size_t>(k)],
                                                       rng, exclude);
      const Eigen::MatrixXd blended = (1.0 - w) * (rot * diff * rot.transpose()) + w * (*side);
      if (side == &model.cov_a)
        model.aux_cov_a.push_back(blended);
      else
        model.aux_cov_b.push_back(blended);
    }
  }
  model.chol_a = detail::cholesky_factor(model.cov_a);
  model.chol_b = detail::cholesky_factor(model.cov_b);
  for (const auto& c : model.aux_cov_a) model.aux_chol_a.push_back(detail::cholesky_factor(c));
  for (const auto& c : model.aux_cov_b) model.aux_chol_b.push_back(detail::cholesky_factor(c));
  return model;
}

inline CspProblem draw_sim5_data(const Sim5Model& model, std::mt19937_64& rng, int test_trials,
                                 int trial_length) {
  const int p = kSim5Dim;
  auto draw = [&](const Eigen::MatrixXd& chol, Eigen::Index n, const std::string& tag) {
    return Dataset(chol * sample_gaussian(p, n, rng), tag);
  };
  CspProblem prob{draw(model.chol_a, model.n, "a"), draw(model.chol_b, model.n, "b"), {}, {}, {}, {}};
  for (std::size_t k = 0; k < model.aux_chol_a.size(); ++k)
    prob.aux_a.push_back(draw(model.aux_chol_a[k], model.n, "aux_a" + std::to_string(k + 1)));
  for (std::size_t k = 0; k < model.aux_chol_b.size(); ++k)
    prob.aux_b.push_back(draw(model.aux_chol_b[k], model.n, "aux_b" + std::to_string(k + 1)));
  for (int t = 0; t < test_trials; ++t) prob.test_a.push_back(draw(model.chol_a, trial_length, "ta"));
  for (int t = 0; t < test_trials; ++t) prob.test_b.push_back(draw(model.chol_b, trial_length, "tb"));
  return prob;
}

inline CspProblem gen_sim5(double w, std::span<const double> phi_list, bool spike,
                           std::mt19937_64& rng, int test_trials = 50, int trial_length = 20) {
  const Sim5Model model = make_sim5_model(w, phi_list, spike, rng);
  return draw_sim5_data(model, rng, test_trials, trial_length);
}

inline constexpr double kSim5PhiDefaults[4] = {0.0, 5.0, 10.0, 90.0};

// ---------------------------------------------------------------------------
// Estimator evaluation
// ---------------------------------------------------------------------------

struct Evaluation {
  std::string estimator;
  double value = 0.0;
  Eigen::VectorXd lambda;
  bool ok = true;
  std::string message;
};

namespace detail {

template <typename F>
void add_eval(std::vector<Evaluation>& out, const std::string& id, F&& f) {
  Evaluation ev;
  ev.estimator = id;
  try {
    auto [value, lambda] = f();
    ev.value = value;
    ev.lambda = std::move(lambda);
  } catch (const std::exception& e) {
    ev.ok = false;
    ev.value = std::numeric_limits<double>::quiet_NaN();
    ev.message = e.what();
  }
  out.push_back(std::move(ev));
}

using EvalResult = std::pair<double, Eigen::VectorXd>;

}  // namespace detail

// Estimators for the plain mean problem (simulation 1): sample mean, STS to
// each target and to the joint target, the pooled mean, MTS and whitened MTS.
inline std::vector<Evaluation> evaluate_mean_problem(const MeanProblem& prob) {
  const auto num_aux = prob.aux.size();
  const Eigen::VectorXd mu = sample_mean(prob.x);
  auto err = [&](const Eigen::VectorXd& est) { return (est - prob.true_mean).squaredNorm(); };
  std::vector<Evaluation> out;
  detail::add_eval(out, "sample", [&]() -> detail::EvalResult { return {err(mu), {}}; });
  for (std::size_t k = 0; k < num_aux; ++k)
    detail::add_eval(out, "sts_aux" + std::to_string(k + 1), [&]() -> detail::EvalResult {
      const MeanShrinkage r = mts_mean(prob.x, std::span<const Dataset>(&prob.aux[k], 1));
      return {err(r.estimate), r.lambda};
    });
  detail::add_eval(out, "sts_joint", [&]() -> detail::EvalResult {
    const Dataset joint = concat(prob.aux, "joint");
    const MeanShrinkage r = mts_mean(prob.x, std::span<const Dataset>(&joint, 1));
    return {err(r.estimate), r.lambda};
  });
  detail::add_eval(out, "pooled", [&]() -> detail::EvalResult {
    Eigen::VectorXd pooled = mu;
    for (const Dataset& d : prob.aux) pooled += sample_mean(d);
    pooled /= static_cast<double>(num_aux + 1);
    return {err(pooled), {}};
  });
  detail::add_eval(out, "mts", [&]() -> detail::EvalResult {
    const MeanShrinkage r = mts_mean(prob.x, prob.aux);
    return {err(r.estimate), r.lambda};
  });
  detail::add_eval(out, "wmts", [&]() -> detail::EvalResult {
    MeanMtsOptions opts;
    opts.whiten = WhitenMode::full();
    const MeanShrinkage r = mts_mean(prob.x, prob.aux, opts);
    return {err(r.estimate), r.lambda};
  });
  return out;
}

// Estimators for the two-class LDA problem (simulation 2). The classifier
// covariance is the average sample covariance over all datasets, independent
// of the mean estimator; lambda records hold [lambda_A; lambda_B].
inline std::vector<Evaluation> evaluate_two_class_mean(const TwoClassMeanProblem& prob) {
  std::vector<Dataset> all{prob.x_a, prob.x_b};
  all.insert(all.end(), prob.aux_a.begin(), prob.aux_a.end());
  all.insert(all.end(), prob.aux_b.begin(), prob.aux_b.end());
  const SymMatrix cov_lda = average_covariance(all);
  auto acc = [&](const Eigen::VectorXd& ma, const Eigen::VectorXd& mb) {
    return lda_accuracy(lda_train(ma, mb, cov_lda), prob.test_a.data, prob.test_b.data);
  };
  const Eigen::VectorXd mu_a = sample_mean(prob.x_a);
  const Eigen::VectorXd mu_b = sample_mean(prob.x_b);
  auto stack = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd out(a.size() + b.size());
    out << a, b;
    return out;
  };
  std::vector<Evaluation> out;
  detail::add_eval(out, "sample", [&]() -> detail::EvalResult { return {acc(mu_a, mu_b), {}}; });
  for (std::size_t k = 0; k < prob.aux_a.size(); ++k)
    detail::add_eval(out, "sts_aux" + std::to_string(k + 1), [&]() -> detail::EvalResult {
      const MeanShrinkage ra = mts_mean(prob.x_a, std::span<const Dataset>(&prob.aux_a[k], 1));
      const MeanShrinkage rb = mts_mean(prob.x_b, std::span<const Dataset>(&prob.aux_b[k], 1));
      return {acc(ra.estimate, rb.estimate), stack(ra.lambda, rb.lambda)};
    });
  detail::add_eval(out, "sts_joint", [&]() -> detail::EvalResult {
    const Dataset joint_a = concat(prob.aux_a, "joint_a");
    const Dataset joint_b = concat(prob.aux_b, "joint_b");
    const MeanShrinkage ra = mts_mean(prob.x_a, std::span<const Dataset>(&joint_a, 1));
    const MeanShrinkage rb = mts_mean(prob.x_b, std::span<const Dataset>(&joint_b, 1));
    return {acc(ra.estimate, rb.estimate), stack(ra.lambda, rb.lambda)};
  });
  detail::add_eval(out, "pooled", [&]() -> detail::EvalResult {
    Eigen::VectorXd pa = mu_a;
    for (const Dataset& d : prob.aux_a) pa += sample_mean(d);
    pa /= static_cast<double>(prob.aux_a.size() + 1);
    Eigen::VectorXd pb = mu_b;
    for (const Dataset& d : prob.aux_b) pb += sample_mean(d);
    pb /= static_cast<double>(prob.aux_b.size() + 1);
    return {acc(pa, pb), {}};
  });
  for (const bool whiten : {false, true})
    detail::add_eval(out, whiten ? "wmts" : "mts", [&]() -> detail::EvalResult {
      MeanMtsOptions opts;
      if (whiten) opts.whiten = WhitenMode::full();
      const MeanShrinkage ra = mts_mean(prob.x_a, prob.aux_a, opts);
      const MeanShrinkage rb = mts_mean(prob.x_b, prob.aux_b, opts);
      return {acc(ra.estimate, rb.estimate), stack(ra.lambda, rb.lambda)};
    });
  return out;
}

// Estimators for the covariance problems (simulations 3 and 4). Simulation 4
// adds the scaled-identity target ahead of the dataset targets and drops the
// joint target (the auxiliary sizes differ). Whitened MTS is omitted: with
// n <= p the sample covariance is rank deficient and no full whitener exists.
inline std::vector<Evaluation> evaluate_cov_problem(const CovProblem& prob,
                                                    bool with_identity_target, bool with_joint) {
  const SymMatrix s = sample_covariance(prob.x);
  auto err = [&](const SymMatrix& est) { return (est.mat() - prob.true_cov.mat()).squaredNorm(); };
  CovMtsOptions opts;
  opts.assume_zero_mean = true;
  std::vector<Evaluation> out;
  detail::add_eval(out, "sample", [&]() -> detail::EvalResult { return {err(s), {}}; });
  if (with_identity_target)
    detail::add_eval(out, "sts_id", [&]() -> detail::EvalResult {
      const std::vector<TargetSpec> spec{TargetSpec::identity_scaled()};
      const CovShrinkage r = mts_cov(prob.x, spec, opts);
      return {err(r.estimate), r.lambda};
    });
  for (std::size_t k = 0; k < prob.aux.size(); ++k)
    detail::add_eval(out, "sts_aux" + std::to_string(k + 1), [&]() -> detail::EvalResult {
      const std::vector<TargetSpec> spec{TargetSpec::aux_dataset(prob.aux[k])};
      const CovShrinkage r = mts_cov(prob.x, spec, opts);
      return {err(r.estimate), r.lambda};
    });
  if (with_joint)
    detail::add_eval(out, "sts_joint", [&]() -> detail::EvalResult {
      const std::vector<TargetSpec> spec{TargetSpec::aux_dataset(concat(prob.aux, "joint"))};
      const CovShrinkage r = mts_cov(prob.x, spec, opts);
      return {err(r.estimate), r.lambda};
    });
  detail::add_eval(out, "pooled", [&]() -> detail::EvalResult {
    Eigen::MatrixXd pooled = s.mat();
    for (const Dataset& d : prob.aux) pooled += sample_covariance(d).mat();
    pooled /= static_cast<double>(prob.aux.size() + 1);
    return {err(SymMatrix(std::move(pooled))), {}};
  });
  detail::add_eval(out, "mts", [&]() -> detail::EvalResult {
    std::vector<TargetSpec> specs;
    if (with_identity_target) specs.push_back(TargetSpec::identity_scaled());
    for (const Dataset& d : prob.aux) specs.push_back(TargetSpec::aux_dataset(d));
    const CovShrinkage r = mts_cov(prob.x, specs, opts);
    return {err(r.estimate), r.lambda};
  });
  return out;
}

// CSP accuracy for one pair of class covariance estimates: filters from the
// estimates, LDA on log-variance features of the training data chopped into
// trials, evaluated on the held-out test trials.
inline double csp_pipeline_accuracy(const SymMatrix& cov_a, const SymMatrix& cov_b,
                                    const CspProblem& prob, int m_per_class, int trial_length) {
  const CspFilters filters = csp_filters(cov_a, cov_b, m_per_class);
  auto features_of = [&](const Dataset& x) {
    const Eigen::Index count = x.samples() / trial_length;
    Eigen::MatrixXd f(filters.filters.cols(), count);
    for (Eigen::Index t = 0; t < count; ++t)
      f.col(t) = csp_features(Dataset(x.data.middleCols(t * trial_length, trial_length)), filters);
    return f;
  };
  const Eigen::MatrixXd fa = features_of(prob.x_a);
  const Eigen::MatrixXd fb = features_of(prob.x_b);
  const Eigen::VectorXd mu_a = fa.rowwise().mean();
  const Eigen::VectorXd mu_b = fb.rowwise().mean();
  const Eigen::MatrixXd ca = fa.colwise() - mu_a;
  const Eigen::MatrixXd cb = fb.colwise() - mu_b;
  const SymMatrix pooled(
      (ca * ca.transpose() + cb * cb.transpose()) / static_cast<double>(fa.cols() + fb.cols()));
  const LdaModel model = lda_train(mu_a, mu_b, pooled);
  Eigen::Index correct = 0;
  for (const Dataset& trial : prob.test_a)
    if (model.predict_a(csp_features(trial, filters))) ++correct;
  for (const Dataset& trial : prob.test_b)
    if (!model.predict_a(csp_features(trial, filters))) ++correct;
  return static_cast<double>(correct) /
         static_cast<double>(prob.test_a.size() + prob.test_b.size());
}

// Estimators for the CSP problem (simulation 5); lambda records hold
// [lambda_A; lambda_B].
inline std::vector<Evaluation> evaluate_csp_problem(const CspProblem& prob, int m_per_class,
                                                    int trial_length) {
  CovMtsOptions opts;
  opts.assume_zero_mean = true;
  auto stack = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    Eigen::VectorXd out(a.size() + b.size());
    out << a, b;
    return out;
  };
  auto acc = [&](const SymMatrix& ca, const SymMatrix& cb) {
    return csp_pipeline_accuracy(ca, cb, prob, m_per_class, trial_length);
  };
  auto shrink_pair = [&](std::span<const Dataset> aux_a, std::span<const Dataset> aux_b,
                         bool whiten) {
    CovMtsOptions o = opts;
    if (whiten) o.whiten = WhitenMode::full();
    std::vector<TargetSpec> specs_a, specs_b;
    for (const Dataset& d : aux_a) specs_a.push_back(TargetSpec::aux_dataset(d));
    for (const Dataset& d : aux_b) specs_b.push_back(TargetSpec::aux_dataset(d));
    const CovShrinkage ra = mts_cov(prob.x_a, specs_a, o);
    const CovShrinkage rb = mts_cov(prob.x_b, specs_b, o);
    return std::tuple{ra.estimate, rb.estimate, stack(ra.lambda, rb.lambda)};
  };
  std::vector<Evaluation> out;
  detail::add_eval(out, "sample", [&]() -> detail::EvalResult {
    return {acc(sample_covariance(prob.x_a), sample_covariance(prob.x_b)), {}};
  });
  for (std::size_t k = 0; k < prob.aux_a.size(); ++k)
    detail::add_eval(out, "sts_aux" + std::to_string(k + 1), [&]() -> detail::EvalResult {
      auto [ca, cb, lam] = shrink_pair(std::span<const Dataset>(&prob.aux_a[k], 1),
                                       std::span<const Dataset>(&prob.aux_b[k], 1), false);
      return {acc(ca, cb), lam};
    });
  detail::add_eval(out, "sts_joint", [&]() -> detail::EvalResult {
    const Dataset joint_a = concat(prob.aux_a, "joint_a");
    const Dataset joint_b = concat(prob.aux_b, "joint_b");
    auto [ca, cb, lam] = shrink_pair(std::span<const Dataset>(&joint_a, 1),
                                     std::span<const Dataset>(&joint_b, 1), false);
    return {acc(ca, cb), lam};
  });
  detail::add_eval(out, "pooled", [&]() -> detail::EvalResult {
    Eigen::MatrixXd pa = sample_covariance(prob.x_a).mat();
    for (const Dataset& d : prob.aux_a) pa += sample_covariance(d).mat();
    pa /= static_cast<double>(prob.aux_a.size() + 1);
    Eigen::MatrixXd pb = sample_covariance(prob.x_b).mat();
    for (const Dataset& d : prob.aux_b) pb += sample_covariance(d).mat();
    pb /= static_cast<double>(prob.aux_b.size() + 1);
    return {acc(SymMatrix(std::move(pa)), SymMatrix(std::move(pb))), {}};
  });
  for (const bool whiten : {false, true})
    detail::add_eval(out, whiten ? "wmts" : "mts", [&]() -> detail::EvalResult {
      auto [ca, cb, lam] = shrink_pair(prob.aux_a, prob.aux_b, whiten);
      return {acc(ca, cb), lam};
    });
  return out;
}

// ---------------------------------------------------------------------------
// Seeded Monte Carlo runner
// ---------------------------------------------------------------------------

namespace detail {

inline std::uint64_t u64(int v) { return static_cast<std::uint64_t>(v); }

template <typename DrawAndEvaluate>
std::vector<RunRecord> repetition_loop(const SimConfig& cfg, int sweep_idx, int model_idx,
                                       DrawAndEvaluate&& draw_and_evaluate) {
  const MetricKind metric =
      scenario_uses_accuracy(cfg.scenario) ? MetricKind::kAccuracy : MetricKind::kSquaredError;
  std::vector<RunRecord> records;
  for (int rep = 0; rep < cfg.reps_noise; ++rep) {
    const std::uint64_t rep_seed =
        derive_seed(cfg.seed, {u64(sweep_idx), u64(model_idx), 1, u64(rep)});
    std::mt19937_64 noise(rep_seed);
    RunRecord base;
    base.sweep_index = sweep_idx;
    base.sweep_value = cfg.sweep[static_cast<std::size_t>(sweep_idx)];
    base.model_index = model_idx;
    base.rep_index = rep;
    base.metric = metric;
    base.seed_used = rep_seed;
    std::vector<Evaluation> evals;
    try {
      evals = draw_and_evaluate(noise);
    } catch (const std::exception& e) {
      RunRecord rec = base;
      rec.estimator = "(generation)";
      rec.value = std::numeric_limits<double>::quiet_NaN();
      rec.ok = false;
      rec.message = e.what();
      records.push_back(std::move(rec));
      continue;
    }
    for (Evaluation& ev : evals) {
      RunRecord rec = base;
      rec.estimator = std::move(ev.estimator);
      rec.value = ev.value;
      rec.lambda = std::move(ev.lambda);
      rec.ok = ev.ok;
      rec.message = std::move(ev.message);
      records.push_back(std::move(rec));
    }
  }
  return records;
}

inline std::vector<RunRecord> run_task(const SimConfig& cfg, int sweep_idx, int model_idx) {
  std::mt19937_64 model_rng =
      seeded_rng(cfg.seed, {u64(sweep_idx), u64(model_idx), 0});
  const double sweep_value = cfg.sweep[static_cast<std::size_t>(sweep_idx)];
  switch (cfg.scenario) {
    case Scenario::kSim1MeanLdl:
    case Scenario::kSim1MeanFoldl: {
      const Regime regime =
          cfg.scenario == Scenario::kSim1MeanLdl ? Regime::kLdl : Regime::kFoldl;
      const Sim1Model model = make_sim1_model(static_cast<int>(sweep_value), regime, model_rng);
      return repetition_loop(cfg, sweep_idx, model_idx, [&](std::mt19937_64& noise) {
        return evaluate_mean_problem(draw_sim1_data(model, noise));
      });
    }
    case Scenario::kSim2Lda: {
      const Sim2Model model = make_sim2_model(sweep_value, cfg.spike, model_rng);
      return repetition_loop(cfg, sweep_idx, model_idx, [&](std::mt19937_64& noise) {
        return evaluate_two_class_mean(draw_sim2_data(model, noise, cfg.test_samples));
      });
    }
    case Scenario::kSim3CovLdl:
    case Scenario::kSim3CovFoldl: {
      const Regime regime =
          cfg.scenario == Scenario::kSim3CovLdl ? Regime::kLdl : Regime::kFoldl;
      const Sim3Model model = make_sim3_model(static_cast<int>(sweep_value), regime);
      return repetition_loop(cfg, sweep_idx, model_idx, [&](std::mt19937_64& noise) {
        return evaluate_cov_problem(draw_sim3_data(model, noise), false, true);
      });
    }
    case Scenario::kSim4CovTargets: {
      const Sim4Model model = make_sim4_model(cfg.p, sweep_value, model_rng);
      return repetition_loop(cfg, sweep_idx, model_idx, [&](std::mt19937_64& noise) {
        return evaluate_cov_problem(draw_sim4_data(model, noise), true, false);
      });
    }
    case Scenario::kSim5Csp: {
      const Sim5Model model = make_sim5_model(
          sweep_value, std::span<const double>(kSim5PhiDefaults, 4), cfg.spike, model_rng);
      return repetition_loop(cfg, sweep_idx, model_idx, [&](std::mt19937_64& noise) {
        return evaluate_csp_problem(draw_sim5_data(model, noise, cfg.test_trials, cfg.trial_length),
                                    cfg.m_per_class, cfg.trial_length);
      });
    }
  }
  throw std::logic_error("run_task: unknown scenario");
}

}  // namespace detail

// Runs every (sweep point, model, repetition) cell and returns the records in
// a canonical order. RNG streams are keyed by indices, so the output is
// independent of the worker count.
inline std::vector<RunRecord> run_monte_carlo(
    const SimConfig& cfg, int workers = 1,
    const std::function<void(int, int)>& progress = {}) {
  cfg.validate();
  const int sweeps = static_cast<int>(cfg.sweep.size());
  const int tasks = sweeps * cfg.reps_model;
  std::vector<std::vector<RunRecord>> per_task(static_cast<std::size_t>(tasks));

  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  auto work = [&] {
    for (int t = next.fetch_add(1); t < tasks; t = next.fetch_add(1)) {
      const int sweep_idx = t / cfg.reps_model;
      const int model_idx = t % cfg.reps_model;
      per_task[static_cast<std::size_t>(t)] = detail::run_task(cfg, sweep_idx, model_idx);
      const int finished = done.fetch_add(1) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mutex);
        progress(finished, tasks);
      }
    }
  };

  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    const int count = std::min(workers, tasks);
    pool.reserve(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  std::vector<RunRecord> records;
  for (auto& chunk : per_task)
    for (auto& rec : chunk) records.push_back(std::move(rec));
  return records;
}

}  // namespace mts
