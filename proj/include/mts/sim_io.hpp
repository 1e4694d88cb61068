#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mts/metrics.hpp"
#include "mts/simulation.hpp"

namespace mts {

// Shortest round-trip decimal representation.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  (void)ec;
  return std::string(buf, ptr);
}

inline std::string format_lambda(const Eigen::VectorXd& lambda) {
  std::string out;
  for (Eigen::Index i = 0; i < lambda.size(); ++i) {
    if (i) out += ';';
    out += format_double(lambda(i));
  }
  return out;
}

inline std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  out += '"';
  return out;
}

inline constexpr const char* kRecordsCsvHeader =
    "scenario,sweep_index,sweep_value,model_index,rep_index,estimator,metric,value,lambda,"
    "seed_used,status,message";

// One RunRecord per line; lambda components joined by ';'.
inline void write_records_csv(std::span<const RunRecord> records, Scenario scenario,
                              std::ostream& out) {
  out << kRecordsCsvHeader << '\n';
  const std::string name = scenario_name(scenario);
  for (const RunRecord& r : records) {
    out << name << ',' << r.sweep_index << ',' << format_double(r.sweep_value) << ','
        << r.model_index << ',' << r.rep_index << ',' << r.estimator << ','
        << metric_name(r.metric) << ',' << (r.ok ? format_double(r.value) : std::string{}) << ','
        << format_lambda(r.lambda) << ',' << r.seed_used << ',' << (r.ok ? "ok" : "failed") << ','
        << csv_escape(r.message) << '\n';
  }
}

inline std::string records_to_csv(std::span<const RunRecord> records, Scenario scenario) {
  std::ostringstream out;
  write_records_csv(records, scenario, out);
  return out.str();
}

// Per (sweep point, estimator) aggregate of the records.
struct EstimatorSummary {
  int n_ok = 0;
  int n_failed = 0;
  MetricKind metric = MetricKind::kSquaredError;
  double mean = 0.0;
  double se = 0.0;
  std::vector<double> lambda_mean;
  std::vector<double> lambda_se;
  // PRIAL (squared-error scenarios) or accuracy gain (accuracy scenarios)
  // versus the sample estimator, with a paired-repetition standard error.
  double vs_sample_mean = 0.0;
  double vs_sample_se = 0.0;
  bool has_vs_sample = false;
};

struct SweepSummary {
  double sweep_value = 0.0;
  std::map<std::string, EstimatorSummary> estimators;
};

struct SimSummary {
  Scenario scenario;
  std::vector<SweepSummary> sweeps;
};

inline SimSummary summarize(Scenario scenario, std::span<const RunRecord> records) {
  SimSummary summary{scenario, {}};
  std::map<int, double> sweep_values;
  for (const RunRecord& r : records) sweep_values[r.sweep_index] = r.sweep_value;
  for (const auto& [sweep_idx, sweep_value] : sweep_values) {
    SweepSummary sweep;
    sweep.sweep_value = sweep_value;
    std::map<std::string, std::vector<const RunRecord*>> by_estimator;
    std::map<std::pair<int, int>, double> sample_value;  // (model, rep) -> sample metric
    for (const RunRecord& r : records) {
      if (r.sweep_index != sweep_idx) continue;
      by_estimator[r.estimator].push_back(&r);
      if (r.estimator == "sample" && r.ok) sample_value[{r.model_index, r.rep_index}] = r.value;
    }
    for (const auto& [id, recs] : by_estimator) {
      EstimatorSummary est;
      std::vector<double> values;
      std::vector<std::vector<double>> lambda_cols;
      for (const RunRecord* r : recs) {
        est.metric = r->metric;
        if (!r->ok) {
          ++est.n_failed;
          continue;
        }
        ++est.n_ok;
        values.push_back(r->value);
        if (r->lambda.size() > 0) {
          lambda_cols.resize(static_cast<std::size_t>(r->lambda.size()));
          for (Eigen::Index i = 0; i < r->lambda.size(); ++i)
            lambda_cols[static_cast<std::size_t>(i)].push_back(r->lambda(i));
        }
      }
      if (!values.empty()) {
        est.mean = mean_of(values);
        est.se = standard_error(values);
      }
      for (const auto& col : lambda_cols) {
        est.lambda_mean.push_back(col.empty() ? 0.0 : mean_of(col));
        est.lambda_se.push_back(col.empty() ? 0.0 : standard_error(col));
      }
      if (id != "sample" && !sample_value.empty()) {
        // paired differences against the sample estimator
        std::vector<double> paired_est, paired_sample;
        for (const RunRecord* r : recs) {
          if (!r->ok) continue;
          auto it = sample_value.find({r->model_index, r->rep_index});
          if (it == sample_value.end()) continue;
          paired_est.push_back(r->value);
          paired_sample.push_back(it->second);
        }
        if (!paired_est.empty()) {
          est.has_vs_sample = true;
          if (est.metric == MetricKind::kSquaredError) {
            const double ms = mean_of(paired_sample);
            if (ms != 0.0) {
              est.vs_sample_mean = prial(paired_sample, paired_est);
              std::vector<double> diffs(paired_est.size());
              for (std::size_t i = 0; i < paired_est.size(); ++i)
                diffs[i] = 100.0 * (paired_sample[i] - paired_est[i]) / ms;
              est.vs_sample_se = standard_error(diffs);
            } else {
              est.has_vs_sample = false;
            }
          } else {
            std::vector<double> gains(paired_est.size());
            for (std::size_t i = 0; i < paired_est.size(); ++i)
              gains[i] = paired_est[i] - paired_sample[i];
            est.vs_sample_mean = mean_of(gains);
            est.vs_sample_se = standard_error(gains);
          }
        }
      }
      sweep.estimators[id] = std::move(est);
    }
    summary.sweeps.push_back(std::move(sweep));
  }
  return summary;
}

inline nlohmann::json summary_to_json(const SimSummary& summary) {
  nlohmann::json out;
  out["schema_version"] = 1;
  out["scenario"] = scenario_name(summary.scenario);
  nlohmann::json sweeps = nlohmann::json::array();
  for (const SweepSummary& sweep : summary.sweeps) {
    nlohmann::json entry;
    entry["sweep_value"] = sweep.sweep_value;
    nlohmann::json estimators;
    for (const auto& [id, est] : sweep.estimators) {
      nlohmann::json e;
      e["n_ok"] = est.n_ok;
      e["n_failed"] = est.n_failed;
      e["metric"] = metric_name(est.metric);
      e["mean"] = est.mean;
      e["se"] = est.se;
      if (!est.lambda_mean.empty()) {
        e["lambda_mean"] = est.lambda_mean;
        e["lambda_se"] = est.lambda_se;
      }
      if (est.has_vs_sample) {
        const char* key =
            est.metric == MetricKind::kSquaredError ? "prial_vs_sample" : "accuracy_gain_vs_sample";
        e[key] = est.vs_sample_mean;
        e[std::string(key) + "_se"] = est.vs_sample_se;
      }
      estimators[id] = std::move(e);
    }
    entry["estimators"] = std::move(estimators);
    sweeps.push_back(std::move(entry));
  }
  out["sweep"] = std::move(sweeps);
  return out;
}

// SimConfig <-> JSON for the CLI `simulate` command.
inline SimConfig sim_config_from_json(const nlohmann::json& j) {
  SimConfig cfg;
  if (!j.contains("scenario")) throw std::invalid_argument("sim config: missing 'scenario'");
  cfg.scenario = parse_scenario(j.at("scenario").get<std::string>());
  if (!j.contains("sweep")) throw std::invalid_argument("sim config: missing 'sweep'");
  cfg.sweep = j.at("sweep").get<std::vector<double>>();
  cfg.reps_model = j.value("reps_model", cfg.reps_model);
  cfg.reps_noise = j.value("reps_noise", cfg.reps_noise);
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  cfg.spike = j.value("spike", cfg.spike);
  cfg.p = j.value("p", cfg.p);
  cfg.m_per_class = j.value("m_per_class", cfg.m_per_class);
  cfg.test_samples = j.value("test_samples", cfg.test_samples);
  cfg.test_trials = j.value("test_trials", cfg.test_trials);
  cfg.trial_length = j.value("trial_length", cfg.trial_length);
  cfg.validate();
  return cfg;
}

}  // namespace mts
