// Command-line front end: mean/covariance multi-target shrinkage on CSV
// datasets and seeded Monte Carlo simulation sweeps.

#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mts/mts.hpp"

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitBadInput = 2;

namespace fs = std::filesystem;
using nlohmann::json;

// Outputs are written to a temporary sibling and renamed so that a failure
// never leaves a truncated file behind.
void write_file_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out << content;
    if (!out.good()) throw std::runtime_error("failed writing '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

json vector_to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

std::optional<mts::WhitenMode> parse_whiten_flag(const std::string& value) {
  if (value.empty() || value == "none") return std::nullopt;
  if (value == "full") return mts::WhitenMode::full();
  if (value == "partial") return mts::WhitenMode::partial(5);
  if (value.rfind("partial:", 0) == 0) {
    const int k = std::stoi(value.substr(8));
    return mts::WhitenMode::partial(k);
  }
  throw CLI::ValidationError("--whiten", "expected none, full, partial or partial:<k>");
}

mts::Dataset load_input(const std::string& path) { return mts::load_dataset_csv(path); }

void check_dims(const mts::Dataset& primary, const mts::Dataset& other, const std::string& path) {
  if (other.dims() != primary.dims())
    throw CLI::ValidationError(
        "dimension mismatch", "'" + path + "' has " + std::to_string(other.dims()) +
                                  " dimensions (columns), expected " +
                                  std::to_string(primary.dims()));
}

void emit(const json& doc, const std::string& output_path) {
  const std::string text = doc.dump(2) + "\n";
  if (output_path.empty())
    std::cout << text;
  else
    write_file_atomic(output_path, text);
}

struct EstimateMeanArgs {
  std::string input;
  std::vector<std::string> aux;
  std::string whiten;
  std::string whiten_cov;
  std::string output;
  bool no_weight_constraint = false;
};

int run_estimate_mean(const EstimateMeanArgs& args) {
  const mts::Dataset primary = load_input(args.input);
  std::vector<mts::Dataset> aux;
  for (const std::string& path : args.aux) {
    aux.push_back(load_input(path));
    check_dims(primary, aux.back(), path);
  }
  mts::MeanMtsOptions opts;
  opts.weight_constraint = !args.no_weight_constraint;
  opts.whiten = parse_whiten_flag(args.whiten);
  if (!args.whiten_cov.empty()) {
    const mts::Dataset cov_source = load_input(args.whiten_cov);
    if (cov_source.data.rows() != cov_source.data.cols() ||
        cov_source.data.rows() != primary.dims())
      throw CLI::ValidationError("--whiten-cov", "'" + args.whiten_cov + "' must hold a " +
                                                     std::to_string(primary.dims()) + "x" +
                                                     std::to_string(primary.dims()) + " matrix");
    opts.covariance_for_whitening = mts::SymMatrix(cov_source.data);
  }
  const mts::MeanShrinkage result = mts::mts_mean(primary, aux, opts);
  json doc;
  doc["schema_version"] = 1;
  doc["command"] = "estimate-mean";
  doc["estimate"] = vector_to_json(result.estimate);
  doc["lambda"] = vector_to_json(result.lambda);
  doc["A_hat"] = matrix_to_json(result.a_hat.mat());
  doc["b_hat"] = vector_to_json(result.b_hat);
  doc["objective"] = result.objective;
  emit(doc, args.output);
  return 0;
}

struct EstimateCovArgs {
  std::string input;
  std::vector<std::string> targets;
  std::string whiten;
  std::string output;
  bool assume_zero_mean = false;
  bool dump_targets = false;
};

int run_estimate_cov(const EstimateCovArgs& args) {
  const mts::Dataset primary = load_input(args.input);
  std::vector<mts::TargetSpec> specs;
  for (const std::string& t : args.targets) {
    if (t == "identity") {
      specs.push_back(mts::TargetSpec::identity_scaled());
    } else if (t == "diag") {
      specs.push_back(mts::TargetSpec::diagonal());
    } else if (t == "const-corr") {
      specs.push_back(mts::TargetSpec::const_corr());
    } else if (t.rfind("aux:", 0) == 0) {
      const std::string path = t.substr(4);
      mts::Dataset aux = load_input(path);
      check_dims(primary, aux, path);
      specs.push_back(mts::TargetSpec::aux_dataset(std::move(aux)));
    } else {
      throw CLI::ValidationError("--target",
                                 "unknown target '" + t +
                                     "'; expected identity, diag, const-corr or aux:<path>");
    }
  }
  mts::CovMtsOptions opts;
  opts.whiten = parse_whiten_flag(args.whiten);
  opts.assume_zero_mean = args.assume_zero_mean;
  const mts::CovShrinkage result = mts::mts_cov(primary, specs, opts);
  json doc;
  doc["schema_version"] = 1;
  doc["command"] = "estimate-cov";
  doc["estimate"] = matrix_to_json(result.estimate.mat());
  doc["lambda"] = vector_to_json(result.lambda);
  doc["A_hat"] = matrix_to_json(result.a_hat.mat());
  doc["b_hat"] = vector_to_json(result.b_hat);
  doc["objective"] = result.objective;
  if (args.dump_targets) {
    json targets = json::array();
    for (std::size_t i = 0; i < result.targets.size(); ++i) {
      json entry;
      entry["kind"] = specs[i].name();
      entry["matrix"] = matrix_to_json(result.targets[i].mat());
      targets.push_back(std::move(entry));
    }
    doc["targets"] = std::move(targets);
  }
  emit(doc, args.output);
  return 0;
}

struct SimulateArgs {
  std::string config;
  std::string records_path;
  std::string summary_path;
  int workers = 0;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

int run_simulate(const SimulateArgs& args) {
  std::ifstream in(args.config);
  if (!in) throw std::runtime_error("cannot open config file '" + args.config + "'");
  json config_json = json::parse(in);
  const bool config_has_seed = config_json.contains("seed");
  mts::SimConfig cfg = mts::sim_config_from_json(config_json);
  if (args.seed) {
    cfg.seed = *args.seed;
  } else if (!config_has_seed) {
    std::random_device rd;
    cfg.seed = (static_cast<std::uint64_t>(rd()) << 32) ^ rd();
  }
  std::cerr << "seed: " << cfg.seed << "\n";

  int workers = args.workers;
  if (workers <= 0) {
    if (const char* env = std::getenv("MTS_WORKERS")) workers = std::atoi(env);
    if (workers <= 0) workers = static_cast<int>(std::thread::hardware_concurrency());
    if (workers <= 0) workers = 1;
  }

  auto progress = [&](int done, int total) {
    if (args.quiet) return;
    if (done == total || done % std::max(1, total / 20) == 0)
      std::cerr << "progress: " << done << "/" << total << " tasks\n";
  };
  const std::vector<mts::RunRecord> records = mts::run_monte_carlo(cfg, workers, progress);

  if (!args.records_path.empty())
    write_file_atomic(args.records_path, mts::records_to_csv(records, cfg.scenario));
  if (!args.summary_path.empty()) {
    json summary = mts::summary_to_json(mts::summarize(cfg.scenario, records));
    summary["seed"] = cfg.seed;
    write_file_atomic(args.summary_path, summary.dump(2) + "\n");
  }
  if (args.records_path.empty() && args.summary_path.empty())
    std::cout << mts::summary_to_json(mts::summarize(cfg.scenario, records)).dump(2) << "\n";
  return 0;
}

int run_targets_list() {
  std::cout << "identity     scaled identity: (trace(S)/p) * I\n"
            << "diag         diagonal of the sample covariance\n"
            << "const-corr   constant-correlation matrix built from S\n"
            << "aux:<path>   sample covariance of the dataset in <path>\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-target shrinkage estimation of means and covariance matrices"};
  app.require_subcommand(1);

  EstimateMeanArgs mean_args;
  CLI::App* mean_cmd =
      app.add_subcommand("estimate-mean", "Shrink a sample mean toward auxiliary dataset means");
  mean_cmd->add_option("-i,--input", mean_args.input, "Primary dataset CSV")->required();
  mean_cmd->add_option("-a,--aux", mean_args.aux, "Auxiliary dataset CSV (repeatable)")
      ->required();
  mean_cmd->add_flag("--no-weight-constraint", mean_args.no_weight_constraint,
                     "Drop the per-data-point weight constraint");
  mean_cmd->add_option("--whiten", mean_args.whiten,
                       "Whiten intensity estimation: none, full, partial or partial:<k>");
  mean_cmd->add_option("--whiten-cov", mean_args.whiten_cov,
                       "CSV holding the covariance used for whitening");
  mean_cmd->add_option("-o,--output", mean_args.output, "Output JSON path (default: stdout)");

  EstimateCovArgs cov_args;
  CLI::App* cov_cmd =
      app.add_subcommand("estimate-cov", "Shrink a sample covariance toward target matrices");
  cov_cmd->add_option("-i,--input", cov_args.input, "Primary dataset CSV")->required();
  cov_cmd
      ->add_option("-t,--target", cov_args.targets,
                   "Target: identity, diag, const-corr or aux:<path> (repeatable)")
      ->required();
  cov_cmd->add_option("--whiten", cov_args.whiten,
                      "Whiten intensity estimation: none, full, partial or partial:<k>");
  cov_cmd->add_flag("--assume-zero-mean", cov_args.assume_zero_mean,
                    "Skip centering in the variance-of-covariance moments");
  cov_cmd->add_flag("--dump-targets", cov_args.dump_targets,
                    "Include the built target matrices in the output");
  cov_cmd->add_option("-o,--output", cov_args.output, "Output JSON path (default: stdout)");

  SimulateArgs sim_args;
  CLI::App* sim_cmd = app.add_subcommand("simulate", "Run a Monte Carlo sweep from a JSON config");
  sim_cmd->add_option("-c,--config", sim_args.config, "Simulation config JSON")->required();
  sim_cmd->add_option("-r,--records", sim_args.records_path, "Records CSV output path");
  sim_cmd->add_option("-s,--summary", sim_args.summary_path, "Summary JSON output path");
  sim_cmd->add_option("-w,--workers", sim_args.workers,
                      "Worker threads (default: MTS_WORKERS or hardware)");
  std::uint64_t seed_flag = 0;
  CLI::Option* seed_opt =
      sim_cmd->add_option("--seed", seed_flag, "Seed override (omit for a random printed seed)");
  sim_cmd->add_flag("-q,--quiet", sim_args.quiet, "Suppress progress output");

  CLI::App* targets_cmd = app.add_subcommand("targets-list", "List available covariance targets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (mean_cmd->parsed()) return run_estimate_mean(mean_args);
    if (cov_cmd->parsed()) return run_estimate_cov(cov_args);
    if (sim_cmd->parsed()) {
      if (seed_opt->count() > 0) sim_args.seed = seed_flag;
      return run_simulate(sim_args);
    }
    if (targets_cmd->parsed()) return run_targets_list();
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitBadInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitFailure;
}
