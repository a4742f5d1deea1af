// itr: fit, evaluate and benchmark interpretable treatment regimes.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "itr/config.hpp"
#include "itr/format.hpp"
#include "itr/pipeline.hpp"
#include "itr/sim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string data;
  std::string config;
  std::string out;
  std::string policy;
  std::optional<std::uint64_t> seed;
};

itr::RunConfig load_config(const Options& opt) {
  itr::RunConfig cfg = opt.config.empty() ? itr::default_run_config() : itr::load_run_config(opt.config);
  if (opt.seed) itr::override_seed(cfg, *opt.seed);
  return cfg;
}

fs::path prepare_out(const std::string& out) {
  itr::require(!out.empty(), "--out is required");
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw itr::InputError("cannot create output directory '" + out + "': " + ec.message());
  return fs::path(out);
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream file(path, std::ios::binary);
  if (!file) throw itr::InputError("cannot write '" + path.string() + "'");
  file << text;
}

json read_json(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw itr::InputError("cannot open '" + path + "'");
  try {
    return json::parse(file);
  } catch (const json::exception& e) {
    throw itr::InputError("'" + path + "' is not valid JSON: " + e.what());
  }
}

// Keeps only the policy's variables, in the policy's order.
itr::Dataset align_to_policy(const itr::Dataset& data, const itr::Policy& policy) {
  itr::Dataset out;
  out.treatment = data.treatment;
  out.outcome = data.outcome;
  out.names = policy.names;
  out.covariates.resize(data.n(), static_cast<itr::Index>(policy.names.size()));
  for (std::size_t j = 0; j < policy.names.size(); ++j) {
    const itr::Index col = data.column(policy.names[j]);
    itr::require(col >= 0, "missing column '" + policy.names[j] + "' required by the policy");
    out.covariates.col(static_cast<itr::Index>(j)) = data.covariates.col(col);
  }
  return out;
}

// Outcome/treatment columns: config first, then what the policy recorded.
void table_from_policy(itr::RunConfig& cfg, const json& policy, bool config_given) {
  if (config_given) return;
  cfg.table.outcome = policy.value("outcome", cfg.table.outcome);
  cfg.table.treatment = policy.value("treatment", cfg.table.treatment);
  cfg.table.exclude = policy.value("drop", cfg.table.exclude);
  cfg.pipeline.excluded = policy.value("exclude", cfg.pipeline.excluded);
}

class Log {
 public:
  void line(const std::string& text) {
    std::cerr << text << '\n';
    buffer_ << text << '\n';
  }
  std::string str() const { return buffer_.str(); }

 private:
  std::ostringstream buffer_;
};

std::string join(const std::vector<std::string>& items) {
  std::string out;
  for (const auto& item : items) out += (out.empty() ? "" : ",") + item;
  return out.empty() ? "(none)" : out;
}

int cmd_fit(const Options& opt) {
  itr::RunConfig cfg = load_config(opt);
  itr::require(!opt.data.empty(), "--data is required");
  const itr::Dataset data = itr::load_table(opt.data, cfg.table);
  const fs::path out = prepare_out(opt.out);

  Log log;
  log.line("config_hash " + cfg.hash());
  log.line("rows " + std::to_string(data.n()) + " covariates " + std::to_string(data.p()) +
           " treated " + std::to_string(data.treated()));
  log.line("loss " + itr::to_string(cfg.pipeline.loss) + " folds " +
           std::to_string(cfg.pipeline.folds) + " lambdas " +
           std::to_string(cfg.pipeline.lambdas.size()));
  const itr::RunResult run = itr::run_pipeline(data, cfg.pipeline);
  for (const auto& w : run.cv.warnings) log.line("warning " + w);
  log.line("lambda_min " + itr::format_number(run.cv.lambda_min) + " lambda_1se " +
           itr::format_number(run.cv.lambda_1se) + " selected_rule " +
           itr::to_string(cfg.pipeline.lambda_rule));
  const itr::Policy& policy = run.full.policy;
  std::vector<std::string> selected;
  for (itr::Index j : policy.selected) selected.push_back(policy.names[j]);
  log.line("selected " + join(selected));
  if (policy.trivial) log.line("warning every slope was pruned; the policy is intercept-only");
  itr::FitDiagnostics diag = run.cv.diagnostics;
  diag.merge(policy.diagnostics);
  log.line("fits " + std::to_string(diag.fits) + " nonconverged " +
           std::to_string(diag.nonconverged) + " descent_violations " +
           std::to_string(diag.descent_violations));

  json pj = itr::to_json(policy);
  pj["outcome"] = cfg.table.outcome;
  pj["treatment"] = cfg.table.treatment;
  pj["drop"] = cfg.table.exclude;
  pj["exclude"] = cfg.pipeline.excluded;
  pj["config_hash"] = cfg.hash();
  write_file(out / "policy.json", pj.dump(2) + "\n");
  std::ostringstream cv;
  itr::write_cv_csv(cv, run.cv);
  write_file(out / "cv_path.csv", cv.str());
  write_file(out / "fit.log", log.str());
  return 0;
}

int cmd_complementary(const Options& opt) {
  itr::RunConfig cfg = load_config(opt);
  itr::require(!opt.data.empty(), "--data is required");
  itr::require(!opt.policy.empty(), "--policy is required");
  const json pj = read_json(opt.policy);
  const itr::Policy policy = itr::policy_from_json(pj);
  table_from_policy(cfg, pj, !opt.config.empty());
  const itr::Dataset data = align_to_policy(itr::load_table(opt.data, cfg.table), policy);
  const fs::path out = prepare_out(opt.out);
  itr::PipelineConfig pipeline = cfg.pipeline;
  pipeline.loss = policy.loss_kind;
  const itr::NormalizedDataset nd = itr::normalize(data);
  const itr::NuisanceStage stage = itr::fit_nuisance_full(nd, pipeline);
  const itr::ValueCurve curve = itr::complementary_analysis(
      nd, stage.nuisance, stage.contrast, policy.eta_full, pipeline.excluded, pipeline);
  std::ostringstream csv;
  itr::write_value_curve_csv(csv, curve);
  write_file(out / "value_curve.csv", csv.str());
  std::cerr << "value curve with " << curve.k.size() << " rows written to "
            << (out / "value_curve.csv").string() << '\n';
  return 0;
}

int cmd_evaluate(const Options& opt) {
  itr::RunConfig cfg = load_config(opt);
  itr::require(!opt.data.empty(), "--data is required");
  itr::require(!opt.policy.empty(), "--policy is required");
  const json pj = read_json(opt.policy);
  const itr::Policy policy = itr::policy_from_json(pj);
  table_from_policy(cfg, pj, !opt.config.empty());

  const itr::Dataset data = itr::load_table(opt.data, cfg.table);
  const itr::BinaryVector d = itr::predict(policy, data.covariates, data.names);
  const itr::NormalizedDataset nd = itr::normalize(data);
  const itr::NuisanceStage stage = itr::fit_nuisance_full(nd, cfg.pipeline);
  const itr::ValueEstimate v = itr::estimate_value_aipw(data, stage.nuisance, d);
  const json result{{"value", v.value},
                    {"variance", v.variance},
                    {"se", v.se()},
                    {"ci_lo", v.ci_lower()},
                    {"ci_hi", v.ci_upper()},
                    {"n", data.n()},
                    {"n_assigned_treatment", d.sum()}};
  std::cout << result.dump(2) << '\n';
  if (!opt.out.empty()) write_file(prepare_out(opt.out) / "evaluation.json", result.dump(2) + "\n");
  return 0;
}

int cmd_simulate(const Options& opt) {
  const itr::RunConfig cfg = load_config(opt);
  const fs::path out = prepare_out(opt.out);
  const itr::BenchmarkResult result = itr::run_benchmark(cfg.benchmark);
  for (const auto& failure : result.failures) std::cerr << "warning " << failure << '\n';

  std::ostringstream csv;
  itr::write_benchmark_csv(csv, result);
  write_file(out / "benchmark.csv", csv.str());
  json summary = itr::benchmark_summary(result, cfg.benchmark);
  summary["config_hash"] = cfg.hash();
  summary["seed"] = cfg.benchmark.dgp.seed;
  write_file(out / "summary.json", summary.dump(2) + "\n");
  std::cerr << result.rows.size() << " of " << result.reps << " replications completed\n";
  if (result.rows.empty()) throw itr::NumericalError("every replication failed");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Interpretable individualized treatment regimes"};
  app.require_subcommand(1);
  Options opt;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "JSON run configuration")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "overrides the configured seed");
  };

  CLI::App* fit = app.add_subcommand("fit", "cross-validate, fit, prune and refit a policy");
  fit->add_option("--data", opt.data, "delimited data file with a header row")->required();
  fit->add_option("--out", opt.out, "output directory")->required();
  add_common(fit);

  CLI::App* evaluate = app.add_subcommand("evaluate", "AIPW value of a stored policy");
  evaluate->add_option("--data", opt.data, "delimited data file with a header row")->required();
  evaluate->add_option("--policy", opt.policy, "policy.json from fit")->required();
  evaluate->add_option("--out", opt.out, "optional directory for evaluation.json");
  add_common(evaluate);

  CLI::App* complementary =
      app.add_subcommand("complementary", "value curve over the top-k ranked variables");
  complementary->add_option("--data", opt.data, "delimited data file with a header row")->required();
  complementary->add_option("--policy", opt.policy, "policy.json from fit")->required();
  complementary->add_option("--out", opt.out, "output directory")->required();
  add_common(complementary);

  CLI::App* simulate = app.add_subcommand("simulate", "simulation benchmark with oracle scoring");
  simulate->add_option("--out", opt.out, "output directory")->required();
  add_common(simulate);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (*fit) return cmd_fit(opt);
    if (*evaluate) return cmd_evaluate(opt);
    if (*complementary) return cmd_complementary(opt);
    if (*simulate) return cmd_simulate(opt);
  } catch (const itr::InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
