#include "itr/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "itr/format.hpp"

namespace itr {

namespace {

using nlohmann::json;

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& where) {
  require(obj.is_object(), where + " must be a JSON object");
  for (const auto& item : obj.items()) {
    require(allowed.count(item.key()) > 0, "unknown config key '" + where + item.key() + "'");
  }
}

template <class T>
void read(const json& obj, const char* key, T& target, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    target = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError("config key '" + where + key + "' has the wrong type");
  }
}

Vector read_vector(const json& obj, const char* key, const std::string& where) {
  std::vector<double> values;
  read(obj, key, values, where);
  return Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size()));
}

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

RunConfig default_run_config() {
  RunConfig cfg;
  cfg.pipeline.lambdas = lambda_grid(1e-4, 10.0, 20, true);
  cfg.pipeline.prune_frac = kFitPruneFrac;
  cfg.benchmark.pipeline = cfg.pipeline;
  cfg.benchmark.pipeline.prune_frac = kSimulationPruneFrac;
  return cfg;
}

RunConfig parse_run_config(const json& j) {
  RunConfig cfg = default_run_config();
  cfg.source = j;
  reject_unknown(j,
                 {"data", "folds", "lambda_grid", "loss", "gamma", "penalize_intercept",
                  "prune_frac", "max_variables", "lambda_rule", "clip", "solver", "irls", "seed",
                  "exclude", "threads", "simulation"},
                 "");
  PipelineConfig& p = cfg.pipeline;

  if (j.contains("data")) {
    const json& d = j.at("data");
    reject_unknown(d, {"outcome", "treatment", "drop", "delimiter"}, "data.");
    read(d, "outcome", cfg.table.outcome, "data.");
    read(d, "treatment", cfg.table.treatment, "data.");
    read(d, "drop", cfg.table.exclude, "data.");
    std::string delimiter(1, cfg.table.delimiter);
    read(d, "delimiter", delimiter, "data.");
    if (delimiter == "\\t" || delimiter == "tab") delimiter = "\t";
    require(delimiter.size() == 1, "data.delimiter must be a single character");
    cfg.table.delimiter = delimiter[0];
  }

  read(j, "folds", p.folds, "");
  if (j.contains("lambda_grid")) {
    const json& g = j.at("lambda_grid");
    if (g.is_array()) {
      read(j, "lambda_grid", p.lambdas, "");
    } else {
      reject_unknown(g, {"min", "max", "length", "geometric"}, "lambda_grid.");
      double lo = 1e-4, hi = 10.0;
      int length = 20;
      bool geometric = true;
      read(g, "min", lo, "lambda_grid.");
      read(g, "max", hi, "lambda_grid.");
      read(g, "length", length, "lambda_grid.");
      read(g, "geometric", geometric, "lambda_grid.");
      p.lambdas = lambda_grid(lo, hi, length, geometric);
    }
  }
  std::string loss = to_string(p.loss);
  read(j, "loss", loss, "");
  p.loss = loss_kind_from_string(loss);
  read(j, "gamma", p.gamma, "");
  read(j, "penalize_intercept", p.penalize_intercept, "");
  if (j.contains("prune_frac")) {
    read(j, "prune_frac", p.prune_frac, "");
    cfg.prune_frac_set = true;
  }
  read(j, "max_variables", p.max_variables, "");
  std::string rule = to_string(p.lambda_rule);
  read(j, "lambda_rule", rule, "");
  p.lambda_rule = lambda_rule_from_string(rule);
  if (j.contains("clip")) {
    const json& c = j.at("clip");
    reject_unknown(c, {"lower", "upper"}, "clip.");
    read(c, "lower", p.clip.lower, "clip.");
    read(c, "upper", p.clip.upper, "clip.");
  }
  if (j.contains("solver")) {
    const json& s = j.at("solver");
    reject_unknown(s,
                   {"tol", "max_outer_iter", "max_inner_iter", "max_newton_iter", "inner_tol",
                    "inner_solver", "stop_rule", "seed", "accelerate", "hinge_mu_start",
                    "hinge_mu_min"},
                   "solver.");
    read(s, "tol", p.solver.tol, "solver.");
    read(s, "max_outer_iter", p.solver.max_outer_iter, "solver.");
    read(s, "max_inner_iter", p.solver.max_inner_iter, "solver.");
    read(s, "max_newton_iter", p.solver.max_newton_iter, "solver.");
    read(s, "inner_tol", p.solver.inner_tol, "solver.");
    std::string inner = "newton";
    read(s, "inner_solver", inner, "solver.");
    require(inner == "newton" || inner == "fista", "solver.inner_solver must be 'newton' or 'fista'");
    p.solver.inner_solver = inner == "newton" ? InnerSolver::ProximalNewton : InnerSolver::Fista;
    read(s, "accelerate", p.solver.accelerate, "solver.");
    read(s, "hinge_mu_start", p.solver.hinge_mu_start, "solver.");
    read(s, "hinge_mu_min", p.solver.hinge_mu_min, "solver.");
    std::string stop = "loss";
    read(s, "stop_rule", stop, "solver.");
    require(stop == "loss" || stop == "coefficients",
            "solver.stop_rule must be 'loss' or 'coefficients'");
    p.solver.stop_rule = stop == "loss" ? StopRule::LossChange : StopRule::CoefficientChange;
    std::string seed = "wls";
    read(s, "seed", seed, "solver.");
    require(seed == "wls" || seed == "zero", "solver.seed must be 'wls' or 'zero'");
    p.solver.seed = seed == "wls" ? DcSeed::WeightedLeastSquares : DcSeed::Zero;
  }
  if (j.contains("irls")) {
    const json& s = j.at("irls");
    reject_unknown(s, {"max_iter", "tol", "max_coef_norm"}, "irls.");
    read(s, "max_iter", p.irls.max_iter, "irls.");
    read(s, "tol", p.irls.tol, "irls.");
    read(s, "max_coef_norm", p.irls.max_coef_norm, "irls.");
  }
  read(j, "seed", p.seed, "");
  read(j, "exclude", p.excluded, "");
  read(j, "threads", p.threads, "");
  p.validate();

  BenchmarkConfig& b = cfg.benchmark;
  b.pipeline = p;
  if (!cfg.prune_frac_set) b.pipeline.prune_frac = kSimulationPruneFrac;
  b.threads = p.threads;
  b.dgp.seed = p.seed;
  if (j.contains("simulation")) {
    const json& s = j.at("simulation");
    reject_unknown(s,
                   {"reps", "n_train", "n_eval", "p", "noise_sd", "propensity_coef",
                    "control_coef", "tau_threshold", "tau_offset"},
                   "simulation.");
    read(s, "reps", b.reps, "simulation.");
    read(s, "n_train", b.n_train, "simulation.");
    read(s, "n_eval", b.n_eval, "simulation.");
    Index dim = b.dgp.p;
    read(s, "p", dim, "simulation.");
    require(dim >= 2, "simulation.p must be at least 2");
    const std::uint64_t seed = b.dgp.seed;
    b.dgp = DGPConfig::defaults(dim);
    b.dgp.seed = seed;
    read(s, "noise_sd", b.dgp.noise_sd, "simulation.");
    read(s, "tau_threshold", b.dgp.tau_threshold, "simulation.");
    read(s, "tau_offset", b.dgp.tau_offset, "simulation.");
    if (s.contains("propensity_coef")) b.dgp.propensity_coef = read_vector(s, "propensity_coef", "simulation.");
    if (s.contains("control_coef")) b.dgp.control_coef = read_vector(s, "control_coef", "simulation.");
  }
  b.validate();
  return cfg;
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream file(path);
  if (!file) throw InputError("cannot open config file '" + path + "'");
  json j;
  try {
    file >> j;
  } catch (const json::exception& e) {
    throw InputError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_run_config(j);
}

void override_seed(RunConfig& cfg, std::uint64_t seed) {
  cfg.pipeline.seed = seed;
  cfg.benchmark.pipeline.seed = seed;
  cfg.benchmark.dgp.seed = seed;
}

json RunConfig::effective() const {
  const PipelineConfig& p = pipeline;
  return json{{"data",
               {{"outcome", table.outcome},
                {"treatment", table.treatment},
                {"drop", table.exclude},
                {"delimiter", std::string(1, table.delimiter)}}},
              {"folds", p.folds},
              {"lambda_grid", p.lambdas},
              {"loss", to_string(p.loss)},
              {"gamma", p.gamma},
              {"penalize_intercept", p.penalize_intercept},
              {"prune_frac", p.prune_frac},
              {"max_variables", p.max_variables},
              {"lambda_rule", to_string(p.lambda_rule)},
              {"clip", {{"lower", p.clip.lower}, {"upper", p.clip.upper}}},
              {"solver",
               {{"tol", p.solver.tol},
                {"max_outer_iter", p.solver.max_outer_iter},
                {"max_inner_iter", p.solver.max_inner_iter},
                {"max_newton_iter", p.solver.max_newton_iter},
                {"inner_tol", p.solver.inner_tol},
                {"inner_solver", p.solver.inner_solver == InnerSolver::ProximalNewton ? "newton" : "fista"},
                {"accelerate", p.solver.accelerate},
                {"hinge_mu_start", p.solver.hinge_mu_start},
                {"hinge_mu_min", p.solver.hinge_mu_min},
                {"stop_rule", p.solver.stop_rule == StopRule::LossChange ? "loss" : "coefficients"},
                {"seed", p.solver.seed == DcSeed::WeightedLeastSquares ? "wls" : "zero"}}},
              {"irls",
               {{"max_iter", p.irls.max_iter},
                {"tol", p.irls.tol},
                {"max_coef_norm", p.irls.max_coef_norm}}},
              {"seed", p.seed},
              {"exclude", p.excluded},
              {"simulation",
               {{"reps", benchmark.reps},
                {"n_train", benchmark.n_train},
                {"n_eval", benchmark.n_eval},
                {"p", benchmark.dgp.p},
                {"noise_sd", benchmark.dgp.noise_sd},
                {"propensity_coef", to_std(benchmark.dgp.propensity_coef)},
                {"control_coef", to_std(benchmark.dgp.control_coef)},
                {"tau_threshold", benchmark.dgp.tau_threshold},
                {"tau_offset", benchmark.dgp.tau_offset},
                {"prune_frac", benchmark.pipeline.prune_frac}}}};
}

std::string RunConfig::hash() const { return fnv1a_hex(effective().dump()); }

}  // namespace itr
