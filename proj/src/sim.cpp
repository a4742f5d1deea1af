#include "itr/sim.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <random>

#include "itr/format.hpp"
#include "itr/parallel.hpp"

namespace itr {

namespace {

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::uint64_t eval_seed(std::uint64_t train_seed) {
  // splitmix64 step: an evaluation stream unrelated to the training stream.
  std::uint64_t z = train_seed + 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

struct MeanSd {
  double mean = 0.0;
  double sd = 0.0;
};

MeanSd mean_sd(const std::vector<double>& v) {
  MeanSd out;
  if (v.empty()) return out;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - out.mean) * (x - out.mean);
    out.sd = std::sqrt(ss / (v.size() - 1));
  }
  return out;
}

}  // namespace

DGPConfig DGPConfig::defaults(Index p) {
  DGPConfig cfg;
  cfg.p = p;
  cfg.propensity_coef = Vector::Zero(p + 1);
  cfg.control_coef = Vector::Zero(p + 1);
  cfg.control_coef[0] = 1.0;
  auto set = [p](Vector& v, Index var, double value) {
    if (var <= p) v[var] = value;
  };
  set(cfg.propensity_coef, 1, 0.3);
  set(cfg.propensity_coef, 3, -0.3);
  set(cfg.control_coef, 1, 0.5);
  set(cfg.control_coef, 3, 0.5);
  set(cfg.control_coef, 4, -0.5);
  return cfg;
}

void DGPConfig::validate() const {
  require(n >= 1, "DGP sample size must be positive");
  require(p >= 2, "DGP needs at least 2 covariates");
  require(noise_sd >= 0.0, "noise_sd must be non-negative");
  require(propensity_coef.size() == p + 1, "propensity coefficients must have length p + 1");
  require(control_coef.size() == p + 1, "control-outcome coefficients must have length p + 1");
}

std::pair<Dataset, Oracle> generate(const DGPConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(cfg.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);

  Dataset data;
  Oracle oracle;
  const Index n = cfg.n;
  const Index p = cfg.p;
  data.covariates.resize(n, p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) data.covariates(i, j) = normal(rng);
  }
  for (Index j = 0; j < p; ++j) data.names.push_back("x" + std::to_string(j + 1));

  oracle.true_propensity.resize(n);
  oracle.true_mu0.resize(n);
  oracle.true_mu1.resize(n);
  oracle.true_tau.resize(n);
  oracle.optimal_assignment.resize(n);
  data.treatment.resize(n);
  data.outcome.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto x = data.covariates.row(i);
    const double logit = cfg.propensity_coef[0] + x.dot(cfg.propensity_coef.tail(p));
    const double mu0 = cfg.control_coef[0] + x.dot(cfg.control_coef.tail(p));
    const double s = x[0] + x[1];
    const double tau = (s - cfg.tau_threshold) * (s + cfg.tau_offset);
    oracle.true_propensity[i] = logistic(logit);
    oracle.true_mu0[i] = mu0;
    oracle.true_mu1[i] = mu0 + tau;
    oracle.true_tau[i] = tau;
    oracle.optimal_assignment[i] = tau > 0.0 ? 1 : 0;
  }
  for (Index i = 0; i < n; ++i) {
    data.treatment[i] = uniform(rng) < oracle.true_propensity[i] ? 1 : 0;
  }
  for (Index i = 0; i < n; ++i) {
    const double mean = data.treatment[i] == 1 ? oracle.true_mu1[i] : oracle.true_mu0[i];
    data.outcome[i] = mean + cfg.noise_sd * normal(rng);
  }
  return {std::move(data), std::move(oracle)};
}

double true_value(const BinaryVector& d, const Oracle& oracle) {
  require(d.size() == oracle.true_mu0.size(), "assignments are not aligned with the oracle");
  double total = 0.0;
  for (Index i = 0; i < d.size(); ++i) {
    total += d[i] == 1 ? oracle.true_mu1[i] : oracle.true_mu0[i];
  }
  return total / static_cast<double>(d.size());
}

double ccr(const BinaryVector& d, const Oracle& oracle) {
  require(d.size() == oracle.optimal_assignment.size(), "assignments are not aligned with the oracle");
  return static_cast<double>((d.array() == oracle.optimal_assignment.array()).count()) /
         static_cast<double>(d.size());
}

double best_linear_value(const Dataset& data, const Oracle& oracle, const DGPConfig& dgp,
                         const SolverConfig& solver) {
  const Index n = data.n();
  double best = std::max(true_value(BinaryVector::Zero(n), oracle),
                         true_value(BinaryVector::Ones(n), oracle));

  BinaryVector planted(n);
  for (Index i = 0; i < n; ++i) {
    planted[i] = data.covariates(i, 0) + data.covariates(i, 1) > dgp.tau_threshold ? 1 : 0;
  }
  best = std::max(best, true_value(planted, oracle));

  const ContrastEstimate contrast = ContrastEstimate::from_tau(oracle.true_tau);
  if ((contrast.weights.array() > 0.0).any()) {
    Matrix design(n, data.p() + 1);
    design.col(0).setOnes();
    design.rightCols(data.p()) = data.covariates;
    const Vector eta = initial_estimate(design, contrast, LossKind::Ramp, solver);
    const BinaryVector d = (design * eta).unaryExpr([](double s) { return s > 0.0 ? 1 : 0; }).cast<int>();
    best = std::max(best, true_value(d, oracle));
  }
  return best;
}

void BenchmarkConfig::validate() const {
  require(reps >= 1, "reps must be at least 1");
  require(n_train >= 2 * pipeline.folds, "n_train must be at least 2K");
  require(n_eval >= 1, "n_eval must be positive");
  require(threads >= 1, "threads must be at least 1");
  dgp.validate();
  pipeline.validate();
}

BenchmarkResult run_benchmark(const BenchmarkConfig& cfg) {
  cfg.validate();
  BenchmarkResult result;
  result.reps = cfg.reps;
  std::vector<BenchmarkRow> rows(static_cast<std::size_t>(cfg.reps));
  std::vector<std::string> errors(static_cast<std::size_t>(cfg.reps));
  std::vector<bool> ok(static_cast<std::size_t>(cfg.reps), false);

  parallel_for(static_cast<std::size_t>(cfg.reps), cfg.threads, [&](std::size_t r) {
    try {
      DGPConfig train_cfg = cfg.dgp;
      train_cfg.n = cfg.n_train;
      train_cfg.seed = cfg.dgp.seed + r;
      DGPConfig eval_cfg = cfg.dgp;
      eval_cfg.n = cfg.n_eval;
      eval_cfg.seed = eval_seed(train_cfg.seed);
      const auto [train, train_oracle] = generate(train_cfg);
      const auto [eval, eval_oracle] = generate(eval_cfg);

      PipelineConfig pipeline = cfg.pipeline;
      pipeline.seed = train_cfg.seed;
      pipeline.threads = 1;
      const RunResult run = run_pipeline(train, pipeline);
      const Policy& policy = run.full.policy;
      const BinaryVector d = predict(policy, eval.covariates, eval.names);

      BenchmarkRow row;
      row.rep = static_cast<int>(r);
      row.value = true_value(d, eval_oracle);
      row.optimal_value = true_value(eval_oracle.optimal_assignment, eval_oracle);
      row.best_linear_value = best_linear_value(eval, eval_oracle, eval_cfg, pipeline.solver);
      row.value_ratio = row.value / row.best_linear_value;
      row.ccr = ccr(d, eval_oracle);
      row.selected.assign(static_cast<std::size_t>(train.p()), false);
      for (Index j : policy.selected) row.selected[static_cast<std::size_t>(j)] = true;
      row.n_selected = static_cast<int>(policy.selected.size());
      row.selected_x1 = row.selected[0];
      row.selected_x2 = row.selected[1];
      row.false_positives = row.n_selected - (row.selected_x1 ? 1 : 0) - (row.selected_x2 ? 1 : 0);
      row.diagnostics = run.cv.diagnostics;
      row.diagnostics.merge(policy.diagnostics);
      row.converged = row.diagnostics.nonconverged == 0;
      row.lambda = run.lambda;
      row.lambda_min = run.cv.lambda_min;
      row.lambda_1se = run.cv.lambda_1se;
      rows[r] = std::move(row);
      ok[r] = true;
    } catch (const std::exception& e) {
      errors[r] = "replication " + std::to_string(r) + ": " + e.what();
    }
  });

  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (ok[r]) {
      result.rows.push_back(std::move(rows[r]));
    } else {
      result.failures.push_back(errors[r]);
    }
  }
  return result;
}

void write_benchmark_csv(std::ostream& out, const BenchmarkResult& result) {
  out << "rep,value,value_ratio,ccr,n_selected,selected_x1,selected_x2,false_positives,converged\n";
  for (const auto& row : result.rows) {
    out << row.rep << ',' << format_number(row.value) << ',' << format_number(row.value_ratio)
        << ',' << format_number(row.ccr) << ',' << row.n_selected << ','
        << (row.selected_x1 ? 1 : 0) << ',' << (row.selected_x2 ? 1 : 0) << ','
        << row.false_positives << ',' << (row.converged ? 1 : 0) << '\n';
  }
}

nlohmann::json benchmark_summary(const BenchmarkResult& result, const BenchmarkConfig& cfg) {
  auto collect = [&](auto field) {
    std::vector<double> v;
    for (const auto& row : result.rows) v.push_back(static_cast<double>(field(row)));
    return v;
  };
  auto stat = [](const std::vector<double>& v) {
    const MeanSd ms = mean_sd(v);
    return nlohmann::json{{"mean", std::stod(format_number(ms.mean))},
                          {"sd", std::stod(format_number(ms.sd))}};
  };
  std::vector<double> frequency(static_cast<std::size_t>(cfg.dgp.p), 0.0);
  for (const auto& row : result.rows) {
    for (std::size_t j = 0; j < row.selected.size() && j < frequency.size(); ++j) {
      if (row.selected[j]) frequency[j] += 1.0;
    }
  }
  nlohmann::json freq = nlohmann::json::object();
  for (std::size_t j = 0; j < frequency.size(); ++j) {
    const double f = result.rows.empty() ? 0.0 : frequency[j] / result.rows.size();
    freq["x" + std::to_string(j + 1)] = std::stod(format_number(f));
  }
  int descent_violations = 0;
  int nonconverged = 0;
  for (const auto& row : result.rows) {
    descent_violations += row.diagnostics.descent_violations;
    nonconverged += row.diagnostics.nonconverged;
  }
  return nlohmann::json{
      {"reps", result.reps},
      {"completed", result.rows.size()},
      {"failed", result.failures.size()},
      {"failures", result.failures},
      {"n_train", cfg.n_train},
      {"n_eval", cfg.n_eval},
      {"value", stat(collect([](const BenchmarkRow& r) { return r.value; }))},
      {"value_ratio", stat(collect([](const BenchmarkRow& r) { return r.value_ratio; }))},
      {"ccr", stat(collect([](const BenchmarkRow& r) { return r.ccr; }))},
      {"optimal_value", stat(collect([](const BenchmarkRow& r) { return r.optimal_value; }))},
      {"best_linear_value", stat(collect([](const BenchmarkRow& r) { return r.best_linear_value; }))},
      {"n_selected", stat(collect([](const BenchmarkRow& r) { return r.n_selected; }))},
      {"false_positives", stat(collect([](const BenchmarkRow& r) { return r.false_positives; }))},
      {"selection_frequency", freq},
      {"nonconverged_fits", nonconverged},
      {"descent_violations", descent_violations}};
}

}  // namespace itr
