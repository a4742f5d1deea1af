#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "itr/common.hpp"
#include "itr/dataset.hpp"
#include "itr/pipeline.hpp"

namespace itr {

// Synthetic design with p standard-normal covariates, logistic propensity,
// linear control outcome and a second-order contrast in x1 and x2:
//   tau(x) = (x1 + x2 - tau_threshold) * (x1 + x2 + tau_offset).
// Coefficient vectors are intercept-first, length p + 1.
struct DGPConfig {
  Index n = 3000;
  Index p = 20;
  std::uint64_t seed = 1;
  double noise_sd = 1.0;
  Vector propensity_coef;  // logit e(x) = [1, x]' propensity_coef
  Vector control_coef;     // mu0(x) = [1, x]' control_coef
  double tau_threshold = 0.5;
  double tau_offset = 10.0;

  // Defaults: logit e = 0.3 x1 - 0.3 x3, mu0 = 1 + 0.5 x1 + 0.5 x3 - 0.5 x4.
  static DGPConfig defaults(Index p = 20);
  void validate() const;
};

struct Oracle {
  Vector true_tau;
  Vector true_propensity;
  Vector true_mu0;
  Vector true_mu1;
  BinaryVector optimal_assignment;  // I(tau > 0)
};

std::pair<Dataset, Oracle> generate(const DGPConfig& cfg);

// (1/n) sum_i [d_i mu1_i + (1 - d_i) mu0_i].
double true_value(const BinaryVector& assignments, const Oracle& oracle);

// Share of units where d matches the oracle-optimal assignment.
double ccr(const BinaryVector& assignments, const Oracle& oracle);

// Value of the best linear rule found by optimizing against the true contrast
// on this sample: the best of the d.c. fit on oracle tau, the planted linear
// boundary x1 + x2 > tau_threshold, and the two trivial policies.
double best_linear_value(const Dataset& data, const Oracle& oracle, const DGPConfig& dgp,
                         const SolverConfig& solver);

struct BenchmarkConfig {
  int reps = 1;
  Index n_train = 3000;
  Index n_eval = 1000;
  DGPConfig dgp = DGPConfig::defaults();
  PipelineConfig pipeline;
  int threads = 1;

  void validate() const;
};

struct BenchmarkRow {
  int rep = 0;
  double value = 0.0;
  double value_ratio = 0.0;
  double ccr = 0.0;
  int n_selected = 0;
  bool selected_x1 = false;
  bool selected_x2 = false;
  int false_positives = 0;
  bool converged = false;
  std::vector<bool> selected;  // per covariate
  double optimal_value = 0.0;
  double best_linear_value = 0.0;
  double lambda = 0.0;
  double lambda_min = 0.0;
  double lambda_1se = 0.0;
  FitDiagnostics diagnostics;
};

struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<std::string> failures;  // one message per failed replication
  int reps = 0;
};

// Replication r draws training data with seed base + r and an independent
// evaluation sample, runs the full pipeline on the former and scores the
// resulting policy on the latter with oracle quantities.
BenchmarkResult run_benchmark(const BenchmarkConfig& cfg);

void write_benchmark_csv(std::ostream& out, const BenchmarkResult& result);
nlohmann::json benchmark_summary(const BenchmarkResult& result, const BenchmarkConfig& cfg);

}  // namespace itr
