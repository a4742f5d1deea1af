#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "itr/common.hpp"
#include "itr/dataset.hpp"
#include "itr/losses.hpp"
#include "itr/nuisance.hpp"
#include "itr/solvers.hpp"

namespace itr {

enum class LambdaRule { Min, OneSe };

std::string to_string(LambdaRule rule);
LambdaRule lambda_rule_from_string(const std::string& name);

struct PipelineConfig {
  int folds = 5;
  std::vector<double> lambdas;  // ascending, positive
  LossKind loss = LossKind::Ramp;
  double gamma = 1.0;
  bool penalize_intercept = false;
  double prune_frac = 0.1;
  int max_variables = 0;  // keep at most this many after pruning; 0 = no cap
  LambdaRule lambda_rule = LambdaRule::Min;
  ClipBounds clip;
  IrlsOptions irls;
  SolverConfig solver;
  std::uint64_t seed = 1;
  std::vector<std::string> excluded;  // kept out of the policy, still used by nuisances
  int threads = 1;

  void validate() const;
};

// Geometrically (or linearly) spaced grid from lo to hi inclusive, ascending.
std::vector<double> lambda_grid(double lo, double hi, int length, bool geometric = true);

// Counters accumulated over every surrogate fit of a run.
struct FitDiagnostics {
  int fits = 0;
  int nonconverged = 0;
  int descent_violations = 0;
  double max_trace_increase = 0.0;

  void record(const FitResult& fit, LossKind loss);
  void merge(const FitDiagnostics& other);
};

struct CVResult {
  std::vector<double> lambdas;
  std::vector<double> mean_value;
  std::vector<double> se_value;
  std::vector<int> valid_folds;
  Matrix fold_values;  // folds x lambdas, NaN for failed cells
  double lambda_min = 0.0;
  double lambda_1se = 0.0;
  FitDiagnostics diagnostics;
  std::vector<std::string> warnings;

  double selected(LambdaRule rule) const { return rule == LambdaRule::Min ? lambda_min : lambda_1se; }
};

struct LambdaSelection {
  std::size_t min_index = 0;
  std::size_t one_se_index = 0;
  double lambda_min = 0.0;
  double lambda_1se = 0.0;
};

// lambda_min maximizes the mean value (ties go to the larger lambda);
// lambda_1se is the largest lambda whose mean is within one SE of it.
// Entries with a non-finite mean are ignored.
LambdaSelection select_lambda(const std::vector<double>& lambdas, const std::vector<double>& mean,
                              const std::vector<double>& se);

struct Policy {
  Vector eta;       // intercept + p slopes, normalized-covariate scale
  Vector eta_full;  // penalized fit before pruning
  std::vector<Index> selected;  // covariate indices (0-based, no intercept)
  LossKind loss_kind = LossKind::Ramp;
  double lambda_used = 0.0;
  bool refit = true;
  bool trivial = false;
  std::vector<std::string> names;
  Vector column_means;
  Vector column_sds;
  FitDiagnostics diagnostics;

  // d(x) = I(x'eta > 0) on a design with the intercept column.
  BinaryVector assign(const Matrix& design) const;
  // Coefficients on the original covariate scale, intercept first.
  Vector raw_coefficients() const;
};

// The nuisance model used when none is injected.
std::unique_ptr<NuisanceModel> default_nuisance_model(const PipelineConfig& cfg,
                                                      const std::vector<std::string>& names);

// Mask over design columns (intercept first) with excluded covariates off.
std::vector<bool> policy_mask(const std::vector<std::string>& names,
                              const std::vector<std::string>& excluded);

CVResult cv_path(const NormalizedDataset& nd, const FoldAssignment& folds,
                 const PipelineConfig& cfg, const NuisanceModel* nuisance = nullptr);

struct FullFit {
  Policy policy;
  NuisanceFit nuisance;
  ContrastEstimate contrast;
  Vector reference;  // adaptive-LASSO reference coefficients
};

struct NuisanceStage {
  NuisanceFit nuisance;
  ContrastEstimate contrast;
};

// Nuisance models fitted and evaluated on every row, and the resulting contrast.
NuisanceStage fit_nuisance_full(const NormalizedDataset& nd, const PipelineConfig& cfg,
                                const NuisanceModel* nuisance = nullptr);

// Fit at lambda on all rows, prune small coefficients and refit at lambda = 0.
FullFit fit_full_detailed(const NormalizedDataset& nd, double lambda, const PipelineConfig& cfg,
                          const NuisanceModel* nuisance = nullptr);

Policy fit_full(const NormalizedDataset& nd, double lambda, LossKind loss, double prune_frac,
                const PipelineConfig& cfg);

struct ValueCurve {
  std::vector<int> k;
  std::vector<double> value;
  std::vector<double> se;
  std::vector<double> ci_lo;
  std::vector<double> ci_hi;
  std::vector<bool> ok;
  std::vector<std::string> ranked_names;  // most important first
  int trivial_arm = 1;                    // arm of the better trivial policy (k = 0)
};

ValueCurve complementary_analysis(const NormalizedDataset& nd, const NuisanceFit& nuisance,
                                  const ContrastEstimate& contrast, const Vector& eta_full,
                                  const std::vector<std::string>& excluded,
                                  const PipelineConfig& cfg);

// Standardizes raw covariates with the policy's stored means/sds and applies
// the rule. Columns are matched by name; a missing column is an error.
BinaryVector predict(const Policy& policy, const Matrix& raw_covariates,
                     const std::vector<std::string>& column_names);

struct RunResult {
  CVResult cv;
  FullFit full;
  double lambda = 0.0;
};

// Normalize, split, cross-validate, choose lambda and fit the final policy.
RunResult run_pipeline(const Dataset& data, const PipelineConfig& cfg,
                       const NuisanceModel* nuisance = nullptr);

nlohmann::json to_json(const Policy& policy);
Policy policy_from_json(const nlohmann::json& j);

void write_cv_csv(std::ostream& out, const CVResult& cv);
void write_value_curve_csv(std::ostream& out, const ValueCurve& curve);

}  // namespace itr
