#include "itr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "itr/format.hpp"
#include "itr/parallel.hpp"

namespace itr {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Index>(v.size()));
}

BinaryVector trivial_assignment(Index n, int arm) { return BinaryVector::Constant(n, arm); }

}  // namespace

std::string to_string(LambdaRule rule) { return rule == LambdaRule::Min ? "min" : "1se"; }

LambdaRule lambda_rule_from_string(const std::string& name) {
  if (name == "min" || name == "lambda_min") return LambdaRule::Min;
  if (name == "1se" || name == "lambda_1se") return LambdaRule::OneSe;
  throw InputError("unknown lambda rule '" + name + "' (expected min or 1se)");
}

void PipelineConfig::validate() const {
  require(folds >= 2, "need at least 2 folds, got " + std::to_string(folds));
  require(!lambdas.empty(), "lambda grid is empty");
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    require(std::isfinite(lambdas[i]) && lambdas[i] >= 0.0, "lambda values must be non-negative");
    if (i > 0) require(lambdas[i] > lambdas[i - 1], "lambda grid must be strictly ascending");
  }
  require(loss == LossKind::Ramp || loss == LossKind::Hinge, "loss must be ramp or hinge");
  require(gamma > 0.0, "gamma must be positive");
  require(prune_frac >= 0.0 && prune_frac < 1.0, "prune_frac must lie in [0, 1)");
  require(max_variables >= 0, "max_variables must be non-negative");
  require(0.0 < clip.lower && clip.lower < clip.upper && clip.upper < 1.0,
          "clip bounds must satisfy 0 < lower < upper < 1");
  require(threads >= 1, "threads must be at least 1");
  solver.validate();
}

std::vector<double> lambda_grid(double lo, double hi, int length, bool geometric) {
  require(length >= 1, "lambda grid length must be at least 1");
  require(lo > 0.0 && hi >= lo, "lambda grid needs 0 < min <= max");
  std::vector<double> grid(static_cast<std::size_t>(length));
  if (length == 1) {
    grid[0] = lo;
    return grid;
  }
  for (int i = 0; i < length; ++i) {
    const double t = static_cast<double>(i) / (length - 1);
    grid[i] = geometric ? std::exp(std::log(lo) + t * (std::log(hi) - std::log(lo)))
                        : lo + t * (hi - lo);
  }
  grid.front() = lo;
  grid.back() = hi;
  return grid;
}

void FitDiagnostics::record(const FitResult& fit, LossKind loss) {
  ++fits;
  if (!fit.converged) ++nonconverged;
  if (loss == LossKind::Ramp) {
    descent_violations += itr::descent_violations(fit.objective_trace);
    for (std::size_t t = 1; t < fit.objective_trace.size(); ++t) {
      max_trace_increase =
          std::max(max_trace_increase, fit.objective_trace[t] - fit.objective_trace[t - 1]);
    }
  }
}

void FitDiagnostics::merge(const FitDiagnostics& other) {
  fits += other.fits;
  nonconverged += other.nonconverged;
  descent_violations += other.descent_violations;
  max_trace_increase = std::max(max_trace_increase, other.max_trace_increase);
}

LambdaSelection select_lambda(const std::vector<double>& lambdas, const std::vector<double>& mean,
                              const std::vector<double>& se) {
  require(!lambdas.empty() && mean.size() == lambdas.size() && se.size() == lambdas.size(),
          "lambda, mean and se must be non-empty and aligned");
  std::size_t best = lambdas.size();
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    if (!std::isfinite(mean[i])) continue;
    if (best == lambdas.size() || mean[i] >= mean[best]) best = i;
  }
  if (best == lambdas.size()) throw NumericalError("no lambda has a valid cross-validated value");
  const double se_best = std::isfinite(se[best]) ? se[best] : 0.0;
  const double threshold = mean[best] - se_best;
  std::size_t one_se = best;
  for (std::size_t i = best; i < lambdas.size(); ++i) {
    if (std::isfinite(mean[i]) && mean[i] >= threshold) one_se = i;
  }
  return {best, one_se, lambdas[best], lambdas[one_se]};
}

BinaryVector Policy::assign(const Matrix& design) const {
  require(design.cols() == eta.size(), "design width does not match the policy");
  const Vector scores = design * eta;
  return scores.unaryExpr([](double s) { return s > 0.0 ? 1.0 : 0.0; }).cast<int>();
}

Vector Policy::raw_coefficients() const {
  Vector raw(eta.size());
  raw[0] = eta[0];
  for (Index j = 1; j < eta.size(); ++j) {
    raw[j] = eta[j] / column_sds[j - 1];
    raw[0] -= raw[j] * column_means[j - 1];
  }
  return raw;
}

std::unique_ptr<NuisanceModel> default_nuisance_model(const PipelineConfig& cfg,
                                                      const std::vector<std::string>& names) {
  std::vector<std::string> columns{"(Intercept)"};
  columns.insert(columns.end(), names.begin(), names.end());
  return std::make_unique<GlmNuisanceModel>(cfg.clip, cfg.irls, std::move(columns));
}

std::vector<bool> policy_mask(const std::vector<std::string>& names,
                              const std::vector<std::string>& excluded) {
  std::vector<bool> mask(names.size() + 1, true);
  for (const auto& name : excluded) {
    const auto it = std::find(names.begin(), names.end(), name);
    require(it != names.end(), "excluded variable '" + name + "' is not a covariate");
    mask[1 + (it - names.begin())] = false;
  }
  return mask;
}

CVResult cv_path(const NormalizedDataset& nd, const FoldAssignment& folds,
                 const PipelineConfig& cfg, const NuisanceModel* nuisance) {
  cfg.validate();
  require(folds.folds >= 2, "need at least 2 folds");
  require(static_cast<Index>(folds.fold_index.size()) == nd.base.n(),
          "fold assignment is not aligned with the data");
  std::unique_ptr<NuisanceModel> owned;
  if (nuisance == nullptr) {
    owned = default_nuisance_model(cfg, nd.base.names);
    nuisance = owned.get();
  }
  const std::vector<bool> mask = policy_mask(nd.base.names, cfg.excluded);
  const std::size_t n_lambda = cfg.lambdas.size();
  const int k_folds = folds.folds;

  CVResult out;
  out.lambdas = cfg.lambdas;
  out.fold_values = Matrix::Constant(k_folds, static_cast<Index>(n_lambda), kNaN);
  std::vector<FitDiagnostics> fold_diag(k_folds);
  std::vector<std::vector<std::string>> fold_warnings(k_folds);

  parallel_for(static_cast<std::size_t>(k_folds), cfg.threads, [&](std::size_t fold) {
    const auto train = folds.train_rows(static_cast<int>(fold));
    const auto test = folds.test_rows(static_cast<int>(fold));
    const Matrix x_train = nd.design(train, Eigen::all);
    const Matrix x_test = nd.design(test, Eigen::all);
    const BinaryVector a_train = nd.base.treatment(train);
    const BinaryVector a_test = nd.base.treatment(test);
    const Vector y_train = nd.base.outcome(train);
    const Vector y_test = nd.base.outcome(test);
    for (int a = 0; a < 2; ++a) {
      require((a_train.array() == a).any() && (a_test.array() == a).any(),
              "fold " + std::to_string(fold) + " is missing treatment arm " + std::to_string(a));
    }

    auto model = nuisance->clone();
    model->fit(x_train, a_train, y_train);
    const NuisanceFit nf_train = model->predict(x_train);
    const NuisanceFit nf_test = model->predict(x_test);
    const ContrastEstimate contrast = estimate_contrast_aipw(a_train, y_train, nf_train);
    const Vector reference = initial_estimate(x_train, contrast, cfg.loss, cfg.solver, mask);

    Vector warm = reference;
    for (std::size_t r = 0; r < n_lambda; ++r) {
      const std::size_t li = n_lambda - 1 - r;  // descending lambda
      PenaltySpec spec;
      spec.lambda = cfg.lambdas[li];
      spec.gamma = cfg.gamma;
      spec.reference = reference;
      spec.penalize_intercept = cfg.penalize_intercept;
      spec.active = mask;
      const FitResult fit = fit_surrogate(cfg.loss, x_train, contrast, spec, warm, cfg.solver);
      fold_diag[fold].record(fit, cfg.loss);
      warm = fit.eta;
      if (!fit.converged) {
        fold_warnings[fold].push_back("fold " + std::to_string(fold) + ", lambda " +
                                      format_number(spec.lambda) +
                                      ": solver did not converge; cell excluded");
        continue;
      }
      const BinaryVector d = (x_test * fit.eta).unaryExpr([](double s) { return s > 0.0 ? 1 : 0; }).cast<int>();
      out.fold_values(static_cast<Index>(fold), static_cast<Index>(li)) =
          estimate_value_aipw(a_test, y_test, nf_test, d).value;
    }
  });

  for (int f = 0; f < k_folds; ++f) {
    out.diagnostics.merge(fold_diag[f]);
    out.warnings.insert(out.warnings.end(), fold_warnings[f].begin(), fold_warnings[f].end());
  }
  out.mean_value.assign(n_lambda, kNaN);
  out.se_value.assign(n_lambda, kNaN);
  out.valid_folds.assign(n_lambda, 0);
  for (std::size_t l = 0; l < n_lambda; ++l) {
    std::vector<double> vals;
    for (int f = 0; f < k_folds; ++f) {
      const double v = out.fold_values(f, static_cast<Index>(l));
      if (std::isfinite(v)) vals.push_back(v);
    }
    out.valid_folds[l] = static_cast<int>(vals.size());
    if (vals.empty()) continue;
    const double m = std::accumulate(vals.begin(), vals.end(), 0.0) / vals.size();
    out.mean_value[l] = m;
    if (vals.size() >= 2) {
      double ss = 0.0;
      for (double v : vals) ss += (v - m) * (v - m);
      out.se_value[l] = std::sqrt(ss / (vals.size() - 1)) / std::sqrt(static_cast<double>(vals.size()));
    } else {
      out.se_value[l] = 0.0;
    }
  }
  const LambdaSelection sel = select_lambda(out.lambdas, out.mean_value, out.se_value);
  out.lambda_min = sel.lambda_min;
  out.lambda_1se = sel.lambda_1se;
  return out;
}

NuisanceStage fit_nuisance_full(const NormalizedDataset& nd, const PipelineConfig& cfg,
                                const NuisanceModel* nuisance) {
  std::unique_ptr<NuisanceModel> owned;
  if (nuisance == nullptr) {
    owned = default_nuisance_model(cfg, nd.base.names);
    nuisance = owned.get();
  }
  auto model = nuisance->clone();
  model->fit(nd.design, nd.base.treatment, nd.base.outcome);
  NuisanceStage out;
  out.nuisance = model->predict(nd.design);
  out.contrast = estimate_contrast_aipw(nd.base.treatment, nd.base.outcome, out.nuisance);
  return out;
}

FullFit fit_full_detailed(const NormalizedDataset& nd, double lambda, const PipelineConfig& cfg,
                          const NuisanceModel* nuisance) {
  require(lambda >= 0.0 && std::isfinite(lambda), "lambda must be non-negative");
  require(cfg.prune_frac >= 0.0 && cfg.prune_frac < 1.0, "prune_frac must lie in [0, 1)");
  cfg.solver.validate();
  const std::vector<bool> mask = policy_mask(nd.base.names, cfg.excluded);
  const Matrix& x = nd.design;

  FullFit out;
  NuisanceStage stage = fit_nuisance_full(nd, cfg, nuisance);
  out.nuisance = std::move(stage.nuisance);
  out.contrast = std::move(stage.contrast);
  out.reference = initial_estimate(x, out.contrast, cfg.loss, cfg.solver, mask);

  PenaltySpec spec;
  spec.lambda = lambda;
  spec.gamma = cfg.gamma;
  spec.reference = out.reference;
  spec.penalize_intercept = cfg.penalize_intercept;
  spec.active = mask;
  const FitResult penalized = fit_surrogate(cfg.loss, x, out.contrast, spec, out.reference, cfg.solver);

  Policy& policy = out.policy;
  policy.diagnostics.record(penalized, cfg.loss);
  policy.eta_full = penalized.eta;
  policy.loss_kind = cfg.loss;
  policy.lambda_used = lambda;
  policy.names = nd.base.names;
  policy.column_means = nd.column_means;
  policy.column_sds = nd.column_sds;

  // Prune slopes below prune_frac * max |slope|.
  double max_abs = 0.0;
  for (Index j = 1; j < penalized.eta.size(); ++j) max_abs = std::max(max_abs, std::abs(penalized.eta[j]));
  std::vector<Index> kept;
  if (max_abs > 0.0) {
    for (Index j = 1; j < penalized.eta.size(); ++j) {
      const double mag = std::abs(penalized.eta[j]);
      if (mag > 0.0 && mag >= cfg.prune_frac * max_abs) kept.push_back(j - 1);
    }
  }
  if (cfg.max_variables > 0 && static_cast<int>(kept.size()) > cfg.max_variables) {
    std::stable_sort(kept.begin(), kept.end(), [&](Index a, Index b) {
      return std::abs(penalized.eta[a + 1]) > std::abs(penalized.eta[b + 1]);
    });
    kept.resize(static_cast<std::size_t>(cfg.max_variables));
    std::sort(kept.begin(), kept.end());
  }
  policy.selected = kept;
  policy.trivial = kept.empty();

  std::vector<bool> refit_mask(static_cast<std::size_t>(x.cols()), false);
  refit_mask[0] = true;
  for (Index j : kept) refit_mask[j + 1] = true;
  PenaltySpec refit_spec;
  refit_spec.active = refit_mask;
  const Vector seed = cfg.solver.seed == DcSeed::WeightedLeastSquares
                          ? weighted_least_squares_seed(x, out.contrast, refit_mask)
                          : Vector::Zero(x.cols());
  const FitResult refit = fit_surrogate(cfg.loss, x, out.contrast, refit_spec, seed, cfg.solver);
  policy.diagnostics.record(refit, cfg.loss);
  policy.eta = refit.eta;
  policy.refit = true;
  return out;
}

Policy fit_full(const NormalizedDataset& nd, double lambda, LossKind loss, double prune_frac,
                const PipelineConfig& cfg) {
  PipelineConfig local = cfg;
  local.loss = loss;
  local.prune_frac = prune_frac;
  return fit_full_detailed(nd, lambda, local).policy;
}

ValueCurve complementary_analysis(const NormalizedDataset& nd, const NuisanceFit& nuisance,
                                  const ContrastEstimate& contrast, const Vector& eta_full,
                                  const std::vector<std::string>& excluded,
                                  const PipelineConfig& cfg) {
  const Dataset& data = nd.base;
  require(eta_full.size() == data.p() + 1,
          "eta_full has " + std::to_string(eta_full.size()) + " entries, expected " +
              std::to_string(data.p() + 1));
  const std::vector<bool> mask = policy_mask(data.names, excluded);
  std::vector<Index> remaining;
  for (Index j = 0; j < data.p(); ++j) {
    if (mask[j + 1]) remaining.push_back(j);
  }
  require(!remaining.empty(), "no variables available for the policy after exclusions");
  std::stable_sort(remaining.begin(), remaining.end(), [&](Index a, Index b) {
    return std::abs(eta_full[a + 1]) > std::abs(eta_full[b + 1]);
  });

  ValueCurve curve;
  for (Index j : remaining) curve.ranked_names.push_back(data.names[j]);

  auto push = [&](int k, const ValueEstimate& v, bool ok) {
    curve.k.push_back(k);
    curve.value.push_back(ok ? v.value : kNaN);
    curve.se.push_back(ok ? v.se() : kNaN);
    curve.ci_lo.push_back(ok ? v.ci_lower() : kNaN);
    curve.ci_hi.push_back(ok ? v.ci_upper() : kNaN);
    curve.ok.push_back(ok);
  };

  const ValueEstimate all_treated =
      estimate_value_aipw(data, nuisance, trivial_assignment(data.n(), 1));
  const ValueEstimate all_control =
      estimate_value_aipw(data, nuisance, trivial_assignment(data.n(), 0));
  curve.trivial_arm = all_treated.value >= all_control.value ? 1 : 0;
  push(0, curve.trivial_arm == 1 ? all_treated : all_control, true);

  std::vector<bool> active(static_cast<std::size_t>(nd.design.cols()), false);
  active[0] = true;
  for (std::size_t k = 1; k <= remaining.size(); ++k) {
    active[remaining[k - 1] + 1] = true;
    try {
      const Vector eta = initial_estimate(nd.design, contrast, cfg.loss, cfg.solver, active);
      const BinaryVector d =
          (nd.design * eta).unaryExpr([](double s) { return s > 0.0 ? 1 : 0; }).cast<int>();
      push(static_cast<int>(k), estimate_value_aipw(data, nuisance, d), true);
    } catch (const NumericalError&) {
      push(static_cast<int>(k), {}, false);
    }
  }
  return curve;
}

BinaryVector predict(const Policy& policy, const Matrix& raw, const std::vector<std::string>& names) {
  require(static_cast<Index>(names.size()) == raw.cols(), "column names do not match the matrix");
  require(policy.eta.size() == static_cast<Index>(policy.names.size()) + 1,
          "policy coefficients do not match its variable names");
  Matrix ordered(raw.rows(), static_cast<Index>(policy.names.size()));
  for (std::size_t j = 0; j < policy.names.size(); ++j) {
    const auto it = std::find(names.begin(), names.end(), policy.names[j]);
    require(it != names.end(), "missing column '" + policy.names[j] + "' required by the policy");
    ordered.col(static_cast<Index>(j)) = raw.col(it - names.begin());
  }
  Matrix design(raw.rows(), ordered.cols() + 1);
  design.col(0).setOnes();
  design.rightCols(ordered.cols()) =
      (ordered.rowwise() - policy.column_means.transpose()).array().rowwise() /
      policy.column_sds.transpose().array();
  return policy.assign(design);
}

RunResult run_pipeline(const Dataset& data, const PipelineConfig& cfg,
                       const NuisanceModel* nuisance) {
  cfg.validate();
  const NormalizedDataset nd = normalize(data);
  require(data.n() >= 2 * cfg.folds, "need at least 2K rows for K-fold cross-validation");
  const FoldAssignment folds = kfold_split(data.treatment, cfg.folds, cfg.seed);
  RunResult out;
  out.cv = cv_path(nd, folds, cfg, nuisance);
  out.lambda = out.cv.selected(cfg.lambda_rule);
  out.full = fit_full_detailed(nd, out.lambda, cfg, nuisance);
  return out;
}

nlohmann::json to_json(const Policy& policy) {
  nlohmann::json normalized = nlohmann::json::object();
  nlohmann::json raw = nlohmann::json::object();
  nlohmann::json full = nlohmann::json::object();
  const Vector raw_coef = policy.raw_coefficients();
  normalized["(Intercept)"] = policy.eta[0];
  raw["(Intercept)"] = raw_coef[0];
  full["(Intercept)"] = policy.eta_full[0];
  for (std::size_t j = 0; j < policy.names.size(); ++j) {
    normalized[policy.names[j]] = policy.eta[static_cast<Index>(j) + 1];
    raw[policy.names[j]] = raw_coef[static_cast<Index>(j) + 1];
    full[policy.names[j]] = policy.eta_full[static_cast<Index>(j) + 1];
  }
  std::vector<std::string> selected;
  for (Index j : policy.selected) selected.push_back(policy.names[j]);
  return nlohmann::json{
      {"variables", policy.names},
      {"coefficients_normalized", normalized},
      {"coefficients_raw", raw},
      {"coefficients_full_normalized", full},
      {"eta", to_std(policy.eta)},
      {"eta_full", to_std(policy.eta_full)},
      {"column_means", to_std(policy.column_means)},
      {"column_sds", to_std(policy.column_sds)},
      {"selected", selected},
      {"loss", to_string(policy.loss_kind)},
      {"lambda", policy.lambda_used},
      {"refit", policy.refit},
      {"trivial", policy.trivial},
      {"diagnostics",
       {{"fits", policy.diagnostics.fits},
        {"nonconverged", policy.diagnostics.nonconverged},
        {"descent_violations", policy.diagnostics.descent_violations}}}};
}

Policy policy_from_json(const nlohmann::json& j) {
  try {
    Policy p;
    p.names = j.at("variables").get<std::vector<std::string>>();
    p.eta = to_eigen(j.at("eta").get<std::vector<double>>());
    p.eta_full = to_eigen(j.at("eta_full").get<std::vector<double>>());
    p.column_means = to_eigen(j.at("column_means").get<std::vector<double>>());
    p.column_sds = to_eigen(j.at("column_sds").get<std::vector<double>>());
    p.loss_kind = loss_kind_from_string(j.at("loss").get<std::string>());
    p.lambda_used = j.at("lambda").get<double>();
    p.refit = j.value("refit", true);
    p.trivial = j.value("trivial", false);
    const auto selected = j.at("selected").get<std::vector<std::string>>();
    const Index width = static_cast<Index>(p.names.size()) + 1;
    require(p.eta.size() == width && p.eta_full.size() == width &&
                p.column_means.size() == width - 1 && p.column_sds.size() == width - 1,
            "policy arrays do not match the variable list");
    for (const auto& name : selected) {
      const auto it = std::find(p.names.begin(), p.names.end(), name);
      require(it != p.names.end(), "selected variable '" + name + "' is not in the policy");
      p.selected.push_back(it - p.names.begin());
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(std::string("malformed policy JSON: ") + e.what());
  }
}

void write_cv_csv(std::ostream& out, const CVResult& cv) {
  out << "lambda,mean_value,se_value,valid_folds,is_lambda_min,is_lambda_1se\n";
  for (std::size_t i = 0; i < cv.lambdas.size(); ++i) {
    out << format_number(cv.lambdas[i]) << ',' << format_number(cv.mean_value[i]) << ','
        << format_number(cv.se_value[i]) << ',' << cv.valid_folds[i] << ','
        << (cv.lambdas[i] == cv.lambda_min ? 1 : 0) << ',' << (cv.lambdas[i] == cv.lambda_1se ? 1 : 0)
        << '\n';
  }
}

void write_value_curve_csv(std::ostream& out, const ValueCurve& curve) {
  out << "k,added_variable,value,se,ci_lo,ci_hi,ok\n";
  for (std::size_t i = 0; i < curve.k.size(); ++i) {
    const std::string added =
        curve.k[i] == 0 ? (curve.trivial_arm == 1 ? "(all treated)" : "(all control)")
                        : curve.ranked_names[static_cast<std::size_t>(curve.k[i]) - 1];
    out << curve.k[i] << ',' << added << ',' << format_number(curve.value[i]) << ','
        << format_number(curve.se[i]) << ',' << format_number(curve.ci_lo[i]) << ','
        << format_number(curve.ci_hi[i]) << ',' << (curve.ok[i] ? 1 : 0) << '\n';
  }
}

}  // namespace itr
