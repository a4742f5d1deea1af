#include "itr/nuisance.hpp"

#include <algorithm>
#include <cmath>

namespace itr {

namespace {

double log1p_exp(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double log_likelihood(const Vector& linear, const BinaryVector& treatment) {
  double ll = 0.0;
  for (Index i = 0; i < linear.size(); ++i) {
    ll += treatment[i] * linear[i] - log1p_exp(linear[i]);
  }
  return ll;
}

void check_nuisance(const NuisanceFit& nf, Index n) {
  require(nf.propensity.size() == n && nf.mu0.size() == n && nf.mu1.size() == n,
          "nuisance fit is not aligned with the data (" + std::to_string(nf.propensity.size()) +
              " vs " + std::to_string(n) + " units)");
  require(nf.propensity.allFinite() && nf.mu0.allFinite() && nf.mu1.allFinite(),
          "nuisance predictions contain non-finite values");
  require((nf.propensity.array() > 0.0).all() && (nf.propensity.array() < 1.0).all(),
          "propensities must lie strictly inside (0, 1)");
}

}  // namespace

ContrastEstimate ContrastEstimate::from_tau(Vector tau) {
  ContrastEstimate c;
  c.labels = tau.unaryExpr([](double t) { return t > 0.0 ? 1.0 : -1.0; });
  c.weights = tau.cwiseAbs();
  c.tau = std::move(tau);
  return c;
}

double ValueEstimate::se() const { return std::sqrt(std::max(variance, 0.0)); }
double ValueEstimate::ci_lower() const { return value - kNormalQuantile975 * se(); }
double ValueEstimate::ci_upper() const { return value + kNormalQuantile975 * se(); }

LogisticFit fit_logistic(const Matrix& design, const BinaryVector& treatment,
                         const IrlsOptions& options) {
  const Index n = design.rows();
  const Index d = design.cols();
  require(treatment.size() == n, "treatment length does not match design rows");
  require(n > 0 && d > 0, "empty design");
  const Index n1 = treatment.sum();
  require(n1 > 0 && n1 < n, "both treatment arms must be present to fit a propensity model");

  const Vector a = treatment.cast<double>();
  LogisticFit fit;
  fit.coefficients = Vector::Zero(d);
  Vector linear = Vector::Zero(n);
  double ll = log_likelihood(linear, treatment);

  for (int iter = 1; iter <= options.max_iter; ++iter) {
    const Vector prob = linear.unaryExpr(&sigmoid);
    const Vector w = (prob.array() * (1.0 - prob.array())).matrix();
    const Matrix xtwx = design.transpose() * w.asDiagonal() * design;
    const Vector score = design.transpose() * (a - prob);
    Eigen::LDLT<Matrix> ldlt(xtwx);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) {
      throw NumericalError(
          "logistic propensity fit failed: information matrix is singular "
          "(quasi-separation or collinear covariates); review covariates or clip propensities");
    }
    Vector step = ldlt.solve(score);
    Vector next = fit.coefficients + step;
    Vector next_linear = design * next;
    double next_ll = log_likelihood(next_linear, treatment);
    // Step halving keeps the iteration monotone in the likelihood.
    for (int halving = 0; halving < 30 && !(next_ll >= ll - 1e-12 * std::abs(ll)); ++halving) {
      step *= 0.5;
      next = fit.coefficients + step;
      next_linear = design * next;
      next_ll = log_likelihood(next_linear, treatment);
    }
    if (!next.allFinite() || next.norm() > options.max_coef_norm ||
        next_ll > -1e-8 * static_cast<double>(n)) {
      throw NumericalError(
          "logistic propensity fit diverged: treatment is (quasi-)separated by the covariates; "
          "review covariates or rely on propensity clipping");
    }
    const double change = std::abs(next_ll - ll) / (std::abs(ll) + 1e-300);
    fit.coefficients = std::move(next);
    linear = std::move(next_linear);
    ll = next_ll;
    fit.iterations = iter;
    if (change < options.tol) {
      fit.fitted = linear.unaryExpr(&sigmoid);
      return fit;
    }
  }
  throw NumericalError("logistic propensity fit did not converge in " +
                       std::to_string(options.max_iter) + " IRLS iterations");
}

Vector fit_propensity(const Matrix& design, const BinaryVector& treatment, int max_iter,
                      double tol) {
  IrlsOptions options;
  options.max_iter = max_iter;
  options.tol = tol;
  return fit_logistic(design, treatment, options).fitted;
}

namespace {

Vector fit_arm(const Matrix& design, const BinaryVector& treatment, const Vector& outcome, int arm,
               const std::vector<std::string>& column_names) {
  std::vector<Index> rows;
  for (Index i = 0; i < treatment.size(); ++i) {
    if (treatment[i] == arm) rows.push_back(i);
  }
  const Index d = design.cols();
  require(static_cast<Index>(rows.size()) > d,
          "treatment arm " + std::to_string(arm) + " has " + std::to_string(rows.size()) +
              " units, need more than the " + std::to_string(d) + " design columns");
  const Matrix x = design(rows, Eigen::all);
  const Vector y = outcome(rows);
  Eigen::ColPivHouseholderQR<Matrix> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() < d) {
    std::string dependent;
    const auto& perm = qr.colsPermutation().indices();
    for (Index k = qr.rank(); k < d; ++k) {
      const Index col = perm[k];
      if (!dependent.empty()) dependent += ", ";
      dependent += col < static_cast<Index>(column_names.size()) ? column_names[col]
                                                                  : "column " + std::to_string(col);
    }
    throw NumericalError("outcome model design is rank deficient in treatment arm " +
                         std::to_string(arm) + "; linearly dependent: " + dependent);
  }
  return qr.solve(y);
}

}  // namespace

OutcomeFit fit_outcome(const Matrix& design, const BinaryVector& treatment, const Vector& outcome,
                       const std::vector<std::string>& column_names) {
  require(treatment.size() == design.rows() && outcome.size() == design.rows(),
          "treatment/outcome length does not match design rows");
  OutcomeFit fit;
  fit.coef0 = fit_arm(design, treatment, outcome, 0, column_names);
  fit.coef1 = fit_arm(design, treatment, outcome, 1, column_names);
  fit.mu0 = design * fit.coef0;
  fit.mu1 = design * fit.coef1;
  return fit;
}

Vector clip_propensity(const Vector& propensity, double lower, double upper) {
  require(0.0 < lower && lower < upper && upper < 1.0,
          "clip bounds must satisfy 0 < lower < upper < 1");
  return propensity.cwiseMax(lower).cwiseMin(upper);
}

ContrastEstimate estimate_contrast_aipw(const BinaryVector& treatment, const Vector& outcome,
                                        const NuisanceFit& nf) {
  const Index n = treatment.size();
  require(outcome.size() == n, "outcome length does not match treatment");
  check_nuisance(nf, n);
  Vector tau(n);
  for (Index i = 0; i < n; ++i) {
    const double e = nf.propensity[i];
    const double a = treatment[i];
    tau[i] = a * (outcome[i] - nf.mu1[i]) / e - (1.0 - a) * (outcome[i] - nf.mu0[i]) / (1.0 - e) +
             nf.mu1[i] - nf.mu0[i];
  }
  return ContrastEstimate::from_tau(std::move(tau));
}

ContrastEstimate estimate_contrast_aipw(const Dataset& data, const NuisanceFit& nf) {
  return estimate_contrast_aipw(data.treatment, data.outcome, nf);
}

ValueEstimate estimate_value_aipw(const BinaryVector& treatment, const Vector& outcome,
                                  const NuisanceFit& nf, const BinaryVector& assignments) {
  const Index n = treatment.size();
  require(outcome.size() == n && assignments.size() == n,
          "policy assignments are not aligned with the data");
  check_nuisance(nf, n);
  Vector psi(n);
  for (Index i = 0; i < n; ++i) {
    const int d = assignments[i];
    require(d == 0 || d == 1, "policy assignments must be 0 or 1");
    const double a = treatment[i];
    const double e = nf.propensity[i];
    const double w = a * d / e + (1.0 - a) * (1.0 - d) / (1.0 - e);
    const double mu = d == 1 ? nf.mu1[i] : nf.mu0[i];
    psi[i] = w * (outcome[i] - mu) + mu;
  }
  ValueEstimate out;
  const double nd = static_cast<double>(n);
  out.value = psi.sum() / nd;
  out.variance = (psi.array() - out.value).square().sum() / (nd * nd);
  return out;
}

ValueEstimate estimate_value_aipw(const Dataset& data, const NuisanceFit& nf,
                                  const BinaryVector& assignments) {
  return estimate_value_aipw(data.treatment, data.outcome, nf, assignments);
}

GlmNuisanceModel::GlmNuisanceModel(ClipBounds clip, IrlsOptions irls,
                                   std::vector<std::string> column_names)
    : clip_(clip), irls_(irls), column_names_(std::move(column_names)) {
  require(0.0 < clip_.lower && clip_.lower < clip_.upper && clip_.upper < 1.0,
          "clip bounds must satisfy 0 < lower < upper < 1");
}

void GlmNuisanceModel::fit(const Matrix& design, const BinaryVector& treatment,
                           const Vector& outcome) {
  propensity_coef_ = fit_logistic(design, treatment, irls_).coefficients;
  const OutcomeFit outcome_fit = fit_outcome(design, treatment, outcome, column_names_);
  coef0_ = outcome_fit.coef0;
  coef1_ = outcome_fit.coef1;
  fitted_ = true;
}

NuisanceFit GlmNuisanceModel::predict(const Matrix& design) const {
  require(fitted_, "nuisance model used before fit()");
  require(design.cols() == propensity_coef_.size(), "design width does not match fitted model");
  NuisanceFit out;
  out.clip = clip_;
  const Vector linear = design * propensity_coef_;
  out.propensity = clip_propensity(linear.unaryExpr(&sigmoid), clip_.lower, clip_.upper);
  out.mu0 = design * coef0_;
  out.mu1 = design * coef1_;
  return out;
}

std::unique_ptr<NuisanceModel> GlmNuisanceModel::clone() const {
  return std::make_unique<GlmNuisanceModel>(*this);
}

nlohmann::json to_json(const NuisanceFit& fit) {
  auto as_array = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  return nlohmann::json{{"propensity", as_array(fit.propensity)},
                        {"mu0", as_array(fit.mu0)},
                        {"mu1", as_array(fit.mu1)},
                        {"clip", {fit.clip.lower, fit.clip.upper}}};
}

NuisanceFit nuisance_fit_from_json(const nlohmann::json& j) {
  auto as_vector = [](const nlohmann::json& arr) {
    const auto values = arr.get<std::vector<double>>();
    return Vector(Eigen::Map<const Vector>(values.data(), static_cast<Index>(values.size())));
  };
  NuisanceFit fit;
  fit.propensity = as_vector(j.at("propensity"));
  fit.mu0 = as_vector(j.at("mu0"));
  fit.mu1 = as_vector(j.at("mu1"));
  const auto clip = j.at("clip").get<std::vector<double>>();
  require(clip.size() == 2, "clip must hold two bounds");
  fit.clip = {clip[0], clip[1]};
  check_nuisance(fit, fit.propensity.size());
  return fit;
}

}  // namespace itr
