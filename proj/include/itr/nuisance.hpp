#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "itr/common.hpp"
#include "itr/dataset.hpp"

namespace itr {

// Positivity bounds applied to estimated propensities.
struct ClipBounds {
  double lower = 0.01;
  double upper = 0.99;
};

// Per-unit nuisance predictions: e(X_i), mu(X_i; 0), mu(X_i; 1).
struct NuisanceFit {
  Vector propensity;
  Vector mu0;
  Vector mu1;
  ClipBounds clip;

  Index size() const { return propensity.size(); }
};

// AIPW contrast with the derived classification problem: labels z_i in
// {-1, +1} (z_i = -1 when tau_i == 0) and weights w_i = |tau_i|.
struct ContrastEstimate {
  Vector tau;
  Vector labels;
  Vector weights;

  Index size() const { return tau.size(); }
  static ContrastEstimate from_tau(Vector tau);
};

struct ValueEstimate {
  double value = 0.0;
  double variance = 0.0;

  double se() const;
  double ci_lower() const;
  double ci_upper() const;
};

inline constexpr double kNormalQuantile975 = 1.96;

struct IrlsOptions {
  int max_iter = 100;
  double tol = 1e-10;          // relative log-likelihood change
  double max_coef_norm = 1e3;  // beyond this the data are treated as separated
};

struct LogisticFit {
  Vector coefficients;
  Vector fitted;  // unclipped probabilities
  int iterations = 0;
};

// Logistic regression by iteratively reweighted least squares.
LogisticFit fit_logistic(const Matrix& design, const BinaryVector& treatment,
                         const IrlsOptions& options = {});

// Fitted propensities, before clipping.
Vector fit_propensity(const Matrix& design, const BinaryVector& treatment, int max_iter = 100,
                      double tol = 1e-10);

struct OutcomeFit {
  Vector coef0;  // OLS coefficients in the control arm
  Vector coef1;  // ... and in the treated arm
  Vector mu0;
  Vector mu1;
};

// One ordinary least-squares fit per arm, each evaluated on every row of the
// design. `column_names` (optional, one per design column) is used to name
// linearly dependent columns in the error message.
OutcomeFit fit_outcome(const Matrix& design, const BinaryVector& treatment, const Vector& outcome,
                       const std::vector<std::string>& column_names = {});

Vector clip_propensity(const Vector& propensity, double lower, double upper);

ContrastEstimate estimate_contrast_aipw(const BinaryVector& treatment, const Vector& outcome,
                                        const NuisanceFit& nuisance);
ContrastEstimate estimate_contrast_aipw(const Dataset& data, const NuisanceFit& nuisance);

// Doubly robust value of the regime d (assignments in {0,1}) with the
// influence-function variance.
ValueEstimate estimate_value_aipw(const BinaryVector& treatment, const Vector& outcome,
                                  const NuisanceFit& nuisance, const BinaryVector& assignments);
ValueEstimate estimate_value_aipw(const Dataset& data, const NuisanceFit& nuisance,
                                  const BinaryVector& assignments);

// Pluggable source of (e, mu0, mu1). Implementations are fitted on one set of
// rows and may be applied to others (held-out folds).
class NuisanceModel {
 public:
  virtual ~NuisanceModel() = default;
  virtual void fit(const Matrix& design, const BinaryVector& treatment, const Vector& outcome) = 0;
  virtual NuisanceFit predict(const Matrix& design) const = 0;
  virtual std::unique_ptr<NuisanceModel> clone() const = 0;
};

// Logistic propensity and per-arm OLS outcome models on the given design.
class GlmNuisanceModel final : public NuisanceModel {
 public:
  explicit GlmNuisanceModel(ClipBounds clip = {}, IrlsOptions irls = {},
                            std::vector<std::string> column_names = {});

  void fit(const Matrix& design, const BinaryVector& treatment, const Vector& outcome) override;
  NuisanceFit predict(const Matrix& design) const override;
  std::unique_ptr<NuisanceModel> clone() const override;

  const Vector& propensity_coefficients() const { return propensity_coef_; }
  const Vector& control_coefficients() const { return coef0_; }
  const Vector& treated_coefficients() const { return coef1_; }

 private:
  ClipBounds clip_;
  IrlsOptions irls_;
  std::vector<std::string> column_names_;
  Vector propensity_coef_;
  Vector coef0_;
  Vector coef1_;
  bool fitted_ = false;
};

nlohmann::json to_json(const NuisanceFit& fit);
NuisanceFit nuisance_fit_from_json(const nlohmann::json& j);

}  // namespace itr
