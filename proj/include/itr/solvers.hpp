#pragma once

#include <optional>
#include <vector>

#include <json.hpp>

#include "itr/common.hpp"
#include "itr/losses.hpp"
#include "itr/nuisance.hpp"

namespace itr {

enum class StopRule {
  LossChange,         // |L(eta_t) - L(eta_{t-1})| <= tol
  CoefficientChange,  // ||eta_t - eta_{t-1}|| <= tol
};

// How the d.c. loop is seeded when no starting point is supplied.
enum class DcSeed { WeightedLeastSquares, Zero };

// Inner solver for the convex d.c. subproblem.
enum class InnerSolver {
  ProximalNewton,  // coordinate descent on a local quadratic model + line search
  Fista,           // accelerated proximal gradient
};

struct SolverConfig {
  double tol = 1e-5;
  int max_outer_iter = 200;
  int max_inner_iter = 5000;  // proximal-gradient iterations
  int max_newton_iter = 100;
  double inner_tol = 1e-8;
  StopRule stop_rule = StopRule::LossChange;
  DcSeed seed = DcSeed::WeightedLeastSquares;
  InnerSolver inner_solver = InnerSolver::ProximalNewton;
  bool accelerate = true;  // momentum for the proximal-gradient iterations
  // Smoothing schedule for the hinge problem: mu goes from hinge_mu_start
  // down by a factor of 10 per stage until hinge_mu_min.
  double hinge_mu_start = 1.0;
  double hinge_mu_min = 1e-7;

  void validate() const;
};

struct FitResult {
  Vector eta;
  double final_objective = 0.0;
  int outer_iterations = 0;
  bool converged = false;
  std::vector<double> objective_trace;
};

struct SubproblemResult {
  Vector eta;
  double objective = 0.0;
  int iterations = 0;
  bool converged = false;
};

// sign(v) * max(|v| - t, 0).
double soft_threshold(double v, double t);

// (1/n) sum_i w_i l_r(u_i) + J(eta): the smoothed-ramp objective.
double ramp_objective(const Vector& eta, const Matrix& design, const ContrastEstimate& contrast,
                      const PenaltySpec& spec);

// (1/n) sum_i w_i max(1 - u_i, 0) + J(eta).
double hinge_objective(const Vector& eta, const Matrix& design, const ContrastEstimate& contrast,
                       const PenaltySpec& spec);

// (1/n) sum_i {w_i l_1(u_i) - xi_i u_i} + J(eta): the convex majorant solved
// at each d.c. step.
double subproblem_objective(const Vector& eta, const Matrix& design,
                            const ContrastEstimate& contrast, const Vector& xi,
                            const PenaltySpec& spec);

// Minimizes the convex majorant from `warm_start` with the configured inner
// solver. Returns the best iterate seen, so the returned objective never
// exceeds the objective at `warm_start`.
SubproblemResult solve_convex_subproblem(const Matrix& design, const ContrastEstimate& contrast,
                                         const Vector& xi, const PenaltySpec& spec,
                                         const Vector& warm_start, const SolverConfig& cfg);

// d.c. iteration for the penalized smoothed-ramp objective, starting at eta0.
FitResult dc_fit(const Matrix& design, const ContrastEstimate& contrast, const PenaltySpec& spec,
                 const Vector& eta0, const SolverConfig& cfg);

// Penalized weighted hinge (WSVM) objective. Solved by accelerated proximal
// gradient on a Huber-smoothed hinge with a decreasing smoothing schedule.
// Without a warm start the weighted least-squares seed is used.
FitResult hinge_fit(const Matrix& design, const ContrastEstimate& contrast,
                    const PenaltySpec& spec, const SolverConfig& cfg,
                    const std::optional<Vector>& warm_start = std::nullopt);

// Dispatch on the surrogate.
FitResult fit_surrogate(LossKind loss, const Matrix& design, const ContrastEstimate& contrast,
                        const PenaltySpec& spec, const Vector& start, const SolverConfig& cfg);

// Weighted least-squares regression of z on x with weights w, restricted to
// `active` coordinates (empty = all). Minimum-norm when rank deficient.
Vector weighted_least_squares_seed(const Matrix& design, const ContrastEstimate& contrast,
                                   const std::vector<bool>& active = {});

// Unpenalized (lambda = 0) surrogate fit used as the adaptive-LASSO reference.
Vector initial_estimate(const Matrix& design, const ContrastEstimate& contrast, LossKind loss,
                        const SolverConfig& cfg, const std::vector<bool>& active = {});

// Number of steps where the trace rises by more than `slack`.
int descent_violations(const std::vector<double>& trace, double slack = 1e-8);

nlohmann::json to_json(const FitResult& fit, const std::vector<std::string>& coefficient_names);

}  // namespace itr
