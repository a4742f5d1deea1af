#pragma once

#include <string>
#include <vector>

#include "itr/common.hpp"
#include "itr/nuisance.hpp"

namespace itr {

enum class LossKind { ZeroOne, Hinge, Ramp };

std::string to_string(LossKind kind);
LossKind loss_kind_from_string(const std::string& name);

// l01(u) = I(u <= 0).
double loss_01(double u);

// max(1 - u, 0).
double loss_hinge(double u);

// Convex piecewise quadratic family:
//   0              if u >= s
//   (s - u)^2      if s - 1 <= u < s
//   2s - 2u - 1    if u < s - 1
double loss_s(double u, double s);

// d/du loss_s(u, s). Continuous, so loss_s is C^1.
double dloss_s(double u, double s);

// Smoothed ramp loss, equal to loss_s(u, 1) - loss_s(u, 0).
double loss_ramp(double u);

double loss_value(LossKind kind, double u);

// (1/n) sum_i w_i loss(z_i x_i' eta).
double empirical_risk(const Vector& eta, const ContrastEstimate& contrast, const Matrix& design,
                      LossKind kind);

// Reference coefficients below this magnitude drop their coordinate from the
// model instead of producing an infinite adaptive weight.
inline constexpr double kExcludedReference = 1e-12;

// Adaptive LASSO penalty lambda * sum_j |eta_j| / |ref_j|^gamma. An empty
// `reference` gives the plain LASSO. Coordinate 0 is the intercept.
struct PenaltySpec {
  double lambda = 0.0;
  double gamma = 1.0;
  Vector reference;
  bool penalize_intercept = false;
  // Coordinates marked false are held at zero (variable not in the policy).
  // Empty means every coordinate is free.
  std::vector<bool> active;
};

struct PenaltyWeights {
  Vector weight;              // per-coordinate multiplier of lambda; 0 if unpenalized
  std::vector<bool> free;     // false: coordinate is fixed at zero
};

PenaltyWeights resolve_penalty(const PenaltySpec& spec, Index dim);

double penalty(const Vector& eta, const PenaltySpec& spec);

}  // namespace itr
