#include "itr/losses.hpp"

#include <cmath>

namespace itr {

std::string to_string(LossKind kind) {
  switch (kind) {
    case LossKind::ZeroOne: return "01";
    case LossKind::Hinge: return "hinge";
    case LossKind::Ramp: return "ramp";
  }
  return "unknown";
}

LossKind loss_kind_from_string(const std::string& name) {
  if (name == "ramp" || name == "dc") return LossKind::Ramp;
  if (name == "hinge" || name == "wsvm") return LossKind::Hinge;
  if (name == "01" || name == "zero_one") return LossKind::ZeroOne;
  throw InputError("unknown loss '" + name + "' (expected ramp or hinge)");
}

double loss_01(double u) { return u <= 0.0 ? 1.0 : 0.0; }

double loss_hinge(double u) { return u < 1.0 ? 1.0 - u : 0.0; }

double loss_s(double u, double s) {
  if (u >= s) return 0.0;
  if (u >= s - 1.0) return (s - u) * (s - u);
  return 2.0 * s - 2.0 * u - 1.0;
}

double dloss_s(double u, double s) {
  if (u >= s) return 0.0;
  if (u >= s - 1.0) return -2.0 * (s - u);
  return -2.0;
}

double loss_ramp(double u) {
  if (u >= 1.0) return 0.0;
  if (u >= 0.0) return (1.0 - u) * (1.0 - u);
  if (u >= -1.0) return 2.0 - (1.0 + u) * (1.0 + u);
  return 2.0;
}

double loss_value(LossKind kind, double u) {
  switch (kind) {
    case LossKind::ZeroOne: return loss_01(u);
    case LossKind::Hinge: return loss_hinge(u);
    case LossKind::Ramp: return loss_ramp(u);
  }
  return 0.0;
}

double empirical_risk(const Vector& eta, const ContrastEstimate& contrast, const Matrix& design,
                      LossKind kind) {
  require(design.cols() == eta.size(), "coefficient length does not match design columns");
  require(design.rows() == contrast.size(), "contrast is not aligned with the design");
  const Vector scores = design * eta;
  double total = 0.0;
  for (Index i = 0; i < scores.size(); ++i) {
    if (contrast.weights[i] == 0.0) continue;
    total += contrast.weights[i] * loss_value(kind, contrast.labels[i] * scores[i]);
  }
  return total / static_cast<double>(scores.size());
}

PenaltyWeights resolve_penalty(const PenaltySpec& spec, Index dim) {
  require(spec.lambda >= 0.0, "lambda must be non-negative");
  require(spec.gamma > 0.0, "gamma must be positive");
  require(spec.reference.size() == 0 || spec.reference.size() == dim,
          "reference coefficients have the wrong length");
  require(spec.active.empty() || static_cast<Index>(spec.active.size()) == dim,
          "active mask has the wrong length");
  PenaltyWeights out;
  out.weight = Vector::Ones(dim);
  out.free.assign(dim, true);
  if (!spec.active.empty()) out.free = spec.active;
  if (!spec.penalize_intercept && dim > 0) out.weight[0] = 0.0;
  for (Index j = 0; j < dim; ++j) {
    if (out.weight[j] == 0.0 || spec.reference.size() == 0) continue;
    const double ref = std::abs(spec.reference[j]);
    if (ref < kExcludedReference) {
      out.free[j] = false;
      out.weight[j] = 0.0;
    } else {
      out.weight[j] = 1.0 / std::pow(ref, spec.gamma);
    }
  }
  for (Index j = 0; j < dim; ++j) {
    if (!out.free[j]) out.weight[j] = 0.0;
  }
  return out;
}

double penalty(const Vector& eta, const PenaltySpec& spec) {
  if (spec.lambda == 0.0) return 0.0;
  const PenaltyWeights pw = resolve_penalty(spec, eta.size());
  return spec.lambda * pw.weight.cwiseProduct(eta.cwiseAbs()).sum();
}

}  // namespace itr
