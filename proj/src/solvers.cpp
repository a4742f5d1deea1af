#include "itr/solvers.hpp"

#include <algorithm>
#include <cmath>

namespace itr {

void SolverConfig::validate() const {
  require(tol > 0.0, "solver tol must be positive");
  require(max_outer_iter > 0, "max_outer_iter must be positive");
  require(max_inner_iter > 0, "max_inner_iter must be positive");
  require(max_newton_iter > 0, "max_newton_iter must be positive");
  require(inner_tol > 0.0, "inner_tol must be positive");
  require(hinge_mu_start > 0.0 && hinge_mu_min > 0.0 && hinge_mu_min <= hinge_mu_start,
          "hinge smoothing schedule must satisfy 0 < mu_min <= mu_start");
}

double soft_threshold(double v, double t) {
  if (v > t) return v - t;
  if (v < -t) return v + t;
  return 0.0;
}

namespace {

void check_shapes(const Matrix& design, const ContrastEstimate& contrast) {
  require(design.rows() == contrast.size(), "contrast is not aligned with the design rows");
  require(contrast.labels.size() == contrast.size() && contrast.weights.size() == contrast.size(),
          "contrast labels/weights are not aligned");
  require(design.cols() > 0, "design has no columns");
}

// The fit restricted to units with positive weight and to free coordinates.
// Rows are z_i * x_i so that margins are u = m * beta. Internally the risk is
// averaged over the n+ weighted units and lambda is scaled by n / n+, which
// multiplies the objective by n / n+ without moving its minimizer; `report`
// maps internal objective values back to the 1/n scale.
struct Problem {
  Matrix m;
  Vector w;
  double inv_n = 1.0;
  double report = 1.0;
  std::vector<Index> cols;
  Vector pen;  // lambda * adaptive weight, per free coordinate
  Index dim = 0;
  double curvature = 0.0;  // lambda_max(m' W m) / n

  Vector compress(const Vector& full) const {
    Vector beta(static_cast<Index>(cols.size()));
    for (std::size_t k = 0; k < cols.size(); ++k) beta[k] = full[cols[k]];
    return beta;
  }

  Vector expand(const Vector& beta) const {
    Vector full = Vector::Zero(dim);
    for (std::size_t k = 0; k < cols.size(); ++k) full[cols[k]] = beta[k];
    return full;
  }

  double l1(const Vector& beta) const { return pen.cwiseProduct(beta.cwiseAbs()).sum(); }

  double ramp(const Vector& beta) const {
    const Vector u = m * beta;
    double total = 0.0;
    for (Index i = 0; i < u.size(); ++i) total += w[i] * loss_ramp(u[i]);
    return total * inv_n + l1(beta);
  }

  double hinge(const Vector& beta) const {
    const Vector u = m * beta;
    double total = 0.0;
    for (Index i = 0; i < u.size(); ++i) total += w[i] * loss_hinge(u[i]);
    return total * inv_n + l1(beta);
  }
};

Problem make_problem(const Matrix& design, const ContrastEstimate& contrast,
                     const PenaltySpec& spec) {
  check_shapes(design, contrast);
  const PenaltyWeights pw = resolve_penalty(spec, design.cols());
  Problem pr;
  pr.dim = design.cols();
  std::vector<Index> rows;
  for (Index i = 0; i < contrast.size(); ++i) {
    require(contrast.weights[i] >= 0.0 && std::isfinite(contrast.weights[i]),
            "contrast weights must be finite and non-negative");
    if (contrast.weights[i] > 0.0) rows.push_back(i);
  }
  const double n_all = static_cast<double>(design.rows());
  const double n_pos = rows.empty() ? n_all : static_cast<double>(rows.size());
  pr.inv_n = 1.0 / n_pos;
  pr.report = n_pos / n_all;
  for (Index j = 0; j < pr.dim; ++j) {
    if (pw.free[j]) pr.cols.push_back(j);
  }
  pr.m = design(rows, pr.cols);
  pr.w = contrast.weights(rows);
  for (Index r = 0; r < pr.m.rows(); ++r) pr.m.row(r) *= contrast.labels[rows[r]];
  pr.pen.resize(static_cast<Index>(pr.cols.size()));
  for (std::size_t k = 0; k < pr.cols.size(); ++k) pr.pen[k] = spec.lambda * pw.weight[pr.cols[k]] / pr.report;
  if (pr.m.rows() > 0 && pr.m.cols() > 0) {
    const Matrix gram = pr.m.transpose() * pr.w.asDiagonal() * pr.m;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
    pr.curvature = std::max(eig.eigenvalues().maxCoeff(), 0.0) * pr.inv_n;
  }
  return pr;
}

Vector prox(const Vector& v, const Vector& thresholds) {
  Vector out(v.size());
  for (Index j = 0; j < v.size(); ++j) out[j] = soft_threshold(v[j], thresholds[j]);
  return out;
}

// Accelerated proximal gradient with backtracking and adaptive restart.
// `smooth(beta, grad)` returns the smooth part and fills grad when non-null.
template <class Smooth>
SubproblemResult minimize_composite(const Smooth& smooth, const Vector& pen, Vector x,
                                    double lipschitz, const SolverConfig& cfg) {
  SubproblemResult best;
  if (x.size() == 0) {
    best.eta = x;
    best.objective = smooth(x, nullptr);
    best.converged = true;
    return best;
  }
  auto l1 = [&](const Vector& b) { return pen.cwiseProduct(b.cwiseAbs()).sum(); };
  Vector gy;
  double fy = smooth(x, &gy);
  double fx_total = fy + l1(x);
  best.eta = x;
  best.objective = fx_total;

  double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
  Vector y = x;
  double t = 1.0;
  for (int k = 1; k <= cfg.max_inner_iter; ++k) {
    best.iterations = k;
    Vector x_new;
    double f_new = 0.0;
    for (int bt = 0; bt < 60; ++bt) {
      x_new = prox(y - step * gy, step * pen);
      f_new = smooth(x_new, nullptr);
      const Vector diff = x_new - y;
      const double model = fy + gy.dot(diff) + diff.squaredNorm() / (2.0 * step);
      if (f_new <= model + 1e-14 * std::max(1.0, std::abs(fy))) break;
      step *= 0.5;
    }
    const double total_new = f_new + l1(x_new);
    if (total_new < best.objective) {
      best.objective = total_new;
      best.eta = x_new;
    }
    if (std::abs(total_new - fx_total) <= cfg.inner_tol * std::max(1.0, std::abs(total_new))) {
      best.converged = true;
      break;
    }
    if (cfg.accelerate && total_new > fx_total) {
      // Momentum overshot: restart from the last accepted point.
      t = 1.0;
      y = x;
      fy = smooth(y, &gy);
      continue;
    }
    if (cfg.accelerate) {
      const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
      y = x_new + ((t - 1.0) / t_next) * (x_new - x);
      t = t_next;
    } else {
      y = x_new;
    }
    x = std::move(x_new);
    fx_total = total_new;
    fy = smooth(y, &gy);
  }
  return best;
}

// Smooth part of the d.c. subproblem: (1/n) sum {w_i l_1(u_i) - xi_i u_i}.
struct SubproblemSmooth {
  const Problem& pr;
  const Vector& xi;

  double operator()(const Vector& beta, Vector* grad) const {
    const Vector u = pr.m * beta;
    double f = 0.0;
    Vector du(u.size());
    for (Index i = 0; i < u.size(); ++i) {
      f += pr.w[i] * loss_s(u[i], 1.0) - xi[i] * u[i];
      du[i] = pr.w[i] * dloss_s(u[i], 1.0) - xi[i];
    }
    if (grad) *grad = pr.inv_n * (pr.m.transpose() * du);
    return f * pr.inv_n;
  }
};

// Proximal Newton for the d.c. subproblem. The smooth part is piecewise
// quadratic, so the generalized Hessian (1/n) m' diag(2 w_i 1{0 <= u_i < 1}) m
// gives a local model that is minimized exactly by cyclic coordinate descent.
// An Armijo backtracking search on the composite objective keeps every step
// a descent step.
SubproblemResult newton_subproblem(const Problem& pr, const Vector& xi, Vector x,
                                   const SolverConfig& cfg) {
  SubproblemSmooth smooth{pr, xi};
  SubproblemResult res;
  const Index dim = x.size();
  auto l1 = [&](const Vector& b) { return pr.pen.cwiseProduct(b.cwiseAbs()).sum(); };
  double fx = smooth(x, nullptr) + l1(x);
  res.eta = x;
  res.objective = fx;
  if (dim == 0) {
    res.converged = true;
    return res;
  }
  const double ridge_floor = std::max(1e-10 * 2.0 * pr.curvature, 1e-14);
  double ridge = std::max(1e-4 * 2.0 * pr.curvature, ridge_floor);
  for (int k = 1; k <= cfg.max_newton_iter; ++k) {
    res.iterations = k;
    const Vector u = pr.m * x;
    Vector du(u.size());
    std::vector<Index> quad;
    for (Index i = 0; i < u.size(); ++i) {
      du[i] = pr.w[i] * dloss_s(u[i], 1.0) - xi[i];
      if (u[i] >= 0.0 && u[i] < 1.0) quad.push_back(i);
    }
    const Vector g = pr.inv_n * (pr.m.transpose() * du);
    Matrix h = Matrix::Zero(dim, dim);
    if (!quad.empty()) {
      const Vector scale = (2.0 * pr.inv_n * pr.w(quad)).cwiseSqrt();
      const Matrix mq = scale.asDiagonal() * pr.m(quad, Eigen::all);
      h.noalias() = mq.transpose() * mq;
    }
    h.diagonal().array() += ridge;

    Vector d = Vector::Zero(dim);
    Vector hd = Vector::Zero(dim);
    for (int sweep = 0; sweep < 100; ++sweep) {
      double max_change = 0.0;
      for (Index j = 0; j < dim; ++j) {
        const double current = x[j] + d[j];
        const double target =
            soft_threshold(current - (g[j] + hd[j]) / h(j, j), pr.pen[j] / h(j, j));
        const double delta = target - current;
        if (delta != 0.0) {
          d[j] += delta;
          hd += delta * h.col(j);
          max_change = std::max(max_change, std::abs(delta) * std::sqrt(h(j, j)));
        }
      }
      if (max_change <= 1e-10 * std::max(1.0, std::sqrt(std::abs(fx)))) break;
    }

    const double predicted = g.dot(d) + l1(x + d) - l1(x);
    if (-predicted <= cfg.inner_tol * std::max(1.0, std::abs(fx))) {
      res.converged = true;
      break;
    }
    double alpha = 1.0;
    bool accepted = false;
    Vector candidate;
    double fc = fx;
    for (int bt = 0; bt < 60; ++bt) {
      candidate = x + alpha * d;
      fc = smooth(candidate, nullptr) + l1(candidate);
      if (fc <= fx + 0.25 * alpha * predicted) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    // Levenberg-style damping: relax after full steps, tighten after cuts.
    ridge = alpha == 1.0 ? std::max(ridge * 0.25, ridge_floor) : ridge * 4.0 / alpha;
    const double change = fx - fc;
    x = std::move(candidate);
    fx = fc;
    if (fx < res.objective) {
      res.objective = fx;
      res.eta = x;
    }
    if (change <= cfg.inner_tol * 1e-3 * std::max(1.0, std::abs(fx))) {
      res.converged = true;
      break;
    }
  }
  return res;
}

SubproblemResult solve_subproblem(const Problem& pr, const Vector& xi, const Vector& start,
                                  const SolverConfig& cfg) {
  SubproblemSmooth smooth{pr, xi};
  if (cfg.inner_solver == InnerSolver::Fista) {
    return minimize_composite(smooth, pr.pen, start, 2.0 * pr.curvature, cfg);
  }
  SubproblemResult res = newton_subproblem(pr, xi, start, cfg);
  if (!res.converged && res.iterations <= 1) {
    // Newton made no progress; fall back to proximal gradient.
    SubproblemResult polish = minimize_composite(smooth, pr.pen, res.eta, 2.0 * pr.curvature, cfg);
    polish.iterations += res.iterations;
    if (polish.objective <= res.objective) return polish;
  }
  return res;
}

// Huber-smoothed hinge: h(v) = v^2 / (2 mu) on [0, mu), v - mu/2 above, v = 1 - u.
struct SmoothedHinge {
  const Problem& pr;
  double mu;

  double operator()(const Vector& beta, Vector* grad) const {
    const Vector u = pr.m * beta;
    double f = 0.0;
    Vector du(u.size());
    for (Index i = 0; i < u.size(); ++i) {
      const double v = 1.0 - u[i];
      if (v <= 0.0) {
        du[i] = 0.0;
      } else if (v < mu) {
        f += pr.w[i] * v * v / (2.0 * mu);
        du[i] = -pr.w[i] * v / mu;
      } else {
        f += pr.w[i] * (v - 0.5 * mu);
        du[i] = -pr.w[i];
      }
    }
    if (grad) *grad = pr.inv_n * (pr.m.transpose() * du);
    return f * pr.inv_n;
  }
};

Vector dc_xi(const Problem& pr, const Vector& beta) {
  const Vector u = pr.m * beta;
  Vector xi(u.size());
  for (Index i = 0; i < u.size(); ++i) xi[i] = pr.w[i] * dloss_s(u[i], 0.0);
  return xi;
}

Vector full_xi(const Problem& pr, const Vector& xi_full, const ContrastEstimate& contrast) {
  Vector xi(pr.m.rows());
  Index r = 0;
  for (Index i = 0; i < contrast.size(); ++i) {
    if (contrast.weights[i] > 0.0) {
      xi[r++] = xi_full[i];
    } else {
      require(xi_full[i] == 0.0, "xi must vanish on units with zero weight");
    }
  }
  return xi;
}

}  // namespace

double ramp_objective(const Vector& eta, const Matrix& design, const ContrastEstimate& contrast,
                      const PenaltySpec& spec) {
  return empirical_risk(eta, contrast, design, LossKind::Ramp) + penalty(eta, spec);
}

double hinge_objective(const Vector& eta, const Matrix& design, const ContrastEstimate& contrast,
                       const PenaltySpec& spec) {
  return empirical_risk(eta, contrast, design, LossKind::Hinge) + penalty(eta, spec);
}

double subproblem_objective(const Vector& eta, const Matrix& design,
                            const ContrastEstimate& contrast, const Vector& xi,
                            const PenaltySpec& spec) {
  check_shapes(design, contrast);
  require(xi.size() == contrast.size(), "xi is not aligned with the contrast");
  const Vector scores = design * eta;
  double total = 0.0;
  for (Index i = 0; i < scores.size(); ++i) {
    const double u = contrast.labels[i] * scores[i];
    total += contrast.weights[i] * loss_s(u, 1.0) - xi[i] * u;
  }
  return total / static_cast<double>(scores.size()) + penalty(eta, spec);
}

SubproblemResult solve_convex_subproblem(const Matrix& design, const ContrastEstimate& contrast,
                                         const Vector& xi, const PenaltySpec& spec,
                                         const Vector& warm_start, const SolverConfig& cfg) {
  cfg.validate();
  require(xi.size() == contrast.size(), "xi is not aligned with the contrast");
  require(warm_start.size() == design.cols(), "warm start has the wrong length");
  const Problem pr = make_problem(design, contrast, spec);
  const Vector xi_kept = full_xi(pr, xi, contrast);
  SubproblemResult res = solve_subproblem(pr, xi_kept, pr.compress(warm_start), cfg);
  res.eta = pr.expand(res.eta);
  res.objective *= pr.report;
  return res;
}

FitResult dc_fit(const Matrix& design, const ContrastEstimate& contrast, const PenaltySpec& spec,
                 const Vector& eta0, const SolverConfig& cfg) {
  cfg.validate();
  require(eta0.size() == design.cols(), "starting coefficients have the wrong length");
  const Problem pr = make_problem(design, contrast, spec);
  FitResult fit;
  Vector beta = pr.compress(eta0);
  double objective = pr.ramp(beta);
  fit.objective_trace.push_back(objective);
  for (int t = 1; t <= cfg.max_outer_iter; ++t) {
    fit.outer_iterations = t;
    const Vector xi = dc_xi(pr, beta);
    const SubproblemResult sub = solve_subproblem(pr, xi, beta, cfg);
    double next_objective = pr.ramp(sub.eta);
    Vector next = sub.eta;
    if (next_objective > objective) {
      // The majorant guarantees descent; anything else is rounding.
      next = beta;
      next_objective = objective;
    }
    const double loss_change = std::abs(objective - next_objective);
    const double coef_change = (next - beta).norm();
    beta = std::move(next);
    objective = next_objective;
    fit.objective_trace.push_back(objective);
    const double change = cfg.stop_rule == StopRule::LossChange ? loss_change : coef_change;
    if (change <= cfg.tol) {
      fit.converged = true;
      break;
    }
  }
  fit.eta = pr.expand(beta);
  fit.final_objective = objective * pr.report;
  for (double& v : fit.objective_trace) v *= pr.report;
  return fit;
}

FitResult hinge_fit(const Matrix& design, const ContrastEstimate& contrast,
                    const PenaltySpec& spec, const SolverConfig& cfg,
                    const std::optional<Vector>& warm_start) {
  cfg.validate();
  Vector start = warm_start ? *warm_start : weighted_least_squares_seed(design, contrast, spec.active);
  require(start.size() == design.cols(), "starting coefficients have the wrong length");
  const Problem pr = make_problem(design, contrast, spec);
  FitResult fit;
  Vector beta = pr.compress(start);
  Vector best = beta;
  double best_objective = pr.hinge(beta);
  fit.objective_trace.push_back(best_objective);
  bool last_converged = false;
  for (double mu = cfg.hinge_mu_start; mu >= cfg.hinge_mu_min * (1.0 - 1e-9); mu *= 0.1) {
    SmoothedHinge smooth{pr, mu};
    const SubproblemResult stage =
        minimize_composite(smooth, pr.pen, beta, pr.curvature / mu, cfg);
    beta = stage.eta;
    last_converged = stage.converged;
    const double exact = pr.hinge(beta);
    if (exact < best_objective) {
      best_objective = exact;
      best = beta;
    }
    fit.objective_trace.push_back(best_objective);
    ++fit.outer_iterations;
  }
  fit.eta = pr.expand(best);
  fit.final_objective = best_objective * pr.report;
  for (double& v : fit.objective_trace) v *= pr.report;
  fit.converged = last_converged;
  return fit;
}

FitResult fit_surrogate(LossKind loss, const Matrix& design, const ContrastEstimate& contrast,
                        const PenaltySpec& spec, const Vector& start, const SolverConfig& cfg) {
  switch (loss) {
    case LossKind::Ramp: return dc_fit(design, contrast, spec, start, cfg);
    case LossKind::Hinge: return hinge_fit(design, contrast, spec, cfg, start);
    case LossKind::ZeroOne: break;
  }
  throw InputError("the 0-1 loss cannot be fitted directly; use ramp or hinge");
}

Vector weighted_least_squares_seed(const Matrix& design, const ContrastEstimate& contrast,
                                   const std::vector<bool>& active) {
  check_shapes(design, contrast);
  require(active.empty() || static_cast<Index>(active.size()) == design.cols(),
          "active mask has the wrong length");
  if (!(contrast.weights.array() > 0.0).any()) {
    throw InputError("degenerate contrast: all tau estimates are 0");
  }
  std::vector<Index> cols;
  for (Index j = 0; j < design.cols(); ++j) {
    if (active.empty() || active[j]) cols.push_back(j);
  }
  Vector full = Vector::Zero(design.cols());
  if (cols.empty()) return full;
  std::vector<Index> rows;
  for (Index i = 0; i < contrast.size(); ++i) {
    if (contrast.weights[i] > 0.0) rows.push_back(i);
  }
  const Vector sw = contrast.weights(rows).cwiseSqrt();
  const Matrix x = sw.asDiagonal() * design(rows, cols);
  const Vector z = sw.cwiseProduct(contrast.labels(rows));
  const Vector beta = Eigen::CompleteOrthogonalDecomposition<Matrix>(x).solve(z);
  for (std::size_t k = 0; k < cols.size(); ++k) full[cols[k]] = beta[k];
  return full;
}

Vector initial_estimate(const Matrix& design, const ContrastEstimate& contrast, LossKind loss,
                        const SolverConfig& cfg, const std::vector<bool>& active) {
  check_shapes(design, contrast);
  if (!(contrast.weights.array() > 0.0).any()) {
    throw InputError("degenerate contrast: all tau estimates are 0");
  }
  PenaltySpec spec;
  spec.active = active;
  const Vector seed = cfg.seed == DcSeed::WeightedLeastSquares
                          ? weighted_least_squares_seed(design, contrast, active)
                          : Vector::Zero(design.cols());
  return fit_surrogate(loss, design, contrast, spec, seed, cfg).eta;
}

int descent_violations(const std::vector<double>& trace, double slack) {
  int count = 0;
  for (std::size_t t = 1; t < trace.size(); ++t) {
    if (trace[t] > trace[t - 1] + slack) ++count;
  }
  return count;
}

nlohmann::json to_json(const FitResult& fit, const std::vector<std::string>& names) {
  nlohmann::json coefficients = nlohmann::json::object();
  for (Index j = 0; j < fit.eta.size(); ++j) {
    const std::string key =
        j < static_cast<Index>(names.size()) ? names[j] : "eta" + std::to_string(j);
    coefficients[key] = fit.eta[j];
  }
  return nlohmann::json{{"coefficients", coefficients},
                        {"final_objective", fit.final_objective},
                        {"outer_iterations", fit.outer_iterations},
                        {"converged", fit.converged},
                        {"objective_trace", fit.objective_trace}};
}

}  // namespace itr
