// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails.

#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "itr/losses.hpp"
#include "itr/nuisance.hpp"
#include "itr/pipeline.hpp"
#include "itr/sim.hpp"
#include "itr/solvers.hpp"
#include "oracles.hpp"

using namespace itr;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(double v, int digits = 4) {
  std::ostringstream s;
  s << std::setprecision(digits) << v;
  return s.str();
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << " [C" << id << "] " << name << ": " << detail << std::endl;
}

// Every d.c. fit run by this binary is recorded here for the descent check.
FitDiagnostics all_fits;

// ---------------------------------------------------------------------------

void criterion_loss_identities() {
  const auto start = Clock::now();
  std::mt19937_64 rng(20240101);
  std::uniform_real_distribution<double> unif(-5.0, 5.0);
  double worst_identity = 0.0;
  double worst_derivative = 0.0;
  int derivative_checks = 0;
  for (int k = 0; k < 10000; ++k) {
    const double u = unif(rng);
    worst_identity = std::max(worst_identity, std::abs(loss_ramp(u) - (loss_s(u, 1.0) - loss_s(u, 0.0))));
    for (double s : {0.0, 1.0}) {
      if (std::abs(u - s) < 1e-4 || std::abs(u - s + 1.0) < 1e-4) continue;
      worst_derivative =
          std::max(worst_derivative, std::abs(dloss_s(u, s) - oracle::central_difference(&loss_s, u, s)));
      ++derivative_checks;
    }
  }
  const double elapsed = seconds_since(start);
  const bool pass = worst_identity <= 1e-12 && worst_derivative <= 1e-6 && elapsed < 1.0;
  report(1, "loss identities", pass,
         "max |ramp - (l1 - l0)| = " + fmt(worst_identity) + " (<= 1e-12) over 10000 u; max |dloss - FD| = " +
             fmt(worst_derivative) + " (<= 1e-6) over " + std::to_string(derivative_checks) +
             " checks; " + fmt(elapsed, 3) + " s (< 1 s)");
}

// ---------------------------------------------------------------------------

void criterion_value_risk_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 rng(777);
  std::uniform_int_distribution<int> size(4, 12);
  std::uniform_int_distribution<int> small(-5, 5);
  std::uniform_int_distribution<int> base(-3, 3);
  int matched = 0;
  int zero_scores = 0;
  std::size_t largest_set = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const Index n = size(rng);
    Matrix design(n, 2);
    Oracle truth;
    truth.true_mu0.resize(n);
    truth.true_tau.resize(n);
    for (Index i = 0; i < n; ++i) {
      design(i, 0) = 1.0;
      design(i, 1) = small(rng);
      truth.true_mu0[i] = base(rng);
      truth.true_tau[i] = small(rng);
    }
    truth.true_mu1 = truth.true_mu0 + truth.true_tau;
    const ContrastEstimate contrast = ContrastEstimate::from_tau(truth.true_tau);

    // Offset grid: with integer covariates no score x'eta is exactly 0.
    std::vector<double> values, risks;
    values.reserve(101 * 101);
    risks.reserve(101 * 101);
    for (int a = 0; a < 101; ++a) {
      for (int b = 0; b < 101; ++b) {
        const Vector eta = (Vector(2) << -1.0 + 0.02 * a + 0.0073, -1.0 + 0.02 * b).finished();
        const Vector scores = design * eta;
        zero_scores += static_cast<int>((scores.array() == 0.0).count());
        const BinaryVector d = (scores.array() > 0.0).cast<int>();
        values.push_back(true_value(d, truth));
        risks.push_back(empirical_risk(eta, contrast, design, LossKind::ZeroOne));
      }
    }
    const double vmax = *std::max_element(values.begin(), values.end());
    const double rmin = *std::min_element(risks.begin(), risks.end());
    std::set<std::size_t> argmax, argmin;
    for (std::size_t k = 0; k < values.size(); ++k) {
      if (values[k] == vmax) argmax.insert(k);
      if (risks[k] == rmin) argmin.insert(k);
    }
    largest_set = std::max(largest_set, argmax.size());
    matched += argmax == argmin;
  }
  const double elapsed = seconds_since(start);
  const bool pass = matched == 20 && zero_scores == 0 && elapsed < 10.0;
  report(2, "value maximizers equal 0-1 risk minimizers", pass,
         std::to_string(matched) + "/20 instances with identical argmax/argmin sets on a 101x101 grid (largest set " +
             std::to_string(largest_set) + " points, " + std::to_string(zero_scores) + " zero scores); " +
             fmt(elapsed, 3) + " s (< 10 s)");
}

// ---------------------------------------------------------------------------

void criterion_subproblem_optimality() {
  const auto start = Clock::now();
  std::mt19937_64 rng(31337);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> size(5, 50);
  const double lambdas[] = {0.0, 0.02, 0.1, 0.5};
  int ok = 0;
  double worst_gap = -1e300;
  for (int inst = 0; inst < 20; ++inst) {
    const int dim = inst % 2 == 0 ? 2 : 1;
    const auto data = oracle::random_instance(rng, size(rng), dim, dim == 2);
    const ContrastEstimate contrast = ContrastEstimate::from_tau(data.z.cwiseProduct(data.w));
    Vector ref(dim);
    for (int j = 0; j < dim; ++j) ref[j] = normal(rng);
    Vector xi(data.x.rows());
    for (Index i = 0; i < xi.size(); ++i) {
      xi[i] = data.w[i] * dloss_s(data.z[i] * data.x.row(i).dot(ref), 0.0);
    }
    PenaltySpec spec;
    spec.lambda = lambdas[inst % 4];
    spec.penalize_intercept = dim == 1;
    const Vector pw = dim == 1 ? Vector::Ones(1) : (Vector(2) << 0.0, 1.0).finished();
    const SubproblemResult r =
        solve_convex_subproblem(data.x, contrast, xi, spec, Vector::Zero(dim), SolverConfig{});
    const double grid = oracle::grid_min_subproblem(data, xi, spec.lambda, pw, 0.01);
    const double direct = oracle::subproblem(r.eta, data, xi, spec.lambda, pw);
    worst_gap = std::max(worst_gap, direct - grid);
    ok += direct <= grid + 1e-3 && std::abs(direct - r.objective) <= 1e-9 * std::max(1.0, std::abs(direct));
  }
  const double elapsed = seconds_since(start);
  const bool pass = ok == 20 && elapsed < 30.0;
  report(3, "convex subproblem optimality", pass,
         std::to_string(ok) + "/20 instances with objective <= grid minimum + 1e-3 (largest objective - grid = " +
             fmt(worst_gap) + "); " + fmt(elapsed, 3) + " s (< 30 s)");
}

// ---------------------------------------------------------------------------

// Random d.c. fits with varied settings, recorded for the descent criterion.
void descent_battery() {
  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> size(20, 200);
  std::uniform_int_distribution<int> width(2, 8);
  for (int rep = 0; rep < 60; ++rep) {
    const int dim = width(rng);
    const auto data = oracle::random_instance(rng, size(rng), dim, true);
    const ContrastEstimate contrast = ContrastEstimate::from_tau(data.z.cwiseProduct(data.w));
    SolverConfig cfg;
    cfg.inner_solver = rep % 3 == 0 ? InnerSolver::Fista : InnerSolver::ProximalNewton;
    cfg.stop_rule = rep % 2 == 0 ? StopRule::LossChange : StopRule::CoefficientChange;
    PenaltySpec spec;
    spec.lambda = rep % 5 == 0 ? 0.0 : std::pow(10.0, -3.0 + 0.05 * rep);
    spec.reference = rep % 4 == 0 ? Vector() : initial_estimate(data.x, contrast, LossKind::Ramp, cfg);
    Vector start(dim);
    for (int j = 0; j < dim; ++j) start[j] = std::normal_distribution<double>(0.0, 2.0)(rng);
    all_fits.record(dc_fit(data.x, contrast, spec, start, cfg), LossKind::Ramp);
  }
}

// ---------------------------------------------------------------------------

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& v) {
  MeanSe out;
  for (double x : v) out.mean += x;
  out.mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - out.mean) * (x - out.mean);
  out.se = std::sqrt(ss / (v.size() - 1.0) / v.size());
  return out;
}

Matrix with_intercept(const Matrix& x) {
  Matrix d(x.rows(), x.cols() + 1);
  d.col(0).setOnes();
  d.rightCols(x.cols()) = x;
  return d;
}

// Intercept, all covariates and the second-order terms in x1 and x2.
Matrix outcome_design(const Matrix& x, bool drop_x1) {
  const Index n = x.rows();
  std::vector<Vector> cols{Vector::Ones(n)};
  for (Index j = 0; j < x.cols(); ++j) {
    if (drop_x1 && j == 0) continue;
    cols.push_back(x.col(j));
  }
  if (!drop_x1) {
    cols.push_back(x.col(0).cwiseProduct(x.col(0)));
    cols.push_back(x.col(0).cwiseProduct(x.col(1)));
  }
  cols.push_back(x.col(1).cwiseProduct(x.col(1)));
  Matrix d(n, static_cast<Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) d.col(static_cast<Index>(k)) = cols[k];
  return d;
}

void criterion_double_robustness() {
  const auto start = Clock::now();
  // E[mu1] = 1 + E[(s - 0.5)(s + 10)] with s = x1 + x2 ~ N(0, 2): 1 + (2 - 5) = -2.
  const double truth = -2.0;
  std::vector<double> both, bad_outcome, bad_propensity;
  const ClipBounds clip;
  for (int rep = 0; rep < 200; ++rep) {
    DGPConfig dgp = DGPConfig::defaults();
    dgp.n = 2000;
    dgp.seed = 50000 + static_cast<std::uint64_t>(rep);
    const Dataset data = generate(dgp).first;
    const BinaryVector all_treated = BinaryVector::Ones(data.n());

    const Vector e_correct =
        clip_propensity(fit_propensity(with_intercept(data.covariates), data.treatment), clip.lower, clip.upper);
    const Vector e_constant = Vector::Constant(data.n(), 0.5);
    const OutcomeFit right = fit_outcome(outcome_design(data.covariates, false), data.treatment, data.outcome);
    const OutcomeFit wrong = fit_outcome(outcome_design(data.covariates, true), data.treatment, data.outcome);

    auto value = [&](const Vector& e, const OutcomeFit& o) {
      NuisanceFit nf;
      nf.propensity = e;
      nf.mu0 = o.mu0;
      nf.mu1 = o.mu1;
      nf.clip = clip;
      return estimate_value_aipw(data, nf, all_treated).value;
    };
    both.push_back(value(e_correct, right));
    bad_outcome.push_back(value(e_correct, wrong));
    bad_propensity.push_back(value(e_constant, right));
  }
  const double elapsed = seconds_since(start);
  const MeanSe a = mean_se(both), b = mean_se(bad_outcome), c = mean_se(bad_propensity);
  auto within = [&](const MeanSe& m) { return std::abs(m.mean - truth) <= 2.0 * m.se; };
  auto show = [&](const char* label, const MeanSe& m) {
    return std::string(label) + " mean " + fmt(m.mean, 6) + " (MC SE " + fmt(m.se, 3) + ", " +
           fmt(std::abs(m.mean - truth) / m.se, 3) + " SE from -2)";
  };
  const bool pass = within(a) && within(b) && within(c) && elapsed < 300.0;
  report(5, "doubly robust value of d = 1", pass,
         show("(a) both correct", a) + "; " + show("(b) outcome omits x1", b) + "; " +
             show("(c) propensity 0.5", c) + "; 200 reps at n=2000; " + fmt(elapsed, 3) + " s (< 300 s)");
}

// ---------------------------------------------------------------------------

std::vector<std::pair<double, double>> cv_selections;

void criterion_simulation() {
  const auto start = Clock::now();
  BenchmarkConfig cfg;
  cfg.reps = 50;
  cfg.n_train = 3000;
  cfg.n_eval = 1000;
  cfg.dgp = DGPConfig::defaults(20);
  cfg.dgp.seed = 20250;
  cfg.pipeline.folds = 5;
  cfg.pipeline.lambdas = lambda_grid(1e-4, 10.0, 20, true);
  cfg.pipeline.prune_frac = 0.01;
  cfg.threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const BenchmarkResult result = run_benchmark(cfg);
  const double elapsed = seconds_since(start);

  double value = 0.0, best = 0.0, ratio = 0.0, rate = 0.0, x1 = 0.0, x2 = 0.0, fp = 0.0;
  for (const auto& row : result.rows) {
    value += row.value;
    best += row.best_linear_value;
    ratio += row.value_ratio;
    rate += row.ccr;
    x1 += row.selected_x1;
    x2 += row.selected_x2;
    fp += row.false_positives;
    all_fits.merge(row.diagnostics);
    cv_selections.emplace_back(row.lambda_min, row.lambda_1se);
  }
  const double m = std::max<double>(1.0, static_cast<double>(result.rows.size()));
  value /= m;
  best /= m;
  ratio /= m;
  rate /= m;
  x1 /= m;
  x2 /= m;
  fp /= m;
  const bool pass = result.failures.empty() && result.rows.size() == 50 && value >= 0.95 * best &&
                    rate >= 0.90 && x1 >= 0.9 && x2 >= 0.9 && elapsed < 1800.0;
  report(6, "end-to-end simulation", pass,
         std::to_string(result.rows.size()) + "/50 reps; (a) mean value " + fmt(value, 5) + " vs 0.95 x best linear " +
             fmt(0.95 * best, 5) + " (mean ratio " + fmt(ratio, 4) + "); (b) mean CCR " + fmt(rate, 4) +
             " (>= 0.90); (c) selection x1 " + fmt(x1, 3) + ", x2 " + fmt(x2, 3) +
             " (>= 0.9); mean false positives " + fmt(fp, 3) + "; " + fmt(elapsed, 4) + " s (< 1800 s)");
}

// ---------------------------------------------------------------------------

void criterion_cv_mechanics() {
  const LambdaSelection hand = select_lambda({0.1, 1.0, 10.0}, {0.9, 1.0, 0.95}, {0.1, 0.1, 0.1});
  // Extra cross-validation runs on smaller planted samples, both surrogates.
  for (int rep = 0; rep < 10; ++rep) {
    DGPConfig dgp = DGPConfig::defaults(10);
    dgp.n = 600;
    dgp.seed = 900 + static_cast<std::uint64_t>(rep);
    const Dataset data = generate(dgp).first;
    PipelineConfig cfg;
    cfg.lambdas = lambda_grid(1e-4, 10.0, 20, true);
    cfg.loss = rep % 2 == 0 ? LossKind::Ramp : LossKind::Hinge;
    cfg.seed = dgp.seed;
    const CVResult cv = cv_path(normalize(data), kfold_split(data.treatment, cfg.folds, cfg.seed), cfg);
    if (cfg.loss == LossKind::Ramp) all_fits.merge(cv.diagnostics);
    cv_selections.emplace_back(cv.lambda_min, cv.lambda_1se);
  }
  int ordered = 0;
  for (const auto& [lmin, l1se] : cv_selections) ordered += l1se >= lmin;
  const bool pass = hand.lambda_min == 1.0 && hand.lambda_1se == 10.0 &&
                    ordered == static_cast<int>(cv_selections.size());
  report(7, "cross-validation selection", pass,
         "hand example gives lambda_min " + fmt(hand.lambda_min) + ", lambda_1se " + fmt(hand.lambda_1se) +
             " (expected 1, 10); lambda_1se >= lambda_min on " + std::to_string(ordered) + "/" +
             std::to_string(cv_selections.size()) + " CV results");
}

// ---------------------------------------------------------------------------

void criterion_value_curve() {
  DGPConfig dgp = DGPConfig::defaults(20);
  dgp.n = 3000;
  dgp.seed = 8080;
  const Dataset data = generate(dgp).first;
  PipelineConfig cfg;
  cfg.lambdas = lambda_grid(1e-4, 10.0, 20, true);
  cfg.prune_frac = 0.01;
  cfg.seed = dgp.seed;
  const RunResult run = run_pipeline(data, cfg);
  all_fits.merge(run.cv.diagnostics);
  all_fits.merge(run.full.policy.diagnostics);
  cv_selections.emplace_back(run.cv.lambda_min, run.cv.lambda_1se);
  const NormalizedDataset nd = normalize(data);
  const ValueCurve curve = complementary_analysis(nd, run.full.nuisance, run.full.contrast,
                                                  run.full.policy.eta_full, {}, cfg);
  bool all_ok = curve.k.size() == 21;
  for (bool ok : curve.ok) all_ok = all_ok && ok;
  double worst = 0.0;
  bool flat = all_ok;
  if (all_ok) {
    for (std::size_t k = 3; k < curve.k.size(); ++k) {
      const double dev = std::abs(curve.value[k] - curve.value[2]) / curve.se[2];
      worst = std::max(worst, dev);
      flat = flat && dev < 2.0;
    }
  }
  const double lift = all_ok ? (curve.value[2] - curve.value[0]) / curve.se[2] : 0.0;
  const bool pass = all_ok && flat && lift > 2.0;
  std::string top;
  for (std::size_t i = 0; i < 2 && i < curve.ranked_names.size(); ++i) top += (i ? "," : "") + curve.ranked_names[i];
  report(8, "complementary value curve", pass,
         "top-ranked " + top + "; max |value_k - value_2| over k > 2 = " + fmt(worst, 3) +
             " SE (< 2); value_2 - value_0 = " + fmt(lift, 4) + " SE (> 2); value_0 " +
             fmt(all_ok ? curve.value[0] : NAN, 5) + ", value_2 " + fmt(all_ok ? curve.value[2] : NAN, 5));
}

// ---------------------------------------------------------------------------

std::string slurp(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  std::ostringstream s;
  s << f.rdbuf();
  return s.str();
}

void criterion_determinism() {
  const fs::path dir = fs::temp_directory_path() / ("itr_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const fs::path config = dir / "config.json";
  std::ofstream(config) << R"({"threads": 2, "simulation": {"reps": 2, "n_train": 1000, "n_eval": 500}})";
  bool ran = true;
  for (const char* run : {"a", "b"}) {
    const std::string cmd = std::string("\"") + ITR_CLI_PATH + "\" simulate --config \"" + config.string() +
                            "\" --seed 2026 --out \"" + (dir / run).string() + "\" 2>/dev/null";
    const int status = std::system(cmd.c_str());
    ran = ran && WIFEXITED(status) && WEXITSTATUS(status) == 0;
  }
  bool identical = ran;
  std::string sizes;
  for (const char* file : {"benchmark.csv", "summary.json"}) {
    const std::string a = slurp(dir / "a" / file);
    const std::string b = slurp(dir / "b" / file);
    identical = identical && !a.empty() && a == b;
    sizes += std::string(sizes.empty() ? "" : ", ") + file + " " + std::to_string(a.size()) + " bytes";
  }
  fs::remove_all(dir);
  report(9, "simulate determinism", identical,
         std::string(ran ? "both runs exited 0" : "a run failed") + "; " + sizes +
             (identical ? "; byte-identical" : "; outputs differ"));
}

}  // namespace

int main() {
  std::cout << std::unitbuf;
  try {
    criterion_loss_identities();
    criterion_value_risk_equivalence();
    criterion_subproblem_optimality();
    descent_battery();
    criterion_double_robustness();
    criterion_simulation();
    criterion_cv_mechanics();
    criterion_value_curve();
    report(4, "d.c. descent", all_fits.descent_violations == 0,
           std::to_string(all_fits.descent_violations) + " violations over " + std::to_string(all_fits.fits) +
               " recorded fits (largest step increase " + fmt(all_fits.max_trace_increase) + ", slack 1e-8)");
    criterion_determinism();
  } catch (const std::exception& e) {
    std::cout << "FAIL acceptance run aborted: " << e.what() << std::endl;
    return 2;
  }
  return failures == 0 ? 0 : 1;
}
