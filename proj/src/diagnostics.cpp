#include "rotpool/diagnostics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "rotpool/parallel.hpp"

namespace rotpool {

// ---------------------------------------------------------------------------
// Random instances

Matrix gaussian_matrix(Index dims, Index samples, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix out(dims, samples);
  for (Index n = 0; n < samples; ++n) {
    for (Index d = 0; d < dims; ++d) out(d, n) = normal(rng);
  }
  return out;
}

Matrix lognormal_matrix(Index dims, Index samples, std::uint64_t seed) {
  return gaussian_matrix(dims, samples, seed).array().exp().matrix();
}

Vector attention_weights(const Matrix& x, std::uint64_t seed) {
  const Index d = x.rows();
  const Matrix wv = gaussian_matrix(d, d + 1, seed);
  const Vector w = wv.col(0);
  const Matrix v = wv.rightCols(d);
  return softmax((v * x).array().tanh().matrix().transpose() * w);
}

// ---------------------------------------------------------------------------
// Oracle

namespace {

constexpr int kOracleSteps = 50000;
constexpr int kOracleNewtonSteps = 100;
constexpr double kOracleNewtonTolerance = 1e-18;
constexpr Index kOracleMaxEntries = 64;

struct OracleProblem {
  const Matrix& x;
  const RotParams& params;
  Vector log_p0;
  Vector log_q0;

  Matrix gradient(const Matrix& plan) const {
    const Vector mu = plan.rowwise().sum();
    const Vector eta = plan.colwise().sum().transpose();
    Matrix g = -x + params.alpha1 * plan.array().log().matrix();
    g.colwise() += params.alpha2 * (mu.array().log().matrix() - log_p0);
    g.rowwise() += params.alpha3 * (eta.array().log().matrix() - log_q0).transpose();
    return g;
  }

  double value(const Matrix& plan) const {
    const Vector mu = plan.rowwise().sum();
    const Vector eta = plan.colwise().sum().transpose();
    const Vector p0 = log_p0.array().exp().matrix();
    const Vector q0 = log_q0.array().exp().matrix();
    return -(x.cwiseProduct(plan)).sum() +
           params.alpha1 * (plan.array() * (plan.array().log() - 1.0)).sum() +
           params.alpha2 * generalized_kl(mu, p0) + params.alpha3 * generalized_kl(eta, q0);
  }
};

// Newton iterations on the mass-constrained problem; plan must be interior.
void newton_polish(const OracleProblem& prob, Matrix& plan) {
  const Index dims = plan.rows();
  const Index samples = plan.cols();
  const Index n = plan.size();
  const RotParams& p = prob.params;
  for (int it = 0; it < kOracleNewtonSteps; ++it) {
    const Vector mu = plan.rowwise().sum();
    const Vector eta = plan.colwise().sum().transpose();
    const Matrix grad = prob.gradient(plan);

    // Solve in the variables y = step / sqrt(P): the scaled Hessian has alpha1
    // on its diagonal, so tiny plan entries do not wreck the conditioning.
    const Vector root = plan.reshaped().cwiseSqrt();
    Matrix kkt = Matrix::Zero(n + 1, n + 1);
    for (Index i = 0; i < n; ++i) {
      const Index di = i % dims;
      const Index ni = i / dims;
      kkt(i, i) += p.alpha1;
      for (Index j = 0; j < n; ++j) {
        const Index dj = j % dims;
        const Index nj = j / dims;
        double h = 0.0;
        if (di == dj) h += p.alpha2 / mu(di);
        if (ni == nj) h += p.alpha3 / eta(ni);
        kkt(i, j) += h * root(i) * root(j);
      }
      kkt(i, n) = root(i);
      kkt(n, i) = root(i);
    }
    Vector rhs = Vector::Zero(n + 1);
    rhs.head(n) = -grad.reshaped().cwiseProduct(root);
    const Vector sol = kkt.fullPivLu().solve(rhs);
    const Vector scaled = sol.head(n);
    const Vector step = scaled.cwiseProduct(root);
    const double decrement = scaled.dot(kkt.topLeftCorner(n, n) * scaled);
    if (!std::isfinite(decrement) || decrement < kOracleNewtonTolerance) break;

    double t = 1.0;
    for (Index i = 0; i < n; ++i) {
      const double v = plan.reshaped()(i);
      if (step(i) < 0.0) t = std::min(t, 0.99 * v / -step(i));
    }
    const double f0 = prob.value(plan);
    const double slope = grad.reshaped().dot(step);
    if (!(slope < 0.0)) break;
    Matrix trial;
    bool accepted = false;
    while (t > 1e-16) {
      trial = plan + t * step.reshaped(dims, samples);
      if (prob.value(trial) <= f0 + 1e-4 * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;
    plan = trial / trial.sum();
  }
}

}  // namespace

TransportPlan oracle_solve(const SampleSet& x, const RotParams& params) {
  if (x.dims() * x.samples() > kOracleMaxEntries) {
    throw InvalidInput("oracle is limited to D * N <= 64");
  }
  if (params.alpha0 != 0.0) throw InvalidInput("oracle requires alpha0 = 0");
  if (params.smoothness != Smoothness::Entropic) {
    throw InvalidInput("oracle requires entropic smoothness");
  }
  const RotParams p = params.resolved(x.dims(), x.samples());
  const OracleProblem prob{x.data(), p, p.p0.array().log().matrix(),
                           p.q0.array().log().matrix()};

  Matrix log_plan = prob.log_p0 * Eigen::RowVectorXd::Ones(x.samples());
  log_plan.rowwise() += prob.log_q0.transpose();
  const double scale = std::max(1.0, p.alpha1 + p.alpha2 + p.alpha3);
  for (int k = 1; k <= kOracleSteps; ++k) {
    const Matrix plan = log_plan.array().exp().matrix();
    log_plan -= (0.5 / std::sqrt(static_cast<double>(k)) / scale) * prob.gradient(plan);
    log_plan.array() -= logsumexp_all(log_plan);
  }

  Matrix plan = log_plan.array().exp().matrix();
  if (p.alpha1 > 0.0) newton_polish(prob, plan);
  return TransportPlan::from_log(plan.array().log().matrix());
}

// ---------------------------------------------------------------------------
// Convergence

std::string variant_name(const SolverVariant& v) {
  if (v.solver == SolverKind::Sinkhorn) return "sinkhorn";
  return std::string("badmm-") + std::string(to_string(v.smoothness));
}

std::vector<SolverVariant> all_variants() {
  return {{SolverKind::Sinkhorn, Smoothness::Entropic},
          {SolverKind::Badmm, Smoothness::Entropic},
          {SolverKind::Badmm, Smoothness::Quadratic}};
}

std::optional<int> convergence_point(const std::vector<double>& objective, double tol) {
  std::optional<int> point;
  for (std::size_t t = objective.size(); t >= 2; --t) {
    const double cur = objective[t - 1];
    const double change = std::abs(cur - objective[t - 2]) / std::abs(cur);
    if (!(change < tol)) break;
    point = static_cast<int>(t);
  }
  return point;
}

std::vector<ConvergenceTrace> convergence_study(const SampleSet& x, const RotParams& params,
                                                const std::vector<SolverVariant>& variants,
                                                int t_max) {
  if (t_max < 1) throw InvalidInput("t_max must be at least 1");
  std::vector<ConvergenceTrace> out;
  const CovariancePair cov = params.alpha0 > 0.0 ? compute_covariances(x) : CovariancePair{};
  for (const SolverVariant& v : variants) {
    ConvergenceTrace row;
    row.variant = v;
    RotParams p = params;
    p.smoothness = v.smoothness;
    p.outer_iters = t_max;
    try {
      row.trace = solve(x, p, v.solver, cov).trace;
      row.converged_at = convergence_point(row.trace.objective);
    } catch (const Error& e) {
      row.failed = true;
      row.error = e.what();
    }
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Stability grid

std::vector<double> default_grid_axis() {
  std::vector<double> axis;
  for (int e = -5; e <= 4; ++e) axis.push_back(std::pow(10.0, e));
  return axis;
}

GridReport stability_grid(const GridSpec& spec) {
  if (spec.alpha1_axis.empty() || spec.alpha23_axis.empty()) {
    throw InvalidInput("grid axes must be nonempty");
  }
  const SampleSet x(gaussian_matrix(spec.dims, spec.samples, spec.seed), SignPolicy::AllowSigned);
  const CovariancePair cov = spec.alpha0 > 0.0 ? compute_covariances(x) : CovariancePair{};

  GridReport report;
  report.spec = spec;
  const std::size_t cols = spec.alpha23_axis.size();
  report.cells.resize(spec.alpha1_axis.size() * cols);
  parallel_for(report.cells.size(), [&](std::size_t k) {
    GridCell& cell = report.cells[k];
    cell.alpha1 = spec.alpha1_axis[k / cols];
    cell.alpha23 = spec.alpha23_axis[k % cols];
    RotParams p;
    p.alpha0 = spec.alpha0;
    p.alpha1 = cell.alpha1;
    p.alpha2 = cell.alpha23;
    p.alpha3 = cell.alpha23;
    p.rho = spec.rho;
    p.outer_iters = spec.outer_iters;
    p.inner_iters = spec.inner_iters;
    p.smoothness = spec.variant.smoothness;
    const auto start = std::chrono::steady_clock::now();
    try {
      const SolveResult r = solve(x, p, spec.variant.solver, cov);
      if (std::isfinite(r.plan.raw_mass())) {
        cell.plan_norm = r.plan.raw_mass();
      } else {
        cell.failed = true;
        cell.error = "plan mass is not finite";
      }
    } catch (const Error& e) {
      cell.failed = true;
      cell.error = e.what();
    }
    cell.wall_time =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  });
  for (const GridCell& cell : report.cells) {
    if (cell.failed) {
      ++report.failed_count;
    } else if (std::abs(*cell.plan_norm - 1.0) > kPlanMassTolerance) {
      ++report.out_of_range_count;
    }
  }
  return report;
}

// ---------------------------------------------------------------------------
// Precision

namespace {
constexpr double kPrecisionWeight = 1e4;
constexpr double kPrecisionMaxSmoothness = 1e-2;
}  // namespace

RotParams precision_params(PresetName preset, const Vector& attention) {
  switch (preset) {
    case PresetName::Mean:
    case PresetName::Attention: {
      RotParams p = preset == PresetName::Mean ? mean_preset().params
                                               : attention_preset(attention).params;
      p.alpha1 = p.alpha2 = p.alpha3 = kPrecisionWeight;
      return p;
    }
    case PresetName::Max: {
      RotParams p = max_preset().params;
      p.alpha1 = kPrecisionMaxSmoothness;
      p.alpha2 = kPrecisionWeight;
      p.alpha3 = kPrecisionMaxSmoothness;
      return p;
    }
    case PresetName::Custom:
      break;
  }
  throw InvalidInput("precision study needs a mean, max or attention preset");
}

Matrix ideal_plan(const SampleSet& x, PresetName preset, const Vector& attention) {
  const Index d = x.dims();
  const Index n = x.samples();
  switch (preset) {
    case PresetName::Mean:
      return Matrix::Constant(d, n, 1.0 / static_cast<double>(d * n));
    case PresetName::Attention:
      require_simplex(attention, kSimplexTolerance, "attention weights");
      return Vector::Constant(d, 1.0 / static_cast<double>(d)) * attention.transpose();
    case PresetName::Max: {
      Matrix out = Matrix::Zero(d, n);
      for (Index r = 0; r < d; ++r) {
        Index arg = 0;
        x.data().row(r).maxCoeff(&arg);
        out(r, arg) = 1.0 / static_cast<double>(d);
      }
      return out;
    }
    case PresetName::Custom:
      break;
  }
  throw InvalidInput("no ideal plan for a custom preset");
}

std::vector<PrecisionRow> precision_study(const SampleSet& x, const Vector& attention,
                                          const std::vector<PresetName>& presets,
                                          const std::vector<SolverKind>& solvers) {
  if (presets.empty()) throw InvalidInput("precision study needs at least one preset");
  std::vector<PrecisionRow> rows;
  for (PresetName preset : presets) {
    const RotParams params = precision_params(preset, attention);
    const Matrix truth = ideal_plan(x, preset, attention);
    Vector oracle;
    switch (preset) {
      case PresetName::Mean:
        oracle = classic_pool(x, ClassicKind::Mean);
        break;
      case PresetName::Max:
        oracle = classic_pool(x, ClassicKind::Max);
        break;
      default:
        oracle = classic_pool(x, ClassicKind::Attention, attention);
        break;
    }
    for (SolverKind solver : solvers) {
      PrecisionRow row;
      row.preset = preset;
      row.solver = solver;
      try {
        const PoolReport r = rotp(x, params, solver);
        row.pooled_error = (r.pooled - oracle).lpNorm<Eigen::Infinity>();
        row.plan_error = (r.plan.plan() - truth).lpNorm<Eigen::Infinity>();
      } catch (const Error& e) {
        row.failed = true;
        row.error = e.what();
      }
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Runtime

double median(std::vector<double> values) {
  if (values.empty()) return 0.0;
  std::sort(values.begin(), values.end());
  const std::size_t m = values.size() / 2;
  return values.size() % 2 == 1 ? values[m] : 0.5 * (values[m - 1] + values[m]);
}

std::vector<BenchRow> runtime_bench(const BenchSpec& spec) {
  if (spec.trials < 3) throw InvalidInput("runtime benchmark needs at least 3 trials");
  if (spec.warmups < 0) throw InvalidInput("warmup count must be nonnegative");
  std::vector<BenchRow> rows;
  for (std::size_t s = 0; s < spec.shapes.size(); ++s) {
    const auto [dims, samples] = spec.shapes[s];
    const SampleSet x(lognormal_matrix(dims, samples, spec.seed + s));
    for (double alpha0 : spec.alpha0_values) {
      for (SolverKind solver : spec.solvers) {
        RotParams p;
        p.alpha0 = alpha0;
        p.outer_iters = spec.outer_iters;
        p.inner_iters = spec.inner_iters;
        p.inner_tol = spec.early_exit ? RotParams{}.inner_tol : 0.0;
        BenchRow row{dims, samples, solver, alpha0, spec.early_exit, {}, 0.0};
        for (int k = 0; k < spec.warmups + spec.trials; ++k) {
          const auto start = std::chrono::steady_clock::now();
          const PoolReport r = rotp(x, p, solver);
          const double elapsed =
              std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
          if (k >= spec.warmups) row.times.push_back(elapsed);
        }
        row.median = median(row.times);
        rows.push_back(std::move(row));
      }
    }
  }
  return rows;
}

double growth_exponent(const std::vector<double>& samples, const std::vector<double>& times) {
  if (samples.size() != times.size() || samples.size() < 2) {
    throw InvalidInput("growth fit needs at least two matching points");
  }
  const auto m = static_cast<Index>(samples.size());
  Vector lx(m), ly(m);
  for (Index i = 0; i < m; ++i) {
    lx(i) = std::log(samples[static_cast<std::size_t>(i)]);
    ly(i) = std::log(times[static_cast<std::size_t>(i)]);
  }
  const double mx = lx.mean();
  const double my = ly.mean();
  return (lx.array() - mx).matrix().dot((ly.array() - my).matrix()) /
         (lx.array() - mx).square().sum();
}

}  // namespace rotpool
