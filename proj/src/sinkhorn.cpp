#include "rotpool/sinkhorn.hpp"

#include <chrono>
#include <cmath>

namespace rotpool {

std::string_view to_string(SolverKind kind) noexcept {
  return kind == SolverKind::Sinkhorn ? "sinkhorn" : "badmm";
}

std::string_view to_string(Smoothness smoothness) noexcept {
  return smoothness == Smoothness::Entropic ? "entropic" : "quadratic";
}

namespace {

void require_shape(const Matrix& m, const SampleSet& x, const char* what) {
  if (m.rows() != x.dims() || m.cols() != x.samples()) {
    throw InvalidInput(std::string(what) + " shape does not match the data");
  }
}

void require_covariances(const CovariancePair& cov, const SampleSet& x) {
  if (cov.sigma1.rows() != x.dims() || cov.sigma1.cols() != x.dims() ||
      cov.sigma2.rows() != x.samples() || cov.sigma2.cols() != x.samples()) {
    throw InvalidInput("covariance shapes do not match the data");
  }
}

double smoothing_weight(const RotParams& params) {
  const double eps = params.alpha1 + params.effective_tau();
  if (eps < kMinSmoothness) {
    throw InvalidInput("alpha1 + tau must be at least 1e-8 for the Sinkhorn solver");
  }
  return eps;
}

}  // namespace

Matrix proximal_cost(const SampleSet& x, const CovariancePair& cov, const Matrix& log_plan_prev,
                     const RotParams& params) {
  require_shape(log_plan_prev, x, "previous log plan");
  Matrix cost = -x.data();
  if (params.alpha0 > 0.0) {
    require_covariances(cov, x);
    const Matrix plan = log_plan_prev.array().exp().matrix();
    cost.noalias() -= params.alpha0 * (cov.sigma1 * plan * cov.sigma2.transpose());
  }
  const double tau = params.effective_tau();
  if (tau > 0.0) cost -= tau * log_plan_prev;
  if (!cost.allFinite()) {
    throw NumericalFailure("proximal cost is not finite", -1, params.snapshot());
  }
  return cost;
}

SinkhornInnerResult sinkhorn_inner(const Matrix& cost, const RotParams& params) {
  const Index dims = cost.rows();
  const Index samples = cost.cols();
  const RotParams p = params.resolved(dims, samples);
  const double eps = smoothing_weight(p);
  if (!cost.allFinite()) throw InvalidInput("Sinkhorn cost must be finite");

  // a and b live in log-scaling units: Y = -C/eps + a 1^T + 1 b^T.
  const double row_ratio = p.alpha2 / (eps + p.alpha2);
  const double col_ratio = p.alpha3 / (eps + p.alpha3);
  const Vector log_p0 = p.p0.array().log().matrix();
  const Vector log_q0 = p.q0.array().log().matrix();
  const Matrix scaled_cost = -cost / eps;

  SinkhornInnerResult out;
  out.dual_a = Vector::Zero(dims);
  out.dual_b = Vector::Zero(samples);
  Matrix y = scaled_cost;
  // Row and column duals are updated alternately. Updating both from the same
  // Y leaves the total-mass mode undamped when alpha2, alpha3 >> alpha1'.
  for (int k = 0; k < p.inner_iters; ++k) {
    Vector a_next = row_ratio * (out.dual_a + log_p0 - detail::lse_rows(y));
    y.colwise() += a_next - out.dual_a;
    Vector b_next = col_ratio * (out.dual_b + log_q0 - detail::lse_cols(y));
    const double change = std::max((a_next - out.dual_a).lpNorm<Eigen::Infinity>(),
                                   (b_next - out.dual_b).lpNorm<Eigen::Infinity>());
    out.dual_a = std::move(a_next);
    out.dual_b = std::move(b_next);
    y = scaled_cost;
    y.colwise() += out.dual_a;
    y.rowwise() += out.dual_b.transpose();
    out.iterations = k + 1;
    if (!y.allFinite()) {
      throw NumericalFailure("Sinkhorn scaling produced a non-finite value", k, p.snapshot());
    }
    if (change < p.inner_tol) break;
  }
  out.log_plan = std::move(y);
  return out;
}

SolveResult solve_sinkhorn(const SampleSet& x, const RotParams& params) {
  if (params.alpha0 > 0.0) return solve_sinkhorn(x, params, compute_covariances(x));
  return solve_sinkhorn(x, params, CovariancePair{});
}

SolveResult solve_sinkhorn(const SampleSet& x, const RotParams& params, const CovariancePair& cov) {
  const auto start = std::chrono::steady_clock::now();
  const RotParams p = params.resolved(x.dims(), x.samples());
  smoothing_weight(p);
  if (p.smoothness != Smoothness::Entropic) {
    throw InvalidInput("the Sinkhorn solver supports entropic smoothness only");
  }

  SolverTrace trace;
  if (p.alpha0 > 0.0) {
    require_covariances(cov, x);
    trace.warnings.emplace_back(
        "structural term (alpha0 > 0) requested for the Sinkhorn solver; it is prone to "
        "numerical instability, consider the Bregman ADMM solver");
  }

  const double tau = p.effective_tau();
  const int outer = (p.alpha0 == 0.0 && tau == 0.0) ? 1 : p.outer_iters;

  Matrix log_plan = p.p0.array().log().matrix() * Eigen::RowVectorXd::Ones(x.samples());
  log_plan.rowwise() += p.q0.array().log().matrix().transpose();
  Matrix last_raw;

  for (int t = 0; t < outer; ++t) {
    SinkhornInnerResult inner;
    try {
      const Matrix cost = proximal_cost(x, cov, log_plan, p);
      inner = sinkhorn_inner(cost, p);
    } catch (const NumericalFailure& e) {
      std::string reason = "outer step " + std::to_string(t) + ": " + e.reason();
      if (e.iteration() >= 0) reason += " at inner iteration " + std::to_string(e.iteration());
      throw NumericalFailure(reason, t, p.snapshot());
    }
    // Each proximal subproblem is posed over unit-mass plans; the unbalanced
    // solution differs from that optimum by a scalar factor only.
    const double log_mass = detail::lse(inner.log_plan.reshaped());
    if (!std::isfinite(log_mass)) {
      throw NumericalFailure("Sinkhorn plan mass is not finite", t, p.snapshot());
    }
    last_raw = std::move(inner.log_plan);
    log_plan = last_raw.array() - log_mass;
    trace.objective.push_back(-(x.data().cwiseProduct(log_plan.array().exp().matrix())).sum());
    trace.inner_iterations.push_back(inner.iterations);
  }
  trace.iterations_used = outer;

  SolveResult out{TransportPlan::from_log(std::move(last_raw)), std::move(trace)};
  out.trace.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace rotpool
