#include "rotpool/badmm.hpp"

#include <chrono>

namespace rotpool {

namespace {

void require_finite_step(const Matrix& y, const char* what, int iteration,
                         const RotParams& params) {
  if (!y.allFinite()) {
    throw NumericalFailure(std::string(what) + " produced a non-finite value", iteration,
                           params.snapshot());
  }
}

void require_state_shape(const BadmmState& state, const SampleSet& x) {
  const Index d = x.dims();
  const Index n = x.samples();
  if (state.log_p.rows() != d || state.log_p.cols() != n || state.log_s.rows() != d ||
      state.log_s.cols() != n || state.dual_z.rows() != d || state.dual_z.cols() != n ||
      state.log_mu.size() != d || state.log_eta.size() != n || state.dual_z1.size() != d ||
      state.dual_z2.size() != n) {
    throw InvalidInput("Bregman ADMM state shape does not match the data");
  }
}

void require_covariances(const CovariancePair& cov, Index dims, Index samples) {
  if (cov.sigma1.rows() != dims || cov.sigma1.cols() != dims || cov.sigma2.rows() != samples ||
      cov.sigma2.cols() != samples) {
    throw InvalidInput("covariance shapes do not match the data");
  }
}

// The two plan steps take the exponentiated plan alongside its log so the
// solve loop exponentiates each plan once per iteration.
Matrix p_step(const Matrix& log_s, const Matrix& s, const Vector& log_mu, const Matrix& z,
              const SampleSet& x, const CovariancePair& cov, const RotParams& params,
              int iteration) {
  const double rho = params.rho;
  Matrix y = x.data() - z + rho * log_s;
  if (params.alpha0 > 0.0) {
    y.noalias() += params.alpha0 * (cov.sigma1 * s * cov.sigma2.transpose());
  }
  if (params.smoothness == Smoothness::Quadratic) y -= params.alpha1 * s;
  y /= rho;
  require_finite_step(y, "P update", iteration, params);
  const Vector shift = log_mu - detail::lse_rows(y);
  y.colwise() += shift;
  return y;
}

Matrix s_step(const Matrix& log_p, const Matrix& p, const Vector& log_eta, const Matrix& z,
              const CovariancePair& cov, const RotParams& params, int iteration) {
  const double rho = params.rho;
  Matrix y = z + rho * log_p;
  if (params.alpha0 > 0.0) {
    y.noalias() += params.alpha0 * (cov.sigma1.transpose() * p * cov.sigma2);
  }
  if (params.smoothness == Smoothness::Quadratic) {
    y -= params.alpha1 * p;
    y /= rho;
  } else {
    y /= params.alpha1 + rho;
  }
  require_finite_step(y, "S update", iteration, params);
  const Vector shift = log_eta - detail::lse_cols(y);
  y.rowwise() += shift.transpose();
  return y;
}

Vector marginal_step(const Vector& log_m, const Vector& log_prior, const Vector& dual,
                     double weight, double rho) {
  Vector y = (rho * log_m + weight * log_prior - dual) / (rho + weight);
  y.array() -= detail::lse(y);
  return y;
}

}  // namespace

BadmmState initial_badmm_state(const RotParams& params) {
  const Index d = params.p0.size();
  const Index n = params.q0.size();
  if (d == 0 || n == 0) throw InvalidInput("Bregman ADMM needs resolved priors");
  BadmmState s;
  s.log_mu = params.p0.array().log().matrix();
  s.log_eta = params.q0.array().log().matrix();
  s.log_p = s.log_mu * Eigen::RowVectorXd::Ones(n);
  s.log_p.rowwise() += s.log_eta.transpose();
  s.log_s = s.log_p;
  s.dual_z = Matrix::Zero(d, n);
  s.dual_z1 = Vector::Zero(d);
  s.dual_z2 = Vector::Zero(n);
  return s;
}

Matrix update_p(const BadmmState& state, const SampleSet& x, const CovariancePair& cov,
                const RotParams& params) {
  require_state_shape(state, x);
  if (params.alpha0 > 0.0) require_covariances(cov, x.dims(), x.samples());
  const Matrix s = state.log_s.array().exp().matrix();
  return p_step(state.log_s, s, state.log_mu, state.dual_z, x, cov, params, -1);
}

Matrix update_s(const BadmmState& state, const SampleSet& x, const CovariancePair& cov,
                const RotParams& params) {
  require_state_shape(state, x);
  if (params.alpha0 > 0.0) require_covariances(cov, x.dims(), x.samples());
  const Matrix p = state.log_p.array().exp().matrix();
  return s_step(state.log_p, p, state.log_eta, state.dual_z, cov, params, -1);
}

Vector update_mu(const BadmmState& state, const RotParams& params) {
  if (params.p0.size() != state.log_mu.size()) throw InvalidInput("p0 length mismatch");
  return marginal_step(state.log_mu, params.p0.array().log().matrix(), state.dual_z1,
                       params.alpha2, params.rho);
}

Vector update_eta(const BadmmState& state, const RotParams& params) {
  if (params.q0.size() != state.log_eta.size()) throw InvalidInput("q0 length mismatch");
  return marginal_step(state.log_eta, params.q0.array().log().matrix(), state.dual_z2,
                       params.alpha3, params.rho);
}

BadmmDuals update_duals(const BadmmState& state, const RotParams& params) {
  const Matrix p = state.log_p.array().exp().matrix();
  const Matrix s = state.log_s.array().exp().matrix();
  const double rho = params.rho;
  BadmmDuals out;
  out.z = state.dual_z + rho * (p - s);
  out.z1 = state.dual_z1 + rho * (state.log_mu.array().exp().matrix() - p.rowwise().sum());
  out.z2 = state.dual_z2 +
           rho * (state.log_eta.array().exp().matrix() - s.colwise().sum().transpose());
  return out;
}

SolveResult solve_badmm(const SampleSet& x, const RotParams& params) {
  if (params.alpha0 > 0.0) return solve_badmm(x, params, compute_covariances(x));
  return solve_badmm(x, params, CovariancePair{});
}

SolveResult solve_badmm(const SampleSet& x, const RotParams& params, const CovariancePair& cov) {
  const auto start = std::chrono::steady_clock::now();
  const RotParams p = params.resolved(x.dims(), x.samples());
  if (p.alpha0 > 0.0) require_covariances(cov, x.dims(), x.samples());

  BadmmState state = initial_badmm_state(p);
  const Vector log_p0 = p.p0.array().log().matrix();
  const Vector log_q0 = p.q0.array().log().matrix();
  Matrix s_plan = state.log_s.array().exp().matrix();
  Matrix p_plan;

  SolverTrace trace;
  if (p.smoothness == Smoothness::Quadratic) {
    trace.warnings.emplace_back(
        "quadratic smoothness: the solver uses the coupled regularizer <S,P> while the reported "
        "objective uses ||P||_F^2");
  }
  for (int t = 0; t < p.outer_iters; ++t) {
    state.log_p = p_step(state.log_s, s_plan, state.log_mu, state.dual_z, x, cov, p, t);
    p_plan = state.log_p.array().exp().matrix();
    state.log_s = s_step(state.log_p, p_plan, state.log_eta, state.dual_z, cov, p, t);
    s_plan = state.log_s.array().exp().matrix();
    state.log_mu = marginal_step(state.log_mu, log_p0, state.dual_z1, p.alpha2, p.rho);
    state.log_eta = marginal_step(state.log_eta, log_q0, state.dual_z2, p.alpha3, p.rho);

    state.dual_z += p.rho * (p_plan - s_plan);
    state.dual_z1 += p.rho * (state.log_mu.array().exp().matrix() - p_plan.rowwise().sum());
    state.dual_z2 +=
        p.rho * (state.log_eta.array().exp().matrix() - s_plan.colwise().sum().transpose());
    if (!state.dual_z.allFinite() || !state.dual_z1.allFinite() || !state.dual_z2.allFinite() ||
        !state.log_mu.allFinite() || !state.log_eta.allFinite()) {
      throw NumericalFailure("Bregman ADMM dual update produced a non-finite value", t,
                             p.snapshot());
    }
    trace.objective.push_back(-(x.data().cwiseProduct(p_plan)).sum() / p_plan.sum());
    trace.primal_residual.push_back((p_plan - s_plan).cwiseAbs().sum());
  }
  trace.iterations_used = p.outer_iters;

  SolveResult out{TransportPlan::from_log(std::move(state.log_p)), std::move(trace)};
  out.trace.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

}  // namespace rotpool
