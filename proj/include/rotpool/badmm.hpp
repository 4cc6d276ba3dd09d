#pragma once

#include "rotpool/core.hpp"
#include "rotpool/solver.hpp"

namespace rotpool {

/// Primal plan P, auxiliary plan S, auxiliary marginals mu/eta (all in log
/// domain) and the dual variables of the constraints P = S, P1 = mu, S^T 1 = eta.
struct BadmmState {
  Matrix log_p;
  Matrix log_s;
  Vector log_mu;
  Vector log_eta;
  Matrix dual_z;
  Vector dual_z1;
  Vector dual_z2;
};

/// P = S = p0 q0^T, mu = p0, eta = q0, zero duals. params must be resolved.
BadmmState initial_badmm_state(const RotParams& params);

/// Closed-form P step: log P = (log mu - lse_row(Y)) 1^T + Y. The rows of the
/// result sum to mu exactly.
Matrix update_p(const BadmmState& state, const SampleSet& x, const CovariancePair& cov,
                const RotParams& params);

/// Closed-form S step using state.log_p as the fresh P. The columns of the
/// result sum to eta exactly.
Matrix update_s(const BadmmState& state, const SampleSet& x, const CovariancePair& cov,
                const RotParams& params);

Vector update_mu(const BadmmState& state, const RotParams& params);
Vector update_eta(const BadmmState& state, const RotParams& params);

struct BadmmDuals {
  Matrix z;
  Vector z1;
  Vector z2;
};

/// Z += rho (P - S), z1 += rho (mu - P1), z2 += rho (eta - S^T 1).
BadmmDuals update_duals(const BadmmState& state, const RotParams& params);

/// Runs outer_iters rounds of P, S, mu, eta and dual updates (in that order).
SolveResult solve_badmm(const SampleSet& x, const RotParams& params);
SolveResult solve_badmm(const SampleSet& x, const RotParams& params, const CovariancePair& cov);

}  // namespace rotpool
