#pragma once

#include "rotpool/core.hpp"
#include "rotpool/solver.hpp"

namespace rotpool {

/// Inner-loop state of the proximal Sinkhorn solver.
struct SinkhornState {
  Matrix log_plan;
  Vector dual_a;
  Vector dual_b;
  Matrix cost;
  Matrix log_scaled;
};

/// Cost of one proximal subproblem:
///   C = -X - alpha0 * S1 P S2^T - tau * log P,  P = exp(log_plan_prev).
/// cov may be empty when alpha0 == 0.
Matrix proximal_cost(const SampleSet& x, const CovariancePair& cov, const Matrix& log_plan_prev,
                     const RotParams& params);

struct SinkhornInnerResult {
  Matrix log_plan;
  Vector dual_a;
  Vector dual_b;
  int iterations = 0;
};

/// Stabilized log-domain scaling for the entropic unbalanced subproblem with
/// smoothing weight alpha1' = alpha1 + tau. Runs at most inner_iters updates
/// and stops early once both duals move less than inner_tol in the sup norm.
/// The returned log plan is not normalized.
SinkhornInnerResult sinkhorn_inner(const Matrix& cost, const RotParams& params);

/// Proximal point solver. Starts from p0 q0^T and runs outer_iters proximal
/// steps; a single step is run when alpha0 == 0 and tau == 0 since the
/// subproblem is then the whole problem.
SolveResult solve_sinkhorn(const SampleSet& x, const RotParams& params);
SolveResult solve_sinkhorn(const SampleSet& x, const RotParams& params, const CovariancePair& cov);

}  // namespace rotpool
