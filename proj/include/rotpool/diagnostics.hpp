#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "rotpool/core.hpp"
#include "rotpool/pooling.hpp"
#include "rotpool/solver.hpp"

namespace rotpool {

// ---------------------------------------------------------------------------
// Random instances

/// D x N matrix of independent standard normal entries.
Matrix gaussian_matrix(Index dims, Index samples, std::uint64_t seed);
/// Entrywise exp of gaussian_matrix; strictly positive.
Matrix lognormal_matrix(Index dims, Index samples, std::uint64_t seed);

/// a_X = softmax(w^T tanh(V X)) with w and V standard normal drawn from seed;
/// V is D x D.
Vector attention_weights(const Matrix& x, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Oracle

/// Brute-force minimizer of the ROT objective over unit-mass plans: 50k
/// exponentiated-gradient steps with step 0.5 / sqrt(k) from p0 q0^T,
/// finished by damped Newton steps on the mass-constrained problem.
/// Requires D * N <= 64, alpha0 == 0 and entropic smoothness.
TransportPlan oracle_solve(const SampleSet& x, const RotParams& params);

// ---------------------------------------------------------------------------
// Convergence

struct SolverVariant {
  SolverKind solver = SolverKind::Sinkhorn;
  Smoothness smoothness = Smoothness::Entropic;
};

std::string variant_name(const SolverVariant& v);

/// The three variants studied: Sinkhorn, Bregman ADMM entropic and quadratic.
std::vector<SolverVariant> all_variants();

inline constexpr double kConvergenceTolerance = 1e-4;

struct ConvergenceTrace {
  SolverVariant variant;
  SolverTrace trace;
  /// Smallest T such that the relative objective change stays below the
  /// tolerance for every T' in [T, t_max]; unset when never reached.
  std::optional<int> converged_at;
  bool failed = false;
  std::string error;
};

/// First T (1-based, >= 2) from which |obj(T') - obj(T'-1)| / |obj(T')| < tol
/// holds for all later T'. A trace of length one is never flagged.
std::optional<int> convergence_point(const std::vector<double>& objective,
                                     double tol = kConvergenceTolerance);

/// Runs each variant with T = t_max and reads the per-step objective off the
/// trace, which is what T = 1..t_max stacked modules produce.
std::vector<ConvergenceTrace> convergence_study(const SampleSet& x, const RotParams& params,
                                                const std::vector<SolverVariant>& variants,
                                                int t_max);

// ---------------------------------------------------------------------------
// Stability grid

/// 10^-5, 10^-4, ..., 10^4.
std::vector<double> default_grid_axis();

struct GridSpec {
  std::vector<double> alpha1_axis = default_grid_axis();
  /// alpha2 = alpha3 take these values.
  std::vector<double> alpha23_axis = default_grid_axis();
  SolverVariant variant;
  double alpha0 = 0.0;
  double rho = 1.0;
  int outer_iters = 8;
  int inner_iters = 32;
  std::uint64_t seed = 0;
  Index dims = 5;
  Index samples = 10;
};

struct GridCell {
  double alpha1 = 0.0;
  double alpha23 = 0.0;
  /// Unnormalized solver mass ||P*||_1; unset for failed cells.
  std::optional<double> plan_norm;
  bool failed = false;
  std::string error;
  double wall_time = 0.0;
};

struct GridReport {
  GridSpec spec;
  /// Row-major: cell (i, j) is cells[i * alpha23_axis.size() + j].
  std::vector<GridCell> cells;
  int failed_count = 0;
  /// Finite cells whose plan_norm is outside [1 - 1e-3, 1 + 1e-3].
  int out_of_range_count = 0;

  const GridCell& at(std::size_t i, std::size_t j) const {
    return cells[i * spec.alpha23_axis.size() + j];
  }
};

/// Solves one Gaussian instance per cell. Failures are recorded, never thrown.
GridReport stability_grid(const GridSpec& spec);

// ---------------------------------------------------------------------------
// Precision

/// Parameters used to imitate a classic pool, with finite weights of 1e4.
RotParams precision_params(PresetName preset, const Vector& attention);

/// The plan whose pool is exactly the classic operator: 1/(DN) for mean,
/// (1/D) 1 a_X^T for attention, 1/D on each row maximum for max.
Matrix ideal_plan(const SampleSet& x, PresetName preset, const Vector& attention);

struct PrecisionRow {
  PresetName preset = PresetName::Mean;
  SolverKind solver = SolverKind::Sinkhorn;
  double pooled_error = 0.0;
  double plan_error = 0.0;
  bool failed = false;
  std::string error;
};

/// l-inf errors of every (preset, solver) pair against the classic operators.
/// attention is a_X and is only used by the attention preset.
std::vector<PrecisionRow> precision_study(const SampleSet& x, const Vector& attention,
                                          const std::vector<PresetName>& presets,
                                          const std::vector<SolverKind>& solvers);

// ---------------------------------------------------------------------------
// Runtime

struct BenchSpec {
  /// (D, N) points.
  std::vector<std::pair<Index, Index>> shapes;
  std::vector<SolverKind> solvers{SolverKind::Sinkhorn, SolverKind::Badmm};
  std::vector<double> alpha0_values{0.0};
  int outer_iters = 50;
  int inner_iters = 50;
  int trials = 10;
  int warmups = 2;
  /// Sinkhorn dual early exit; false runs exactly K inner iterations.
  bool early_exit = true;
  std::uint64_t seed = 0;
};

struct BenchRow {
  Index dims = 0;
  Index samples = 0;
  SolverKind solver = SolverKind::Sinkhorn;
  double alpha0 = 0.0;
  bool early_exit = true;
  std::vector<double> times;
  double median = 0.0;
};

/// Median forward time per (shape, alpha0, solver) on lognormal data. Trials
/// of one configuration run sequentially.
std::vector<BenchRow> runtime_bench(const BenchSpec& spec);

double median(std::vector<double> values);

/// Least-squares slope of log(time) against log(N).
double growth_exponent(const std::vector<double>& samples, const std::vector<double>& times);

}  // namespace rotpool
