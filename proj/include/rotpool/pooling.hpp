#pragma once

#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "rotpool/core.hpp"
#include "rotpool/solver.hpp"

namespace rotpool {

/// Finite stand-in for the infinite regularizer weights of the classic presets.
inline constexpr double kInfiniteWeight = 1e10;
/// Smoothness weight of the max preset; small enough that the pooled output
/// is within (N - 1) * kMaxPresetSmoothness / e of the row maximum.
inline constexpr double kMaxPresetSmoothness = 1e-6;

/// Runs the selected solver.
SolveResult solve(const SampleSet& x, const RotParams& params, SolverKind solver);
SolveResult solve(const SampleSet& x, const RotParams& params, SolverKind solver,
                  const CovariancePair& cov);

/// Per-dimension conditional expectation of X under the plan:
/// (X .* diag(P 1)^-1 P) 1. Throws DegeneratePlan when a row marginal has
/// underflowed (below the smallest normal double).
Vector pool(const SampleSet& x, const TransportPlan& plan);

struct StabilityFlags {
  bool finite = true;
  /// Whether the solver's unnormalized plan mass was within 1e-3 of one.
  bool mass_in_range = true;
  double raw_mass = 1.0;
};

struct PoolReport {
  Vector pooled;
  TransportPlan plan;
  SolverTrace trace;
  SolverKind solver;
  double wall_time = 0.0;
  StabilityFlags stability;
};

PoolReport rotp(const SampleSet& x, const RotParams& params, SolverKind solver);

enum class PresetName { Mean, Max, Attention, Custom };

struct PoolPreset {
  PresetName name = PresetName::Custom;
  RotParams params;
  std::optional<Vector> attention_weights;
  SolverKind default_solver = SolverKind::Sinkhorn;
};

/// alpha0 = 0, alpha1 = alpha2 = alpha3 = inf, uniform priors.
PoolPreset mean_preset();
/// alpha0 = 0, alpha1 ~ 0, alpha2 = inf, alpha3 = 0, uniform priors.
PoolPreset max_preset();
/// Mean preset with q0 = a_X. a_X must be strictly positive and sum to one.
PoolPreset attention_preset(const Vector& attention_weights);

std::string_view to_string(PresetName name) noexcept;

enum class ClassicKind { Add, Mean, Max, Attention };

/// Reference implementations of the classic pooling operators. attention is
/// only read for ClassicKind::Attention; it must be nonnegative and sum to one.
Vector classic_pool(const SampleSet& x, ClassicKind kind, const Vector& attention = {});

struct MixedPooling {
  /// omega * mean + (1 - omega) * max, evaluated directly.
  Vector direct;
  /// The same operator built from three transport pools: mean and max pools
  /// stacked as a D x 2 set, fused by a pool with q0 = [omega, 1 - omega].
  Vector composed;
};

MixedPooling mixed_mean_max(const SampleSet& x, double omega);

struct IdentityMap {};
/// g(v) = weight * v + bias, weight D' x D.
struct AffineMap {
  Matrix weight;
  Vector bias;
};
using FeatureMap = std::variant<IdentityMap, AffineMap>;

struct HierarchicalSpec {
  /// Pools the samples of each member set. With heads, it fuses the head outputs instead.
  RotParams inner_params;
  /// Pools the member representations.
  RotParams outer_params;
  FeatureMap feature_map = IdentityMap{};
  /// Optional M-head mixing: every head pools the member set, the D x M head
  /// outputs are then pooled with inner_params.
  std::vector<RotParams> heads;
};

/// Pools each member set, maps it through g, stacks the results as columns
/// and pools them once more. Member pools run in parallel.
Vector hrotp(std::span<const SampleSet> sets, const HierarchicalSpec& spec, SolverKind solver);

}  // namespace rotpool
