#include "rotpool/pooling.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

#include "rotpool/badmm.hpp"
#include "rotpool/parallel.hpp"
#include "rotpool/sinkhorn.hpp"

namespace rotpool {

namespace {

// Near-degenerate prior weights are pulled this far into the open simplex.
constexpr double kPriorFloor = 1e-12;

void require_distribution(const Vector& a, Index length, const char* name) {
  if (a.size() != length) {
    throw InvalidInput(std::string(name) + " has length " + std::to_string(a.size()) +
                       ", expected " + std::to_string(length));
  }
  if (!a.allFinite() || (a.array() < 0.0).any()) {
    throw InvalidInput(std::string(name) + " must be nonnegative");
  }
  if (std::abs(a.sum() - 1.0) > kSimplexTolerance) {
    throw InvalidInput(std::string(name) + " must sum to one");
  }
}

RotParams infinite_weights() {
  RotParams p;
  p.alpha0 = 0.0;
  p.alpha1 = kInfiniteWeight;
  p.alpha2 = kInfiniteWeight;
  p.alpha3 = kInfiniteWeight;
  // The Bregman ADMM steps are dominated by the data unless rho matches the weights.
  p.rho = kInfiniteWeight;
  return p;
}

}  // namespace

SolveResult solve(const SampleSet& x, const RotParams& params, SolverKind solver) {
  return solver == SolverKind::Sinkhorn ? solve_sinkhorn(x, params) : solve_badmm(x, params);
}

SolveResult solve(const SampleSet& x, const RotParams& params, SolverKind solver,
                  const CovariancePair& cov) {
  return solver == SolverKind::Sinkhorn ? solve_sinkhorn(x, params, cov)
                                        : solve_badmm(x, params, cov);
}

Vector pool(const SampleSet& x, const TransportPlan& plan) {
  if (plan.dims() != x.dims() || plan.samples() != x.samples()) {
    throw InvalidInput("plan shape does not match the data");
  }
  const Vector& rows = plan.marginal_row();
  for (Index d = 0; d < rows.size(); ++d) {
    // Eigen's exp saturates near 1e-308 instead of returning zero, so an
    // underflowed row shows up as a subnormal mass.
    if (!(rows(d) >= std::numeric_limits<double>::min())) {
      throw DegeneratePlan("row " + std::to_string(d + 1) + " of the plan has zero mass");
    }
  }
  return x.data().cwiseProduct(plan.plan()).rowwise().sum().cwiseQuotient(rows);
}

PoolReport rotp(const SampleSet& x, const RotParams& params, SolverKind solver) {
  const auto start = std::chrono::steady_clock::now();
  SolveResult result = solve(x, params, solver);
  PoolReport report{pool(x, result.plan), std::move(result.plan), std::move(result.trace), solver,
                    0.0, StabilityFlags{}};
  report.stability.raw_mass = report.plan.raw_mass();
  report.stability.finite = report.pooled.allFinite() && std::isfinite(report.stability.raw_mass);
  report.stability.mass_in_range =
      std::abs(report.stability.raw_mass - 1.0) <= kPlanMassTolerance;
  report.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

PoolPreset mean_preset() {
  return PoolPreset{PresetName::Mean, infinite_weights(), std::nullopt, SolverKind::Sinkhorn};
}

PoolPreset max_preset() {
  RotParams p;
  p.alpha0 = 0.0;
  p.alpha1 = kMaxPresetSmoothness;
  p.alpha2 = kInfiniteWeight;
  p.alpha3 = 0.0;
  p.rho = 1.0;
  return PoolPreset{PresetName::Max, p, std::nullopt, SolverKind::Sinkhorn};
}

PoolPreset attention_preset(const Vector& attention_weights) {
  require_simplex(attention_weights, kSimplexTolerance, "attention weights");
  RotParams p = infinite_weights();
  p.q0 = attention_weights;
  return PoolPreset{PresetName::Attention, p, attention_weights, SolverKind::Badmm};
}

std::string_view to_string(PresetName name) noexcept {
  switch (name) {
    case PresetName::Mean:
      return "mean";
    case PresetName::Max:
      return "max";
    case PresetName::Attention:
      return "attention";
    case PresetName::Custom:
      break;
  }
  return "custom";
}

Vector classic_pool(const SampleSet& x, ClassicKind kind, const Vector& attention) {
  const Matrix& data = x.data();
  switch (kind) {
    case ClassicKind::Add:
      return data.rowwise().sum();
    case ClassicKind::Mean:
      return data.rowwise().mean();
    case ClassicKind::Max:
      return data.rowwise().maxCoeff();
    case ClassicKind::Attention:
      require_distribution(attention, x.samples(), "attention weights");
      return data * attention;
  }
  throw InvalidInput("unknown pooling kind");
}

MixedPooling mixed_mean_max(const SampleSet& x, double omega) {
  if (!(omega >= 0.0 && omega <= 1.0)) throw InvalidInput("omega must lie in [0, 1]");
  MixedPooling out;
  out.direct = omega * classic_pool(x, ClassicKind::Mean) +
               (1.0 - omega) * classic_pool(x, ClassicKind::Max);

  const PoolPreset mean = mean_preset();
  const PoolPreset max = max_preset();
  Matrix stacked(x.dims(), 2);
  stacked.col(0) = rotp(x, mean.params, mean.default_solver).pooled;
  stacked.col(1) = rotp(x, max.params, SolverKind::Sinkhorn).pooled;

  const double w = std::clamp(omega, kPriorFloor, 1.0 - kPriorFloor);
  RotParams fuse = infinite_weights();
  fuse.q0 = Vector(2);
  fuse.q0 << w, 1.0 - w;
  out.composed =
      rotp(SampleSet(std::move(stacked), SignPolicy::AllowSigned), fuse, SolverKind::Badmm).pooled;
  return out;
}

Vector hrotp(std::span<const SampleSet> sets, const HierarchicalSpec& spec, SolverKind solver) {
  if (sets.empty()) throw InvalidInput("hierarchical pooling needs at least one member set");
  const Index dims = sets.front().dims();
  for (const SampleSet& s : sets) {
    if (s.dims() != dims) {
      throw InvalidInput("member sets have different feature dimensions (" +
                         std::to_string(s.dims()) + " vs " + std::to_string(dims) + ")");
    }
  }
  Index out_dims = dims;
  if (const auto* affine = std::get_if<AffineMap>(&spec.feature_map)) {
    if (affine->weight.cols() != dims || affine->bias.size() != affine->weight.rows() ||
        affine->weight.rows() < 1) {
      throw InvalidInput("affine feature map dimensions do not match the member sets");
    }
    out_dims = affine->weight.rows();
  }

  Matrix members(out_dims, static_cast<Index>(sets.size()));
  parallel_for(sets.size(), [&](std::size_t m) {
    const SampleSet& set = sets[m];
    Vector v;
    if (spec.heads.empty()) {
      v = rotp(set, spec.inner_params, solver).pooled;
    } else {
      Matrix heads(dims, static_cast<Index>(spec.heads.size()));
      for (std::size_t h = 0; h < spec.heads.size(); ++h) {
        heads.col(static_cast<Index>(h)) = rotp(set, spec.heads[h], solver).pooled;
      }
      v = rotp(SampleSet(std::move(heads), SignPolicy::AllowSigned), spec.inner_params, solver)
              .pooled;
    }
    if (const auto* affine = std::get_if<AffineMap>(&spec.feature_map)) {
      v = affine->weight * v + affine->bias;
    }
    members.col(static_cast<Index>(m)) = v;
  });
  return rotp(SampleSet(std::move(members), SignPolicy::AllowSigned), spec.outer_params, solver)
      .pooled;
}

}  // namespace rotpool
