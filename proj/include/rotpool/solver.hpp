#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rotpool/core.hpp"

namespace rotpool {

enum class SolverKind { Sinkhorn, Badmm };

std::string_view to_string(SolverKind kind) noexcept;
std::string_view to_string(Smoothness smoothness) noexcept;

/// Per-iteration record of one solve. objective holds <-X, P(t)> after each
/// outer step; primal_residual holds ||P(t) - S(t)||_1 (Bregman ADMM only).
struct SolverTrace {
  std::vector<double> objective;
  std::vector<double> primal_residual;
  /// Inner Sinkhorn iterations actually run in each outer step.
  std::vector<int> inner_iterations;
  int iterations_used = 0;
  double wall_time = 0.0;
  std::vector<std::string> warnings;
};

struct SolveResult {
  TransportPlan plan;
  SolverTrace trace;
};

}  // namespace rotpool
