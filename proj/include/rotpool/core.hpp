#pragma once

#include <Eigen/Dense>

#include <array>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rotpool/errors.hpp"

namespace rotpool {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

// Tolerances shared across modules.
inline constexpr double kPlanMassTolerance = 1e-3;
inline constexpr double kSimplexTolerance = 1e-10;
inline constexpr double kSuppliedPriorTolerance = 1e-8;
inline constexpr double kMinSmoothness = 1e-8;

enum class SignPolicy { NonNegative, AllowSigned };

/// A D x N data matrix: column n is the n-th sample, row d the d-th feature.
///
/// Pooling inputs are nonnegative. Diagnostics work on Gaussian data and opt
/// out of that check with SignPolicy::AllowSigned; every solver accepts any
/// finite matrix.
class SampleSet {
 public:
  explicit SampleSet(Matrix data, SignPolicy policy = SignPolicy::NonNegative);

  const Matrix& data() const noexcept { return data_; }
  Index dims() const noexcept { return data_.rows(); }
  Index samples() const noexcept { return data_.cols(); }
  SignPolicy policy() const noexcept { return policy_; }

  /// Column n of the result is column perm[n] of this set.
  SampleSet permuted(std::span<const Index> perm) const;

 private:
  Matrix data_;
  SignPolicy policy_;
};

/// A joint distribution over (feature, sample) pairs, stored in log domain.
///
/// The plan always has unit mass; raw_mass() keeps the mass of the matrix the
/// plan was built from so that solver stability can be reported.
class TransportPlan {
 public:
  /// Normalizes exp(log_plan) to unit mass. Throws NumericalFailure when any
  /// log value is non-finite.
  static TransportPlan from_log(Matrix log_plan);

  const Matrix& log_plan() const noexcept { return log_plan_; }
  const Matrix& plan() const noexcept { return plan_; }
  const Vector& marginal_row() const noexcept { return marginal_row_; }
  const Vector& marginal_col() const noexcept { return marginal_col_; }
  double raw_mass() const noexcept { return raw_mass_; }
  double log_raw_mass() const noexcept { return log_raw_mass_; }
  Index dims() const noexcept { return plan_.rows(); }
  Index samples() const noexcept { return plan_.cols(); }

  /// Row-normalized plan, p(n | d).
  Matrix conditional() const;

 private:
  TransportPlan() = default;

  Matrix log_plan_;
  Matrix plan_;
  Vector marginal_row_;
  Vector marginal_col_;
  double log_raw_mass_ = 0.0;
  double raw_mass_ = 1.0;
};

enum class Smoothness { Entropic, Quadratic };

/// Regularizer weights, marginal priors and solver knobs.
///
/// Empty p0/q0 stand for uniform priors; resolved() fills them in for a
/// concrete shape. tau left unset follows the proximal default: 1 when the
/// structural term is active, 0 otherwise.
struct RotParams {
  double alpha0 = 0.0;
  double alpha1 = 1.0;
  double alpha2 = 1.0;
  double alpha3 = 1.0;
  Vector p0;
  Vector q0;
  double rho = 1.0;
  std::optional<double> tau;
  int outer_iters = 8;
  int inner_iters = 32;
  double inner_tol = 1e-9;
  Smoothness smoothness = Smoothness::Entropic;

  double effective_tau() const noexcept { return tau ? *tau : (alpha0 > 0.0 ? 1.0 : 0.0); }

  /// Copy with explicit priors for a D x N problem; validates everything.
  RotParams resolved(Index dims, Index samples) const;

  /// Throws InvalidInput when a knob or prior violates its constraint.
  void validate(Index dims, Index samples) const;

  /// One-line "alpha0=... alpha1=..." summary used in error context.
  std::string snapshot() const;
};

struct UniformPrior {};
struct SuppliedPrior {
  Vector p0;
  Vector q0;
};
/// p0 = softmax(U X 1), q0 = softmax(w^T tanh(V X)).
struct AttentionPrior {
  Vector w;
  Matrix V;
  Matrix U;
};
using PriorSpec = std::variant<UniformPrior, SuppliedPrior, AttentionPrior>;

/// Unconstrained parametrization: alpha_i = softplus(beta_i).
struct RawParams {
  std::array<double, 4> beta{0.0, 0.0, 0.0, 0.0};
  PriorSpec prior = UniformPrior{};
};

/// Feature-level (D x D) and sample-level (N x N) similarity matrices.
struct CovariancePair {
  Matrix sigma1;
  Matrix sigma2;

  /// Wraps externally computed similarity matrices (cosine, kernels, ...).
  /// Both must be square and symmetric within 1e-10.
  static CovariancePair supplied(Matrix sigma1, Matrix sigma2);

  bool empty() const noexcept { return sigma1.size() == 0 && sigma2.size() == 0; }
};

// ---------------------------------------------------------------------------
// Kernels

/// log sum_n exp(Y[d, n]) for every row d, with max-shift.
Vector logsumexp_rows(const Matrix& y);
/// log sum_d exp(Y[d, n]) for every column n, with max-shift.
Vector logsumexp_cols(const Matrix& y);
double logsumexp(const Vector& y);
double logsumexp_all(const Matrix& y);
Vector softmax(const Vector& y);
double softplus(double beta);

/// KL(a|b) = <a, log a - log b> - <a - b, 1>, with 0 log 0 = 0.
double generalized_kl(const Vector& a, const Vector& b);

/// Population covariances of the features (sigma1) and of the samples (sigma2).
CovariancePair compute_covariances(const SampleSet& x);

/// <-X,P> + a0 <C(X,P),P> + a1 R(P) + a2 KL(P1|p0) + a3 KL(P^T 1|q0)
/// with C(X,P) = -S1 P S2^T. Covariances are computed when alpha0 > 0 and
/// none are supplied.
double rot_objective(const SampleSet& x, const TransportPlan& plan, const RotParams& params);
double rot_objective(const SampleSet& x, const TransportPlan& plan, const RotParams& params,
                     const CovariancePair& cov);
/// Same objective evaluated on a raw positive matrix.
double rot_objective(const SampleSet& x, const Matrix& plan, const RotParams& params,
                     const CovariancePair& cov);

RotParams constrain_params(const RawParams& raw, const SampleSet& x, const RotParams& knobs = {});

/// Throws InvalidInput unless v is strictly positive and sums to one within tol.
void require_simplex(const Vector& v, double tol, const char* name);

namespace detail {
// Unchecked kernels for solver inner loops; inputs must be finite.
Vector lse_rows(const Matrix& y);
Vector lse_cols(const Matrix& y);
double lse(const Vector& y);
}  // namespace detail

}  // namespace rotpool
