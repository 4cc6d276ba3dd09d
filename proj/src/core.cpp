#include "rotpool/core.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace rotpool {

namespace {

void require_finite(const Matrix& m, const char* what) {
  if (!m.allFinite()) {
    throw InvalidInput(std::string(what) + " contains NaN or infinite entries");
  }
}

std::string shape(Index rows, Index cols) {
  return std::to_string(rows) + "x" + std::to_string(cols);
}

}  // namespace

// ---------------------------------------------------------------------------
// SampleSet

SampleSet::SampleSet(Matrix data, SignPolicy policy) : data_(std::move(data)), policy_(policy) {
  if (data_.rows() < 1 || data_.cols() < 1) {
    throw InvalidInput("sample set must have at least one feature and one sample, got " +
                       shape(data_.rows(), data_.cols()));
  }
  require_finite(data_, "sample set");
  if (policy_ == SignPolicy::NonNegative) {
    for (Index n = 0; n < data_.cols(); ++n) {
      for (Index d = 0; d < data_.rows(); ++d) {
        if (data_(d, n) < 0.0) {
          throw InvalidInput("negative entry at row " + std::to_string(d + 1) + ", col " +
                             std::to_string(n + 1));
        }
      }
    }
  }
}

SampleSet SampleSet::permuted(std::span<const Index> perm) const {
  if (static_cast<Index>(perm.size()) != samples()) {
    throw InvalidInput("permutation length does not match the number of samples");
  }
  std::vector<bool> seen(static_cast<std::size_t>(samples()), false);
  for (Index k : perm) {
    if (k < 0 || k >= samples() || seen[static_cast<std::size_t>(k)]) {
      throw InvalidInput("not a permutation of the sample indices");
    }
    seen[static_cast<std::size_t>(k)] = true;
  }
  Matrix out(dims(), samples());
  for (Index n = 0; n < samples(); ++n) {
    out.col(n) = data_.col(perm[n]);
  }
  return SampleSet(std::move(out), policy_);
}

// ---------------------------------------------------------------------------
// TransportPlan

TransportPlan TransportPlan::from_log(Matrix log_plan) {
  if (log_plan.size() == 0) {
    throw InvalidInput("empty transport plan");
  }
  if (!log_plan.allFinite()) {
    throw NumericalFailure("transport plan has non-finite log entries", -1,
                           "shape " + shape(log_plan.rows(), log_plan.cols()));
  }
  TransportPlan out;
  out.log_raw_mass_ = detail::lse(log_plan.reshaped());
  out.raw_mass_ = std::exp(out.log_raw_mass_);
  log_plan.array() -= out.log_raw_mass_;
  out.plan_ = log_plan.array().exp().matrix();
  out.log_plan_ = std::move(log_plan);
  out.marginal_row_ = out.plan_.rowwise().sum();
  out.marginal_col_ = out.plan_.colwise().sum().transpose();
  return out;
}

Matrix TransportPlan::conditional() const {
  return marginal_row_.cwiseInverse().asDiagonal() * plan_;
}

// ---------------------------------------------------------------------------
// RotParams

void require_simplex(const Vector& v, double tol, const char* name) {
  if (v.size() == 0) {
    throw InvalidInput(std::string(name) + " is empty");
  }
  if (!v.allFinite() || (v.array() <= 0.0).any()) {
    throw InvalidInput(std::string(name) + " must be strictly positive");
  }
  if (std::abs(v.sum() - 1.0) > tol) {
    std::ostringstream os;
    os.precision(17);
    os << name << " must sum to one (sum = " << v.sum() << ")";
    throw InvalidInput(os.str());
  }
}

void RotParams::validate(Index dims, Index samples) const {
  const std::array<double, 4> alphas{alpha0, alpha1, alpha2, alpha3};
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!std::isfinite(alphas[i]) || alphas[i] < 0.0) {
      throw InvalidInput("alpha" + std::to_string(i) + " must be a finite nonnegative number");
    }
  }
  if (!std::isfinite(rho) || rho <= 0.0) throw InvalidInput("rho must be positive");
  if (tau && (!std::isfinite(*tau) || *tau < 0.0)) throw InvalidInput("tau must be nonnegative");
  if (outer_iters < 1) throw InvalidInput("outer iteration count must be at least 1");
  if (inner_iters < 1) throw InvalidInput("inner iteration count must be at least 1");
  if (!(inner_tol >= 0.0)) throw InvalidInput("inner tolerance must be nonnegative");
  if (p0.size() != 0) {
    if (p0.size() != dims) {
      throw InvalidInput("p0 has length " + std::to_string(p0.size()) + ", expected " +
                         std::to_string(dims));
    }
    require_simplex(p0, kSimplexTolerance, "p0");
  }
  if (q0.size() != 0) {
    if (q0.size() != samples) {
      throw InvalidInput("q0 has length " + std::to_string(q0.size()) + ", expected " +
                         std::to_string(samples));
    }
    require_simplex(q0, kSimplexTolerance, "q0");
  }
}

RotParams RotParams::resolved(Index dims, Index samples) const {
  validate(dims, samples);
  RotParams out = *this;
  if (out.p0.size() == 0) out.p0 = Vector::Constant(dims, 1.0 / static_cast<double>(dims));
  if (out.q0.size() == 0) out.q0 = Vector::Constant(samples, 1.0 / static_cast<double>(samples));
  return out;
}

std::string RotParams::snapshot() const {
  std::ostringstream os;
  os.precision(6);
  os << "alpha0=" << alpha0 << " alpha1=" << alpha1 << " alpha2=" << alpha2
     << " alpha3=" << alpha3 << " rho=" << rho << " tau=" << effective_tau()
     << " T=" << outer_iters << " K=" << inner_iters << " smoothness="
     << (smoothness == Smoothness::Entropic ? "entropic" : "quadratic");
  return os.str();
}

CovariancePair CovariancePair::supplied(Matrix sigma1, Matrix sigma2) {
  for (const Matrix* m : {&sigma1, &sigma2}) {
    if (m->rows() != m->cols()) throw InvalidInput("similarity matrix must be square");
    require_finite(*m, "similarity matrix");
    if ((*m - m->transpose()).cwiseAbs().maxCoeff() > 1e-10) {
      throw InvalidInput("similarity matrix must be symmetric");
    }
  }
  return CovariancePair{std::move(sigma1), std::move(sigma2)};
}

// ---------------------------------------------------------------------------
// Kernels

namespace detail {

Vector lse_rows(const Matrix& y) {
  const Vector m = y.rowwise().maxCoeff();
  return m + (y.colwise() - m).array().exp().rowwise().sum().log().matrix();
}

Vector lse_cols(const Matrix& y) {
  const Vector m = y.colwise().maxCoeff().transpose();
  return m + (y.rowwise() - m.transpose()).array().exp().colwise().sum().log().matrix().transpose();
}

double lse(const Vector& y) {
  const double m = y.maxCoeff();
  return m + std::log((y.array() - m).exp().sum());
}

}  // namespace detail

Vector logsumexp_rows(const Matrix& y) {
  if (y.size() == 0) throw InvalidInput("logsumexp of an empty matrix");
  require_finite(y, "logsumexp input");
  return detail::lse_rows(y);
}

Vector logsumexp_cols(const Matrix& y) {
  if (y.size() == 0) throw InvalidInput("logsumexp of an empty matrix");
  require_finite(y, "logsumexp input");
  return detail::lse_cols(y);
}

double logsumexp(const Vector& y) {
  if (y.size() == 0) throw InvalidInput("logsumexp of an empty vector");
  require_finite(y, "logsumexp input");
  return detail::lse(y);
}

double logsumexp_all(const Matrix& y) {
  if (y.size() == 0) throw InvalidInput("logsumexp of an empty matrix");
  require_finite(y, "logsumexp input");
  return detail::lse(y.reshaped());
}

Vector softmax(const Vector& y) {
  const double shift = logsumexp(y);
  return (y.array() - shift).exp().matrix();
}

double softplus(double beta) {
  // log(1 + e^b) = max(b, 0) + log1p(e^{-|b|})
  return std::max(beta, 0.0) + std::log1p(std::exp(-std::abs(beta)));
}

double generalized_kl(const Vector& a, const Vector& b) {
  if (a.size() != b.size()) {
    throw InvalidInput("generalized_kl: length mismatch (" + std::to_string(a.size()) + " vs " +
                       std::to_string(b.size()) + ")");
  }
  if (!a.allFinite() || !b.allFinite()) throw InvalidInput("generalized_kl: non-finite input");
  if ((b.array() <= 0.0).any()) throw InvalidInput("generalized_kl: second argument must be positive");
  if ((a.array() < 0.0).any()) throw InvalidInput("generalized_kl: first argument must be nonnegative");
  double acc = 0.0;
  for (Index i = 0; i < a.size(); ++i) {
    if (a[i] > 0.0) acc += a[i] * (std::log(a[i]) - std::log(b[i]));
    acc -= a[i] - b[i];
  }
  return acc;
}

CovariancePair compute_covariances(const SampleSet& x) {
  const Matrix& data = x.data();
  const double n = static_cast<double>(x.samples());
  const double d = static_cast<double>(x.dims());
  const Matrix centered_rows = data.colwise() - data.rowwise().mean();
  const Matrix centered_cols = data.rowwise() - data.colwise().mean();
  Matrix sigma1 = centered_rows * centered_rows.transpose() / n;
  Matrix sigma2 = centered_cols.transpose() * centered_cols / d;
  // Exact symmetry; the products are symmetric up to rounding only.
  sigma1 = 0.5 * (sigma1 + sigma1.transpose()).eval();
  sigma2 = 0.5 * (sigma2 + sigma2.transpose()).eval();
  return CovariancePair{std::move(sigma1), std::move(sigma2)};
}

namespace {

double objective_impl(const SampleSet& x, const Matrix& plan, const Matrix* log_plan,
                      const RotParams& params, const CovariancePair& cov) {
  if (plan.rows() != x.dims() || plan.cols() != x.samples()) {
    throw InvalidInput("plan shape " + shape(plan.rows(), plan.cols()) +
                       " does not match data shape " + shape(x.dims(), x.samples()));
  }
  const RotParams p = params.resolved(x.dims(), x.samples());
  double value = -(x.data().cwiseProduct(plan)).sum();

  if (p.alpha0 > 0.0) {
    const CovariancePair local = cov.empty() ? compute_covariances(x) : CovariancePair{};
    const CovariancePair& c = cov.empty() ? local : cov;
    if (c.sigma1.rows() != x.dims() || c.sigma2.rows() != x.samples()) {
      throw InvalidInput("covariance shapes do not match the data");
    }
    const Matrix structural = c.sigma1 * plan * c.sigma2.transpose();
    value -= p.alpha0 * structural.cwiseProduct(plan).sum();
  }

  if (p.alpha1 > 0.0) {
    double reg = 0.0;
    if (p.smoothness == Smoothness::Entropic) {
      for (Index n = 0; n < plan.cols(); ++n) {
        for (Index d = 0; d < plan.rows(); ++d) {
          const double v = plan(d, n);
          if (v > 0.0) {
            const double lv = log_plan ? (*log_plan)(d, n) : std::log(v);
            reg += v * (lv - 1.0);
          }
        }
      }
    } else {
      reg = plan.squaredNorm();
    }
    value += p.alpha1 * reg;
  }

  if (p.alpha2 > 0.0) value += p.alpha2 * generalized_kl(plan.rowwise().sum(), p.p0);
  if (p.alpha3 > 0.0) value += p.alpha3 * generalized_kl(plan.colwise().sum().transpose(), p.q0);
  return value;
}

}  // namespace

double rot_objective(const SampleSet& x, const TransportPlan& plan, const RotParams& params,
                     const CovariancePair& cov) {
  return objective_impl(x, plan.plan(), &plan.log_plan(), params, cov);
}

double rot_objective(const SampleSet& x, const TransportPlan& plan, const RotParams& params) {
  return objective_impl(x, plan.plan(), &plan.log_plan(), params, CovariancePair{});
}

double rot_objective(const SampleSet& x, const Matrix& plan, const RotParams& params,
                     const CovariancePair& cov) {
  if (!plan.allFinite() || (plan.array() < 0.0).any()) {
    throw InvalidInput("plan must be finite and nonnegative");
  }
  return objective_impl(x, plan, nullptr, params, cov);
}

// ---------------------------------------------------------------------------
// Parametrization

RotParams constrain_params(const RawParams& raw, const SampleSet& x, const RotParams& knobs) {
  RotParams out = knobs;
  out.alpha0 = softplus(raw.beta[0]);
  out.alpha1 = softplus(raw.beta[1]);
  out.alpha2 = softplus(raw.beta[2]);
  out.alpha3 = softplus(raw.beta[3]);

  const Index dims = x.dims();
  const Index samples = x.samples();
  if (std::holds_alternative<UniformPrior>(raw.prior)) {
    out.p0 = Vector::Constant(dims, 1.0 / static_cast<double>(dims));
    out.q0 = Vector::Constant(samples, 1.0 / static_cast<double>(samples));
  } else if (const auto* s = std::get_if<SuppliedPrior>(&raw.prior)) {
    if (s->p0.size() != dims || s->q0.size() != samples) {
      throw InvalidInput("supplied priors have the wrong length");
    }
    require_simplex(s->p0, kSuppliedPriorTolerance, "p0");
    require_simplex(s->q0, kSuppliedPriorTolerance, "q0");
    out.p0 = s->p0 / s->p0.sum();
    out.q0 = s->q0 / s->q0.sum();
  } else {
    const auto& att = std::get<AttentionPrior>(raw.prior);
    if (att.w.size() != dims || att.V.rows() != dims || att.V.cols() != dims ||
        att.U.rows() != dims || att.U.cols() != dims) {
      throw InvalidInput("attention prior expects w of length D and D x D matrices V, U");
    }
    const Vector row_totals = x.data().rowwise().sum();
    out.p0 = softmax(att.U * row_totals);
    const Matrix hidden = (att.V * x.data()).array().tanh().matrix();
    out.q0 = softmax(hidden.transpose() * att.w);
  }
  out.validate(dims, samples);
  return out;
}

}  // namespace rotpool
