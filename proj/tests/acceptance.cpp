#include <sys/wait.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "rotpool/badmm.hpp"
#include "rotpool/diagnostics.hpp"
#include "rotpool/pooling.hpp"
#include "rotpool/sinkhorn.hpp"

using namespace rotpool;

namespace {

using Clock = std::chrono::steady_clock;

double linf(const Matrix& a, const Matrix& b) { return (a - b).cwiseAbs().maxCoeff(); }

struct Outcome {
  bool pass = true;
  std::string detail;
};

int failures = 0;

void report(int id, const std::string& name, const std::function<Outcome()>& body,
            double budget_seconds) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  if (budget_seconds > 0.0 && secs >= budget_seconds) {
    o.pass = false;
    o.detail += " over time budget";
  }
  if (!o.pass) ++failures;
  std::printf("%s criterion %d %s (%.2fs) %s\n", o.pass ? "PASS" : "FAIL", id, name.c_str(), secs,
              o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

// Nonnegative 5 x 10 data whose rows have a top-2 gap of at least 0.1.
Matrix separated_data(std::uint64_t seed) {
  for (std::uint64_t s = seed;; s += 1000) {
    const Matrix x = lognormal_matrix(5, 10, s);
    bool ok = true;
    for (Index d = 0; d < 5 && ok; ++d) {
      std::vector<double> row(x.row(d).begin(), x.row(d).end());
      std::sort(row.begin(), row.end());
      ok = row[9] - row[8] >= 0.1;
    }
    if (ok) return x;
  }
}

Outcome presets() {
  double mean_err = 0.0;
  double att_err = 0.0;
  double max_err = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const SampleSet x(lognormal_matrix(5, 10, seed));
    const Vector mean = classic_pool(x, ClassicKind::Mean);
    for (SolverKind s : {SolverKind::Sinkhorn, SolverKind::Badmm}) {
      mean_err = std::max(mean_err, linf(rotp(x, mean_preset().params, s).pooled, mean));
    }
    const Vector a = attention_weights(x.data(), seed);
    att_err = std::max(att_err, linf(rotp(x, attention_preset(a).params, SolverKind::Badmm).pooled,
                                     x.data() * a));
    const SampleSet sep(separated_data(seed));
    max_err = std::max(max_err, linf(rotp(sep, max_preset().params, SolverKind::Sinkhorn).pooled,
                                     classic_pool(sep, ClassicKind::Max)));
  }
  return {mean_err < 1e-6 && att_err < 1e-4 && max_err < 1e-3,
          "mean " + fmt(mean_err) + " attention " + fmt(att_err) + " max " + fmt(max_err)};
}

Outcome grid() {
  Outcome o;
  for (Smoothness sm : {Smoothness::Entropic, Smoothness::Quadratic}) {
    for (double a0 : {0.0, 0.1}) {
      GridSpec spec;
      spec.variant = {SolverKind::Badmm, sm};
      spec.alpha0 = a0;
      const GridReport r = stability_grid(spec);
      int bad = 0;
      for (const GridCell& c : r.cells) {
        if (c.failed || !c.plan_norm || std::abs(*c.plan_norm - 1.0) > 1e-3) ++bad;
      }
      if (bad > 0) o.pass = false;
      o.detail += "badmm-" + std::string(to_string(sm)) + " a0=" + fmt(a0) + " bad " +
                  std::to_string(bad) + "; ";
    }
  }
  for (double a0 : {0.0, 0.1}) {
    GridSpec spec;
    spec.variant = {SolverKind::Sinkhorn, Smoothness::Entropic};
    spec.alpha0 = a0;
    const GridReport r = stability_grid(spec);
    int safe_bad = 0;
    for (std::size_t i = 0; i < spec.alpha1_axis.size(); ++i) {
      for (std::size_t j = 0; j < spec.alpha23_axis.size(); ++j) {
        const GridCell& c = r.at(i, j);
        const bool safe = a0 == 0.0 && c.alpha1 > 0.1 && c.alpha23 > 1e-5 && c.alpha23 < 10.0;
        if (safe && (c.failed || !c.plan_norm)) ++safe_bad;
      }
    }
    if (safe_bad > 0) o.pass = false;
    o.detail += "sinkhorn a0=" + fmt(a0) + " failed " + std::to_string(r.failed_count) +
                " mass out of range " + std::to_string(r.out_of_range_count) +
                " safe-region failed " + std::to_string(safe_bad) + "; ";
  }
  return o;
}

Outcome convergence() {
  const auto variants = all_variants();
  std::vector<int> worst(variants.size(), 0);
  bool ok = true;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const SampleSet x(lognormal_matrix(100, 500, s));
    RotParams p;
    p.alpha0 = 0.1;
    const auto traces = convergence_study(x, p, variants, 32);
    for (std::size_t v = 0; v < traces.size(); ++v) {
      const auto& t = traces[v];
      if (t.failed || !t.converged_at || *t.converged_at > 16) {
        ok = false;
        worst[v] = std::max(worst[v], 999);
      } else {
        worst[v] = std::max(worst[v], *t.converged_at);
      }
    }
  }
  std::string detail = "worst converged_at:";
  for (std::size_t v = 0; v < variants.size(); ++v) {
    detail += " " + variant_name(variants[v]) + "=" + std::to_string(worst[v]);
  }
  return {ok, detail};
}

Outcome oracle() {
  std::mt19937_64 rng(4);
  std::uniform_int_distribution<int> size(1, 4);
  std::uniform_real_distribution<double> weight(0.5, 2.0);
  double plan_err = 0.0;
  double undercut = -1e300;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const Index d = size(rng);
    const Index n = size(rng);
    const SampleSet x(lognormal_matrix(d, n, 1000 + s));
    RotParams p;
    p.alpha1 = weight(rng);
    p.alpha2 = p.alpha3 = 1e4;
    const TransportPlan ref = oracle_solve(x, p);
    const double f_ref = rot_objective(x, ref, p);
    RotParams sk = p;
    sk.inner_iters = 1000;
    RotParams bd = p;
    bd.outer_iters = 4000;
    for (const TransportPlan& plan :
         {solve_sinkhorn(x, sk).plan, solve_badmm(x, bd).plan}) {
      plan_err = std::max(plan_err, linf(plan.plan(), ref.plan()));
      undercut = std::max(undercut, f_ref - rot_objective(x, plan, p));
    }
  }
  return {plan_err < 1e-3 && undercut <= 1e-6,
          "plan l-inf " + fmt(plan_err) + " max undercut " + fmt(undercut)};
}

Outcome permutation() {
  std::mt19937_64 rng(5);
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Index d = 2 + static_cast<Index>(s % 5);
    const Index n = 3 + static_cast<Index>(s % 9);
    const SampleSet x(lognormal_matrix(d, n, 2000 + s));
    std::vector<Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    const SampleSet xp = x.permuted(perm);
    RotParams p;
    p.alpha0 = 0.1;
    struct Run {
      SolverKind solver;
      Smoothness smoothness;
    };
    // Sinkhorn has no quadratic variant.
    for (const Run& r : {Run{SolverKind::Sinkhorn, Smoothness::Entropic},
                         Run{SolverKind::Badmm, Smoothness::Entropic},
                         Run{SolverKind::Badmm, Smoothness::Quadratic}}) {
      p.smoothness = r.smoothness;
      worst = std::max(worst, linf(rotp(x, p, r.solver).pooled, rotp(xp, p, r.solver).pooled));
    }
  }
  return {worst < 1e-8, "worst " + fmt(worst)};
}

Outcome mixed() {
  double worst = 0.0;
  for (std::uint64_t s = 0; s < 10; ++s) {
    const SampleSet x(lognormal_matrix(4 + static_cast<Index>(s % 3), 8, 3000 + s));
    for (double w : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const MixedPooling m = mixed_mean_max(x, w);
      worst = std::max(worst, linf(m.direct, m.composed));
    }
  }
  return {worst < 1e-4, "worst " + fmt(worst)};
}

double median_of(const std::vector<BenchRow>& rows, SolverKind s) {
  for (const BenchRow& r : rows) {
    if (r.solver == s) return r.median;
  }
  throw std::runtime_error("missing bench row");
}

Outcome orderings() {
  BenchSpec with;
  with.shapes = {{5, 50}};
  with.alpha0_values = {0.1};
  with.outer_iters = 50;
  with.inner_iters = 5;
  with.trials = 15;
  const auto a = runtime_bench(with);
  const double sk_a = median_of(a, SolverKind::Sinkhorn);
  const double bd_a = median_of(a, SolverKind::Badmm);

  BenchSpec without = with;
  without.alpha0_values = {0.0};
  without.inner_iters = 50;
  const auto b = runtime_bench(without);
  const double sk_b = median_of(b, SolverKind::Sinkhorn);
  const double bd_b = median_of(b, SolverKind::Badmm);
  return {bd_a <= sk_a && sk_b <= bd_b, "alpha0>0 badmm " + fmt(bd_a) + "s sinkhorn " +
                                            fmt(sk_a) + "s; alpha0=0 sinkhorn " + fmt(sk_b) +
                                            "s badmm " + fmt(bd_b) + "s"};
}

Outcome marginals() {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Index d = 2 + static_cast<Index>(seed % 4);
    const Index n = 3 + static_cast<Index>(seed % 6);
    const SampleSet x(lognormal_matrix(d, n, 4000 + seed));
    const CovariancePair cov = compute_covariances(x);
    RotParams p = RotParams{}.resolved(d, n);
    p.alpha0 = seed % 2 == 0 ? 0.0 : 0.1;
    p.alpha2 = 0.5;
    p.alpha3 = 2.0;
    for (Smoothness sm : {Smoothness::Entropic, Smoothness::Quadratic}) {
      p.smoothness = sm;
      BadmmState s = initial_badmm_state(p);
      for (int t = 0; t < 100; ++t) {
        s.log_p = update_p(s, x, cov, p);
        worst = std::max(worst, linf(s.log_p.array().exp().matrix().rowwise().sum(),
                                     s.log_mu.array().exp().matrix()));
        s.log_s = update_s(s, x, cov, p);
        worst = std::max(worst, linf(s.log_s.array().exp().matrix().colwise().sum().transpose(),
                                     s.log_eta.array().exp().matrix()));
        s.log_mu = update_mu(s, p);
        s.log_eta = update_eta(s, p);
        const BadmmDuals du = update_duals(s, p);
        s.dual_z = du.z;
        s.dual_z1 = du.z1;
        s.dual_z2 = du.z2;
      }
    }
  }
  return {worst < 1e-10, "worst " + fmt(worst)};
}

std::string run_capture(const std::string& cmd, int& status) {
  std::string out;
  FILE* pipe = popen(cmd.c_str(), "r");
  if (!pipe) throw std::runtime_error("cannot run " + cmd);
  char buf[4096];
  std::size_t got = 0;
  while ((got = std::fread(buf, 1, sizeof buf, pipe)) > 0) out.append(buf, got);
  const int raw = pclose(pipe);
  status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return out;
}

Outcome cli_golden(const std::string& cli) {
  const auto dir = std::filesystem::temp_directory_path() / "rotpool_acceptance";
  std::filesystem::create_directories(dir);
  const auto input = dir / "x.txt";
  std::ofstream(input) << "1,2\n4,3\n";
  const std::vector<std::string> examples{
      "pool --solver badmm --preset mean " + input.string(),
      "grid --solver badmm --alpha0 0",
      "imitate --preset attention --solver badmm",
  };
  Outcome o;
  for (const std::string& args : examples) {
    int s1 = 0;
    int s2 = 0;
    const std::string a = run_capture(cli + " " + args, s1);
    const std::string b = run_capture(cli + " " + args, s2);
    const bool same = s1 == 0 && s2 == 0 && !a.empty() && a == b;
    if (!same) o.pass = false;
    o.detail += args.substr(0, args.find(' ')) + (same ? " identical; " : " differs; ");
  }
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-rotpool-cli>\n");
    return 2;
  }
  const std::string cli = argv[1];
  report(1, "preset fidelity", presets, 5.0);
  report(2, "stability grid", grid, 60.0);
  report(3, "convergence", convergence, 600.0);
  report(4, "oracle equivalence", oracle, 120.0);
  report(5, "permutation invariance", permutation, 0.0);
  report(6, "mixed pooling equivalence", mixed, 0.0);
  report(7, "runtime orderings", orderings, 0.0);
  report(8, "marginal identities", marginals, 0.0);
  report(9, "cli byte identity", [&] { return cli_golden(cli); }, 0.0);
  return failures == 0 ? 0 : 1;
}
