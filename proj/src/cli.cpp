#include "rotpool/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>

#include "rotpool/diagnostics.hpp"
#include "rotpool/parallel.hpp"

namespace rotpool {

namespace {

// Parameters of the convergence study when no preset or override applies.
constexpr double kConvergenceAlpha0 = 0.1;
constexpr Index kConvergenceDims = 100;
constexpr Index kConvergenceSamples = 500;
constexpr Index kBenchDims = 5;
constexpr int kBenchIters = 50;
constexpr Index kImitateDims = 5;
constexpr Index kImitateSamples = 10;

const std::map<std::string, Command> kCommands{
    {"pool", Command::Pool},       {"imitate", Command::Imitate},
    {"grid", Command::Grid},       {"convergence", Command::Convergence},
    {"bench", Command::Bench},     {"hierarchy", Command::Hierarchy}};
const std::map<std::string, SolverKind> kSolvers{{"sinkhorn", SolverKind::Sinkhorn},
                                                 {"badmm", SolverKind::Badmm}};
const std::map<std::string, Smoothness> kSmoothness{{"entropic", Smoothness::Entropic},
                                                    {"quadratic", Smoothness::Quadratic}};
const std::map<std::string, PresetName> kPresets{{"mean", PresetName::Mean},
                                                 {"max", PresetName::Max},
                                                 {"attention", PresetName::Attention}};

template <class T>
T lookup(const std::map<std::string, T>& table, const std::string& key, const char* what) {
  const auto it = table.find(key);
  if (it == table.end()) throw ConfigError(std::string("unknown ") + what + " '" + key + "'");
  return it->second;
}

std::string lower(std::string_view s) {
  std::string out(s);
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void emit(std::ostream& err, const Json& record) { err << dump_line(record) << '\n'; }

void emit_error(std::ostream& err, const Error& e, const std::string& context = {}) {
  Json rec;
  rec["level"] = "error";
  rec["kind"] = std::string(e.kind());
  if (!context.empty()) rec["context"] = context;
  rec["message"] = e.what();
  if (const auto* pe = dynamic_cast<const ParseError*>(&e); pe != nullptr && pe->line() > 0) {
    rec["line"] = pe->line();
    rec["column"] = pe->column();
  }
  if (const auto* nf = dynamic_cast<const NumericalFailure*>(&e)) {
    rec["iteration"] = nf->iteration();
  }
  emit(err, rec);
}

void emit_warning(std::ostream& err, const std::string& context, const std::string& message) {
  Json rec;
  rec["level"] = "warning";
  rec["context"] = context;
  rec["message"] = message;
  emit(err, rec);
}

Json prior_json(const Vector& v) {
  if (v.size() == 0) return "uniform";
  return to_json(v);
}

Json params_json(const RotParams& p) {
  Json j;
  j["alpha0"] = p.alpha0;
  j["alpha1"] = p.alpha1;
  j["alpha2"] = p.alpha2;
  j["alpha3"] = p.alpha3;
  j["rho"] = p.rho;
  j["tau"] = p.effective_tau();
  j["outer_iters"] = p.outer_iters;
  j["inner_iters"] = p.inner_iters;
  j["inner_tol"] = p.inner_tol;
  j["smoothness"] = std::string(to_string(p.smoothness));
  j["p0"] = prior_json(p.p0);
  j["q0"] = prior_json(p.q0);
  return j;
}

Json trace_json(const SolverTrace& t, bool timings) {
  Json j;
  j["objective"] = t.objective;
  j["primal_residual"] = t.primal_residual;
  j["inner_iterations"] = t.inner_iterations;
  j["iterations_used"] = t.iterations_used;
  j["warnings"] = t.warnings;
  if (timings) j["wall_time"] = t.wall_time;
  return j;
}

RotParams apply_overrides(RotParams p, const ParamOverrides& o) {
  if (o.alpha0) p.alpha0 = *o.alpha0;
  if (o.alpha1) p.alpha1 = *o.alpha1;
  if (o.alpha2) p.alpha2 = *o.alpha2;
  if (o.alpha3) p.alpha3 = *o.alpha3;
  if (o.rho) p.rho = *o.rho;
  if (o.tau) p.tau = *o.tau;
  if (o.outer_iters) p.outer_iters = *o.outer_iters;
  if (o.inner_iters) p.inner_iters = *o.inner_iters;
  if (o.smoothness) p.smoothness = *o.smoothness;
  return p;
}

RotParams preset_params(PresetName name) {
  switch (name) {
    case PresetName::Mean:
      return mean_preset().params;
    case PresetName::Max:
      return max_preset().params;
    case PresetName::Attention:
      // Same weights as the mean preset; q0 is filled in per set.
      return mean_preset().params;
    case PresetName::Custom:
      break;
  }
  return RotParams{};
}

SolverKind preset_solver(PresetName name) {
  return name == PresetName::Attention ? SolverKind::Badmm : SolverKind::Sinkhorn;
}

SignPolicy sign_policy(const RunConfig& c) {
  return c.allow_signed ? SignPolicy::AllowSigned : SignPolicy::NonNegative;
}

std::vector<NamedSet> load_sets(const RunConfig& c) {
  std::vector<NamedSet> sets;
  for (const std::string& path : c.inputs) {
    for (NamedSet& s : ingest(path, sign_policy(c))) sets.push_back(std::move(s));
  }
  return sets;
}

std::vector<Vector> load_attention(const RunConfig& c, std::size_t count) {
  if (!c.attention_weights) return {};
  std::vector<Vector> w = read_vectors(*c.attention_weights);
  if (w.size() != 1 && w.size() != count) {
    throw ConfigError("attention weight file has " + std::to_string(w.size()) +
                      " vectors; expected 1 or " + std::to_string(count));
  }
  return w;
}

Vector attention_for(const std::vector<Vector>& weights, std::size_t k, const Matrix& x,
                     std::uint64_t seed) {
  Vector a = weights.empty() ? attention_weights(x, seed + k)
                             : weights[weights.size() == 1 ? 0 : k];
  if (a.size() != x.cols()) {
    throw ConfigError("attention weights have length " + std::to_string(a.size()) +
                      ", set has " + std::to_string(x.cols()) + " samples");
  }
  require_simplex(a, kSuppliedPriorTolerance, "attention weights");
  return a / a.sum();
}

// ---------------------------------------------------------------------------
// Commands

struct Outcome {
  Json results;
  Json trace;
  int failures = 0;
};

Outcome run_pool(const RunConfig& c, std::ostream& err) {
  const std::vector<NamedSet> sets = load_sets(c);
  const std::vector<Vector> weights = load_attention(c, sets.size());
  const RotParams base = effective_params(c);
  const SolverKind solver = effective_solver(c);
  Outcome out{Json::array(), Json::array(), 0};
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const NamedSet& named = sets[k];
    RotParams p = base;
    if (c.preset == PresetName::Attention) {
      p.q0 = attention_for(weights, k, named.set.data(), c.seed);
    }
    Json res;
    res["id"] = named.id;
    res["dims"] = named.set.dims();
    res["samples"] = named.set.samples();
    res["solver"] = std::string(to_string(solver));
    if (p.q0.size() != 0) res["q0"] = to_json(p.q0);
    Json tr;
    tr["id"] = named.id;
    try {
      const PoolReport r = rotp(named.set, p, solver);
      res["failed"] = false;
      res["pooled"] = to_json(r.pooled);
      res["plan"] = to_json(r.plan.plan());
      res["stability"] = {{"finite", r.stability.finite},
                          {"mass_in_range", r.stability.mass_in_range},
                          {"raw_mass", r.stability.raw_mass}};
      if (c.timings) res["wall_time"] = r.wall_time;
      Json t = trace_json(r.trace, c.timings);
      for (auto it = t.begin(); it != t.end(); ++it) tr[it.key()] = it.value();
      for (const std::string& w : r.trace.warnings) emit_warning(err, named.id, w);
    } catch (const NumericalFailure& e) {
      res["failed"] = true;
      res["error"] = e.what();
      emit_error(err, e, named.id);
      ++out.failures;
    } catch (const DegeneratePlan& e) {
      res["failed"] = true;
      res["error"] = e.what();
      emit_error(err, e, named.id);
      ++out.failures;
    }
    out.results.push_back(std::move(res));
    out.trace.push_back(std::move(tr));
  }
  return out;
}

std::vector<PresetName> imitate_presets(const RunConfig& c) {
  if (c.preset) return {*c.preset};
  return {PresetName::Mean, PresetName::Max, PresetName::Attention};
}

std::vector<SolverKind> imitate_solvers(const RunConfig& c) {
  if (c.solver) return {*c.solver};
  return {SolverKind::Sinkhorn, SolverKind::Badmm};
}

Outcome run_imitate(const RunConfig& c) {
  std::vector<NamedSet> sets;
  if (!c.inputs.empty()) {
    sets = load_sets(c);
  } else {
    const Index d = c.dims.value_or(kImitateDims);
    const Index n = c.samples.value_or(kImitateSamples);
    for (int i = 0; i < c.instances; ++i) {
      sets.push_back({"instance-" + std::to_string(i + 1),
                      SampleSet(gaussian_matrix(d, n, c.seed + static_cast<std::uint64_t>(i)),
                                SignPolicy::AllowSigned)});
    }
  }
  const std::vector<Vector> weights = load_attention(c, sets.size());
  Outcome out{Json::array(), Json::object(), 0};
  for (std::size_t k = 0; k < sets.size(); ++k) {
    const Matrix& x = sets[k].set.data();
    const Vector a = attention_for(weights, k, x, c.seed);
    for (const PrecisionRow& row :
         precision_study(sets[k].set, a, imitate_presets(c), imitate_solvers(c))) {
      Json r;
      r["id"] = sets[k].id;
      r["preset"] = std::string(to_string(row.preset));
      r["solver"] = std::string(to_string(row.solver));
      r["failed"] = row.failed;
      if (row.failed) {
        r["error"] = row.error;
        ++out.failures;
      } else {
        r["pooled_error"] = row.pooled_error;
        r["plan_error"] = row.plan_error;
      }
      out.results.push_back(std::move(r));
    }
  }
  return out;
}

GridSpec grid_spec(const RunConfig& c) {
  GridSpec g;
  g.variant.solver = c.solver.value_or(SolverKind::Badmm);
  g.variant.smoothness = c.overrides.smoothness.value_or(Smoothness::Entropic);
  g.alpha0 = c.overrides.alpha0.value_or(0.0);
  g.rho = c.overrides.rho.value_or(1.0);
  g.outer_iters = c.overrides.outer_iters.value_or(RotParams{}.outer_iters);
  g.inner_iters = c.overrides.inner_iters.value_or(RotParams{}.inner_iters);
  g.seed = c.seed;
  if (c.dims) g.dims = *c.dims;
  if (c.samples) g.samples = *c.samples;
  return g;
}

Outcome run_grid(const RunConfig& c) {
  const GridReport report = stability_grid(grid_spec(c));
  Outcome out{Json::object(), Json::object(), report.failed_count};
  out.results["alpha1_axis"] = report.spec.alpha1_axis;
  out.results["alpha23_axis"] = report.spec.alpha23_axis;
  out.results["failed_count"] = report.failed_count;
  out.results["out_of_range_count"] = report.out_of_range_count;
  Json cells = Json::array();
  for (const GridCell& cell : report.cells) {
    Json j;
    j["alpha1"] = cell.alpha1;
    j["alpha23"] = cell.alpha23;
    j["failed"] = cell.failed;
    if (cell.plan_norm) j["plan_norm"] = *cell.plan_norm;
    if (cell.failed) j["error"] = cell.error;
    if (c.timings) j["wall_time"] = cell.wall_time;
    cells.push_back(std::move(j));
  }
  out.results["cells"] = std::move(cells);
  return out;
}

std::vector<SolverVariant> convergence_variants(const RunConfig& c) {
  if (!c.solver) return all_variants();
  if (*c.solver == SolverKind::Sinkhorn) return {{SolverKind::Sinkhorn, Smoothness::Entropic}};
  if (c.overrides.smoothness) return {{SolverKind::Badmm, *c.overrides.smoothness}};
  return {{SolverKind::Badmm, Smoothness::Entropic}, {SolverKind::Badmm, Smoothness::Quadratic}};
}

Outcome run_convergence(const RunConfig& c) {
  const RotParams p = effective_params(c);
  const std::vector<SolverVariant> variants = convergence_variants(c);
  const Index d = c.dims.value_or(kConvergenceDims);
  const Index n = c.samples.value_or(kConvergenceSamples);
  std::vector<std::vector<ConvergenceTrace>> per_set(static_cast<std::size_t>(c.batch));
  parallel_for(per_set.size(), [&](std::size_t i) {
    const SampleSet x(lognormal_matrix(d, n, c.seed + i));
    per_set[i] = convergence_study(x, p, variants, c.t_max);
  });

  Outcome out{Json::array(), Json::array(), 0};
  for (std::size_t v = 0; v < variants.size(); ++v) {
    int converged = 0;
    int failed = 0;
    int latest = 0;
    Json points = Json::array();
    for (const auto& set : per_set) {
      const ConvergenceTrace& t = set[v];
      if (t.failed) ++failed;
      if (t.converged_at) {
        ++converged;
        latest = std::max(latest, *t.converged_at);
        points.push_back(*t.converged_at);
      } else {
        points.push_back(nullptr);
      }
    }
    out.failures += failed;
    Json r;
    r["variant"] = variant_name(variants[v]);
    r["sets"] = c.batch;
    r["converged_sets"] = converged;
    r["failed_sets"] = failed;
    r["latest_converged_at"] = converged > 0 ? Json(latest) : Json(nullptr);
    r["converged_at"] = std::move(points);
    out.results.push_back(std::move(r));
  }
  for (std::size_t i = 0; i < per_set.size(); ++i) {
    Json s;
    s["set"] = i + 1;
    for (const ConvergenceTrace& t : per_set[i]) {
      Json j = trace_json(t.trace, c.timings);
      if (t.failed) j["error"] = t.error;
      s[variant_name(t.variant)] = std::move(j);
    }
    out.trace.push_back(std::move(s));
  }
  return out;
}

BenchSpec bench_spec(const RunConfig& c) {
  BenchSpec b;
  const Index d = c.dims.value_or(kBenchDims);
  for (Index n : c.sizes) b.shapes.emplace_back(d, n);
  if (c.solver) b.solvers = {*c.solver};
  b.alpha0_values = c.overrides.alpha0 ? std::vector<double>{*c.overrides.alpha0}
                                       : std::vector<double>{0.0, kConvergenceAlpha0};
  b.outer_iters = c.overrides.outer_iters.value_or(kBenchIters);
  b.inner_iters = c.overrides.inner_iters.value_or(kBenchIters);
  b.trials = c.trials;
  b.early_exit = !c.fixed_k;
  b.seed = c.seed;
  return b;
}

Outcome run_bench(const RunConfig& c) {
  Outcome out{Json::array(), Json::object(), 0};
  for (const BenchRow& row : runtime_bench(bench_spec(c))) {
    Json r;
    r["dims"] = row.dims;
    r["samples"] = row.samples;
    r["solver"] = std::string(to_string(row.solver));
    r["alpha0"] = row.alpha0;
    r["early_exit"] = row.early_exit;
    r["times"] = row.times;
    r["median"] = row.median;
    out.results.push_back(std::move(r));
  }
  return out;
}

Outcome run_hierarchy(const RunConfig& c, std::ostream& err) {
  HierarchicalSpec spec;
  spec.inner_params = effective_params(c);
  if (c.outer_preset == PresetName::Attention) {
    throw ConfigError("the outer pool supports the mean and max presets");
  }
  spec.outer_params = preset_params(c.outer_preset);
  if (c.affine) spec.feature_map = read_affine(*c.affine);
  for (PresetName h : c.heads) {
    if (h == PresetName::Attention) throw ConfigError("heads support the mean and max presets");
    spec.heads.push_back(preset_params(h));
  }
  const SolverKind solver = effective_solver(c);
  Outcome out{Json::array(), Json::object(), 0};
  for (const std::string& path : c.inputs) {
    for (const NamedGroup& g : ingest_groups(path, sign_policy(c))) {
      std::vector<SampleSet> members;
      for (const NamedSet& m : g.members) members.push_back(m.set);
      Json r;
      r["id"] = g.id;
      r["members"] = members.size();
      try {
        r["pooled"] = to_json(hrotp(members, spec, solver));
        r["failed"] = false;
      } catch (const NumericalFailure& e) {
        r["failed"] = true;
        r["error"] = e.what();
        emit_error(err, e, g.id);
        ++out.failures;
      }
      out.results.push_back(std::move(r));
    }
  }
  return out;
}

Json effective_json(const RunConfig& c) {
  Json j;
  switch (c.command) {
    case Command::Pool:
    case Command::Hierarchy:
    case Command::Convergence: {
      j["solver"] = std::string(to_string(effective_solver(c)));
      j["params"] = params_json(effective_params(c));
      if (c.command == Command::Hierarchy) {
        j["outer_params"] = params_json(preset_params(c.outer_preset));
        Json heads = Json::array();
        for (PresetName h : c.heads) heads.push_back(params_json(preset_params(h)));
        j["heads"] = std::move(heads);
        j["feature_map"] = c.affine ? "affine" : "identity";
      }
      if (c.command == Command::Convergence) {
        Json names = Json::array();
        for (const SolverVariant& v : convergence_variants(c)) names.push_back(variant_name(v));
        j["variants"] = std::move(names);
        j["dims"] = c.dims.value_or(kConvergenceDims);
        j["samples"] = c.samples.value_or(kConvergenceSamples);
        j["batch"] = c.batch;
        j["t_max"] = c.t_max;
        j["tolerance"] = kConvergenceTolerance;
      }
      break;
    }
    case Command::Imitate: {
      Json presets;
      for (PresetName p : imitate_presets(c)) {
        const Index n = c.samples.value_or(kImitateSamples);
        presets[std::string(to_string(p))] = params_json(
            precision_params(p, Vector::Constant(n, 1.0 / static_cast<double>(n))));
      }
      for (auto it = presets.begin(); it != presets.end(); ++it) it.value()["q0"] = "uniform";
      if (presets.contains("attention")) presets["attention"]["q0"] = "attention weights";
      j["presets"] = std::move(presets);
      Json solvers = Json::array();
      for (SolverKind s : imitate_solvers(c)) solvers.push_back(std::string(to_string(s)));
      j["solvers"] = std::move(solvers);
      j["attention_weights"] = c.attention_weights ? "file" : "seeded attention module";
      break;
    }
    case Command::Grid: {
      const GridSpec g = grid_spec(c);
      j["solver"] = variant_name(g.variant);
      j["smoothness"] = std::string(to_string(g.variant.smoothness));
      j["alpha0"] = g.alpha0;
      j["rho"] = g.rho;
      j["outer_iters"] = g.outer_iters;
      j["inner_iters"] = g.inner_iters;
      j["tau"] = g.alpha0 > 0.0 ? 1.0 : 0.0;
      j["dims"] = g.dims;
      j["samples"] = g.samples;
      j["seed"] = g.seed;
      j["data"] = "standard normal";
      break;
    }
    case Command::Bench: {
      const BenchSpec b = bench_spec(c);
      Json shapes = Json::array();
      for (const auto& [d, n] : b.shapes) shapes.push_back({d, n});
      j["shapes"] = std::move(shapes);
      Json solvers = Json::array();
      for (SolverKind s : b.solvers) solvers.push_back(std::string(to_string(s)));
      j["solvers"] = std::move(solvers);
      j["alpha0_values"] = b.alpha0_values;
      j["outer_iters"] = b.outer_iters;
      j["inner_iters"] = b.inner_iters;
      j["trials"] = b.trials;
      j["warmups"] = b.warmups;
      j["early_exit"] = b.early_exit;
      break;
    }
  }
  return j;
}

void validate(const RunConfig& c) {
  const bool needs_input = c.command == Command::Pool || c.command == Command::Hierarchy;
  if (needs_input && c.inputs.empty()) {
    throw ConfigError(std::string(to_string(c.command)) + " needs at least one input file");
  }
  if (c.instances < 1) throw ConfigError("--instances must be at least 1");
  if (c.batch < 1) throw ConfigError("--batch must be at least 1");
  if (c.t_max < 1) throw ConfigError("--tmax must be at least 1");
  if (c.trials < 3) throw ConfigError("--trials must be at least 3");
  if (c.dims && *c.dims < 1) throw ConfigError("--dims must be at least 1");
  if (c.samples && *c.samples < 1) throw ConfigError("--samples must be at least 1");
  for (Index n : c.sizes) {
    if (n < 1) throw ConfigError("--sizes entries must be at least 1");
  }
  if (c.sizes.empty()) throw ConfigError("--sizes must not be empty");
  try {
    effective_params(c).validate(1, 1);
  } catch (const InvalidInput& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

std::string_view to_string(Command command) noexcept {
  for (const auto& [name, value] : kCommands) {
    if (value == command) return name;
  }
  return "pool";
}

RotParams effective_params(const RunConfig& c) {
  RotParams p;
  if (c.preset) {
    p = preset_params(*c.preset);
  } else if (c.command == Command::Convergence) {
    p.alpha0 = kConvergenceAlpha0;
  }
  return apply_overrides(p, c.overrides);
}

SolverKind effective_solver(const RunConfig& c) {
  if (c.solver) return *c.solver;
  if (c.preset) return preset_solver(*c.preset);
  return SolverKind::Sinkhorn;
}

Json config_to_json(const RunConfig& c) {
  Json j;
  j["command"] = std::string(to_string(c.command));
  j["inputs"] = c.inputs;
  if (c.solver) j["solver"] = std::string(to_string(*c.solver));
  if (c.preset) j["preset"] = std::string(to_string(*c.preset));
  Json o = Json::object();
  const ParamOverrides& v = c.overrides;
  if (v.alpha0) o["alpha0"] = *v.alpha0;
  if (v.alpha1) o["alpha1"] = *v.alpha1;
  if (v.alpha2) o["alpha2"] = *v.alpha2;
  if (v.alpha3) o["alpha3"] = *v.alpha3;
  if (v.rho) o["rho"] = *v.rho;
  if (v.tau) o["tau"] = *v.tau;
  if (v.outer_iters) o["outer"] = *v.outer_iters;
  if (v.inner_iters) o["inner"] = *v.inner_iters;
  if (v.smoothness) o["smoothness"] = std::string(to_string(*v.smoothness));
  j["overrides"] = std::move(o);
  if (c.attention_weights) j["attention_weights"] = *c.attention_weights;
  j["seed"] = c.seed;
  j["allow_signed"] = c.allow_signed;
  j["strict"] = c.strict;
  j["timings"] = c.timings;
  if (c.dims) j["dims"] = *c.dims;
  if (c.samples) j["samples"] = *c.samples;
  switch (c.command) {
    case Command::Imitate:
      j["instances"] = c.instances;
      break;
    case Command::Convergence:
      j["batch"] = c.batch;
      j["tmax"] = c.t_max;
      break;
    case Command::Bench:
      j["trials"] = c.trials;
      j["sizes"] = c.sizes;
      j["fixed_k"] = c.fixed_k;
      break;
    case Command::Hierarchy: {
      j["outer_preset"] = std::string(to_string(c.outer_preset));
      if (c.affine) j["affine"] = *c.affine;
      Json heads = Json::array();
      for (PresetName h : c.heads) heads.push_back(std::string(to_string(h)));
      j["heads"] = std::move(heads);
      break;
    }
    default:
      break;
  }
  return j;
}

RunConfig config_from_json(const Json& doc) {
  const Json& j = doc.contains("config") ? doc["config"] : doc;
  if (!j.is_object() || !j.contains("command")) throw ConfigError("config needs a command");
  try {
    RunConfig c;
    c.command = lookup(kCommands, j["command"].get<std::string>(), "command");
    if (j.contains("inputs")) c.inputs = j["inputs"].get<std::vector<std::string>>();
    if (j.contains("solver")) c.solver = lookup(kSolvers, j["solver"].get<std::string>(), "solver");
    if (j.contains("preset")) c.preset = lookup(kPresets, j["preset"].get<std::string>(), "preset");
    if (j.contains("overrides")) {
      const Json& o = j["overrides"];
      ParamOverrides& v = c.overrides;
      if (o.contains("alpha0")) v.alpha0 = o["alpha0"].get<double>();
      if (o.contains("alpha1")) v.alpha1 = o["alpha1"].get<double>();
      if (o.contains("alpha2")) v.alpha2 = o["alpha2"].get<double>();
      if (o.contains("alpha3")) v.alpha3 = o["alpha3"].get<double>();
      if (o.contains("rho")) v.rho = o["rho"].get<double>();
      if (o.contains("tau")) v.tau = o["tau"].get<double>();
      if (o.contains("outer")) v.outer_iters = o["outer"].get<int>();
      if (o.contains("inner")) v.inner_iters = o["inner"].get<int>();
      if (o.contains("smoothness")) {
        v.smoothness = lookup(kSmoothness, o["smoothness"].get<std::string>(), "smoothness");
      }
    }
    if (j.contains("attention_weights")) {
      c.attention_weights = j["attention_weights"].get<std::string>();
    }
    c.seed = j.value("seed", std::uint64_t{0});
    c.allow_signed = j.value("allow_signed", false);
    c.strict = j.value("strict", false);
    c.timings = j.value("timings", false);
    if (j.contains("dims")) c.dims = j["dims"].get<Index>();
    if (j.contains("samples")) c.samples = j["samples"].get<Index>();
    c.instances = j.value("instances", c.instances);
    c.batch = j.value("batch", c.batch);
    c.t_max = j.value("tmax", c.t_max);
    c.trials = j.value("trials", c.trials);
    if (j.contains("sizes")) c.sizes = j["sizes"].get<std::vector<Index>>();
    c.fixed_k = j.value("fixed_k", false);
    if (j.contains("outer_preset")) {
      c.outer_preset = lookup(kPresets, j["outer_preset"].get<std::string>(), "preset");
    }
    if (j.contains("affine")) c.affine = j["affine"].get<std::string>();
    if (j.contains("heads")) {
      for (const Json& h : j["heads"]) c.heads.push_back(lookup(kPresets, h.get<std::string>(), "preset"));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  }
}

Json build_report(const RunConfig& config, std::ostream& err, int* exit_code) {
  validate(config);
  Outcome outcome;
  switch (config.command) {
    case Command::Pool:
      outcome = run_pool(config, err);
      break;
    case Command::Imitate:
      outcome = run_imitate(config);
      break;
    case Command::Grid:
      outcome = run_grid(config);
      break;
    case Command::Convergence:
      outcome = run_convergence(config);
      break;
    case Command::Bench:
      outcome = run_bench(config);
      break;
    case Command::Hierarchy:
      outcome = run_hierarchy(config, err);
      break;
  }
  Json report;
  Json cfg = config_to_json(config);
  cfg["effective"] = effective_json(config);
  report["config"] = std::move(cfg);
  report["results"] = std::move(outcome.results);
  report["trace"] = std::move(outcome.trace);
  if (exit_code != nullptr) *exit_code = config.strict && outcome.failures > 0 ? 1 : 0;
  return report;
}

int run(const RunConfig& config, std::ostream& err) {
  try {
    int code = 0;
    const Json report = build_report(config, err, &code);
    const std::string text = dump_report(report);
    if (config.out.empty()) {
      std::cout << text << std::flush;
    } else {
      std::ofstream file(config.out, std::ios::binary | std::ios::trunc);
      if (!file) throw ConfigError("cannot write " + config.out);
      file << text;
      if (!file.flush()) throw ConfigError("cannot write " + config.out);
    }
    return code;
  } catch (const InvalidInput& e) {
    emit_error(err, e);
    return 2;
  } catch (const Error& e) {
    emit_error(err, e);
    return 1;
  }
}

std::optional<RunConfig> parse_args(int argc, const char* const* argv, std::ostream& out) {
  CLI::App app{"Regularized optimal transport pooling", "rotpool"};
  app.fallthrough();
  app.require_subcommand(0, 1);

  RunConfig c;
  std::string solver, smoothness, preset, outer_preset = "mean", config_path;
  std::vector<std::string> heads;
  std::vector<std::string> inputs;
  double alpha0 = 0, alpha1 = 0, alpha2 = 0, alpha3 = 0, rho = 0, tau = 0;
  int outer = 0, inner = 0;
  Index dims = 0, samples = 0;

  app.add_option("--solver", solver, "sinkhorn or badmm");
  app.add_option("--smoothness", smoothness, "entropic or quadratic");
  auto* o_a0 = app.add_option("--alpha0", alpha0, "structural (Gromov-Wasserstein) weight");
  auto* o_a1 = app.add_option("--alpha1", alpha1, "smoothness weight");
  auto* o_a2 = app.add_option("--alpha2", alpha2, "row marginal KL weight");
  auto* o_a3 = app.add_option("--alpha3", alpha3, "column marginal KL weight");
  auto* o_rho = app.add_option("--rho", rho, "Bregman ADMM penalty");
  auto* o_tau = app.add_option("--tau", tau, "proximal weight of the Sinkhorn solver");
  auto* o_outer = app.add_option("--outer", outer, "outer iterations T");
  auto* o_inner = app.add_option("--inner", inner, "inner Sinkhorn iterations K");
  app.add_option("--preset", preset, "mean, max or attention");
  app.add_option("--attention-weights", c.attention_weights, "file with a_X vectors");
  app.add_option("--seed", c.seed, "random seed");
  app.add_flag("--allow-signed", c.allow_signed, "accept negative entries");
  app.add_flag("--strict", c.strict, "exit with status 1 when any solve fails");
  app.add_flag("--timings", c.timings, "include wall-clock times in the report");
  app.add_option("--out", c.out, "report path (default: standard output)");
  app.add_option("--config", config_path, "rerun the config stored in a report or config file");
  auto* o_dims = app.add_option("--dims", dims, "feature dimension of generated data");
  auto* o_samples = app.add_option("--samples", samples, "samples per generated set");
  app.add_option("--instances", c.instances, "generated instances for imitate");
  app.add_option("--batch", c.batch, "sets in the convergence study");
  app.add_option("--tmax", c.t_max, "largest T in the convergence study");
  app.add_option("--trials", c.trials, "timed trials per benchmark configuration");
  app.add_option("--sizes", c.sizes, "sample counts N for the benchmark");
  app.add_flag("--fixed-k", c.fixed_k, "disable the Sinkhorn early exit in benchmarks");
  app.add_option("--outer-preset", outer_preset, "preset pooling the members in hierarchy");
  app.add_option("--affine", c.affine, "JSON affine feature map for hierarchy");
  app.add_option("--heads", heads, "presets of the mixing heads in hierarchy");

  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, cmd] : kCommands) {
    CLI::App* sub = app.add_subcommand(name, "");
    sub->add_option("inputs", inputs, "input files");
    subs[name] = sub;
  }
  subs["pool"]->description("pool every set of the input files");
  subs["imitate"]->description("compare presets with the classic pooling operators");
  subs["grid"]->description("stability grid over alpha1 and alpha2 = alpha3");
  subs["convergence"]->description("objective traces over stacked outer iterations");
  subs["bench"]->description("median forward times");
  subs["hierarchy"]->description("hierarchical pooling of grouped sets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success&) {
    out << app.help();
    return std::nullopt;
  } catch (const CLI::ParseError& e) {
    throw ConfigError(e.what());
  }

  if (!config_path.empty()) {
    RunConfig loaded = config_from_json(Json::parse(read_file(config_path), nullptr, false));
    if (!c.out.empty()) loaded.out = c.out;
    return loaded;
  }

  bool found = false;
  for (const auto& [name, sub] : subs) {
    if (sub->parsed()) {
      c.command = kCommands.at(name);
      found = true;
    }
  }
  if (!found) throw ConfigError("a command is required: pool, imitate, grid, convergence, bench or hierarchy");
  c.inputs = inputs;
  if (!solver.empty()) c.solver = lookup(kSolvers, lower(solver), "solver");
  if (!smoothness.empty()) {
    c.overrides.smoothness = lookup(kSmoothness, lower(smoothness), "smoothness");
  }
  if (!preset.empty()) c.preset = lookup(kPresets, lower(preset), "preset");
  c.outer_preset = lookup(kPresets, lower(outer_preset), "preset");
  for (const std::string& h : heads) c.heads.push_back(lookup(kPresets, lower(h), "preset"));
  if (*o_a0) c.overrides.alpha0 = alpha0;
  if (*o_a1) c.overrides.alpha1 = alpha1;
  if (*o_a2) c.overrides.alpha2 = alpha2;
  if (*o_a3) c.overrides.alpha3 = alpha3;
  if (*o_rho) c.overrides.rho = rho;
  if (*o_tau) c.overrides.tau = tau;
  if (*o_outer) c.overrides.outer_iters = outer;
  if (*o_inner) c.overrides.inner_iters = inner;
  if (*o_dims) c.dims = dims;
  if (*o_samples) c.samples = samples;
  return c;
}

int cli_main(int argc, const char* const* argv) {
  try {
    const std::optional<RunConfig> config = parse_args(argc, argv, std::cout);
    if (!config) return 0;
    return run(*config, std::cerr);
  } catch (const Error& e) {
    emit_error(std::cerr, e);
    return 2;
  }
}

}  // namespace rotpool
