#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rotpool/io.hpp"
#include "rotpool/pooling.hpp"
#include "rotpool/solver.hpp"

namespace rotpool {

/// Bad flags or an inconsistent run configuration (exit code 2).
class ConfigError : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
  std::string_view kind() const noexcept override { return "ConfigError"; }
};

enum class Command { Pool, Imitate, Grid, Convergence, Bench, Hierarchy };

std::string_view to_string(Command command) noexcept;

/// Knobs given explicitly on the command line; unset ones fall back to the
/// preset or command defaults.
struct ParamOverrides {
  std::optional<double> alpha0;
  std::optional<double> alpha1;
  std::optional<double> alpha2;
  std::optional<double> alpha3;
  std::optional<double> rho;
  std::optional<double> tau;
  std::optional<int> outer_iters;
  std::optional<int> inner_iters;
  std::optional<Smoothness> smoothness;
};

struct RunConfig {
  Command command = Command::Pool;
  std::vector<std::string> inputs;
  std::optional<SolverKind> solver;
  std::optional<PresetName> preset;
  ParamOverrides overrides;
  std::optional<std::string> attention_weights;
  /// Report destination; empty writes to standard output. Not serialized.
  std::string out;
  std::uint64_t seed = 0;
  bool allow_signed = false;
  bool strict = false;
  /// Include wall-clock fields in pool, grid and convergence reports.
  bool timings = false;

  // imitate
  int instances = 1;
  // convergence and bench; defaults depend on the command
  std::optional<Index> dims;
  std::optional<Index> samples;
  int batch = 50;
  int t_max = 32;
  // bench
  int trials = 10;
  std::vector<Index> sizes{50};
  bool fixed_k = false;
  // hierarchy
  PresetName outer_preset = PresetName::Mean;
  std::optional<std::string> affine;
  std::vector<PresetName> heads;
};

/// Serialized form embedded in every report; config_from_json inverts it.
Json config_to_json(const RunConfig& config);
RunConfig config_from_json(const Json& doc);

/// Parameters a pool or hierarchy run uses before per-set priors are filled in.
RotParams effective_params(const RunConfig& config);
SolverKind effective_solver(const RunConfig& config);

/// Parses argv. Throws ConfigError on bad flags; returns nullopt after --help.
std::optional<RunConfig> parse_args(int argc, const char* const* argv, std::ostream& out);

/// Runs the command and writes the report. Returns the process exit code:
/// 0 on success, 1 when --strict and some solve failed, 2 on config errors.
/// Errors and warnings go to err as one JSON record per line.
int run(const RunConfig& config, std::ostream& err);

/// Builds the report without writing it; the exit code is stored in *exit_code.
Json build_report(const RunConfig& config, std::ostream& err, int* exit_code);

int cli_main(int argc, const char* const* argv);

}  // namespace rotpool
