#pragma once

// Experiment sweeps over (grid, K, strategy, kernel) on one matrix, and the
// analysis-only explain report.

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include <json.hpp>

#include "spcomm3d/engine.hpp"
#include "spcomm3d/error.hpp"

namespace spc3d {

/// Bad command line or sweep description; the message names the field.
class UsageError : public Error {
public:
  using Error::Error;
};

inline constexpr int kReportSchemaVersion = 1;

struct RunSpec {
  std::string matrix_path;
  /// rmat:SCALE:NNZ, uniform:M:N:NNZ or dense:M:N.
  std::string generator;
  /// Explicit grids, "XxYxZ".
  std::vector<std::string> grids;
  /// With `z_values`: one most-square grid per Z for this many ranks.
  int procs = 0;
  std::vector<int> z_values;
  std::vector<Index> k_values;
  std::vector<std::string> strategies{"nb"};
  std::vector<std::string> kernels{"sddmm"};
  /// sparse, dense3d or both.
  std::string mode = "both";
  int iterations = 3;
  std::uint64_t seed = 1;
  std::string out;
  /// json or csv.
  std::string format = "json";
  bool explain = false;
  /// Written for the first configuration that runs.
  std::string plan_dump_path;
  std::string trace_path;
};

/// Throws UsageError for the first offending field.
void validate(const RunSpec& spec);

ProcGrid parse_grid(const std::string& text);
SparseMatrix generate_matrix(const std::string& generator, std::uint64_t seed);
SparseMatrix load_input(const RunSpec& spec);

struct SweepOutcome {
  nlohmann::json report;
  std::size_t completed = 0;
  std::size_t skipped = 0;
};

/// Runs every feasible configuration; infeasible ones become skip records
/// with a machine-readable reason.
SweepOutcome run_sweep(const RunSpec& spec, const SparseMatrix& S);

/// Predicted volumes and footprints without running a kernel.
nlohmann::json explain_config(const SparseMatrix& S, const ProcGrid& grid, Index K, std::uint64_t seed);
nlohmann::json explain_sweep(const RunSpec& spec, const SparseMatrix& S);
void print_explain(std::ostream& out, const nlohmann::json& explained);

/// Recomputes each record's sweep aggregate from its per-rank data.
nlohmann::json recompute_summary(const nlohmann::json& record);

/// Flat rows: run,kernel,mode,strategy,grid,K,rank,phase,metric,value.
void write_report_csv(std::ostream& out, const nlohmann::json& report);

}  // namespace spc3d
