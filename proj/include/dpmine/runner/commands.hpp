#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "dpmine/eval_metrics.hpp"
#include "dpmine/mi_estimators.hpp"
#include "dpmine/runner/config.hpp"
#include "dpmine/runner/io.hpp"

namespace dpmine::runner {

struct CommandContext {
  Config config = default_config();
  std::filesystem::path out = "dpmine-out";
  std::ostream *log = nullptr;   ///< progress messages; nullptr silences them
  std::string invocation;        ///< recorded in the manifest
};

/// One (family, dim, bound, weighting, seed) estimation run.
struct GridCell {
  std::string family = "sign_gaussian";
  Index dim = 1;
  BoundKind bound = BoundKind::DV;
  Weighting weighting = Weighting::DP;
  std::uint64_t seed = 0;
  Index epochs = 500;

  [[nodiscard]] std::string run_id() const;
};

/// Data and training seed of a cell. It ignores bound and weighting, so
/// DP and empirical runs of the same cell see the same sample.
std::uint64_t cell_seed(std::uint64_t seed, const std::string &family, Index dim);

struct CellResult {
  GridCell cell;
  TraceMeta meta;
  EstimateTrace trace;
  TraceSummary summary;
  std::string status = "ok";
  std::string detail;
  double wall_ms = 0.0;
};

/// Runs one cell with the [dp], [critic] and [estimate] settings of `config`.
/// Training failures are reported through `status`, not thrown.
CellResult run_cell(const GridCell &cell, const Config &config);

std::vector<GridCell> estimate_grid(const Config &config);
std::vector<GridCell> dimsweep_grid(const Config &config);

/// Cells in parallel over `workers` threads; the result order follows `cells`.
std::vector<CellResult> run_cells(const std::vector<GridCell> &cells, const Config &config,
                                  unsigned workers, std::ostream *log = nullptr);

/// One row of the report's acceptance table.
struct AcceptanceRow {
  int criterion = 0;
  std::string description;
  double value = 0.0;
  double threshold = 0.0;
  std::size_t cells = 0;
  bool pass = false;
};

/// Criteria 1-3 recomputed from raw traces (rows only for criteria with data).
std::vector<AcceptanceRow> acceptance_from_traces(const std::vector<TraceFile> &traces,
                                                  Index window, double tol);

int cmd_estimate(const CommandContext &ctx);
int cmd_dimsweep(const CommandContext &ctx);
int cmd_gendemo(const CommandContext &ctx);
int cmd_report(const CommandContext &ctx, const std::vector<std::filesystem::path> &inputs);
int cmd_defaults(std::ostream &out);
/// Checks every manifest under `dir`: listed outputs exist and parse.
int cmd_verify(const std::filesystem::path &dir, std::ostream &out);

} // namespace dpmine::runner
