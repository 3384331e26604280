#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dpmine/eval_metrics.hpp"
#include "dpmine/mi_estimators.hpp"

namespace dpmine::runner {

inline constexpr int kSchemaVersion = 1;
inline constexpr std::string_view kLibraryVersion = "0.1.0";

inline constexpr std::string_view kTraceColumns =
    "run_id,estimator,bound,weighting,dim,seed,epoch,value,epoch_ms";
inline constexpr std::string_view kSummaryColumns =
    "run_id,estimator,bound,weighting,family,dim,seed,truth,final_window_mean,final_window_var,"
    "full_var,abs_bias_vs_truth,epochs_to_band,status";
inline constexpr std::string_view kScoreColumns =
    "model,metric,feature_map,value,n_replications,std_error";

/// Shortest text that reads back to the same double.
std::string fmt(double v);

/// Writes via a sibling temp file and rename, creating parent directories.
void write_file_atomic(const std::filesystem::path &path, const std::string &content);

std::string read_file(const std::filesystem::path &path);

/// A parsed schema-versioned CSV file: `# schema=1`, optional `# key=value ...`
/// tag lines, one header line, then rows.
struct CsvTable {
  std::filesystem::path source;
  std::map<std::string, std::string> tags;
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> row_lines; ///< 1-based source line of each row

  [[nodiscard]] Index column(const std::string &name) const;
};

/// Throws SchemaError naming the file and line on any structural problem.
/// When `expected_columns` is non-empty the header must match it exactly.
CsvTable read_csv(const std::filesystem::path &path, std::string_view expected_columns = {});

/// Header block: schema line, optional tag line, column line.
std::string csv_header(std::string_view columns,
                       const std::vector<std::pair<std::string, std::string>> &tags = {});

struct TraceMeta {
  std::string run_id;
  std::string estimator;
  std::string family;
  BoundKind bound = BoundKind::DV;
  Weighting weighting = Weighting::DP;
  Index dim = 1;
  std::uint64_t seed = 0;
  std::optional<double> truth;
};

std::string trace_csv(const TraceMeta &meta, const EstimateTrace &trace);

struct TraceFile {
  TraceMeta meta;
  std::vector<double> values;
  std::vector<double> epoch_ms;
  std::filesystem::path source;
};

TraceFile read_trace_csv(const std::filesystem::path &path);

std::string summary_row(const TraceMeta &meta, const TraceSummary &s, const std::string &status);

struct RunRecord {
  std::string run_id;
  std::uint64_t seed = 0;
  std::string status = "ok";
  std::string detail;
};

/// Plain-text record of one CLI invocation.
struct RunManifest {
  std::string command;
  std::string version{kLibraryVersion};
  std::string started;
  std::string finished;
  std::string config;
  std::vector<RunRecord> runs;
  std::vector<std::string> outputs; ///< relative to the output directory
  std::vector<std::string> notes;

  [[nodiscard]] std::string text() const;
  static RunManifest parse(std::string_view text, const std::string &origin);
};

std::string utc_timestamp();

/// Keeps letters, digits, '-', '_' and '.'; anything else becomes '_'.
std::string sanitize_id(std::string_view text);

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  std::string color;
};

/// SVG 1.1 line chart: one <polyline> per series, the optional reference
/// value as the only <line> element.
std::string line_chart_svg(const std::string &title, const std::vector<Series> &series,
                           std::optional<double> reference, const std::string &x_label,
                           const std::string &y_label);

/// SVG 1.1 scatter of 2-D point groups, one <g> per group.
std::string scatter_svg(const std::string &title,
                        const std::vector<std::pair<std::string, FeatureSet>> &groups);

} // namespace dpmine::runner
