#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>
#include <sstream>

#include "dpmine/runner/commands.hpp"
#include "dpmine/runner/pool.hpp"
#include "support.hpp"

using namespace dpmine;
using namespace dpmine::runner;
namespace fs = std::filesystem;
using testing::error_code_of;

namespace {

fs::path scratch(const std::string &name) {
  const fs::path p = fs::temp_directory_path() / ("dpmine-runner-" + name);
  fs::remove_all(p);
  return p;
}

CommandContext quick_context(const fs::path &out) {
  CommandContext ctx;
  ctx.out = out;
  ctx.config.set("critic.hidden", "16,16");
  ctx.config.set("estimate.epochs", "20");
  ctx.config.set("estimate.window", "5");
  ctx.config.set("estimate.weightings", "dp");
  ctx.config.set("run.seeds", "0-2");
  ctx.config.set("run.workers", "2");
  return ctx;
}

std::size_t count_in(const std::string &text, const std::string &needle) {
  std::size_t n = 0;
  for (auto pos = text.find(needle); pos != std::string::npos; pos = text.find(needle, pos + 1)) ++n;
  return n;
}

std::map<std::string, std::string> snapshot(const fs::path &dir) {
  std::map<std::string, std::string> files;
  for (const auto &e : fs::recursive_directory_iterator(dir))
    // the manifest holds timestamps and timing.csv holds wall-clock times
    if (e.is_regular_file() && e.path().filename() != "run_manifest.txt" &&
        e.path().filename() != "timing.csv")
      files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return files;
}

} // namespace

TEST_CASE("config: sections, comments, merge, unknown keys") {
  const Config c = Config::parse("[estimate]\nepochs = 7  # short\n\n# note\n[dp]\nconcentration=2.5\n");
  CHECK(c.integer("estimate.epochs") == 7);
  CHECK(c.real("dp.concentration") == 2.5);

  Config d = default_config();
  d.merge(c);
  CHECK(d.integer("estimate.epochs") == 7);
  CHECK(d.integer("dimsweep.long_epochs") == 1500);
  CHECK(d.reals("gendemo.sigmas") == std::vector<double>{2, 5, 10, 20, 40, 80});
  CHECK(d.words("estimate.weightings") == std::vector<std::string>{"dp", "empirical"});

  Config bad = Config::parse("[estimate]\nepoch = 7\n");
  CHECK(error_code_of([&] { d.merge(bad); }) == ErrorCode::SchemaError);
  CHECK(error_code_of([] { Config::parse("no equals sign\n"); }) != ErrorCode::IoError);
  CHECK(error_code_of([&] { (void)d.integer("estimate.family"); }) == ErrorCode::InvalidArgument);

  const Config again = Config::parse(d.dump());
  CHECK(again.entries() == d.entries());
}

TEST_CASE("seed lists") {
  CHECK(parse_seed_list("0,3,5-9") == std::vector<std::uint64_t>{0, 3, 5, 6, 7, 8, 9});
  CHECK(parse_seed_list("4") == std::vector<std::uint64_t>{4});
  CHECK(error_code_of([] { parse_seed_list(""); }) == ErrorCode::InvalidArgument);
  CHECK(error_code_of([] { parse_seed_list("5-2"); }) == ErrorCode::InvalidArgument);
}

TEST_CASE("number formatting round-trips") {
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const double v = std::ldexp(standard_normal(rng), static_cast<int>(k % 60) - 30);
    CHECK(std::stod(fmt(v)) == v);
  }
  CHECK(fmt(NAN) == "nan");
}

TEST_CASE("CSV schema errors name the file and line") {
  const fs::path dir = scratch("csv");
  fs::create_directories(dir);
  auto attempt = [&](const std::string &name, const std::string &body) -> std::string {
    write_file_atomic(dir / name, body);
    try {
      read_csv(dir / name, "a,b");
    } catch (const Error &e) {
      CHECK(e.code() == ErrorCode::SchemaError);
      return e.what();
    }
    return "";
  };
  CHECK(attempt("noschema.csv", "a,b\n1,2\n").find("noschema.csv:1") != std::string::npos);
  CHECK(attempt("header.csv", "# schema=1\na,c\n1,2\n").find("header.csv:2") != std::string::npos);
  CHECK(attempt("ragged.csv", "# schema=1\n# k=v\na,b\n1,2\n3\n").find("ragged.csv:5") !=
        std::string::npos);
  CHECK(attempt("version.csv", "# schema=2\na,b\n").find("version.csv:1") != std::string::npos);

  write_file_atomic(dir / "ok.csv", csv_header("a,b", {{"k", "v"}}) + "1,2\n3,4\n");
  const CsvTable t = read_csv(dir / "ok.csv", "a,b");
  CHECK(t.tags.at("k") == "v");
  CHECK(t.rows.size() == 2);
  CHECK(t.rows[1][t.column("b")] == "4");
  fs::remove_all(dir);
}

TEST_CASE("trace CSV round trip") {
  const fs::path dir = scratch("trace");
  TraceMeta meta;
  meta.run_id = "x-1";
  meta.estimator = "DPMINE-DV";
  meta.family = "sign_gaussian";
  meta.dim = 2;
  meta.seed = 9;
  meta.truth = 1.3;
  EstimateTrace trace;
  trace.label = meta.estimator;
  trace.values = {0.1, 0.25, -3e-7};
  trace.epoch_ms = {0, 0, 0};
  write_file_atomic(dir / "t.csv", trace_csv(meta, trace));
  const TraceFile back = read_trace_csv(dir / "t.csv");
  CHECK(back.values == trace.values);
  CHECK(back.meta.run_id == "x-1");
  CHECK(back.meta.dim == 2);
  CHECK(back.meta.seed == 9);
  CHECK(*back.meta.truth == 1.3);
  CHECK(back.meta.family == "sign_gaussian");
  fs::remove_all(dir);
}

TEST_CASE("manifest round trip") {
  RunManifest m;
  m.command = "estimate";
  m.started = "2026-01-01T00:00:00Z";
  m.finished = "2026-01-01T00:01:00Z";
  m.config = "[run]\nseeds = 0\n";
  m.runs = {{"a", 1, "ok", ""}, {"b", 2, "diverged", "epoch 7: loss nan"}};
  m.outputs = {"summary.csv", "traces/a.csv"};
  m.notes = {"something"};
  const RunManifest back = RunManifest::parse(m.text(), "mem");
  CHECK(back.text() == m.text());
  CHECK(back.runs.size() == 2);
  CHECK(back.runs[1].status == "diverged");
  CHECK(back.outputs == m.outputs);
  CHECK(back.config == m.config);
}

TEST_CASE("worker pool runs every task and surfaces errors") {
  std::vector<int> hits(100, 0);
  parallel_for(100, 4, [&](std::size_t i) { hits[i] += 1; });
  CHECK(std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }));
  const auto errors = parallel_for(10, 3, [](std::size_t i) {
    if (i == 6) throw Error(ErrorCode::InvalidArgument, "boom");
  });
  for (std::size_t i = 0; i < errors.size(); ++i) CHECK((errors[i] != nullptr) == (i == 6));
  CHECK(resolve_workers(0) >= 1);
  CHECK(resolve_workers(3) == 3);
}

TEST_CASE("estimate: file-count contract and byte-identical rerun") {
  const fs::path out = scratch("estimate");
  const CommandContext ctx = quick_context(out);
  REQUIRE(cmd_estimate(ctx) == 0);
  const fs::path dir = out / "estimate";
  std::size_t traces = 0;
  for (const auto &e : fs::directory_iterator(dir / "traces")) traces += e.path().extension() == ".csv";
  CHECK(traces == 3);
  const CsvTable summary = read_csv(dir / "summary.csv", kSummaryColumns);
  CHECK(summary.rows.size() == 3);
  for (const auto &row : summary.rows) CHECK(row[summary.column("status")] == "ok");
  CHECK(fs::exists(dir / "run_manifest.txt"));

  const auto first = snapshot(dir);
  fs::remove_all(out);
  CommandContext again = quick_context(out);
  again.config.set("run.workers", "1");
  REQUIRE(cmd_estimate(again) == 0);
  CHECK(snapshot(dir) == first);

  std::ostringstream log;
  CHECK(cmd_verify(out, log) == 0);
  fs::remove(dir / "summary.csv");
  CHECK(cmd_verify(out, log) == 1);
  fs::remove_all(out);
}

TEST_CASE("estimate: adding seeds leaves existing runs unchanged") {
  const fs::path out = scratch("seeds");
  CommandContext a = quick_context(out / "a");
  a.config.set("run.seeds", "1");
  CommandContext b = quick_context(out / "b");
  b.config.set("run.seeds", "0-3");
  REQUIRE(cmd_estimate(a) == 0);
  REQUIRE(cmd_estimate(b) == 0);
  const std::string id = "sign_gaussian-d1-dv-dp-s1.csv";
  CHECK(read_file(out / "a/estimate/traces" / id) == read_file(out / "b/estimate/traces" / id));
  fs::remove_all(out);
}

TEST_CASE("dimsweep: one summary row per cell, variance table") {
  const fs::path out = scratch("dimsweep");
  CommandContext ctx = quick_context(out);
  ctx.config.set("dimsweep.dims", "2,5");
  ctx.config.set("dimsweep.long_dim", "5");
  ctx.config.set("dimsweep.long_epochs", "30");
  ctx.config.set("dimsweep.epochs", "20");
  ctx.config.set("estimate.weightings", "dp,empirical");
  ctx.config.set("run.seeds", "0-1");
  REQUIRE(cmd_dimsweep(ctx) == 0);
  const CsvTable s = read_csv(out / "dimsweep/summary.csv", kSummaryColumns);
  CHECK(s.rows.size() == 2 * 2 * 2);
  const CsvTable v = read_csv(out / "dimsweep/variance.csv");
  CHECK(v.rows.size() == 4);
  const CsvTable t = read_csv(out / "dimsweep/timing.csv");
  for (const auto &row : t.rows)
    if (row[t.column("dim")] == "5") CHECK(row[t.column("epochs")] == "30");
  fs::remove_all(out);
}

TEST_CASE("report: empty input, chart structure, acceptance recomputation") {
  const fs::path out = scratch("report");
  std::ostringstream log;
  CommandContext empty = quick_context(out / "empty");
  empty.log = &log;
  CHECK(cmd_report(empty, {}) == 0);
  CHECK(log.str().find("warning") != std::string::npos);

  CommandContext ctx = quick_context(out / "runs");
  ctx.config.set("run.seeds", "0");
  ctx.config.set("estimate.weightings", "dp,empirical");
  REQUIRE(cmd_estimate(ctx) == 0);
  CommandContext rep = quick_context(out / "rep");
  REQUIRE(cmd_report(rep, {out / "runs"}) == 0);
  const std::string svg = read_file(out / "rep/report/charts/sign_gaussian-d1-dv.svg");
  CHECK(count_in(svg, "<polyline") == 2);
  CHECK(count_in(svg, "<line") == 1);
  CHECK(svg.rfind("<?xml", 0) == 0);

  // The acceptance rows against a recomputation from the raw trace values.
  std::vector<TraceFile> traces;
  for (const auto &e : fs::directory_iterator(out / "runs/estimate/traces"))
    traces.push_back(read_trace_csv(e.path()));
  const auto rows = acceptance_from_traces(traces, 5, 0.15);
  int in_band = 0, cells = 0;
  std::vector<double> dp_var, emp_var;
  for (const auto &t : traces) {
    const std::size_t n = t.values.size();
    double mean = 0.0;
    for (std::size_t i = n - 5; i < n; ++i) mean += t.values[i] / 5.0;
    double m = 0.0, v = 0.0;
    for (double x : t.values) m += x / static_cast<double>(n);
    for (double x : t.values) v += (x - m) * (x - m) / static_cast<double>(n);
    if (t.meta.weighting == Weighting::DP) {
      ++cells;
      in_band += std::abs(mean - 0.69) <= 0.15;
      dp_var.push_back(v);
    } else {
      emp_var.push_back(v);
    }
  }
  REQUIRE(cells == 1);
  const auto c1 = std::find_if(rows.begin(), rows.end(), [](const auto &r) { return r.criterion == 1; });
  REQUIRE(c1 != rows.end());
  CHECK(c1->value == static_cast<double>(in_band) / cells);
  CHECK(c1->cells == 1);
  const auto c3 = std::find_if(rows.begin(), rows.end(), [](const auto &r) { return r.criterion == 3; });
  REQUIRE(c3 != rows.end());
  CHECK(c3->value == (dp_var[0] <= emp_var[0] ? 1.0 : 0.0));

  const CsvTable acc = read_csv(out / "rep/report/acceptance.csv");
  CHECK(acc.rows.size() == rows.size());
  CHECK(cmd_verify(out, log) == 0);

  write_file_atomic(out / "bad/broken.csv", "# schema=1\n" + std::string(kTraceColumns) + "\n1,2\n");
  CommandContext bad = quick_context(out / "rep2");
  CHECK_THROWS_AS(cmd_report(bad, {out / "bad/broken.csv"}), Error);
  fs::remove_all(out);
}

TEST_CASE("gendemo: sample counts, coverage row, ablation table") {
  const fs::path out = scratch("gendemo");
  CommandContext ctx;
  ctx.out = out;
  ctx.config.set("gendemo.epochs", "2");
  ctx.config.set("gendemo.n", "1000");
  ctx.config.set("gendemo.latent", "8");
  ctx.config.set("gendemo.sublatent", "2");
  ctx.config.set("gendemo.replications", "3");
  ctx.config.set("gendemo.ablation", "true");
  ctx.config.set("run.workers", "1");
  REQUIRE(cmd_gendemo(ctx) == 0);
  const fs::path run = out / "gendemo/seed-0/dpmine";
  const CsvTable samples = read_csv(run / "samples.csv");
  std::size_t random = 0, recon = 0;
  for (const auto &row : samples.rows) {
    random += row[samples.column("kind")] == "random";
    recon += row[samples.column("kind")] == "reconstruct";
  }
  CHECK(random == 1000);
  CHECK(recon == 1000);
  const CsvTable scores = read_csv(out / "gendemo/scores.csv", kScoreColumns);
  bool coverage = false;
  for (const auto &row : scores.rows)
    if (row[scores.column("metric")] == "coverage") {
      coverage = true;
      const double v = std::stod(row[scores.column("value")]);
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  CHECK(coverage);
  const CsvTable ab = read_csv(out / "gendemo/ablation.csv");
  CHECK(ab.rows.size() == 1);
  CHECK(fs::exists(run / "model/manifest.txt"));
  CHECK(fs::exists(out / "gendemo/seed-0/dpmine-nomi/model/manifest.txt"));
  std::ostringstream log;
  CHECK(cmd_verify(out, log) == 0);
  fs::remove_all(out);
}

TEST_CASE("verify fails without manifests") {
  const fs::path out = scratch("verify-empty");
  fs::create_directories(out);
  std::ostringstream log;
  CHECK(cmd_verify(out, log) == 1);
  fs::remove_all(out);
}
