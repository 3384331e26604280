#include "dpmine/runner/commands.hpp"

#include <algorithm>
#include <chrono>
#include <iostream>
#include <map>
#include <mutex>
#include <numeric>
#include <set>
#include <sstream>

#include "dpmine/gen_demo.hpp"
#include "dpmine/runner/pool.hpp"
#include "dpmine/synthetic.hpp"

namespace dpmine::runner {

namespace fs = std::filesystem;

namespace {

constexpr const char *kManifestName = "run_manifest.txt";

std::mutex log_mutex;

void say(std::ostream *log, const std::string &msg) {
  if (!log) return;
  std::lock_guard<std::mutex> lock(log_mutex);
  *log << msg << '\n' << std::flush;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

std::string status_of(const Error &e) {
  switch (e.code()) {
    case ErrorCode::DivergedTraining: return "diverged";
    default: return "failed";
  }
}

MatrixXd parse_pmf(const std::string &text) {
  std::vector<std::vector<double>> rows;
  for (const auto &row : split(text, '/')) {
    Config one;
    one.set("pmf", row);
    rows.push_back(one.reals("pmf"));
  }
  require(!rows.empty(), ErrorCode::InvalidPMF, "empty pmf table");
  MatrixXd m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    require(rows[i].size() == rows.front().size(), ErrorCode::InvalidPMF, "ragged pmf table");
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      m(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  }
  return m;
}

DPConfig dp_config(const Config &cfg) {
  DPConfig dp;
  dp.concentration = cfg.real("dp.concentration");
  dp.map_grid = cfg.reals("dp.map_grid");
  dp.epsilon = cfg.real("dp.epsilon");
  dp.truncation_cap = cfg.integer("dp.truncation_cap");
  if (const auto n = cfg.integer("dp.truncation"); n > 0) dp.truncation_override = n;
  dp.validate();
  return dp;
}

std::vector<Index> to_index(const std::vector<std::int64_t> &v) {
  return {v.begin(), v.end()};
}

MineConfig mine_config(const Config &cfg, const GridCell &cell, std::uint64_t seed) {
  MineConfig mc;
  mc.bound = cell.bound;
  mc.weighting = cell.weighting;
  mc.epochs = cell.epochs;
  if (const auto b = cfg.integer("estimate.minibatch"); b > 0) mc.minibatch = b;
  mc.redraw_per_epoch = cfg.flag("estimate.redraw_per_epoch");
  mc.redraw_truncation = cfg.flag("dp.redraw_truncation");
  mc.derangement = cfg.flag("critic.derangement");
  mc.learning_rate = cfg.real("critic.learning_rate");
  mc.hidden = to_index(cfg.integers("critic.hidden"));
  const std::string out = cfg.str("critic.output");
  require(out == "relu" || out == "identity", ErrorCode::InvalidArgument,
          "critic.output must be relu or identity");
  mc.relu_output = out == "relu";
  mc.seed = seed;
  mc.record_timing = cfg.flag("estimate.record_timing");
  mc.validate();
  return mc;
}

std::vector<GridCell> make_grid(const std::vector<std::string> &families,
                                const std::vector<Index> &dims, const Config &cfg,
                                Index epochs, std::optional<std::pair<Index, Index>> long_run) {
  std::vector<BoundKind> bounds;
  for (const auto &b : cfg.words("estimate.bounds")) bounds.push_back(parse_bound(b));
  std::vector<Weighting> weightings;
  for (const auto &w : cfg.words("estimate.weightings")) weightings.push_back(parse_weighting(w));
  const auto seeds = parse_seed_list(cfg.str("run.seeds"));
  require(!families.empty() && !dims.empty() && !bounds.empty() && !weightings.empty(),
          ErrorCode::InvalidArgument, "estimation grid is empty");
  std::vector<GridCell> cells;
  for (const auto &family : families) {
    const auto fam = parse_family(family);
    require(fam != SyntheticFamily::Coil, ErrorCode::InvalidArgument,
            "coil is not an MI family; use gendemo");
    for (Index dim : dims) {
      require(dim >= 1, ErrorCode::InvalidArgument, "dimensions must be >= 1");
      for (BoundKind bound : bounds)
        for (std::uint64_t seed : seeds)
          for (Weighting w : weightings) {
            GridCell c;
            c.family = to_string(fam);
            c.dim = dim;
            c.bound = bound;
            c.weighting = w;
            c.seed = seed;
            c.epochs = (long_run && long_run->first == dim && long_run->second > 0)
                           ? long_run->second
                           : epochs;
            cells.push_back(c);
          }
    }
  }
  return cells;
}

fs::path command_dir(const CommandContext &ctx, const std::string &command) {
  return ctx.out / command;
}

struct Outputs {
  fs::path root;
  std::vector<std::string> files;

  void write(const std::string &rel, const std::string &content) {
    write_file_atomic(root / rel, content);
    files.push_back(rel);
  }
};

void finish_manifest(RunManifest &m, const CommandContext &ctx, Outputs &outputs) {
  m.finished = utc_timestamp();
  m.config = ctx.config.dump();
  m.outputs = outputs.files;
  write_file_atomic(outputs.root / kManifestName, m.text());
}

RunManifest start_manifest(const CommandContext &ctx, const std::string &command) {
  RunManifest m;
  m.command = ctx.invocation.empty() ? command : ctx.invocation;
  m.started = utc_timestamp();
  return m;
}

// Shared output stage of estimate and dimsweep.
int write_grid_outputs(const CommandContext &ctx, const std::string &command,
                       const std::vector<CellResult> &results, bool variance_table) {
  Outputs out{command_dir(ctx, command), {}};
  RunManifest manifest = start_manifest(ctx, command);
  const Index window = ctx.config.integer("estimate.window");
  const double tol = ctx.config.real("estimate.tol");

  std::string summary =
      csv_header(kSummaryColumns, {{"window", std::to_string(window)}, {"tol", fmt(tol)}});
  std::string timing = csv_header("run_id,dim,epochs,wall_ms,ms_per_epoch",
                                  {{"note", "wall-clock_timings_are_not_reproducible"}});
  std::size_t ok = 0;
  for (const auto &r : results) {
    manifest.runs.push_back({r.meta.run_id, r.meta.seed, r.status, r.detail});
    summary += summary_row(r.meta, r.summary, r.status);
    if (r.status != "ok") continue;
    ++ok;
    out.write("traces/" + r.meta.run_id + ".csv", trace_csv(r.meta, r.trace));
    timing += r.meta.run_id + "," + std::to_string(r.meta.dim) + "," +
              std::to_string(r.cell.epochs) + "," + fmt(r.wall_ms) + "," +
              fmt(r.wall_ms / static_cast<double>(r.cell.epochs)) + "\n";
  }
  out.write("summary.csv", summary);
  out.write("timing.csv", timing);

  if (variance_table) {
    // Paired DP vs empirical full-trace variance per (family, dim, bound, seed).
    std::map<std::string, std::pair<const CellResult *, const CellResult *>> pairs;
    for (const auto &r : results) {
      if (r.status != "ok") continue;
      const std::string key = r.cell.family + "|" + std::to_string(r.cell.dim) + "|" +
                              to_string(r.cell.bound) + "|" + std::to_string(r.cell.seed);
      (r.cell.weighting == Weighting::DP ? pairs[key].first : pairs[key].second) = &r;
    }
    std::string table = csv_header(
        "family,dim,bound,seed,dp_full_var,empirical_full_var,dp_le_empirical");
    std::size_t cells = 0, wins = 0;
    for (const auto &[key, pr] : pairs) {
      if (!pr.first || !pr.second) continue;
      const bool le = pr.first->summary.full_var <= pr.second->summary.full_var;
      ++cells;
      wins += le ? 1 : 0;
      const auto &c = pr.first->cell;
      table += c.family + "," + std::to_string(c.dim) + "," + to_string(c.bound) + "," +
               std::to_string(c.seed) + "," + fmt(pr.first->summary.full_var) + "," +
               fmt(pr.second->summary.full_var) + "," + (le ? "1" : "0") + "\n";
    }
    out.write("variance.csv", table);
    std::ostringstream note;
    note << "dp_variance_le_empirical " << wins << "/" << cells
         << (cells > 0 && 2 * wins > cells ? " majority" : " no-majority");
    manifest.notes.push_back(note.str());
    say(ctx.log, note.str());

    // Log-log slope of mean epoch time against dimension.
    std::map<Index, std::vector<double>> per_dim;
    for (const auto &r : results)
      if (r.status == "ok") per_dim[r.cell.dim].push_back(r.wall_ms / r.cell.epochs);
    if (per_dim.size() >= 2) {
      std::vector<double> lx, ly;
      for (const auto &[d, v] : per_dim) {
        lx.push_back(std::log(static_cast<double>(d)));
        ly.push_back(std::log(std::accumulate(v.begin(), v.end(), 0.0) / v.size()));
      }
      const double mx = std::accumulate(lx.begin(), lx.end(), 0.0) / lx.size();
      const double my = std::accumulate(ly.begin(), ly.end(), 0.0) / ly.size();
      double sxy = 0.0, sxx = 0.0;
      for (std::size_t i = 0; i < lx.size(); ++i) {
        sxy += (lx[i] - mx) * (ly[i] - my);
        sxx += (lx[i] - mx) * (lx[i] - mx);
      }
      manifest.notes.push_back("epoch_time_dim_slope " + fmt(sxy / sxx));
    }
  }

  finish_manifest(manifest, ctx, out);
  say(ctx.log, command + ": " + std::to_string(ok) + "/" + std::to_string(results.size()) +
                   " runs ok, outputs in " + out.root.string());
  return (ok == 0 && !results.empty()) ? 1 : 0;
}

} // namespace

std::string GridCell::run_id() const {
  return sanitize_id(family + "-d" + std::to_string(dim) + "-" + to_string(bound) + "-" +
                     to_string(weighting) + "-s" + std::to_string(seed));
}

std::uint64_t cell_seed(std::uint64_t seed, const std::string &family, Index dim) {
  const auto fam = static_cast<std::uint64_t>(parse_family(family));
  return derive_seed(derive_seed(seed, 1000 + fam), static_cast<std::uint64_t>(dim));
}

CellResult run_cell(const GridCell &cell, const Config &config) {
  CellResult r;
  r.cell = cell;
  r.meta.run_id = cell.run_id();
  r.meta.family = cell.family;
  r.meta.bound = cell.bound;
  r.meta.weighting = cell.weighting;
  r.meta.dim = cell.dim;
  r.meta.seed = cell.seed;
  r.meta.estimator = std::string(cell.weighting == Weighting::DP ? "DPMINE" : "MINE") + "-" +
                     (cell.bound == BoundKind::DV ? "DV" : "JS");
  r.summary = {NAN, NAN, NAN, NAN, std::nullopt};
  const auto start = std::chrono::steady_clock::now();
  try {
    SyntheticSpec spec;
    spec.family = parse_family(cell.family);
    spec.dim = cell.dim;
    spec.n = config.integer("estimate.n");
    spec.noise_sd = config.real("estimate.noise_sd");
    if (spec.family == SyntheticFamily::DiscreteJoint) {
      require(cell.dim == 1, ErrorCode::InvalidArgument, "discrete_joint is one-dimensional");
      spec.pmf_table = parse_pmf(config.str("estimate.pmf"));
    }
    const std::uint64_t seed = cell_seed(cell.seed, cell.family, cell.dim);
    spec.seed = seed;
    const PairedSample data = generate_pairs(spec);
    r.meta.truth = true_mi(spec);
    const MineResult fit =
        train_mine(data.xs, data.ys, dp_config(config), mine_config(config, cell, seed));
    r.trace = fit.trace;
    r.summary = summarize_trace(r.trace.values, r.meta.truth.value_or(0.0),
                                config.integer("estimate.window"), config.real("estimate.tol"));
  } catch (const Error &e) {
    r.status = status_of(e);
    r.detail = e.what();
    if (e.detail()) r.detail += " at " + std::to_string(*e.detail());
  }
  r.wall_ms = elapsed_ms(start);
  return r;
}

std::vector<GridCell> estimate_grid(const Config &config) {
  return make_grid(config.words("estimate.family"), to_index(config.integers("estimate.dims")),
                   config, config.integer("estimate.epochs"), std::nullopt);
}

std::vector<GridCell> dimsweep_grid(const Config &config) {
  return make_grid(config.words("dimsweep.family"), to_index(config.integers("dimsweep.dims")),
                   config, config.integer("dimsweep.epochs"),
                   std::pair<Index, Index>{config.integer("dimsweep.long_dim"),
                                           config.integer("dimsweep.long_epochs")});
}

std::vector<CellResult> run_cells(const std::vector<GridCell> &cells, const Config &config,
                                  unsigned workers, std::ostream *log) {
  std::vector<CellResult> results(cells.size());
  std::atomic<std::size_t> done{0};
  const auto errors = parallel_for(cells.size(), workers, [&](std::size_t i) {
    results[i] = run_cell(cells[i], config);
    const auto &r = results[i];
    std::ostringstream msg;
    msg << "[" << ++done << "/" << cells.size() << "] " << r.meta.run_id << " " << r.status;
    if (r.status == "ok") msg << " final_mean=" << fmt(r.summary.final_window_mean);
    else msg << " (" << r.detail << ")";
    say(log, msg.str());
  });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception &e) {
      results[i].cell = cells[i];
      results[i].meta.run_id = cells[i].run_id();
      results[i].status = "failed";
      results[i].detail = e.what();
    }
  }
  return results;
}

int cmd_estimate(const CommandContext &ctx) {
  const auto cells = estimate_grid(ctx.config);
  say(ctx.log, "estimate: " + std::to_string(cells.size()) + " runs");
  const auto results =
      run_cells(cells, ctx.config, resolve_workers(ctx.config.integer("run.workers")), ctx.log);
  return write_grid_outputs(ctx, "estimate", results, false);
}

int cmd_dimsweep(const CommandContext &ctx) {
  const auto cells = dimsweep_grid(ctx.config);
  say(ctx.log, "dimsweep: " + std::to_string(cells.size()) + " runs");
  const auto results =
      run_cells(cells, ctx.config, resolve_workers(ctx.config.integer("run.workers")), ctx.log);
  return write_grid_outputs(ctx, "dimsweep", results, true);
}

// ---------------------------------------------------------------- gendemo

namespace {

struct GenRun {
  std::uint64_t seed = 0;
  bool use_mi = true;
  std::string status = "ok";
  std::string detail;
  double coverage = NAN;
  double coverage_reconstruct = NAN;
  std::vector<std::string> files;
  std::string scores; // rows without header
};

std::string variant_name(bool use_mi) { return use_mi ? "dpmine" : "dpmine-nomi"; }

std::string points_rows(const std::string &kind, const Points &p) {
  std::string out;
  for (Index i = 0; i < p.rows(); ++i) {
    out += kind + "," + std::to_string(i);
    for (Index j = 0; j < p.cols(); ++j) out += "," + fmt(p(i, j));
    out += "\n";
  }
  return out;
}

std::string score_row(const std::string &model, const std::string &metric,
                      const std::string &feature_map, double value, Index reps, double se) {
  return model + "," + metric + "," + feature_map + "," + fmt(value) + "," +
         std::to_string(reps) + "," + fmt(se) + "\n";
}

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double> &v) {
  MeanSe m;
  m.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - m.mean) * (x - m.mean);
    m.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return m;
}

GenTrainConfig gen_config(const Config &cfg, std::uint64_t seed, bool use_mi) {
  GenTrainConfig gc;
  gc.epochs = cfg.integer("gendemo.epochs");
  gc.max_atoms = cfg.integer("gendemo.max_atoms");
  gc.gp_lambda = cfg.real("gendemo.gp_lambda");
  const auto coef = cfg.reals("gendemo.mi_coefficients");
  require(coef.size() == 4, ErrorCode::InvalidArgument, "gendemo.mi_coefficients needs 4 values");
  std::copy(coef.begin(), coef.end(), gc.mi_coefficients.begin());
  gc.use_mi = use_mi;
  gc.bound = parse_bound(cfg.str("gendemo.bound"));
  gc.kernel = KernelSpec::gaussian(cfg.reals("gendemo.sigmas"));
  gc.dp = dp_config(cfg);
  gc.arch.latent = cfg.integer("gendemo.latent");
  gc.arch.sublatent = cfg.integer("gendemo.sublatent");
  gc.seed = seed;
  gc.validate();
  return gc;
}

GenRun run_gendemo_variant(const Config &cfg, const fs::path &root, std::uint64_t seed,
                           bool use_mi, std::ostream *log) {
  GenRun run;
  run.seed = seed;
  run.use_mi = use_mi;
  const std::string model_name = variant_name(use_mi);
  const std::string rel = "seed-" + std::to_string(seed) + "/" + model_name + "/";
  try {
    Rng data_rng = make_rng(seed, Stream::Data);
    const CoilSample coil = gen_coil(cfg.integer("gendemo.n"), data_rng);
    const auto start = std::chrono::steady_clock::now();
    GenTrainResult fit = train_genmodel(coil.points, gen_config(cfg, seed, use_mi));
    say(log, "gendemo seed " + std::to_string(seed) + " " + model_name + " trained in " +
                 fmt(std::round(elapsed_ms(start) / 1000.0)) + " s");

    save_gen_model(fit.model, root / (rel + "model"));
    run.files.push_back(rel + "model");

    const Index samples = cfg.integer("gendemo.samples");
    const Index bins = cfg.integer("gendemo.bins");
    Rng eval_rng = make_rng(seed, Stream::Evaluation);
    const auto order = draw_permutation(coil.points.rows(), eval_rng);
    const Index m = std::min<Index>(samples, coil.points.rows());
    Points real(m, coil.points.cols());
    for (Index i = 0; i < m; ++i) real.row(i) = coil.points.row(order[static_cast<std::size_t>(i)]);

    const Points random = generate(fit.model, samples, GenerateMode::Random, Points(), eval_rng);
    const Points recon = generate(fit.model, m, GenerateMode::Reconstruct, real, eval_rng);
    std::string cols = "kind,index";
    for (Index j = 0; j < coil.points.cols(); ++j) cols += ",x" + std::to_string(j + 1);
    write_file_atomic(root / (rel + "samples.csv"),
                      csv_header(cols) + points_rows("random", random) +
                          points_rows("reconstruct", recon));
    run.files.push_back(rel + "samples.csv");

    run.coverage = coverage_metric(random, coil.points, coil.t, bins);
    run.coverage_reconstruct = coverage_metric(recon, coil.points, coil.t, bins);

    const PcaMap pca = fit_pca2(coil.points);
    const FeatureSet fr = pca.apply(real);
    const Index reps = cfg.integer("gendemo.replications");
    std::vector<double> f_fid, f_kid, f_mmd;
    for (Index r = 0; r < reps; ++r) {
      const FeatureSet fg =
          pca.apply(generate(fit.model, samples, GenerateMode::Random, Points(), eval_rng));
      f_fid.push_back(fid(fr, fg));
      f_kid.push_back(kid(fr, fg));
      f_mmd.push_back(mmd_score(fr, fg));
    }
    std::string scores;
    const std::string model = model_name + "/seed-" + std::to_string(seed);
    scores += score_row(model, "coverage", "t-bins", run.coverage, 1, 0.0);
    scores += score_row(model, "coverage_reconstruct", "t-bins", run.coverage_reconstruct, 1, 0.0);
    if (reps > 0) {
      const auto a = mean_se(f_fid), b = mean_se(f_kid), c = mean_se(f_mmd);
      scores += score_row(model, "fid", "pca2", a.mean, reps, a.se);
      scores += score_row(model, "kid", "pca2", b.mean, reps, b.se);
      scores += score_row(model, "mmd", "pca2", c.mean, reps, c.se);
    }
    run.scores = scores;
    write_file_atomic(root / (rel + "scores.csv"), csv_header(kScoreColumns) + scores);
    run.files.push_back(rel + "scores.csv");

    const auto &h = fit.history;
    std::string hist = csv_header(
        "epoch,encoder_generator,discriminator,code_generator,mi_x_c,mi_gc_c,mi_gcsub_c,mi_gxi_c,"
        "atoms",
        {{"concentration", fmt(fit.concentration)}});
    for (std::size_t e = 0; e < h.encoder_generator.size(); ++e) {
      hist += std::to_string(e + 1) + "," + fmt(h.encoder_generator[e]) + "," +
              fmt(h.discriminator[e]) + "," + fmt(h.code_generator[e]);
      for (int k = 0; k < 4; ++k) hist += "," + fmt(e < h.mi.size() ? h.mi[e][k] : 0.0);
      hist += "," + std::to_string(e < h.atoms.size() ? h.atoms[e] : 0) + "\n";
    }
    write_file_atomic(root / (rel + "history.csv"), hist);
    run.files.push_back(rel + "history.csv");

    if (cfg.flag("gendemo.svg")) {
      const std::string title = model_name + " seed " + std::to_string(seed) +
                                " (features: first two principal components)";
      write_file_atomic(root / (rel + "scatter.svg"),
                        scatter_svg(title, {{"real", fr},
                                            {"random", pca.apply(random)},
                                            {"reconstructed", pca.apply(recon)}}));
      run.files.push_back(rel + "scatter.svg");
    }
    say(log, "gendemo seed " + std::to_string(seed) + " " + model_name +
                 " coverage=" + fmt(run.coverage));
  } catch (const Error &e) {
    run.status = status_of(e);
    run.detail = e.what();
    if (e.detail()) run.detail += " at " + std::to_string(*e.detail());
    say(log, "gendemo seed " + std::to_string(seed) + " " + model_name + " " + run.status +
                 ": " + run.detail);
  }
  return run;
}

} // namespace

int cmd_gendemo(const CommandContext &ctx) {
  const Config &cfg = ctx.config;
  const auto seeds = parse_seed_list(cfg.str("gendemo.seeds"));
  const bool ablation = cfg.flag("gendemo.ablation");
  std::vector<std::pair<std::uint64_t, bool>> tasks;
  for (auto s : seeds) {
    tasks.emplace_back(s, true);
    if (ablation) tasks.emplace_back(s, false);
  }
  Outputs out{command_dir(ctx, "gendemo"), {}};
  RunManifest manifest = start_manifest(ctx, "gendemo");
  manifest.notes.push_back("features: first two principal components of the raw 3-D points");
  manifest.notes.push_back("scores: real features fixed, generated set resampled per replication");

  std::vector<GenRun> runs(tasks.size());
  const auto errors =
      parallel_for(tasks.size(), resolve_workers(cfg.integer("run.workers")), [&](std::size_t i) {
        runs[i] = run_gendemo_variant(cfg, out.root, tasks[i].first, tasks[i].second, ctx.log);
      });
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i]) continue;
    runs[i].seed = tasks[i].first;
    runs[i].use_mi = tasks[i].second;
    runs[i].status = "failed";
    try {
      std::rethrow_exception(errors[i]);
    } catch (const std::exception &e) {
      runs[i].detail = e.what();
    }
  }

  std::string scores = csv_header(kScoreColumns);
  std::size_t ok = 0;
  for (const auto &r : runs) {
    manifest.runs.push_back(
        {variant_name(r.use_mi) + "-s" + std::to_string(r.seed), r.seed, r.status, r.detail});
    if (r.status != "ok") continue;
    ++ok;
    scores += r.scores;
    for (const auto &f : r.files) out.files.push_back(f);
  }
  out.write("scores.csv", scores);

  if (ablation) {
    std::string table = csv_header("seed,coverage_mi,coverage_no_mi,mi_strictly_higher");
    std::size_t pairs = 0, wins = 0;
    for (auto s : seeds) {
      const GenRun *with = nullptr, *without = nullptr;
      for (const auto &r : runs)
        if (r.seed == s && r.status == "ok") (r.use_mi ? with : without) = &r;
      if (!with || !without) continue;
      const bool higher = with->coverage > without->coverage;
      ++pairs;
      wins += higher ? 1 : 0;
      table += std::to_string(s) + "," + fmt(with->coverage) + "," + fmt(without->coverage) + "," +
               (higher ? "1" : "0") + "\n";
    }
    out.write("ablation.csv", table);
    manifest.notes.push_back("ablation mi_strictly_higher " + std::to_string(wins) + "/" +
                             std::to_string(pairs));
  }
  finish_manifest(manifest, ctx, out);
  say(ctx.log, "gendemo: " + std::to_string(ok) + "/" + std::to_string(runs.size()) +
                   " runs ok, outputs in " + out.root.string());
  return (ok == 0 && !runs.empty()) ? 1 : 0;
}

// ---------------------------------------------------------------- report

std::vector<AcceptanceRow> acceptance_from_traces(const std::vector<TraceFile> &traces,
                                                  Index window, double tol) {
  auto final_mean = [&](const TraceFile &t) {
    const Index w = std::min<Index>(window, static_cast<Index>(t.values.size()));
    return summarize_trace(t.values, 0.0, w, tol).final_window_mean;
  };
  std::vector<AcceptanceRow> rows;

  std::size_t n1 = 0, in1 = 0, n2 = 0, in2 = 0;
  for (const auto &t : traces) {
    if (t.meta.dim != 1 || t.meta.bound != BoundKind::DV || t.meta.weighting != Weighting::DP)
      continue;
    if (t.meta.family == "sign_gaussian") {
      ++n1;
      in1 += std::abs(final_mean(t) - 0.69) <= tol ? 1 : 0;
    } else if (t.meta.family == "independent_uniform") {
      ++n2;
      in2 += std::abs(final_mean(t)) <= 0.10 ? 1 : 0;
    }
  }
  if (n1 > 0) {
    const double v = static_cast<double>(in1) / n1;
    rows.push_back({1, "dependent d=1 DV: DP final-window mean within 0.69 +- tol", v, 0.8, n1,
                    v >= 0.8});
  }
  if (n2 > 0) {
    const double v = static_cast<double>(in2) / n2;
    rows.push_back({2, "independent d=1 DV: DP final-window mean within +-0.10 of 0", v, 0.8, n2,
                    v >= 0.8});
  }

  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> pairs;
  const std::set<Index> dims{1, 2, 10, 100};
  for (const auto &t : traces) {
    if (!dims.count(t.meta.dim)) continue;
    const std::string key = t.meta.family + "|" + std::to_string(t.meta.dim) + "|" +
                            to_string(t.meta.bound) + "|" + std::to_string(t.meta.seed);
    const double var = summarize_trace(t.values, 0.0, static_cast<Index>(t.values.size()), tol)
                           .full_var;
    (t.meta.weighting == Weighting::DP ? pairs[key].first : pairs[key].second) = var;
  }
  std::size_t cells = 0, wins = 0;
  for (const auto &[key, p] : pairs) {
    if (!p.first || !p.second) continue;
    ++cells;
    wins += *p.first <= *p.second ? 1 : 0;
  }
  if (cells > 0) {
    const double v = static_cast<double>(wins) / cells;
    rows.push_back({3, "paired cells with DP full-trace variance <= empirical", v, 0.7, cells,
                    v >= 0.7});
  }
  return rows;
}

namespace {

// A directory holding a run manifest contributes exactly the files it lists,
// so leftovers from earlier runs into the same directory are ignored.
void collect_dir(const fs::path &dir, std::vector<fs::path> &files) {
  if (fs::exists(dir / kManifestName)) {
    const auto m =
        RunManifest::parse(read_file(dir / kManifestName), (dir / kManifestName).string());
    for (const auto &rel : m.outputs)
      if (fs::path(rel).extension() == ".csv") files.push_back(dir / rel);
    return;
  }
  std::vector<fs::path> entries;
  for (const auto &e : fs::directory_iterator(dir)) entries.push_back(e.path());
  std::sort(entries.begin(), entries.end());
  for (const auto &e : entries) {
    if (fs::is_directory(e)) collect_dir(e, files);
    else if (e.extension() == ".csv") files.push_back(e);
  }
}

void collect_csv(const fs::path &p, std::vector<fs::path> &files) {
  if (fs::is_directory(p)) collect_dir(p, files);
  else if (fs::exists(p)) files.push_back(p);
  else throw Error(ErrorCode::IoError, "no such input " + p.string());
}

std::string first_column_line(const fs::path &path) {
  const CsvTable t = read_csv(path);
  std::string line;
  for (std::size_t i = 0; i < t.columns.size(); ++i) line += (i ? "," : "") + t.columns[i];
  return line;
}

} // namespace

int cmd_report(const CommandContext &ctx, const std::vector<fs::path> &inputs) {
  Outputs out{command_dir(ctx, "report"), {}};
  RunManifest manifest = start_manifest(ctx, "report");
  const Index window = ctx.config.integer("report.window");
  const double tol = ctx.config.real("report.tol");

  std::vector<fs::path> files;
  for (const auto &p : inputs) collect_csv(p, files);
  std::vector<TraceFile> traces;
  for (const auto &f : files) {
    if (first_column_line(f) == kTraceColumns) traces.push_back(read_trace_csv(f));
  }
  if (traces.empty()) {
    say(ctx.log, "warning: report found no trace files; writing an empty report");
    manifest.notes.push_back("empty report: no trace inputs");
  }

  // One chart per (family, dim, bound).
  std::map<std::string, std::vector<const TraceFile *>> setups;
  for (const auto &t : traces)
    setups[sanitize_id(t.meta.family + "-d" + std::to_string(t.meta.dim) + "-" +
                       to_string(t.meta.bound))]
        .push_back(&t);
  for (const auto &[name, group] : setups) {
    std::vector<Series> series;
    std::optional<double> truth;
    for (const TraceFile *t : group) {
      Series s;
      s.label = t->meta.estimator;
      s.color = t->meta.weighting == Weighting::DP ? "#1f77b4" : "#d62728";
      for (std::size_t e = 0; e < t->values.size(); ++e) {
        s.x.push_back(static_cast<double>(e + 1));
        s.y.push_back(t->values[e]);
      }
      series.push_back(std::move(s));
      if (!truth && t->meta.truth) truth = t->meta.truth;
    }
    const auto &m = group.front()->meta;
    const std::string title = m.family + ", d = " + std::to_string(m.dim) + ", " +
                              (m.bound == BoundKind::DV ? "DV" : "JS") + " bound";
    out.write("charts/" + name + ".svg",
              line_chart_svg(title, series, truth, "epoch", "estimate (nats)"));
  }

  // Aggregate per (family, dim, bound, weighting).
  struct Agg {
    std::vector<double> means, vars, bias;
    std::size_t in_band = 0;
  };
  std::map<std::tuple<std::string, Index, std::string, std::string>, Agg> agg;
  for (const auto &t : traces) {
    const Index w = std::min<Index>(window, static_cast<Index>(t.values.size()));
    const TraceSummary s = summarize_trace(t.values, t.meta.truth.value_or(0.0), w, tol);
    auto &a = agg[{t.meta.family, t.meta.dim, to_string(t.meta.bound), to_string(t.meta.weighting)}];
    a.means.push_back(s.final_window_mean);
    a.vars.push_back(s.full_var);
    a.bias.push_back(s.abs_bias_vs_truth);
    a.in_band += s.abs_bias_vs_truth <= tol ? 1 : 0;
  }
  std::string table = csv_header(
      "family,dim,bound,weighting,runs,mean_final_window_mean,sd_final_window_mean,mean_full_var,"
      "mean_abs_bias,frac_within_tol",
      {{"window", std::to_string(window)}, {"tol", fmt(tol)}});
  for (const auto &[key, a] : agg) {
    const auto &[family, dim, bound, weighting] = key;
    const auto ms = mean_se(a.means);
    const double sd = ms.se * std::sqrt(static_cast<double>(a.means.size()));
    table += family + "," + std::to_string(dim) + "," + bound + "," + weighting + "," +
             std::to_string(a.means.size()) + "," + fmt(ms.mean) + "," + fmt(sd) + "," +
             fmt(mean_se(a.vars).mean) + "," + fmt(mean_se(a.bias).mean) + "," +
             fmt(static_cast<double>(a.in_band) / a.means.size()) + "\n";
  }
  out.write("aggregate.csv", table);

  std::string acc = csv_header("criterion,description,value,threshold,cells,status",
                               {{"window", std::to_string(window)}, {"tol", fmt(tol)}});
  for (const auto &r : acceptance_from_traces(traces, window, tol)) {
    acc += std::to_string(r.criterion) + "," + r.description + "," + fmt(r.value) + "," +
           fmt(r.threshold) + "," + std::to_string(r.cells) + "," + (r.pass ? "PASS" : "FAIL") +
           "\n";
    say(ctx.log, "criterion " + std::to_string(r.criterion) + " " + (r.pass ? "PASS" : "FAIL") +
                     " value=" + fmt(r.value) + " threshold=" + fmt(r.threshold) +
                     " cells=" + std::to_string(r.cells));
  }
  out.write("acceptance.csv", acc);
  manifest.notes.push_back("inputs " + std::to_string(traces.size()) + " traces");
  finish_manifest(manifest, ctx, out);
  return 0;
}

int cmd_defaults(std::ostream &out) {
  out << default_config().dump();
  return 0;
}

int cmd_verify(const fs::path &dir, std::ostream &out) {
  if (!fs::is_directory(dir)) {
    out << "verify: " << dir.string() << " is not a directory\n";
    return 1;
  }
  std::vector<fs::path> manifests;
  for (const auto &e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().filename() == kManifestName) manifests.push_back(e.path());
  std::sort(manifests.begin(), manifests.end());
  if (manifests.empty()) {
    out << "verify: no " << kManifestName << " under " << dir.string() << "\n";
    return 1;
  }
  std::size_t problems = 0, checked = 0;
  for (const auto &mpath : manifests) {
    RunManifest m;
    try {
      m = RunManifest::parse(read_file(mpath), mpath.string());
    } catch (const Error &e) {
      out << "FAIL " << e.what() << "\n";
      ++problems;
      continue;
    }
    for (const auto &rel : m.outputs) {
      const fs::path p = mpath.parent_path() / rel;
      ++checked;
      try {
        if (!fs::exists(p)) throw Error(ErrorCode::IoError, "missing output " + p.string());
        if (fs::is_directory(p)) {
          (void)load_gen_model(p);
        } else if (p.extension() == ".csv") {
          if (first_column_line(p) == kTraceColumns) (void)read_trace_csv(p);
        } else if (p.extension() == ".svg") {
          const std::string text = read_file(p);
          if (text.rfind("<?xml", 0) != 0 || text.find("<svg") == std::string::npos ||
              text.find("</svg>") == std::string::npos)
            throw Error(ErrorCode::SchemaError, p.string() + ": not an SVG document");
        }
      } catch (const Error &e) {
        out << "FAIL " << e.what() << "\n";
        ++problems;
      }
    }
    for (const auto &r : m.runs)
      if (r.status != "ok") out << "note: run " << r.run_id << " " << r.status << "\n";
  }
  out << "verify: " << manifests.size() << " manifests, " << checked << " outputs, " << problems
      << " problems\n";
  return problems == 0 ? 0 : 1;
}

} // namespace dpmine::runner
