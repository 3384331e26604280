#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

#include "dpmine/runner/commands.hpp"

namespace {

using namespace dpmine::runner;

struct Flags {
  std::string config;
  std::string out = "dpmine-out";
  std::string seeds;
  long workers = -1;
  long epochs = 0;
  std::string bound;
  std::string weighting;
  bool no_mi = false;
  std::vector<std::string> inputs;
  std::string verify_dir;
};

void add_common(CLI::App *cmd, Flags &f) {
  cmd->add_option("--config", f.config, "settings file (key = value with [section] headers)");
  cmd->add_option("--out", f.out, "output directory (DPMINE_OUT overrides)");
  cmd->add_option("--workers", f.workers, "worker threads; 0 = one per core");
}

CommandContext make_context(const Flags &f, const std::string &command, int argc, char **argv) {
  CommandContext ctx;
  ctx.config = load_with_defaults(f.config);
  ctx.out = f.out;
  if (const char *env = std::getenv("DPMINE_OUT"); env && *env) ctx.out = env;
  ctx.log = &std::cerr;
  for (int i = 0; i < argc; ++i) ctx.invocation += (i ? " " : "") + std::string(argv[i]);

  Config &c = ctx.config;
  if (f.workers >= 0) c.set("run.workers", std::to_string(f.workers));
  if (command == "gendemo") {
    if (!f.seeds.empty()) c.set("gendemo.seeds", f.seeds);
    if (f.epochs > 0) c.set("gendemo.epochs", std::to_string(f.epochs));
    if (!f.bound.empty()) c.set("gendemo.bound", f.bound);
    if (f.no_mi) c.set("gendemo.ablation", "true");
  } else {
    if (!f.seeds.empty()) c.set("run.seeds", f.seeds);
    if (f.epochs > 0) c.set(command == "dimsweep" ? "dimsweep.epochs" : "estimate.epochs",
                            std::to_string(f.epochs));
    if (!f.bound.empty()) c.set("estimate.bounds", f.bound);
    if (!f.weighting.empty()) c.set("estimate.weightings", f.weighting);
  }
  return ctx;
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"Dirichlet-process mutual information estimation and generative demos"};
  app.require_subcommand(1);
  Flags f;

  auto *estimate = app.add_subcommand("estimate", "MI estimation runs over seeds and weightings");
  auto *dimsweep = app.add_subcommand("dimsweep", "MI estimation across the dimension grid");
  auto *gendemo = app.add_subcommand("gendemo", "train the coil generative demo and score it");
  auto *report = app.add_subcommand("report", "charts and aggregate tables from trace CSVs");
  auto *defaults = app.add_subcommand("defaults", "print every setting with its default");
  auto *verify = app.add_subcommand("verify", "check that manifest outputs exist and parse");

  const std::vector<std::string> bounds{"dv", "js"};
  for (auto *cmd : {estimate, dimsweep, gendemo}) {
    add_common(cmd, f);
    cmd->add_option("--seeds", f.seeds, "seed list, e.g. 0-19 or 0,3,5-9");
    cmd->add_option("--epochs", f.epochs, "training epochs")->check(CLI::PositiveNumber);
    cmd->add_option("--bound", f.bound, "dv or js")->check(CLI::IsMember(bounds));
  }
  for (auto *cmd : {estimate, dimsweep})
    cmd->add_option("--weighting", f.weighting, "dp or empirical")
        ->check(CLI::IsMember({"dp", "empirical"}));
  gendemo->add_flag("--no-mi", f.no_mi, "also train without MI regularizers (paired ablation)");
  add_common(report, f);
  report->add_option("inputs", f.inputs, "trace CSV files or directories");
  verify->add_option("dir", f.verify_dir, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*defaults) return cmd_defaults(std::cout);
    if (*verify) return cmd_verify(f.verify_dir, std::cout);
    if (*estimate) return cmd_estimate(make_context(f, "estimate", argc, argv));
    if (*dimsweep) return cmd_dimsweep(make_context(f, "dimsweep", argc, argv));
    if (*gendemo) return cmd_gendemo(make_context(f, "gendemo", argc, argv));
    if (*report) {
      std::vector<std::filesystem::path> inputs(f.inputs.begin(), f.inputs.end());
      return cmd_report(make_context(f, "report", argc, argv), inputs);
    }
  } catch (const dpmine::Error &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
