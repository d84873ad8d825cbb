#include "commands.hpp"

#include "fmmq/exceptions.hpp"

#include <CLI11.hpp>

#include <iostream>

int main(int argc, char** argv) {
  using namespace fmmq;

  CLI::App app{"Factor models of mixture quantiles: calibration, scoring and low-rank fitting"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "fmmq 0.3.0");

  std::string config_path;
  RunOverrides overrides;
  std::uint64_t seed = 0;
  int rank = 0;
  std::string levels;
  cli::Paths paths;
  bool refresh = false;

  // Shared options; flags take precedence over the config file.
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "Run config (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "Override cv, ALS and solver seeds");
    sub->add_option("--levels", levels, "Comma-separated levels overriding the config");
  };

  auto* fit = app.add_subcommand("fit", "Calibrate a model and write model JSON plus a solve report");
  add_common(fit);
  fit->add_option("--data", paths.data, "Training CSV (default: data.path)");
  fit->add_option("-o,--out", paths.model, "Model file (default: <output_dir>/model.json)");

  auto* predict = app.add_subcommand("predict", "Write per-row quantiles at the requested levels");
  add_common(predict);
  predict->add_option("-m,--model", paths.model, "Model file (default: <output_dir>/model.json)");
  predict->add_option("--data", paths.data, "Input CSV (default: data.path)");
  predict->add_option("-o,--out", paths.out, "Output CSV (default: <output_dir>/predictions.csv)");

  auto* score = app.add_subcommand("score", "Write CRPS and coverage tables for a model on data");
  add_common(score);
  score->add_option("-m,--model", paths.model, "Model file (default: <output_dir>/model.json)");
  score->add_option("--data", paths.data, "Evaluation CSV (default: data.path)");
  score->add_option("-o,--out", paths.out, "Output directory (default: output_dir)");

  auto* cv = app.add_subcommand("cv", "k-fold cross-validation: per-fold CRPS and coverage tables");
  add_common(cv);
  cv->add_option("--data", paths.data, "Data CSV (default: data.path)");
  cv->add_option("-o,--out", paths.out, "Output directory (default: output_dir)");

  auto* surface = app.add_subcommand("surface", "Conditional quantile surfaces over the factor grid");
  add_common(surface);
  surface->add_option("-m,--model", paths.model, "Model file (default: <output_dir>/model.json)");
  surface->add_option("-o,--out", paths.out, "Output CSV (default: <output_dir>/surface.csv)");

  auto* als = app.add_subcommand("als", "Low-rank fitting by alternating block updates; writes the objective trace");
  add_common(als);
  als->add_option("--rank", rank, "Single rank overriding als.ranks")->check(CLI::PositiveNumber);
  als->add_option("--data", paths.data, "Data CSV (default: data.path)");
  als->add_option("-o,--out", paths.out, "Output directory (default: output_dir)");
  als->add_option("-m,--model", paths.model, "Model file for the highest rank (default: <output_dir>/als_model.json)");

  auto* fetch = app.add_subcommand("fetch", "Download (or read cached) series and join them on date");
  add_common(fetch);
  fetch->add_option("-o,--out", paths.out, "Joined CSV (default: fetch.output)");
  fetch->add_flag("--refresh", refresh, "Download even when a cached copy exists");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    RunConfig config = load_run_config(config_path);
    for (auto* sub : {fit, predict, score, cv, surface, als, fetch}) {
      if (sub->parsed()) {
        if (sub->count("--seed") > 0) overrides.seed = seed;
        if (sub->count("--levels") > 0) overrides.levels = parse_level_list(levels);
      }
    }
    if (als->parsed() && als->count("--rank") > 0) overrides.rank = rank;
    apply_overrides(config, overrides);

    if (fit->parsed()) cli::cmd_fit(config, paths, std::cout);
    if (predict->parsed()) cli::cmd_predict(config, paths, std::cout);
    if (score->parsed()) cli::cmd_score(config, paths, std::cout);
    if (cv->parsed()) cli::cmd_cv(config, paths, std::cout);
    if (surface->parsed()) cli::cmd_surface(config, paths, std::cout);
    if (als->parsed()) cli::cmd_als(config, paths, std::cout);
    if (fetch->parsed()) cli::cmd_fetch(config, paths, refresh, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "fmmq: error: " << e.what() << "\n";
    return cli::exit_code_for(e);
  }
  return 0;
}
