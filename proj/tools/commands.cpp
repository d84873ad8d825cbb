#include "commands.hpp"

#include "fmmq/exceptions.hpp"
#include "fmmq/fetch.hpp"
#include "fmmq/lowrank.hpp"
#include "fmmq/scoring.hpp"

#include <json.hpp>

#include <ostream>

namespace fmmq::cli {

using nlohmann::json;

namespace {

std::filesystem::path or_default(const std::filesystem::path& p, const RunConfig& c, const char* name) {
  return p.empty() ? c.output_dir / name : p;
}

void ensure_dir(const std::filesystem::path& file) {
  const auto dir = file.parent_path();
  if (dir.empty()) return;
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void write_table(const std::filesystem::path& path, const CsvTable& t) {
  ensure_dir(path);
  write_csv(path, t);
}

void write_json(const std::filesystem::path& path, const json& j) {
  ensure_dir(path);
  write_file_atomic(path, j.dump(2) + "\n");
}

Dataset training_data(const RunConfig& config, const Paths& paths) {
  RunConfig c = config;
  if (!paths.data.empty()) c.data.path = paths.data;
  return load_data(c);
}

// Prediction inputs may omit the response column.
Dataset prediction_data(const RunConfig& config, const FittedModel& model, const Paths& paths, bool& has_response) {
  const auto path = paths.data.empty() ? config.data.path : paths.data;
  if (path.empty()) throw ConfigError("no data file given (use --data or data.path)");
  CsvTable t = read_csv(path);
  std::vector<std::string> factors;
  for (const auto& f : model.standardizer.factors) factors.push_back(f.name);
  const std::string& response = model.standardizer.response.name;
  has_response = t.column(response) >= 0;
  if (!has_response) {
    t.header.push_back(response);
    for (auto& row : t.rows) row.push_back("0");
  }
  return dataset_from_table(t, response, factors, path.string());
}

std::string level_label(double p) { return "q" + format_double(p); }

StandardizeMode cv_mode(const RunConfig& c) {
  return c.data.standardize ? c.cv.standardize : StandardizeMode::None;
}

}  // namespace

FittedModel fit_model(const RunConfig& config, const Dataset& raw) {
  FittedModel m;
  m.standardizer = config.data.standardize ? Standardizer::fit(raw) : Standardizer::identity(raw);
  const Dataset data = m.standardizer.apply(raw);
  m.spec = config.model.build(data);
  CalibrationResult fit = calibrate(data, m.spec, config.calibration);
  m.params = std::move(fit.params);
  m.report = std::move(fit.report);
  m.config_json = config.calibration_json();
  m.created_at = utc_timestamp();
  return m;
}

void cmd_fit(const RunConfig& config, const Paths& paths, std::ostream& log) {
  const Dataset raw = training_data(config, paths);
  const FittedModel m = fit_model(config, raw);
  const auto model_path = or_default(paths.model.empty() ? paths.out : paths.model, config, "model.json");
  ensure_dir(model_path);
  save_model(model_path, m);
  json report{{"n", raw.size()},
              {"params", m.spec.num_params()},
              {"objective", m.report.objective},
              {"solver_objective", m.report.solver_objective},
              {"gap", m.report.gap},
              {"primal_infeasibility", m.report.primal_infeasibility},
              {"dual_infeasibility", m.report.dual_infeasibility},
              {"iterations", m.report.iterations},
              {"status", m.report.status},
              {"warnings", m.report.warnings}};
  write_json(model_path.parent_path() / "solve_report.json", report);
  for (const auto& w : m.report.warnings) log << "warning: " << w << "\n";
  log << "fit: " << raw.size() << " rows, objective " << format_double(m.report.objective) << ", status "
      << m.report.status << " -> " << model_path.string() << "\n";
}

void cmd_predict(const RunConfig& config, const Paths& paths, std::ostream& log) {
  const FittedModel m = load_model(or_default(paths.model, config, "model.json"));
  bool has_response = false;
  const Dataset data = prediction_data(config, m, paths, has_response);
  const auto& levels = config.scoring.predict_levels;
  const Eigen::MatrixXd G = m.predict(data, levels);
  CsvTable t;
  t.header.push_back("row");
  t.header.insert(t.header.end(), data.factor_names.begin(), data.factor_names.end());
  if (has_response) t.header.push_back(data.response);
  for (double p : levels) t.header.push_back(level_label(p));
  for (Eigen::Index n = 0; n < data.size(); ++n) {
    std::vector<std::string> row{std::to_string(n + 1)};
    for (int k = 0; k < data.num_factors(); ++k) row.push_back(format_double(data.X(n, k)));
    if (has_response) row.push_back(format_double(data.y[n]));
    for (Eigen::Index l = 0; l < G.cols(); ++l) row.push_back(format_double(G(n, l)));
    t.rows.push_back(std::move(row));
  }
  const auto out = or_default(paths.out, config, "predictions.csv");
  write_table(out, t);
  log << "predict: " << data.size() << " rows x " << levels.size() << " levels -> " << out.string() << "\n";
}

void cmd_score(const RunConfig& config, const Paths& paths, std::ostream& log) {
  const FittedModel m = load_model(or_default(paths.model, config, "model.json"));
  bool has_response = false;
  const Dataset raw = prediction_data(config, m, paths, has_response);
  if (!has_response) throw InputError("scoring needs the response column '" + raw.response + "'");
  const Dataset data = m.standardizer.apply(raw);
  const double crps_std = mean_crps(m.spec, m.params, data, config.scoring.crps);
  const double crps_raw = crps_std * m.standardizer.response.iqr;

  CsvTable cov;
  cov.header = {"interval_lo", "interval_hi", "target", "coverage"};
  json jcov = json::array();
  double dev = 0.0;
  for (const auto& iv : config.scoring.intervals) {
    const double c = coverage(m.spec, m.params, data, iv.lo, iv.hi);
    dev += std::abs(c - iv.target);
    cov.rows.push_back({format_double(iv.lo), format_double(iv.hi), format_double(iv.target), format_double(c)});
    jcov.push_back({{"lo", iv.lo}, {"hi", iv.hi}, {"target", iv.target}, {"coverage", c}});
  }
  if (!config.scoring.intervals.empty()) dev /= static_cast<double>(config.scoring.intervals.size());

  CsvTable crps;
  crps.header = {"metric", "value"};
  crps.rows = {{"n", std::to_string(data.size())},
               {"crps_standardized", format_double(crps_std)},
               {"crps", format_double(crps_raw)},
               {"coverage_abs_deviation", format_double(dev)}};
  const auto dir = paths.out.empty() ? config.output_dir : paths.out;
  write_table(dir / "score_crps.csv", crps);
  write_table(dir / "score_coverage.csv", cov);
  write_json(dir / "score_metrics.json", json{{"n", data.size()},
                                              {"crps_standardized", crps_std},
                                              {"crps", crps_raw},
                                              {"coverage", jcov},
                                              {"coverage_abs_deviation", dev}});
  log << "score: mean CRPS " << format_double(crps_raw) << " (standardized " << format_double(crps_std)
      << "), mean |coverage - target| " << format_double(dev) << "\n";
}

void cmd_cv(const RunConfig& config, const Paths& paths, std::ostream& log) {
  const Dataset raw = training_data(config, paths);
  const FoldPlan plan = kfold(raw, config.cv.k, config.cv.seed);
  CVOptions opt;
  opt.crps = config.scoring.crps;
  opt.intervals = config.scoring.intervals;
  opt.standardize = cv_mode(config);
  const ModelConfig model = config.model;
  const CVResult cv = run_cv(raw, [&model](const Dataset& train) { return model.build(train); }, config.calibration,
                             plan, opt);

  CsvTable long_table;
  long_table.header = {"fold", "metric", "value"};
  json folds = json::array();
  for (const auto& f : cv.folds) {
    const std::string id = std::to_string(f.fold + 1);
    long_table.rows.push_back({id, "crps", format_double(f.crps)});
    json jf{{"fold", f.fold + 1}, {"n_train", f.n_train}, {"n_test", f.n_test}, {"crps", f.crps},
            {"coverage", f.coverage}, {"status", f.report.status}};
    for (std::size_t i = 0; i < cv.intervals.size(); ++i) {
      long_table.rows.push_back({id, "coverage_" + format_double(cv.intervals[i].lo) + "_" +
                                         format_double(cv.intervals[i].hi),
                                 format_double(f.coverage[i])});
    }
    folds.push_back(std::move(jf));
  }
  long_table.rows.push_back({"all", "crps_mean", format_double(cv.crps_mean)});
  long_table.rows.push_back({"all", "crps_std", format_double(cv.crps_std)});
  long_table.rows.push_back({"all", "coverage_abs_deviation", format_double(cv.coverage_abs_deviation)});

  json intervals = json::array();
  for (const auto& iv : cv.intervals) intervals.push_back({{"lo", iv.lo}, {"hi", iv.hi}, {"target", iv.target}});
  const auto dir = paths.out.empty() ? config.output_dir : paths.out;
  write_table(dir / "cv_crps.csv", crps_table(cv));
  write_table(dir / "cv_coverage.csv", coverage_table(cv));
  write_table(dir / "cv_metrics.csv", long_table);
  write_json(dir / "cv_metrics.json", json{{"k", plan.k},
                                           {"seed", plan.seed},
                                           {"folds", folds},
                                           {"intervals", intervals},
                                           {"crps_mean", cv.crps_mean},
                                           {"crps_std", cv.crps_std},
                                           {"coverage_mean", cv.coverage_mean},
                                           {"coverage_abs_deviation", cv.coverage_abs_deviation}});
  log << "cv: " << plan.k << " folds, CRPS " << format_double(cv.crps_mean) << " +- " << format_double(cv.crps_std)
      << ", mean |coverage - target| " << format_double(cv.coverage_abs_deviation) << "\n";
}

void cmd_surface(const RunConfig& config, const Paths& paths, std::ostream& log) {
  const FittedModel m = load_model(or_default(paths.model, config, "model.json"));
  const int pts = config.scoring.surface_points;
  // Grids span the knot domain of each factor, reported in raw units.
  std::vector<std::vector<double>> grid;
  for (const auto& f : m.spec.factors) {
    std::vector<double> g;
    for (int i = 0; i < pts; ++i) g.push_back(f.knots.lower + (f.knots.upper - f.knots.lower) * i / (pts - 1));
    grid.push_back(std::move(g));
  }
  CsvTable t;
  t.header.push_back("p");
  for (const auto& f : m.standardizer.factors) t.header.push_back(f.name);
  t.header.push_back("value");
  for (double p : config.scoring.surface_levels) {
    for (const auto& pt : surface_grid(m.spec, m.params, p, grid)) {
      std::vector<std::string> row{format_double(p)};
      for (std::size_t k = 0; k < pt.x.size(); ++k) row.push_back(format_double(m.standardizer.factors[k].inverse(pt.x[k])));
      row.push_back(format_double(m.standardizer.destandardize(pt.value)));
      t.rows.push_back(std::move(row));
    }
  }
  const auto out = or_default(paths.out, config, "surface.csv");
  write_table(out, t);
  log << "surface: " << config.scoring.surface_levels.size() << " levels x " << t.rows.size() / config.scoring.surface_levels.size()
      << " grid points -> " << out.string() << "\n";
}

void cmd_als(const RunConfig& config, const Paths& paths, std::ostream& log) {
  const Dataset raw = training_data(config, paths);
  const Standardizer st = config.data.standardize ? Standardizer::fit(raw) : Standardizer::identity(raw);
  const Dataset data = st.apply(raw);
  const ModelSpec spec = config.model.build(data);
  ALSConfig base;
  base.epsilon = config.als.epsilon;
  base.max_sweeps = config.als.max_sweeps;
  base.init = config.als.init;
  base.seed = config.als.seed;
  base.inner = config.calibration;
  const auto sweep = rank_sweep(data, spec, config.als.ranks, config.als.steps, base);

  const auto dir = paths.out.empty() ? config.output_dir : paths.out;
  write_table(dir / "als_trace.csv", trace_table(sweep));
  const auto& last = sweep.back();
  FittedModel m;
  m.spec = spec;
  m.params = to_param_matrix(spec, last.result.params);
  m.standardizer = st;
  m.lowrank = last.result.params;
  m.report.objective = last.result.trace.steps.empty() ? last.result.trace.initial_objective
                                                       : last.result.trace.steps.back().objective;
  m.report.status = last.result.trace.converged ? "converged" : "step_limit";
  m.report.iterations = static_cast<int>(last.result.trace.steps.size());
  m.config_json = config.calibration_json();
  m.created_at = utc_timestamp();
  const auto model_path = paths.model.empty() ? dir / "als_model.json" : paths.model;
  ensure_dir(model_path);
  save_model(model_path, m);
  for (const auto& e : sweep) {
    const auto& tr = e.result.trace;
    log << "als: rank " << e.rank << ", " << tr.steps.size() << " steps, objective "
        << format_double(tr.steps.empty() ? tr.initial_objective : tr.steps.back().objective) << "\n";
  }
}

void cmd_fetch(const RunConfig& config, const Paths& paths, bool refresh, std::ostream& log) {
  if (config.fetch.series.empty()) throw ConfigError("fetch.series is empty");
  FetchOptions opt;
  opt.cache_dir = config.fetch.cache_dir;
  opt.offline = config.fetch.offline;
  opt.refresh = refresh;
  std::vector<std::string> ids;
  std::vector<std::string> columns;
  for (const auto& s : config.fetch.series) {
    ids.push_back(s.id);
    columns.push_back(s.column);
  }
  std::vector<Series> series = fetch_series(ids, opt);
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (config.fetch.series[i].pc1) series[i] = percent_change_year_ago(series[i]);
  }
  CsvTable t = join_on_date(series, columns);
  const auto& f = config.fetch;
  std::erase_if(t.rows, [&f](const std::vector<std::string>& row) {
    return (!f.start.empty() && row[0] < f.start) || (!f.end.empty() && row[0] > f.end);
  });
  const auto out = paths.out.empty() ? config.fetch.output : paths.out;
  write_table(out, t);
  log << "fetch: " << series.size() << " series, " << t.rows.size() << " joined rows -> " << out.string() << "\n";
}

int exit_code_for(const std::exception& e) {
  if (dynamic_cast<const IoError*>(&e)) return 4;
  if (dynamic_cast<const SolverError*>(&e) || dynamic_cast<const NumericalError*>(&e)) return 3;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const InputError*>(&e) ||
      dynamic_cast<const DomainError*>(&e)) {
    return 2;
  }
  return 1;
}

}  // namespace fmmq::cli
