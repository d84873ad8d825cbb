#pragma once

#include "fmmq/model_io.hpp"
#include "fmmq/run_config.hpp"

#include <filesystem>
#include <iosfwd>

namespace fmmq::cli {

/// Optional path arguments; empty means the default under config.output_dir.
struct Paths {
  std::filesystem::path model;
  std::filesystem::path data;
  std::filesystem::path out;
};

/// Standardize (when configured), build the ModelSpec from the data and calibrate.
FittedModel fit_model(const RunConfig& config, const Dataset& raw);

void cmd_fit(const RunConfig& config, const Paths& paths, std::ostream& log);
void cmd_predict(const RunConfig& config, const Paths& paths, std::ostream& log);
void cmd_score(const RunConfig& config, const Paths& paths, std::ostream& log);
void cmd_cv(const RunConfig& config, const Paths& paths, std::ostream& log);
void cmd_surface(const RunConfig& config, const Paths& paths, std::ostream& log);
void cmd_als(const RunConfig& config, const Paths& paths, std::ostream& log);
void cmd_fetch(const RunConfig& config, const Paths& paths, bool refresh, std::ostream& log);

/// 2 for validation errors, 3 for solver failures, 4 for I/O, 1 otherwise.
int exit_code_for(const std::exception& e);

}  // namespace fmmq::cli
