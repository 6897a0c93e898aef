#pragma once

// Report files written by `evaluate`: IR tables (rows are strategy x eta
// choice, columns are n), per-patient records, a JSON summary with sign-test
// p-values and the IR-versus-eta*sqrt(n) curves.

#include <filesystem>
#include <string>

#include "vfagg/evaluation.hpp"
#include "vfagg/io.hpp"

namespace vfagg {

/// Wide table, full precision: row,<n_min>,...,<n_max>.
std::string ir_table_csv(const ExperimentReport& report);

/// Long form with N(n), standard deviation, exclusions and mean RMSE.
std::string ir_stats_csv(const ExperimentReport& report);

/// Aligned text table, 6 significant digits.
std::string ir_table_text(const ExperimentReport& report);

/// patient_id,n,method,rmse_method,rmse_lr_baseline,series_length,evaluated
std::string records_csv(const ExperimentReport& report);

/// strategy,n,eta_sqrt_n,ir
std::string eta_curves_csv(const ExperimentReport& report);

Json summary_json(const ExperimentReport& report, const RunConfig& config);

/// Text table rebuilt from a summary document (the `report` subcommand).
std::string ir_table_text(const Json& summary);

/// Writes every file above into `dir`, creating it when missing.
void write_report(const std::filesystem::path& dir, const ExperimentReport& report,
                  const RunConfig& config);

/// "%.17g", the shortest form that round-trips any double.
std::string full_precision(double x);

}  // namespace vfagg
