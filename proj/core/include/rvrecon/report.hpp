#pragma once

#include <filesystem>
#include <ostream>
#include <string>

#include "rvrecon/experiment.hpp"

namespace rvrecon {

/// Ratio table: one row per (panel, procedure other than HAR), columns
/// MSE_h.. then QLIKE_h.. in horizon order. Panels are the assets followed
/// by geo_mean.
void write_ratio_csv(const EvaluationReport& report, std::ostream& out);

/// The same table as fixed-width text with three decimals.
std::string format_ratio_table(const EvaluationReport& report);

/// One-sided DM p-values, one column per benchmark (dm_HAR, dm_SV, dm_PV3).
void write_dm_csv(const EvaluationReport& report, std::ostream& out);

void write_mcs_csv(const EvaluationReport& report, std::ostream& out);

/// mean_rank, lower, upper per procedure; intervals are mean_rank -+ half_width.
void write_nemenyi_csv(const EvaluationReport& report, std::ostream& out);

/// Writes ratios.csv, ratios.txt, dm_pvalues.csv, mcs.csv and nemenyi.csv
/// into `dir` (created if needed).
void write_report(const std::filesystem::path& dir, const EvaluationReport& report);

} // namespace rvrecon
