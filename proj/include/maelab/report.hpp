#pragma once

#include "maelab/restore.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace maelab {

/// Canonical text serialization of a run report: the "RRPT1" version line,
/// the resolved config echo, the per-step loss table, the per-image
/// evaluation table with its aggregate row, run metadata, and a trailing
/// "checksum = <crc32>" line over every preceding byte. save -> load -> save
/// reproduces the file bit-exactly.
std::string report_text(const RunReport& report);
void save_report(const std::filesystem::path& path, const RunReport& report);
RunReport parse_report_text(const std::string& text, const std::string& source);
RunReport load_report(const std::filesystem::path& path);

/// "step,base,feature,total" CSV of the training curve.
std::string train_log_csv(const RunReport& report);
/// "image,<metric...>" CSV of the evaluation table plus the aggregate row.
std::string eval_csv(const EvalTable& eval);

/// Field-wise equality with wall time zeroed out on both sides.
bool reports_equal_ignoring_wall_time(const RunReport& a, const RunReport& b);

// ---------------------------------------------------------------------------
// Cross-run comparison
// ---------------------------------------------------------------------------

struct ComparisonTable {
    std::vector<std::string> metric_names;   // column order = the runs' metric list
    std::vector<std::string> row_labels;     // configuration of each run
    std::vector<std::vector<double>> values; // [row][column] aggregate metrics
    std::vector<std::vector<bool>> best;     // best-in-column flags (ties: all flagged)
};

/// Builds the comparison table for runs that share a task, validation set,
/// and metric list. Higher is better for PSNR and SSIM, lower for NIQE, SAM,
/// and ERGAS.
ComparisonTable compare_runs(const std::vector<RunReport>& reports);
std::string comparison_csv(const ComparisonTable& table);
std::string comparison_text(const ComparisonTable& table);

} // namespace maelab
