#pragma once

#include <string>
#include <vector>

#include "daf/harness/metrics.hpp"
#include "daf/io/run.hpp"

namespace daf::io {

// One run's summary as recovered from its report JSON, with the coefficient
// diagnostics aggregated over tasks (absent for non-fusing strategies).
struct ReportRow {
  std::string name;
  std::string strategy;
  std::string init;
  harness::Metrics metrics;
  bool has_beta = false;
  double beta_min = 0.0;
  double beta_mean = 0.0;  // unweighted mean of per-task means
  double beta_max = 0.0;
  Index clipped_low = 0;
  Index clipped_high = 0;
  Index denominator_fallbacks = 0;
};

struct ReportTable {
  std::vector<ReportRow> rows;  // sorted by run name
};

// Scans `dir` for *.report.json, rebuilds each row, and recomputes the
// metrics from the sibling accuracy CSV: any stored metric more than 1e-12
// from its recomputation is a VerifyFailure. A directory with no reports is
// a ConfigError.
[[nodiscard]] ReportTable collect_reports(const std::string& dir);

// Human-readable aligned table.
[[nodiscard]] std::string render_report_table(const ReportTable& table);

// Machine-readable export, full f64 precision.
[[nodiscard]] std::string report_table_csv(const ReportTable& table);

}  // namespace daf::io
