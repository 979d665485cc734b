#include "daf/io/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>

#include "daf/io/fs.hpp"

namespace daf::io {
namespace {

using nlohmann::json;

ReportRow parse_report_row(const std::string& path) {
  json report;
  try {
    report = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
  ReportRow row;
  try {
    row.name = report.at("name").get<std::string>();
    row.strategy = report.at("strategy").get<std::string>();
    row.init = report.at("init").get<std::string>();
    const json& metrics = report.at("metrics");
    row.metrics.avg_accuracy = metrics.at("avg_accuracy").get<double>();
    row.metrics.final_accuracy = metrics.at("final_accuracy").get<double>();
    if (!metrics.at("stability").is_null()) {
      row.metrics.stability = metrics.at("stability").get<double>();
    }
    row.metrics.plasticity = metrics.at("plasticity").get<double>();

    Index beta_tasks = 0;
    double mean_sum = 0.0;
    for (const json& task : report.at("tasks")) {
      const json& beta = task.at("beta");
      if (beta.is_null()) {
        continue;
      }
      const double task_min = beta.at("beta_min").get<double>();
      const double task_max = beta.at("beta_max").get<double>();
      if (beta_tasks == 0) {
        row.beta_min = task_min;
        row.beta_max = task_max;
      } else {
        row.beta_min = std::min(row.beta_min, task_min);
        row.beta_max = std::max(row.beta_max, task_max);
      }
      mean_sum += beta.at("beta_mean").get<double>();
      row.clipped_low += beta.at("clipped_low").get<Index>();
      row.clipped_high += beta.at("clipped_high").get<Index>();
      row.denominator_fallbacks +=
          beta.at("denominator_fallbacks").get<Index>();
      ++beta_tasks;
    }
    if (beta_tasks > 0) {
      row.has_beta = true;
      row.beta_mean = mean_sum / static_cast<double>(beta_tasks);
    }
  } catch (const json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return row;
}

void recompute_metrics(const ReportRow& row, const std::string& report_path) {
  // The accuracy CSV sits next to the report under the run's name.
  const std::filesystem::path csv_path =
      std::filesystem::path(report_path).parent_path() /
      (row.name + ".accuracy.csv");
  const harness::Metrics recomputed = harness::compute_metrics(
      parse_accuracy_matrix_csv(read_file(csv_path.string())));

  const auto check = [&row](const char* metric, double stored,
                            double fresh) {
    if (!(std::abs(stored - fresh) <= 1e-12)) {
      throw VerifyFailure("report " + row.name + ": stored " + metric + " " +
                          format_double(stored) +
                          " disagrees with the accuracy matrix (" +
                          format_double(fresh) + ")");
    }
  };
  check("avg_accuracy", row.metrics.avg_accuracy, recomputed.avg_accuracy);
  check("final_accuracy", row.metrics.final_accuracy,
        recomputed.final_accuracy);
  check("plasticity", row.metrics.plasticity, recomputed.plasticity);
  if (row.metrics.stability.has_value() != recomputed.stability.has_value()) {
    throw VerifyFailure("report " + row.name +
                        ": stability presence disagrees with the accuracy "
                        "matrix");
  }
  if (row.metrics.stability) {
    check("stability", *row.metrics.stability, *recomputed.stability);
  }
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

ReportTable collect_reports(const std::string& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("report: not a directory: " + dir);
  }
  std::vector<std::string> report_paths;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (entry.is_regular_file() && name.size() > 12 &&
        name.substr(name.size() - 12) == ".report.json") {
      report_paths.push_back(entry.path().string());
    }
  }
  if (report_paths.empty()) {
    throw ConfigError("report: no run reports (*.report.json) in " + dir);
  }
  std::sort(report_paths.begin(), report_paths.end());

  ReportTable table;
  for (const std::string& path : report_paths) {
    ReportRow row = parse_report_row(path);
    recompute_metrics(row, path);
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string render_report_table(const ReportTable& table) {
  const std::vector<std::string> header = {
      "name", "strategy",   "init",     "avg_acc", "final_acc",
      "stab", "plasticity", "beta_min", "beta_mean", "beta_max",
      "clip", "fallback"};
  std::vector<std::vector<std::string>> grid;
  grid.push_back(header);
  for (const ReportRow& row : table.rows) {
    grid.push_back(
        {row.name, row.strategy, row.init, fixed4(row.metrics.avg_accuracy),
         fixed4(row.metrics.final_accuracy),
         row.metrics.stability ? fixed4(*row.metrics.stability) : "-",
         fixed4(row.metrics.plasticity),
         row.has_beta ? fixed4(row.beta_min) : "-",
         row.has_beta ? fixed4(row.beta_mean) : "-",
         row.has_beta ? fixed4(row.beta_max) : "-",
         row.has_beta
             ? std::to_string(row.clipped_low + row.clipped_high)
             : "-",
         row.has_beta ? std::to_string(row.denominator_fallbacks) : "-"});
  }
  std::vector<std::size_t> widths(header.size(), 0);
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      widths[c] = std::max(widths[c], line[c].size());
    }
  }
  std::string out;
  for (const auto& line : grid) {
    for (std::size_t c = 0; c < line.size(); ++c) {
      out += line[c];
      if (c + 1 < line.size()) {
        out.append(widths[c] - line[c].size() + 2, ' ');
      }
    }
    out += "\n";
  }
  return out;
}

std::string report_table_csv(const ReportTable& table) {
  std::string out =
      "name,strategy,init,avg_accuracy,final_accuracy,stability,plasticity,"
      "beta_min,beta_mean,beta_max,clipped_low,clipped_high,"
      "denominator_fallbacks\n";
  for (const ReportRow& row : table.rows) {
    out += row.name + "," + row.strategy + "," + row.init + "," +
           format_double(row.metrics.avg_accuracy) + "," +
           format_double(row.metrics.final_accuracy) + ",";
    out += row.metrics.stability ? format_double(*row.metrics.stability) : "";
    out += "," + format_double(row.metrics.plasticity) + ",";
    if (row.has_beta) {
      out += format_double(row.beta_min) + "," + format_double(row.beta_mean) +
             "," + format_double(row.beta_max) + "," +
             std::to_string(row.clipped_low) + "," +
             std::to_string(row.clipped_high) + "," +
             std::to_string(row.denominator_fallbacks);
    } else {
      out += ",,,,,";
    }
    out += "\n";
  }
  return out;
}

}  // namespace daf::io
