#include "vfagg/report.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace vfagg {

namespace {

struct TableView {
  std::vector<std::size_t> n_values;
  std::vector<std::string> rows;
  std::vector<std::vector<double>> ir;  // [row][n]
  std::vector<std::size_t> counts;      // N(n), shared by every row
};

std::string sig6(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

std::string render(const TableView& t) {
  std::size_t label = 4;
  for (const auto& r : t.rows) label = std::max(label, r.size());
  const int cell = 12;
  std::ostringstream out;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(label), "IR");
  out << buf;
  for (std::size_t n : t.n_values) {
    std::snprintf(buf, sizeof buf, "%*s", cell, ("n=" + std::to_string(n)).c_str());
    out << buf;
  }
  out << '\n';
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(label), t.rows[r].c_str());
    out << buf;
    for (double v : t.ir[r]) {
      std::snprintf(buf, sizeof buf, "%*s", cell, sig6(v).c_str());
      out << buf;
    }
    out << '\n';
  }
  if (!t.counts.empty()) {
    std::snprintf(buf, sizeof buf, "%-*s", static_cast<int>(label), "N(n)");
    out << buf;
    for (std::size_t c : t.counts) {
      std::snprintf(buf, sizeof buf, "%*zu", cell, c);
      out << buf;
    }
    out << '\n';
  }
  return out.str();
}

TableView view_of(const ExperimentReport& report) {
  TableView t;
  t.n_values = report.n_values;
  t.rows = report.table_rows;
  for (const auto& row : t.rows) {
    std::vector<double> values;
    for (const auto& p : report.ir.at(row)) values.push_back(p.ir);
    t.ir.push_back(std::move(values));
  }
  if (!t.rows.empty()) {
    for (const auto& p : report.ir.at(t.rows.front())) t.counts.push_back(p.count);
  }
  return t;
}

}  // namespace

std::string full_precision(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string ir_table_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "row";
  for (std::size_t n : report.n_values) out << ',' << n;
  out << '\n';
  for (const auto& row : report.table_rows) {
    out << row;
    for (const auto& p : report.ir.at(row)) out << ',' << full_precision(p.ir);
    out << '\n';
  }
  return out.str();
}

std::string ir_stats_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "row,n,ir,count,stdev,excluded,mean_rmse\n";
  for (const auto& row : report.table_rows) {
    for (const auto& p : report.ir.at(row)) {
      out << row << ',' << p.n << ',' << full_precision(p.ir) << ',' << p.count << ','
          << full_precision(p.stdev) << ',' << p.excluded << ','
          << full_precision(report.mean_rmse(row, p.n)) << '\n';
    }
  }
  return out.str();
}

std::string ir_table_text(const ExperimentReport& report) { return render(view_of(report)); }

std::string records_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "patient_id,n,method,rmse_method,rmse_lr_baseline,series_length,evaluated\n";
  for (const auto& r : report.records) {
    out << r.patient_id << ',' << r.n << ',' << r.method << ',' << full_precision(r.rmse_method) << ','
        << full_precision(r.rmse_lr_baseline) << ',' << r.series_length << ','
        << (r.evaluated() ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string eta_curves_csv(const ExperimentReport& report) {
  std::ostringstream out;
  out << "strategy,n,eta_sqrt_n,ir\n";
  for (const auto& [strategy, curves] : report.eta_curves) {
    for (std::size_t ni = 0; ni < curves.size(); ++ni) {
      for (std::size_t g = 0; g < curves[ni].size(); ++g) {
        out << strategy << ',' << report.n_values[ni] << ',' << full_precision(report.grid[g]) << ','
            << full_precision(curves[ni][g]) << '\n';
      }
    }
  }
  return out.str();
}

Json summary_json(const ExperimentReport& report, const RunConfig& config) {
  Json doc;
  doc["config"] = run_config_to_json(config);
  doc["n_values"] = report.n_values;
  doc["rows"] = report.table_rows;
  Json ir = Json::object();
  for (const auto& row : report.table_rows) {
    Json points = Json::array();
    for (const auto& p : report.ir.at(row)) {
      Json item;
      item["n"] = p.n;
      item["ir"] = p.ir;
      item["count"] = p.count;
      item["stdev"] = p.stdev;
      item["excluded"] = p.excluded;
      item["mean_rmse"] = report.mean_rmse(row, p.n);
      points.push_back(std::move(item));
    }
    ir[row] = std::move(points);
  }
  doc["ir"] = std::move(ir);

  Json comparisons = Json::array();
  for (const auto& c : report.comparisons) {
    Json item;
    item["method"] = c.method;
    item["reference"] = c.reference;
    item["n"] = c.n;
    item["wins"] = c.wins;
    item["losses"] = c.losses;
    item["ties"] = c.ties;
    item["p_value"] = c.p_value ? Json(*c.p_value) : Json(nullptr);
    comparisons.push_back(std::move(item));
  }
  doc["comparisons"] = std::move(comparisons);

  Json folds = Json::array();
  for (const auto& f : report.folds) {
    Json item;
    item["fold"] = f.fold;
    item["learning"] = f.learning;
    item["test"] = f.test;
    item["skipped"] = f.skipped;
    item["pool_sizes"] = {{"lr", f.pool_sizes[kPoolLR]}, {"sc", f.pool_sizes[kPoolSC]},
                          {"tslr", f.pool_sizes[kPoolTSLR]}};
    Json eta = Json::object();
    for (const auto& [tag, values] : f.eta_ir) eta[tag] = values;
    item["eta_ir"] = std::move(eta);
    folds.push_back(std::move(item));
  }
  doc["folds"] = std::move(folds);
  doc["warnings"] = report.warnings;
  return doc;
}

std::string ir_table_text(const Json& summary) {
  try {
    TableView t;
    t.n_values = summary.at("n_values").get<std::vector<std::size_t>>();
    t.rows = summary.at("rows").get<std::vector<std::string>>();
    for (const auto& row : t.rows) {
      std::vector<double> values;
      for (const auto& p : summary.at("ir").at(row)) values.push_back(p.at("ir").get<double>());
      if (values.size() != t.n_values.size()) throw DataError("summary: row '" + row + "' has wrong length");
      t.ir.push_back(std::move(values));
    }
    if (!t.rows.empty()) {
      for (const auto& p : summary.at("ir").at(t.rows.front())) t.counts.push_back(p.at("count").get<std::size_t>());
    }
    return render(t);
  } catch (const Json::exception& e) {
    throw DataError(std::string("summary: ") + e.what());
  }
}

void write_report(const std::filesystem::path& dir, const ExperimentReport& report,
                  const RunConfig& config) {
  std::filesystem::create_directories(dir);
  write_text(dir / "ir_table.csv", ir_table_csv(report));
  write_text(dir / "ir_stats.csv", ir_stats_csv(report));
  write_text(dir / "ir_table.txt", ir_table_text(report));
  write_text(dir / "records.csv", records_csv(report));
  write_text(dir / "eta_curves.csv", eta_curves_csv(report));
  write_text(dir / "summary.json", summary_json(report, config).dump(2) + "\n");
}

}  // namespace vfagg
