#pragma once

// Top-tuning vs fine-tuning comparison: per-dataset accuracy difference and
// training speed-up, with aggregate statistics.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "toptune/errors.hpp"
#include "toptune/feature_store.hpp"

namespace toptune {

inline constexpr const char* kReportSchemaId = "toptune.comparison/1";

/// acc_top - acc_fine, both percentages in [0, 100].
inline double compute_delta_acc(double acc_top, double acc_fine) {
  for (double a : {acc_top, acc_fine}) {
    if (!(a >= 0.0 && a <= 100.0)) {
      throw ValidationError("accuracy must be a percentage in [0, 100] (got " + std::to_string(a) + ")");
    }
  }
  return acc_top - acc_fine;
}

/// time_fine / time_top.
inline double compute_speedup(double time_fine_s, double time_top_s) {
  for (double t : {time_fine_s, time_top_s}) {
    if (!(t > 0.0) || !std::isfinite(t)) {
      throw ValidationError("training time must be positive and finite (got " + std::to_string(t) + ")");
    }
  }
  return time_fine_s / time_top_s;
}

struct AggregateStats {
  std::size_t count = 0;
  double mean_speedup = 0.0;
  double std_speedup = 0.0;         // population (divide by count)
  double sample_std_speedup = 0.0;  // divide by count - 1; 0 for one value
  double band = 2.5;
  std::size_t within_band = 0;
  double frac_within_band = 0.0;
};

/// Mean and spread of `speedups`, and the fraction of `deltas` with |delta| <= band.
/// The band test allows 1e-9 of slack so values printed with two decimals
/// (2.50) count as inside.
inline AggregateStats aggregate_stats(std::span<const double> speedups,
                                      std::span<const double> deltas, double band) {
  if (speedups.empty() || deltas.empty()) throw ValidationError("aggregate_stats needs non-empty input");
  if (!(band >= 0.0)) throw ValidationError("band must be >= 0");
  AggregateStats s;
  s.count = speedups.size();
  s.band = band;
  double sum = 0.0;
  for (double v : speedups) sum += v;
  s.mean_speedup = sum / static_cast<double>(s.count);
  double ss = 0.0;
  for (double v : speedups) ss += (v - s.mean_speedup) * (v - s.mean_speedup);
  s.std_speedup = std::sqrt(ss / static_cast<double>(s.count));
  s.sample_std_speedup = s.count > 1 ? std::sqrt(ss / static_cast<double>(s.count - 1)) : 0.0;
  for (double d : deltas) s.within_band += std::abs(d) <= band + 1e-9 ? 1 : 0;
  s.frac_within_band = static_cast<double>(s.within_band) / static_cast<double>(deltas.size());
  return s;
}

struct TopResult {
  std::string dataset;
  double acc_top_percent = 0.0;
  double time_top_s = 0.0;
};

struct BaselineResult {
  std::string dataset;
  double acc_fine_percent = 0.0;
  double time_fine_s = 0.0;
  std::string protocol_tag;
};

struct ComparisonRow {
  std::string dataset;
  double acc_top = 0.0;    // percent
  double acc_fine = 0.0;   // percent
  double delta_acc = 0.0;  // percent
  double time_top_s = 0.0;
  double time_fine_s = 0.0;
  double speedup = 0.0;
  std::string protocol_tag;
};

struct ComparisonReport {
  std::vector<ComparisonRow> rows;
  AggregateStats aggregate;

  void validate() const {
    if (rows.empty()) throw ValidationError("comparison report has no rows");
    for (const auto& r : rows) {
      if (std::abs(r.delta_acc - (r.acc_top - r.acc_fine)) > 1e-9) {
        throw ValidationError(r.dataset + ": delta_acc does not equal acc_top - acc_fine");
      }
      if (r.speedup != r.time_fine_s / r.time_top_s) {
        throw ValidationError(r.dataset + ": speedup does not equal time_fine_s / time_top_s");
      }
    }
  }
};

namespace detail {

// Accepts a single object, an array of objects, or {"results": [...]}.
inline std::vector<nlohmann::json> result_objects(const nlohmann::json& doc, const char* what) {
  if (doc.is_array()) return {doc.begin(), doc.end()};
  if (doc.is_object() && doc.contains("results") && doc["results"].is_array()) {
    return {doc["results"].begin(), doc["results"].end()};
  }
  if (doc.is_object()) return {doc};
  throw FormatError(std::string(what) + ": expected a JSON object or array");
}

inline double number_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw FormatError(where + ": missing key \"" + key + "\"");
  if (!obj[key].is_number()) throw FormatError(where + ": key \"" + key + "\" must be a number");
  return obj[key].get<double>();
}

inline std::string string_field(const nlohmann::json& obj, const char* key, const std::string& where) {
  if (!obj.contains(key)) throw FormatError(where + ": missing key \"" + key + "\"");
  if (!obj[key].is_string()) throw FormatError(where + ": key \"" + key + "\" must be a string");
  return obj[key].get<std::string>();
}

// When a grid-cv output carries per-config times, time_top_s must be their sum.
inline void check_time_accounting(const nlohmann::json& obj, double time_top_s,
                                  const std::string& where) {
  if (!obj.contains("configs") || !obj["configs"].is_array()) return;
  double sum = 0.0;
  for (const auto& c : obj["configs"]) sum += number_field(c, "wall_time_s", where + " config");
  if (std::abs(sum - time_top_s) > 1e-9 * std::max(1.0, std::abs(sum))) {
    throw ValidationError(where + ": time_top_s (" + std::to_string(time_top_s) +
                          ") is not the sum of per-config wall times (" + std::to_string(sum) + ")");
  }
}

inline std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, format, v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// Top-tuning results: objects with dataset, acc_top_percent, time_top_s.
inline std::vector<TopResult> parse_top_results(const nlohmann::json& doc) {
  std::vector<TopResult> out;
  std::size_t i = 0;
  for (const auto& obj : detail::result_objects(doc, "top-tuning results")) {
    const std::string where = "top-tuning result #" + std::to_string(i++);
    TopResult r;
    r.dataset = detail::string_field(obj, "dataset", where);
    r.acc_top_percent = detail::number_field(obj, "acc_top_percent", where);
    r.time_top_s = detail::number_field(obj, "time_top_s", where);
    detail::check_time_accounting(obj, r.time_top_s, where);
    out.push_back(std::move(r));
  }
  return out;
}

/// Baselines: objects with dataset, acc_fine_percent, time_fine_s, protocol_tag.
inline std::vector<BaselineResult> parse_baselines(const nlohmann::json& doc) {
  std::vector<BaselineResult> out;
  std::size_t i = 0;
  for (const auto& obj : detail::result_objects(doc, "baseline results")) {
    const std::string where = "baseline #" + std::to_string(i++);
    BaselineResult r;
    r.dataset = detail::string_field(obj, "dataset", where);
    r.acc_fine_percent = detail::number_field(obj, "acc_fine_percent", where);
    r.time_fine_s = detail::number_field(obj, "time_fine_s", where);
    r.protocol_tag = detail::string_field(obj, "protocol_tag", where);
    out.push_back(std::move(r));
  }
  return out;
}

/// Joins results by dataset name; rows follow the order of `top`.
/// Both sides must name exactly the same datasets, each once.
inline ComparisonReport compare(const std::vector<TopResult>& top,
                                const std::vector<BaselineResult>& baselines, double band = 2.5) {
  std::map<std::string, const BaselineResult*> by_name;
  for (const auto& b : baselines) {
    if (!by_name.emplace(b.dataset, &b).second) {
      throw ValidationError("duplicate baseline dataset \"" + b.dataset + "\"");
    }
  }
  std::set<std::string> seen;
  std::vector<std::string> missing;
  for (const auto& t : top) {
    if (!seen.insert(t.dataset).second) {
      throw ValidationError("duplicate top-tuning dataset \"" + t.dataset + "\"");
    }
    if (!by_name.count(t.dataset)) missing.push_back(t.dataset);
  }
  for (const auto& [name, _] : by_name)
    if (!seen.count(name)) missing.push_back(name);
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw ValidationError("dataset names differ between inputs: " + list);
  }

  ComparisonReport report;
  std::vector<double> speedups;
  std::vector<double> deltas;
  for (const auto& t : top) {
    const BaselineResult& b = *by_name.at(t.dataset);
    ComparisonRow row;
    row.dataset = t.dataset;
    row.acc_top = t.acc_top_percent;
    row.acc_fine = b.acc_fine_percent;
    row.delta_acc = compute_delta_acc(row.acc_top, row.acc_fine);
    row.time_top_s = t.time_top_s;
    row.time_fine_s = b.time_fine_s;
    row.speedup = compute_speedup(row.time_fine_s, row.time_top_s);
    row.protocol_tag = b.protocol_tag;
    speedups.push_back(row.speedup);
    deltas.push_back(row.delta_acc);
    report.rows.push_back(std::move(row));
  }
  if (report.rows.empty()) throw ValidationError("nothing to compare");
  report.aggregate = aggregate_stats(speedups, deltas, band);
  return report;
}

enum class ReportFormat { markdown, csv, json };

inline ReportFormat parse_report_format(const std::string& name) {
  if (name == "markdown" || name == "md") return ReportFormat::markdown;
  if (name == "csv") return ReportFormat::csv;
  if (name == "json") return ReportFormat::json;
  throw ValidationError("unknown report format \"" + name + "\" (markdown, csv or json)");
}

inline nlohmann::json report_json(const ComparisonReport& report) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : report.rows) {
    rows.push_back({{"dataset", r.dataset},
                    {"acc_top_percent", r.acc_top},
                    {"acc_fine_percent", r.acc_fine},
                    {"delta_acc_percent", r.delta_acc},
                    {"time_top_s", r.time_top_s},
                    {"time_fine_s", r.time_fine_s},
                    {"speedup", r.speedup},
                    {"protocol_tag", r.protocol_tag}});
  }
  const auto& a = report.aggregate;
  return {{"schema", kReportSchemaId},
          {"rows", rows},
          {"aggregate",
           {{"count", a.count},
            {"mean_speedup", a.mean_speedup},
            {"std_speedup", a.std_speedup},
            {"sample_std_speedup", a.sample_std_speedup},
            {"band_percent", a.band},
            {"within_band", a.within_band},
            {"frac_within_band", a.frac_within_band}}}};
}

/// Markdown table (Dataset | ΔAcc | SpUp, plus absolute columns when
/// `extended`), followed by a one-line aggregate summary.
inline std::string render_markdown(const ComparisonReport& report, bool extended = false) {
  std::string out = "| Dataset | ΔAcc | SpUp |";
  std::string sep = "|---|---:|---:|";
  if (extended) {
    out += " Acc top | Acc fine | Time top (s) | Time fine (s) |";
    sep += "---:|---:|---:|---:|";
  }
  out += "\n" + sep + "\n";
  for (const auto& r : report.rows) {
    out += "| " + r.dataset + " | " + detail::fmt("%+.2f%%", r.delta_acc) + " | " +
           detail::fmt("%.2f×", r.speedup) + " |";
    if (extended) {
      out += " " + detail::fmt("%.1f", r.acc_top) + " | " + detail::fmt("%.1f", r.acc_fine) + " | " +
             detail::fmt("%.2f", r.time_top_s) + " | " + detail::fmt("%.2f", r.time_fine_s) + " |";
    }
    out += "\n";
  }
  const auto& a = report.aggregate;
  out += "\nSpeed-up " + detail::fmt("%.2f", a.mean_speedup) + " ± " +
         detail::fmt("%.2f", a.std_speedup) + " (population std, n=" + std::to_string(a.count) +
         "); |ΔAcc| ≤ " + detail::fmt("%g", a.band) + "% in " + std::to_string(a.within_band) +
         "/" + std::to_string(a.count) + " rows (" +
         detail::fmt("%.1f", 100.0 * a.frac_within_band) + "%)\n";
  return out;
}

/// CSV with a header row and full-precision numbers.
inline std::string render_csv(const ComparisonReport& report, bool extended = false) {
  std::string out = "dataset,delta_acc_percent,speedup";
  if (extended) out += ",acc_top_percent,acc_fine_percent,time_top_s,time_fine_s,protocol_tag";
  out += "\n";
  for (const auto& r : report.rows) {
    out += detail::csv_field(r.dataset) + "," + detail::fmt("%.17g", r.delta_acc) + "," +
           detail::fmt("%.17g", r.speedup);
    if (extended) {
      out += "," + detail::fmt("%.17g", r.acc_top) + "," + detail::fmt("%.17g", r.acc_fine) + "," +
             detail::fmt("%.17g", r.time_top_s) + "," + detail::fmt("%.17g", r.time_fine_s) + "," +
             detail::csv_field(r.protocol_tag);
    }
    out += "\n";
  }
  return out;
}

inline std::string render_report(const ComparisonReport& report, ReportFormat format,
                                 bool extended = false) {
  report.validate();
  switch (format) {
    case ReportFormat::markdown: return render_markdown(report, extended);
    case ReportFormat::csv: return render_csv(report, extended);
    case ReportFormat::json: return report_json(report).dump(2) + "\n";
  }
  throw ValidationError("unknown report format");
}

inline void emit_report(const ComparisonReport& report, ReportFormat format,
                        const std::filesystem::path& path, bool extended = false) {
  write_file_bytes(path, render_report(report, format, extended));
}

}  // namespace toptune
