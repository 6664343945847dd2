#pragma once

#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "datamix/errors.hpp"
#include "datamix/eval.hpp"
#include "datamix/learned.hpp"
#include "datamix/medu.hpp"
#include "datamix/mixcore.hpp"
#include "datamix/optimizer.hpp"
#include "datamix/sampler.hpp"

namespace datamix::io {

using ordered_json = nlohmann::ordered_json;

// ---------------------------------------------------------------------------
// Primitive helpers
// ---------------------------------------------------------------------------

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  out << content;
}

inline bool has_extension(const std::filesystem::path& p, std::string_view ext) {
  return p.extension() == ext;
}

// Rounds to 12 significant digits; the JSON writer then prints the shortest
// round-trip form of the rounded value.
inline double round12(double v) {
  if (v == 0.0 || !std::isfinite(v)) return v;
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return std::strtod(buf, nullptr);
}

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(std::string_view text, std::string_view what) {
  const std::string s = trim(text);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size())
    throw DataError("cannot parse " + std::string(what) + " '" + s + "' as a number");
  return v;
}

inline std::uint64_t parse_count(std::string_view text, std::string_view what) {
  const std::string s = trim(text);
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
    throw DataError("cannot parse " + std::string(what) + " '" + s +
                    "' as a non-negative integer");
  return v;
}

// Minimal RFC 4180 reader: comma separated, double-quoted fields with ""
// escapes, blank lines skipped.
inline std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool quoted = false, any = false;
  auto end_row = [&] {
    row.push_back(std::move(field));
    field.clear();
    if (!(row.size() == 1 && trim(row[0]).empty() && !any)) rows.push_back(std::move(row));
    row.clear();
    any = false;
  };
  for (std::size_t i = 0; i < text.size(); ++i) {
    const char c = text[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    if (c == '"') {
      quoted = true;
      any = true;
    } else if (c == ',') {
      row.push_back(std::move(field));
      field.clear();
      any = true;
    } else if (c == '\n') {
      end_row();
    } else if (c != '\r') {
      field.push_back(c);
    }
  }
  if (quoted) throw DataError("unterminated quoted CSV field");
  if (!field.empty() || !row.empty()) end_row();
  return rows;
}

inline std::string csv_escape(std::string_view s) {
  if (s.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

template <typename Fn>
void for_each_jsonl(std::string_view text, Fn&& fn) {
  std::size_t line_no = 0, pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    const std::string line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty()) continue;
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw DataError("invalid JSON on line " + std::to_string(line_no));
    fn(j, line_no);
  }
}

// ---------------------------------------------------------------------------
// Dataset tables and mixes
// ---------------------------------------------------------------------------

inline DatasetTable dataset_table_from_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0].size() < 2 || trim(rows[0][0]) != "name" ||
      trim(rows[0][1]) != "tokens")
    throw DataError("dataset CSV must start with a 'name,tokens' header");
  std::vector<DatasetEntry> entries;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() < 2) throw DataError("dataset CSV row " + std::to_string(r) + " is short");
    entries.push_back({trim(rows[r][0]), parse_count(rows[r][1], "token count")});
  }
  return DatasetTable(std::move(entries));
}

inline DatasetTable dataset_table_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw DataError("dataset JSON must be an array of {name, tokens}");
  std::vector<DatasetEntry> entries;
  for (const auto& e : j) {
    if (!e.contains("name") || !e.contains("tokens"))
      throw DataError("dataset JSON entries need 'name' and 'tokens'");
    const auto& t = e.at("tokens");
    if (!t.is_number_unsigned() && !(t.is_number_integer() && t.get<std::int64_t>() > 0))
      throw DataError("token count for '" + e.at("name").get<std::string>() +
                      "' must be a positive integer");
    entries.push_back({e.at("name").get<std::string>(), t.get<std::uint64_t>()});
  }
  return DatasetTable(std::move(entries));
}

inline DatasetTable load_dataset_table(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  if (has_extension(path, ".json")) {
    auto j = nlohmann::json::parse(text, nullptr, false);
    if (j.is_discarded()) throw DataError("invalid JSON in " + path.string());
    return dataset_table_from_json(j);
  }
  return dataset_table_from_csv(text);
}

// {"weights": {name: fraction}} in table order, 12 significant digits.
inline ordered_json mix_to_json(const DataMix& mix) {
  ordered_json weights = ordered_json::object();
  for (std::size_t i = 0; i < mix.size(); ++i)
    weights[mix.table().name(i)] = round12(mix[i]);
  return ordered_json{{"weights", weights}};
}

inline std::string mix_json_text(const DataMix& mix) {
  return mix_to_json(mix).dump(2) + "\n";
}

// Reads a mix file written by mix_to_json. Weights were rounded on output,
// so they are renormalized here.
inline DataMix mix_from_json(const nlohmann::json& j, const DatasetTable& table) {
  if (!j.contains("weights") || !j.at("weights").is_object())
    throw DataError("mix JSON needs a 'weights' object");
  const auto& w = j.at("weights");
  if (w.size() != table.size()) throw DataError("mix names do not match the dataset table");
  std::vector<double> weights(table.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    if (!w.contains(table.name(i)))
      throw DataError("mix lacks dataset '" + table.name(i) + "'");
    weights[i] = w.at(table.name(i)).get<double>();
    sum += weights[i];
  }
  if (!(sum > 0.0)) throw DataError("mix weights sum to zero");
  for (double& x : weights) x /= sum;
  return DataMix(table, std::move(weights));
}

inline DataMix load_mix(const std::filesystem::path& path, const DatasetTable& table) {
  auto j = nlohmann::json::parse(read_file(path), nullptr, false);
  if (j.is_discarded()) throw DataError("invalid JSON in " + path.string());
  return mix_from_json(j, table);
}

// Table with names only, for files that carry weights but no token counts.
inline DatasetTable table_from_mix_json(const nlohmann::ordered_json& j) {
  std::vector<DatasetEntry> entries;
  for (const auto& [name, _] : j.at("weights").items()) entries.push_back({name, 1});
  return DatasetTable(std::move(entries));
}

// ---------------------------------------------------------------------------
// Metric matrices
// ---------------------------------------------------------------------------

struct MetricTable {
  std::vector<std::string> datasets;
  std::vector<std::string> tasks;
  Matrix values;

  // Rows reordered to follow `table`; every table dataset must be present.
  Matrix aligned_to(const DatasetTable& table) const {
    Matrix m(table.size(), tasks.size());
    for (std::size_t r = 0; r < table.size(); ++r) {
      auto it = std::find(datasets.begin(), datasets.end(), table.name(r));
      if (it == datasets.end())
        throw DataError("metric matrix has no row for dataset '" + table.name(r) + "'");
      const auto src = static_cast<std::size_t>(it - datasets.begin());
      for (std::size_t c = 0; c < tasks.size(); ++c) m(r, c) = values(src, c);
    }
    return m;
  }
};

// CSV: header "dataset,<task>,...", one row per dataset.
inline MetricTable metric_table_from_csv(std::string_view text) {
  const auto rows = parse_csv(text);
  if (rows.empty() || rows[0].size() < 2)
    throw DataError("metric CSV needs a header with at least one task column");
  MetricTable t;
  for (std::size_t c = 1; c < rows[0].size(); ++c) t.tasks.push_back(trim(rows[0][c]));
  t.values = Matrix(rows.size() - 1, t.tasks.size());
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != rows[0].size())
      throw DataError("metric CSV row " + std::to_string(r) + " has the wrong width");
    t.datasets.push_back(trim(rows[r][0]));
    for (std::size_t c = 1; c < rows[r].size(); ++c)
      t.values(r - 1, c - 1) = parse_double(rows[r][c], "metric");
  }
  return t;
}

// JSON: {"tasks": [...], "rows": {"<dataset>": [values...]}}.
inline MetricTable metric_table_from_json(const nlohmann::ordered_json& j) {
  MetricTable t;
  t.tasks = j.at("tasks").get<std::vector<std::string>>();
  const auto& rows = j.at("rows");
  t.values = Matrix(rows.size(), t.tasks.size());
  std::size_t r = 0;
  for (const auto& [name, vals] : rows.items()) {
    if (vals.size() != t.tasks.size())
      throw DataError("metric row '" + name + "' has the wrong width");
    t.datasets.push_back(name);
    for (std::size_t c = 0; c < t.tasks.size(); ++c) {
      if (!vals[c].is_number()) throw DataError("metric for '" + name + "' is not a number");
      t.values(r, c) = vals[c].get<double>();
    }
    ++r;
  }
  return t;
}

inline MetricTable load_metric_table(const std::filesystem::path& path) {
  const std::string text = read_file(path);
  if (has_extension(path, ".json")) {
    auto j = nlohmann::ordered_json::parse(text, nullptr, false);
    if (j.is_discarded()) throw DataError("invalid JSON in " + path.string());
    return metric_table_from_json(j);
  }
  return metric_table_from_csv(text);
}

inline std::string metric_csv_text(const std::vector<std::string>& datasets,
                                   const std::vector<std::string>& tasks, const Matrix& m) {
  std::string out = "dataset";
  for (const auto& t : tasks) out += "," + csv_escape(t);
  out += "\n";
  for (std::size_t r = 0; r < datasets.size(); ++r) {
    out += csv_escape(datasets[r]);
    for (std::size_t c = 0; c < tasks.size(); ++c) out += "," + format_number(m(r, c));
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Learned-baseline streams
// ---------------------------------------------------------------------------

// JSONL, one array of |D| reals per line.
inline ExcessLossTrace excess_trace_from_jsonl(std::string_view text) {
  ExcessLossTrace trace;
  for_each_jsonl(text, [&](const nlohmann::json& j, std::size_t line) {
    if (!j.is_array()) throw DataError("trace line " + std::to_string(line) + " is not an array");
    std::vector<double> step;
    for (const auto& v : j) {
      if (!v.is_number())
        throw DataError("trace line " + std::to_string(line) + " has a non-numeric entry");
      step.push_back(v.get<double>());
    }
    trace.push_back(std::move(step));
  });
  return trace;
}

inline std::string weight_history_jsonl(const DatasetTable& table,
                                        const std::vector<std::vector<double>>& history) {
  std::string out;
  for (std::size_t s = 0; s < history.size(); ++s) {
    ordered_json w = ordered_json::object();
    for (std::size_t i = 0; i < table.size(); ++i) w[table.name(i)] = round12(history[s][i]);
    out += ordered_json{{"step", s + 1}, {"weights", w}}.dump() + "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Document manifests and corpora
// ---------------------------------------------------------------------------

// JSONL of {"id", "token_count"}.
inline std::vector<Document> manifest_from_jsonl(std::string_view text) {
  std::vector<Document> docs;
  for_each_jsonl(text, [&](const nlohmann::json& j, std::size_t line) {
    if (!j.contains("id") || !j.contains("token_count"))
      throw DataError("manifest line " + std::to_string(line) + " needs id and token_count");
    const auto& id = j.at("id");
    Document d{id.is_string() ? id.get<std::string>() : id.dump(),
               j.at("token_count").get<std::uint64_t>()};
    if (d.token_count < 1)
      throw DataError("manifest line " + std::to_string(line) + " has no tokens");
    docs.push_back(std::move(d));
  });
  return docs;
}

inline std::string manifest_jsonl(const std::vector<Document>& docs) {
  std::string out;
  for (const auto& d : docs)
    out += ordered_json{{"id", d.id}, {"token_count", d.token_count}}.dump() + "\n";
  return out;
}

// JSONL of {"id", "text"}.
inline std::vector<medu::CorpusDocument> corpus_from_jsonl(std::string_view text) {
  std::vector<medu::CorpusDocument> docs;
  for_each_jsonl(text, [&](const nlohmann::json& j, std::size_t line) {
    if (!j.contains("text"))
      throw DataError("corpus line " + std::to_string(line) + " needs a text field");
    std::string id = j.contains("id") ? (j.at("id").is_string() ? j.at("id").get<std::string>()
                                                                : j.at("id").dump())
                                      : std::to_string(line);
    docs.push_back({std::move(id), j.at("text").get<std::string>()});
  });
  return docs;
}

// ---------------------------------------------------------------------------
// Run tables
// ---------------------------------------------------------------------------

// CSV: "method,[setting,]flops,<task>,...". Empty cells are missing values
// and load as NaN.
inline std::vector<eval::RunRecord> runs_from_csv(std::string_view text,
                                                  std::vector<std::string>* task_names = nullptr) {
  const auto rows = parse_csv(text);
  if (rows.empty()) throw DataError("run table is empty");
  const auto& header = rows[0];
  if (header.size() < 3 || trim(header[0]) != "method")
    throw DataError("run table header must start with 'method'");
  std::size_t col = 1;
  const bool has_setting = trim(header[1]) == "setting";
  if (has_setting) ++col;
  if (trim(header[col]) != "flops") throw DataError("run table needs a 'flops' column");
  const std::size_t first_task = col + 1;
  std::vector<std::string> tasks;
  for (std::size_t c = first_task; c < header.size(); ++c) tasks.push_back(trim(header[c]));
  if (tasks.empty()) throw DataError("run table has no task columns");

  std::vector<eval::RunRecord> runs;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw DataError("run table row " + std::to_string(r) + " has the wrong width");
    eval::RunRecord rec;
    rec.method = trim(rows[r][0]);
    if (has_setting) rec.setting = trim(rows[r][1]);
    rec.flops = parse_double(rows[r][col], "flops");
    for (std::size_t c = first_task; c < header.size(); ++c) {
      const std::string cell = trim(rows[r][c]);
      rec.metrics[tasks[c - first_task]] =
          cell.empty() ? std::nan("") : parse_double(cell, "metric");
    }
    if (!(rec.flops > 0.0)) throw DataError("run '" + rec.method + "' has non-positive FLOPs");
    runs.push_back(std::move(rec));
  }
  if (task_names) *task_names = tasks;
  return runs;
}

}  // namespace datamix::io
