// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#include "moce/reports.hpp"

#include <charconv>
#include <cstdio>
#include <sstream>

#include <nlohmann/json.hpp>

#include "moce/checkpoint.hpp"

namespace moce::io {

namespace {

void check_field(const std::string& f) {
  if (f.find_first_of(",\"\n\r") != std::string::npos) {
    throw Error("csv: field contains a delimiter or newline: \"" + f + "\"");
  }
}

void append_row(std::string& out, const std::vector<std::string>& row) {
  for (std::size_t i = 0; i < row.size(); ++i) {
    check_field(row[i]);
    if (i) out.push_back(',');
    out.append(row[i]);
  }
  out.push_back('\n');
}

}  // namespace

std::string format_csv(const CsvTable& table) {
  std::string out;
  append_row(out, table.header);
  for (const auto& row : table.rows) {
    if (row.size() != table.header.size()) {
      throw Error("csv: row width " + std::to_string(row.size()) + " != header width " +
                  std::to_string(table.header.size()));
    }
    append_row(out, row);
  }
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable table;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    for (;;) {
      std::size_t comma = line.find(',', start);
      if (comma == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, comma - start));
      start = comma + 1;
    }
    if (first) {
      table.header = std::move(fields);
      first = false;
    } else {
      table.rows.push_back(std::move(fields));
    }
  }
  if (first) throw Error("csv: missing header row");
  return table;
}

void write_csv(const CsvTable& table, const std::string& path) {
  atomic_write_file(path, format_csv(table));
}

CsvTable read_csv(const std::string& path) { return parse_csv(read_file(path)); }

std::string format_double(double v) {
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc()) throw Error("format_double failed");
  return std::string(buf, ptr);
}

CsvTable routing_heatmap_csv(const std::string& row_kind, const std::vector<int>& row_labels,
                             const Tensor& proportions) {
  if (static_cast<int>(row_labels.size()) != proportions.rows()) {
    throw Error("routing heatmap: " + std::to_string(row_labels.size()) + " labels for " +
                std::to_string(proportions.rows()) + " rows");
  }
  CsvTable t;
  t.header.push_back(row_kind);
  for (int e = 0; e < proportions.cols(); ++e) t.header.push_back("expert" + std::to_string(e));
  for (int r = 0; r < proportions.rows(); ++r) {
    std::vector<std::string> row;
    row.push_back(std::to_string(row_labels[static_cast<std::size_t>(r)]));
    for (int e = 0; e < proportions.cols(); ++e) row.push_back(format_double(proportions.at(r, e)));
    t.rows.push_back(std::move(row));
  }
  return t;
}

CsvTable psnr_csv(const std::vector<std::string>& models, const std::string& task,
                  const std::vector<double>& psnr, double dense_psnr) {
  if (models.size() != psnr.size()) throw Error("psnr csv: models/psnr length mismatch");
  CsvTable t;
  t.header = {"model", "task", "psnr_db", "delta_vs_dense_db"};
  for (std::size_t i = 0; i < models.size(); ++i) {
    t.rows.push_back({models[i], task, format_double(psnr[i]), format_double(psnr[i] - dense_psnr)});
  }
  return t;
}

CsvTable accuracy_csv(const std::vector<std::string>& models, const std::string& task,
                      const std::vector<double>& accuracy) {
  if (models.size() != accuracy.size()) throw Error("accuracy csv: length mismatch");
  CsvTable t;
  t.header = {"model", "task", "accuracy"};
  for (std::size_t i = 0; i < models.size(); ++i) {
    t.rows.push_back({models[i], task, format_double(accuracy[i])});
  }
  return t;
}

void write_manifest(const RunManifest& manifest, const std::string& path) {
  nlohmann::json j;
  j["command"] = manifest.command;
  j["inputs"] = manifest.inputs;
  j["outputs"] = manifest.outputs;
  j["seed"] = manifest.seed;
  j["git_describe"] = manifest.git_describe;
  j["wall_clock_sec"] = manifest.wall_clock_sec;
  atomic_write_file(path, j.dump(2) + "\n");
}

}  // namespace moce::io
