// Copyright (c) 2026 the moce authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "moce/tensor.hpp"

namespace moce::io {

// Minimal CSV with a header row. Fields must not contain commas, quotes or
// newlines (everything this project emits is numbers and identifiers); the
// writer enforces that so files always re-parse losslessly.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
};

std::string format_csv(const CsvTable& table);
CsvTable parse_csv(const std::string& text);
void write_csv(const CsvTable& table, const std::string& path);
CsvTable read_csv(const std::string& path);

std::string format_double(double v);  // shortest round-trippable representation

// Row-stochastic routing heatmap: one row per class (or cluster) label,
// one column per expert.
CsvTable routing_heatmap_csv(const std::string& row_kind, const std::vector<int>& row_labels,
                             const Tensor& proportions);

// model, task, psnr, delta_vs_dense
CsvTable psnr_csv(const std::vector<std::string>& models, const std::string& task,
                  const std::vector<double>& psnr, double dense_psnr);

// model, task, accuracy
CsvTable accuracy_csv(const std::vector<std::string>& models, const std::string& task,
                      const std::vector<double>& accuracy);

// Run manifest: inputs, outputs, seed, git describe, wall clock. Everything
// needed to re-execute a CLI run.
struct RunManifest {
  std::string command;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::uint64_t seed = 0;
  std::string git_describe;
  double wall_clock_sec = 0.0;
};

void write_manifest(const RunManifest& manifest, const std::string& path);

}  // namespace moce::io
