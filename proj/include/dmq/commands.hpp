// Copyright 2026 The dmq Authors
// SPDX-License-Identifier: Apache-2.0

// The toolkit's commands. Each reads its inputs as named by the config,
// writes artifacts under out_dir, prints one "artifact <file> <hash>" line per
// artifact and, for the experiment commands, appends records to
// <out_dir>/results.jsonl.
//
// Artifacts (relative to out_dir):
//   train     model.json, loss_trace.tsv
//   profile   profile.tsv, divergence.tsv
//   prompts   prompts.tsv, augment_report.txt
//   calibset  calibset.json
//   quantize  quantized.json, quantize.tsv
//   sweep     sweep.tsv
//   compare   compare.tsv
//   scale     scale.tsv
//   report    report/table.tsv, report/summary.txt, report/fig_bitwidth.tsv,
//             report/fig_strategies.tsv, report/fig_scaling.tsv

#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "dmq/config.hpp"
#include "vendor_json.hpp"

namespace dmq {

inline constexpr const char* kResultsFile = "results.jsonl";

const std::vector<std::string>& command_names();

// Throws dmq::Error subclasses; ArgumentError for an unknown command.
void run_command(std::string_view name, const ExperimentConfig& cfg, std::ostream& out);

// Reads every record in <dir>/results.jsonl. Throws DataError when the file
// is missing, empty or malformed.
std::vector<nlohmann::ordered_json> read_results(const std::string& dir);

struct ReportFiles {
  std::string table;       // grouped by policy
  std::string summary;     // human-readable
  std::string bitwidth;    // sweep rows
  std::string strategies;  // compare rows
  std::string scaling;     // scale rows
};

// Pure function of the records; later records with a run_id seen before
// replace the earlier one.
ReportFiles build_report(const std::vector<nlohmann::ordered_json>& records);

}  // namespace dmq
