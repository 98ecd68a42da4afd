#pragma once
// End-to-end pipeline stages behind the CLI subcommands:
//   ingest -> adapt -> run -> report, plus replay verification.
// Every stage is a pure function of (inputs on disk, RunConfig); hermetic
// configurations produce byte-identical outputs.

#include <iostream>
#include <string>
#include <vector>

#include "icrs/config.hpp"

namespace icrs::cli {

// Exit codes shared by all commands.
inline constexpr int exit_ok = 0;
inline constexpr int exit_domain = 1;
inline constexpr int exit_io = 2;

// Loads + validates each manifest; prints a summary or the violation list.
int cmd_ingest(const std::vector<std::string>& manifests, std::ostream& out);

// Filters conversations, samples candidates, decomposes attributes, builds
// the judge ground truth, and writes the adapted dataset directory per
// scenario (all-or-nothing per scenario).
int cmd_adapt(const RunConfig& config, std::ostream& out);

// Runs every configured method over the adapted datasets: item
// recommendation rankings per conversation, label selections per
// (recommended item, objective). Per-cell failures are recorded and skipped;
// the exit code is nonzero iff any cell failed.
int cmd_run(const RunConfig& config, std::ostream& out);

// Computes the metric grid from persisted runs and the ground-truth bundle;
// writes report.json, report.csv and plots/*.csv, and prints the summary.
int cmd_report(const RunConfig& config, std::ostream& out);

// Re-executes the run stage with replay clients fed from `log_path` (a run
// log or a directory of run logs) and verifies the regenerated logs are
// byte-identical.
int cmd_replay_verify(const RunConfig& config, const std::string& log_path,
                      std::ostream& out);

// "Key: value" serialization of an item's composite attributes, the item's
// document text for retrieval and prompts.
std::string item_text(const corpus::Item& item);

}  // namespace icrs::cli
