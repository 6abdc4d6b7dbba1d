#pragma once

#include "run_config.hpp"

namespace precision_lab::cli {

/// Each command writes its outputs and manifest.ini under cfg.out_dir. Errors propagate as
/// precision_lab::Error.
void cmd_estimate(const RunConfig& cfg);
void cmd_backtest(const RunConfig& cfg);
void cmd_compare(const RunConfig& cfg);
void cmd_synth(const RunConfig& cfg);
void cmd_diagnose(const RunConfig& cfg);

void run_command(const RunConfig& cfg);

/// Reads "timestamp,method,loss" rows into one series per method, in first-seen order.
std::vector<LossSeries> read_loss_file(const std::string& path);

}  // namespace precision_lab::cli
