#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "koopman/config.hpp"
#include "koopman/errors.hpp"

namespace koopman {

/// Process exit codes.
///   0  success
///   1  usage or I/O failure
///   2  invalid configuration
///   3  numerical failure (rank deficiency, no principal root, assumption violated, ...)
///   4  divergence (simulation or closed loop)
///   5  invalid artifact (corrupt dataset or checkpoint)
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitConfig = 2, kExitNumeric = 3, kExitDiverged = 4, kExitInvalid = 5 };

int exit_code_for(ErrorCode code);

// Output layout under RunConfig::output_dir:
//   data/snr_<db>/          dataset directories
//   models/snr_<db>/        drkn.json, nominal.json, fbedmd.json, loss.csv, *.failed
//   timing/snr_<db>.json    wall-clock training time
//   eval/                   reports
std::string snr_tag(double snr_db);
std::filesystem::path dataset_dir(const RunConfig& cfg, double snr_db);
std::filesystem::path model_dir(const RunConfig& cfg, double snr_db);

void cmd_gen(const RunConfig& cfg);

// Trains on every configured SNR, or only on `dataset` when given (written
// next to it under models/<dataset name>/).
void cmd_train(const RunConfig& cfg, const std::optional<std::filesystem::path>& dataset = std::nullopt);

// mode: predict | track | bias-mc | compare. `checkpoint` restricts predict
// and track to one model file. Returns the exit code (4 when any closed loop
// diverged).
int cmd_eval(const RunConfig& cfg, const std::string& mode,
             const std::optional<std::filesystem::path>& checkpoint = std::nullopt);

}  // namespace koopman
