#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "koopman/datagen.hpp"
#include "koopman/json_io.hpp"
#include "koopman/mpc.hpp"
#include "koopman/operator.hpp"
#include "koopman/training.hpp"

namespace koopman {

namespace fs = std::filesystem;

inline constexpr int kDatasetVersion = 1;
inline constexpr int kModelVersion = 1;

Json system_to_json(const SystemSpec& spec);
SystemSpec system_from_json(const Json& j, const std::string& path, ErrorCode code);

Json excitation_to_json(const Excitation& e);
Excitation excitation_from_json(const Json& j, const std::string& path, ErrorCode code);

// One trajectory per CSV: header x0..,u0..; one row per snapshot, state
// columns then input columns; the final row leaves the input cells empty.
std::string trajectory_csv(const Trajectory& traj);
Trajectory parse_trajectory_csv(const std::string& text, int state_dim, int input_dim, double dt,
                                const std::string& origin);

/// Dataset directory:
///   meta.json          system, excitation, noise, seeds, dt, sigmas, counts
///   clean/traj_NNNN.csv
///   noisy/traj_NNNN.csv
/// Doubles are written in shortest round-trip form, so loading is bit-exact.
void save_dataset(const Dataset& ds, const fs::path& dir);
Dataset load_dataset(const fs::path& dir);

// Forward and backward layers kept next to a DRKN model.
struct FbBlocks {
    Mat a_f, b_f, a_b, b_b;
};

Json model_to_json(const KoopmanModel& model, const std::optional<FbBlocks>& blocks = std::nullopt);
KoopmanModel model_from_json(const Json& j, std::optional<FbBlocks>* blocks = nullptr);

void save_model(const KoopmanModel& model, const fs::path& file, const std::optional<FbBlocks>& blocks = std::nullopt);
// Throws Io when unreadable and Validation on any schema or invariant failure.
KoopmanModel load_model(const fs::path& file, std::optional<FbBlocks>* blocks = nullptr);

// epoch,fpred,flift,bpred,blift,con,reg,total
std::string loss_csv(const std::vector<EpochLoss>& history, const LossWeights& w);

// t,ref_x..,x..,u..,solve_ms,cost; the final row leaves u, solve_ms and cost empty.
std::string track_csv(const TrackResult& result);

std::string read_text(const fs::path& file);
void write_text(const fs::path& file, const std::string& text);

}  // namespace koopman
