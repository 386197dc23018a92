#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "koopman/datagen.hpp"
#include "koopman/json_io.hpp"
#include "koopman/mpc.hpp"
#include "koopman/systems.hpp"
#include "koopman/training.hpp"

namespace koopman {

inline constexpr int kSchemaVersion = 1;

struct DatasetConfig {
    int n_traj = 100;
    int n_snap = 100;
    double dt = 0.01;
    std::optional<Excitation> excitation;  // system defaults when absent
    std::vector<double> snr_db{20, 25, 30, 35, 40};
    bool corrupt_inputs = true;
};

// Per state channel: offset + amplitude sin(frequency t + phase).
struct ReferenceConfig {
    Vec amplitude, frequency, phase, offset;
    double duration = 10.0;  // s

    [[nodiscard]] Trajectory build(double dt, int input_dim) const;
};

struct MpcSettings {
    int horizon = 20;
    Vec q_x, r_u, u_lo, u_hi;
    std::optional<Vec> x_lo, x_hi;
    double rho = 1e3;
    std::optional<double> feedback_snr_db = 30.0;
    double qp_tol = 1e-8;
    int qp_max_iter = 20000;
    bool record_timing = true;

    [[nodiscard]] MpcConfig to_mpc(std::uint64_t feedback_seed) const;
};

struct EvalConfig {
    int n_rollouts = 20;
    int steps = 200;
    std::vector<int> tracked_channels;
    int dictionary_degree = 3;  // fixed basis for the FBEDMD-fixed baseline
    int bias_columns = 2000;
    int bias_draws = 500;
    double bias_snr_db = 40.0;
    double bias_radius = 0.95;
};

struct RunConfig {
    int schema_version = kSchemaVersion;
    SystemSpec system;
    DatasetConfig dataset;
    TrainConfig training;
    MpcSettings mpc;
    ReferenceConfig reference;
    EvalConfig eval;
    std::uint64_t seed = 1;
    std::filesystem::path output_dir = "out";

    static RunConfig van_der_pol();
    static RunConfig planar_arm();

    [[nodiscard]] Excitation excitation() const;
    [[nodiscard]] Json to_json() const;
    // Relative output_dir is resolved against base_dir.
    static RunConfig from_json(const Json& j, const std::filesystem::path& base_dir = {});
    static RunConfig load(const std::filesystem::path& file);

    // Throws Config.
    void validate() const;
};

}  // namespace koopman
