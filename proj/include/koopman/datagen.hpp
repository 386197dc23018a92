#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "koopman/numerics.hpp"
#include "koopman/random.hpp"
#include "koopman/systems.hpp"

namespace koopman {

struct NoiseSpec {
    std::optional<double> snr_db;  // nullopt means noise-free
    std::uint64_t seed = 0;
    bool corrupt_inputs = true;
};

// Uniform sampling boxes for initial states and held inputs.
struct Excitation {
    Vec state_lo, state_hi;
    Vec input_lo, input_hi;

    static Excitation defaults_for(const SystemSpec& spec);
    void validate(const SystemSpec& spec) const;
};

// sigma = rms(signal) * 10^(-snr_db / 20). Throws DegenerateChannel when rms == 0.
double snr_sigma(const Eigen::Ref<const Vec>& signal, double snr_db);

// Per-row noise scale over a set of signals stacked column-wise. Degenerate
// rows get sigma 0 and a warning on stderr.
Vec channel_sigmas(const Mat& signals, double snr_db);

// Adds independent Gaussian noise with the given per-channel std.
Trajectory add_noise(const Trajectory& clean, const Vec& state_sigma, const Vec& input_sigma, Rng& rng);

// Corrupts one trajectory with sigmas taken from its own rms.
Trajectory corrupt(const Trajectory& traj, const NoiseSpec& spec);

struct Dataset {
    SystemSpec system;
    Excitation excitation;
    NoiseSpec noise;
    std::uint64_t seed = 0;
    double dt = 0.01;
    Vec state_sigma;  // applied noise std per state channel (0 if noise-free)
    Vec input_sigma;
    std::vector<Trajectory> clean;  // evaluation only
    std::vector<Trajectory> noisy;
};

/// Simulates n_traj random-excitation trajectories of n_snap states each and
/// corrupts them at noise.snr_db, measured against the per-channel rms of the
/// whole clean dataset. A trajectory that diverges is resampled from a fresh
/// derived stream up to 10 times before Diverged propagates.
Dataset gen_dataset(const SystemSpec& spec, int n_traj, int n_snap, double dt,
                    const Excitation& excitation, const NoiseSpec& noise, std::uint64_t seed);

struct TripletBatch {
    Mat xm_minus, xm, xm_plus;  // n x s
    Mat um_minus, um;           // m x s
    double dt = 0.0;
    // (trajectory index, k) of each column's centre snapshot
    std::vector<std::pair<int, int>> source;

    [[nodiscard]] Eigen::Index size() const { return xm.cols(); }
    [[nodiscard]] TripletBatch select(const std::vector<Eigen::Index>& columns) const;
};

// Every interior window (x_{k-1}, x_k, x_{k+1}, u_{k-1}, u_k) of every
// trajectory. Throws Empty when no trajectory has 3 or more states.
TripletBatch build_triplets(const std::vector<Trajectory>& trajs);

}  // namespace koopman
