#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "koopman/datagen.hpp"
#include "koopman/mpc.hpp"
#include "koopman/operator.hpp"

namespace koopman {

// (1/T) sum_k ||x_true,k - x_pred,k||_2 over full state vectors.
double pred_error(const Trajectory& truth, const Trajectory& pred);

// (1/T) sum_k ||(actual_k - ref_k)[channels]||_2.
double track_error(const TrackResult& result, const std::vector<int>& channels);

struct Effort {
    double mean_norm = 0.0;  // sum_k ||u_k|| / K
    double integral = 0.0;   // sum_k ||u_k|| dt
};

Effort control_effort(const TrackResult& result);

struct Metrics {
    double e_pred = 0.0;
    std::optional<double> e_track;
    std::optional<Effort> effort;
    std::optional<double> solve_time;  // mean seconds per MPC iteration
    std::optional<double> train_time;  // seconds
};

// Held-out noise-free trajectories with random initial states and inputs.
std::vector<Trajectory> make_eval_set(const SystemSpec& system, const Excitation& excitation, int n_rollouts,
                                      int steps, double dt, std::uint64_t seed);

// Mean pred_error of open-loop rollouts driven by each trajectory's inputs.
// Throws NonFinite if a rollout leaves the finite range.
double mean_pred_error(const KoopmanModel& model, const std::vector<Trajectory>& eval_set);

struct LinearTruth {
    Mat a;  // n x n
    Mat b;  // n x m

    // A = T (radius * rot(theta)) T^-1 for n = 2 with T a random near-identity
    // map, otherwise radius * a random orthogonal matrix; B ~ 0.1 N(0, 1).
    static LinearTruth random_stable(int n, int m, double radius, std::uint64_t seed);
    [[nodiscard]] BlockOp op() const { return {a, b}; }
};

struct BiasMcConfig {
    LinearTruth truth;
    // Noise std relative to the per-channel rms; 0 disables noise.
    double relative_sigma = 0.01;
    int columns = 2000;
    int draws = 500;
    std::uint64_t seed = 0;
    double assumption_limit = 0.1;

    static double sigma_from_snr(double snr_db);
};

struct BiasDiagnostics {
    int n_draws = 0;
    double relative_sigma = 0.0;
    double dev_nominal = 0.0;   // ||mean(K_fm^2) - K_f^2||_F
    double dev_proposed = 0.0;  // ||mean(K_prop^2) - K_f^2||_F
    double ratio = 0.0;         // NaN when undefined
    bool ratio_defined = false;
    int proposed_wins = 0;      // draws with the smaller per-draw deviation
    double sign_test_p = 1.0;   // one-sided binomial P(X >= wins | n, 1/2)
    int assumption_failures = 0;
    double assumption_max = 0.0;
};

/// Monte-Carlo bias experiment on a known linear system with identity lifting.
///
/// Clean triplets share one input per column (x = A x- + B u, x+ = A x + B u)
/// so that K_b = K_f^-1 exactly. Each draw corrupts x-, x, x+ and u, fits
/// K_fm and K_bm by least squares, and accumulates K_fm^2 and
/// K_prop^2 = K_fm K_bm^-1. Throws AssumptionViolated when more than 10% of
/// draws break ||(Psi Psi^T)^-1|| ||N Psi^T + Psi N^T + N N^T|| < limit.
BiasDiagnostics bias_mc(const BiasMcConfig& cfg);

// One-sided binomial tail P(X >= k) for X ~ Bin(n, 1/2).
double sign_test_p(int k, int n);

struct TrackSetup {
    SystemSpec system;
    std::vector<Trajectory> references;
    MpcConfig mpc;
    std::vector<int> channels;
    std::uint64_t seed = 0;
};

struct Candidate {
    std::string method;  // "Proposed", "NominalLS", "FBEDMD-fixed", ...
    double snr_db = 0.0;
    std::function<KoopmanModel()> build;
    std::optional<double> train_time;
};

struct CompareCell {
    std::string method;
    double snr_db = 0.0;
    std::optional<Metrics> metrics;
    std::string failure;  // reason when metrics is empty
};

struct CompareReport {
    std::vector<double> snrs;          // descending
    std::vector<std::string> methods;  // column order
    std::vector<CompareCell> cells;    // row-major over (snr, method)
    bool has_tracking = false;

    [[nodiscard]] const CompareCell* find(double snr_db, const std::string& method) const;
    [[nodiscard]] std::string to_csv() const;
    [[nodiscard]] std::string to_table() const;
};

// Column order puts Proposed, NominalLS, FBEDMD-fixed first, then any others
// in order of appearance. A candidate whose build or evaluation throws is
// logged to stderr and shown as a dash.
CompareReport compare(const std::vector<Candidate>& candidates, const std::vector<Trajectory>& eval_set,
                      const std::optional<TrackSetup>& tracking);

}  // namespace koopman
