#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "koopman/datagen.hpp"
#include "koopman/operator.hpp"
#include "koopman/systems.hpp"

namespace koopman {

struct MpcConfig {
    int horizon = 20;
    Vec q_x;  // per state channel, >= 0
    Vec r_u;  // per input channel, > 0
    Vec u_lo, u_hi;
    // Optional soft state box, quadratic penalty rho per unit violation squared.
    std::optional<Vec> x_lo, x_hi;
    double rho = 1e3;
    NoiseSpec feedback;  // measurement noise in the loop
    double qp_tol = 1e-8;
    int qp_max_iter = 20000;
    // When false, solve times are logged as 0 so runs are byte-reproducible.
    bool record_timing = true;

    // Q_x = 1 on tracked channels, R_u = 0.01, inputs in [-u_max, u_max].
    static MpcConfig defaults(int state_dim, int input_dim, const std::vector<int>& tracked, double u_max);

    void validate(int state_dim, int input_dim) const;
};

/// Condensed problem over the stacked input sequence u (H m):
///   J(u) = u^T H u + 2 g^T u + c + rho * sum dist(G u + h, [soft_lo, soft_hi])^2
/// minimised subject to lo <= u <= hi.
struct BoxQp {
    Mat hessian;
    Vec gradient;
    double constant = 0.0;
    Vec lo, hi;
    Mat soft_g;  // empty when there are no soft constraints
    Vec soft_h, soft_lo, soft_hi;
    double rho = 0.0;

    [[nodiscard]] Eigen::Index size() const { return gradient.size(); }
    // Full cost J(u).
    [[nodiscard]] double cost(const Vec& u) const;
};

struct QpResult {
    Vec u;
    bool converged = false;
    int iterations = 0;
    double kkt_residual = 0.0;
};

// Eliminates z_k = A^k z0 + sum_j A^(k-1-j) B u_j, k = 1..H, and penalises
// (C z_k - ref_k) with diag(Q_x) plus u_k with diag(R_u). ref is n x H.
BoxQp condense(const KoopmanModel& model, const Vec& z0, const Mat& ref, const MpcConfig& cfg);

// Accelerated projected gradient with adaptive restart, polished by Newton
// steps on the free set. Returns the best iterate with converged = false if
// the KKT residual is still above tol after max_iter iterations.
QpResult solve_box_qp(const BoxQp& qp, double tol = 1e-8, int max_iter = 20000);

// Receding-horizon step: lift the measurement, condense over `ref_window`
// (n x H, padded with its last column if shorter), return the first input.
Vec mpc_step(const KoopmanModel& model, const Vec& x_measured, const Mat& ref_window, const MpcConfig& cfg,
             QpResult* info = nullptr);

struct TrackResult {
    double dt = 0.0;
    Mat reference;  // n x T
    Mat actual;     // n x T
    Mat inputs;     // m x (T - 1)
    std::vector<double> solve_ms;
    std::vector<double> cost;
    bool diverged = false;
    Eigen::Index diverged_step = -1;
    int qp_failures = 0;
};

// Closed loop: measure (with cfg.feedback noise, sigma from the reference
// rms per channel), mpc_step, RK4 on the true system. Divergence is recorded
// in the result and the logs are truncated at the last finite state.
TrackResult track(const SystemSpec& system, const KoopmanModel& model, const Trajectory& reference,
                  const MpcConfig& cfg, std::uint64_t seed);

}  // namespace koopman
