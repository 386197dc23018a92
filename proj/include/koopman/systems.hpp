#pragma once

#include <functional>

#include "koopman/numerics.hpp"

namespace koopman {

enum class SystemKind {
    VanDerPol,
    PlanarArm,
    // x1' = mu x1, x2' = lambda (x2 - x1^2) + u; exactly linear in (x1, x2, x1^2)
    SlowManifold,
    // x' = A x + B u
    Linear,
};

struct ArmParams {
    int links = 2;
    double mass = 0.1;     // kg, per link
    double length = 0.33;  // m
    double com = 0.165;    // m, distance from the proximal joint
    double inertia = 1.5;  // kg m^2 about the joint axis through the COM
    double gravity = 9.81; // m/s^2, along -y
};

struct SystemSpec {
    SystemKind kind = SystemKind::VanDerPol;
    int state_dim = 2;
    int input_dim = 1;
    double mu = 1.0;  // Van der Pol damping, or SlowManifold fast-slow rate
    double lambda = -1.0;
    ArmParams arm;
    Mat lin_a;
    Mat lin_b;

    static SystemSpec van_der_pol(double mu = 1.0);
    static SystemSpec planar_arm(const ArmParams& params = {});
    static SystemSpec slow_manifold(double mu = -0.5, double lambda = -1.0);
    static SystemSpec linear(Mat a, Mat b);

    // Throws Error{Config} if the invariants on dims and parameters fail.
    void validate() const;

    [[nodiscard]] Vec deriv(const Vec& x, const Vec& u) const;
};

using Dynamics = std::function<Vec(const Vec& x, const Vec& u)>;

Vec vdp_deriv(const Vec& x, double u, double mu);

struct ArmTerms {
    Mat mass;       // M(q)
    Vec coriolis;   // C(q, qd) qd
    Vec gravity;    // g(q)
};

ArmTerms arm_terms(const Vec& q, const Vec& qd, const ArmParams& p);

// (qd, M^-1 (tau - C qd - g))
Vec arm_deriv(const Vec& q, const Vec& qd, const Vec& tau, const ArmParams& p);

// Kinetic plus potential energy.
double arm_energy(const Vec& q, const Vec& qd, const ArmParams& p);

// Classical RK4 with the input held constant over the step.
Vec rk4_step(const Dynamics& deriv, const Vec& x, const Vec& u, double dt);

struct Trajectory {
    double dt = 0.0;
    Mat states;  // n x T
    Mat inputs;  // m x (T - 1)

    [[nodiscard]] Eigen::Index length() const { return states.cols(); }
    [[nodiscard]] Eigen::Index state_dim() const { return states.rows(); }
    [[nodiscard]] Eigen::Index input_dim() const { return inputs.rows(); }

    // dt > 0, finite entries, inputs.cols() == states.cols() - 1.
    void validate() const;
};

// Norm bound beyond which a simulation is declared Diverged.
inline constexpr double kDivergenceNorm = 1e6;

Trajectory simulate(const Dynamics& deriv, const Vec& x0, const Mat& inputs, double dt);
Trajectory simulate(const SystemSpec& spec, const Vec& x0, const Mat& inputs, double dt);

}  // namespace koopman
