#include "koopman/systems.hpp"

#include <cmath>
#include <sstream>

#include "koopman/errors.hpp"

namespace koopman {

SystemSpec SystemSpec::van_der_pol(double mu) {
    SystemSpec s;
    s.kind = SystemKind::VanDerPol;
    s.state_dim = 2;
    s.input_dim = 1;
    s.mu = mu;
    return s;
}

SystemSpec SystemSpec::planar_arm(const ArmParams& params) {
    SystemSpec s;
    s.kind = SystemKind::PlanarArm;
    s.arm = params;
    s.state_dim = 2 * params.links;
    s.input_dim = params.links;
    return s;
}

SystemSpec SystemSpec::slow_manifold(double mu, double lambda) {
    SystemSpec s;
    s.kind = SystemKind::SlowManifold;
    s.state_dim = 2;
    s.input_dim = 1;
    s.mu = mu;
    s.lambda = lambda;
    return s;
}

SystemSpec SystemSpec::linear(Mat a, Mat b) {
    SystemSpec s;
    s.kind = SystemKind::Linear;
    s.state_dim = static_cast<int>(a.rows());
    s.input_dim = static_cast<int>(b.cols());
    s.lin_a = std::move(a);
    s.lin_b = std::move(b);
    return s;
}

void SystemSpec::validate() const {
    auto fail = [](const std::string& msg) { throw Error(ErrorCode::Config, "SystemSpec: " + msg); };
    switch (kind) {
        case SystemKind::VanDerPol:
        case SystemKind::SlowManifold:
            if (state_dim != 2 || input_dim != 1) fail("expected n = 2, m = 1");
            if (!std::isfinite(mu) || !std::isfinite(lambda)) fail("non-finite parameter");
            break;
        case SystemKind::PlanarArm:
            if (arm.links < 1) fail("link count must be positive");
            if (state_dim != 2 * arm.links || input_dim != arm.links) fail("expected n = 2 links, m = links");
            if (!(arm.mass > 0) || !(arm.length > 0) || !(arm.com > 0) || !(arm.inertia > 0)) {
                fail("mass, length, com and inertia must be positive");
            }
            if (!(arm.gravity >= 0) || !std::isfinite(arm.gravity)) fail("gravity must be finite and >= 0");
            break;
        case SystemKind::Linear:
            if (lin_a.rows() != lin_a.cols() || lin_a.rows() != state_dim) fail("A must be n x n");
            if (lin_b.rows() != state_dim || lin_b.cols() != input_dim) fail("B must be n x m");
            if (!lin_a.allFinite() || !lin_b.allFinite()) fail("non-finite A or B");
            break;
    }
}

Vec SystemSpec::deriv(const Vec& x, const Vec& u) const {
    switch (kind) {
        case SystemKind::VanDerPol:
            return vdp_deriv(x, u(0), mu);
        case SystemKind::PlanarArm: {
            const int l = arm.links;
            return arm_deriv(x.head(l), x.tail(l), u, arm);
        }
        case SystemKind::SlowManifold: {
            Vec d(2);
            d(0) = mu * x(0);
            d(1) = lambda * (x(1) - x(0) * x(0)) + u(0);
            return d;
        }
        case SystemKind::Linear:
            return lin_a * x + lin_b * u;
    }
    return Vec();
}

Vec vdp_deriv(const Vec& x, double u, double mu) {
    Vec d(2);
    d(0) = -x(1);
    d(1) = mu * (-1.0 + x(0) * x(0)) * x(1) + x(0) + u;
    return d;
}

namespace {

// Lever arm of joint-chain segment j as seen from the COM of link i (j <= i).
double lever(int i, int j, const ArmParams& p) {
    return j < i ? p.length : p.com;
}

Vec absolute_angles(const Vec& q) {
    Vec theta(q.size());
    double acc = 0.0;
    for (Eigen::Index j = 0; j < q.size(); ++j) {
        acc += q(j);
        theta(j) = acc;
    }
    return theta;
}

}  // namespace

// Planar serial chain, COM of link i at
//   p_i = sum_{j<i} l [cos th_j, sin th_j] + a [cos th_i, sin th_i],  th_j = q_0 + ... + q_j.
// M_kl = sum_i m J_ik . J_il + I [k<=i][l<=i], with J_ik . J_il a double sum of
// r_j r_j' cos(th_j - th_j'); Coriolis from Christoffel symbols of M.
ArmTerms arm_terms(const Vec& q, const Vec& qd, const ArmParams& p) {
    const int n = static_cast<int>(q.size());
    const Vec th = absolute_angles(q);
    ArmTerms t{Mat::Zero(n, n), Vec::Zero(n), Vec::Zero(n)};

    // dM[pidx](k, l) = d M_kl / d q_p
    std::vector<Mat> dm(n, Mat::Zero(n, n));
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k <= i; ++k) {
            for (int l = 0; l <= i; ++l) {
                double mkl = p.inertia;
                for (int j = k; j <= i; ++j) {
                    for (int jj = l; jj <= i; ++jj) {
                        const double rr = lever(i, j, p) * lever(i, jj, p);
                        const double diff = th(j) - th(jj);
                        mkl += p.mass * rr * std::cos(diff);
                        const double s = -p.mass * rr * std::sin(diff);
                        for (int pi = 0; pi < n; ++pi) {
                            const int dj = (pi <= j ? 1 : 0) - (pi <= jj ? 1 : 0);
                            if (dj != 0) dm[pi](k, l) += s * dj;
                        }
                    }
                }
                t.mass(k, l) += mkl;
            }
        }
        for (int k = 0; k <= i; ++k) {
            for (int j = k; j <= i; ++j) {
                t.gravity(k) += p.mass * p.gravity * lever(i, j, p) * std::cos(th(j));
            }
        }
    }
    for (int k = 0; k < n; ++k) {
        double c = 0.0;
        for (int l = 0; l < n; ++l) {
            for (int pi = 0; pi < n; ++pi) {
                c += (dm[pi](k, l) - 0.5 * dm[k](l, pi)) * qd(l) * qd(pi);
            }
        }
        t.coriolis(k) = c;
    }
    return t;
}

Vec arm_deriv(const Vec& q, const Vec& qd, const Vec& tau, const ArmParams& p) {
    const ArmTerms t = arm_terms(q, qd, p);
    const Vec qdd = t.mass.llt().solve(tau - t.coriolis - t.gravity);
    Vec d(2 * q.size());
    d << qd, qdd;
    return d;
}

double arm_energy(const Vec& q, const Vec& qd, const ArmParams& p) {
    const ArmTerms t = arm_terms(q, qd, p);
    const Vec th = absolute_angles(q);
    double potential = 0.0;
    for (int i = 0; i < q.size(); ++i) {
        double y = 0.0;
        for (int j = 0; j <= i; ++j) y += lever(i, j, p) * std::sin(th(j));
        potential += p.mass * p.gravity * y;
    }
    return 0.5 * qd.dot(t.mass * qd) + potential;
}

Vec rk4_step(const Dynamics& deriv, const Vec& x, const Vec& u, double dt) {
    const Vec k1 = deriv(x, u);
    const Vec k2 = deriv(x + 0.5 * dt * k1, u);
    const Vec k3 = deriv(x + 0.5 * dt * k2, u);
    const Vec k4 = deriv(x + dt * k3, u);
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

void Trajectory::validate() const {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw Error(ErrorCode::Validation, "Trajectory: dt must be positive");
    if (states.cols() < 1) throw Error(ErrorCode::Validation, "Trajectory: no states");
    if (inputs.cols() != states.cols() - 1) {
        throw Error(ErrorCode::LengthMismatch, "Trajectory: inputs must number states - 1");
    }
    require_finite(states, "Trajectory states");
    require_finite(inputs, "Trajectory inputs");
}

Trajectory simulate(const Dynamics& deriv, const Vec& x0, const Mat& inputs, double dt) {
    if (!(dt > 0.0)) throw Error(ErrorCode::PreconditionViolated, "simulate: dt must be positive");
    if (inputs.cols() == 0) throw Error(ErrorCode::PreconditionViolated, "simulate: empty input sequence");
    require_finite(x0, "simulate: x0");
    Trajectory traj;
    traj.dt = dt;
    traj.inputs = inputs;
    traj.states.resize(x0.size(), inputs.cols() + 1);
    traj.states.col(0) = x0;
    Vec x = x0;
    for (Eigen::Index k = 0; k < inputs.cols(); ++k) {
        x = rk4_step(deriv, x, inputs.col(k), dt);
        if (!x.allFinite() || x.norm() > kDivergenceNorm) {
            std::ostringstream os;
            os << "simulate: state norm exceeded " << kDivergenceNorm << " at step " << k + 1;
            throw Error(ErrorCode::Diverged, os.str());
        }
        traj.states.col(k + 1) = x;
    }
    return traj;
}

Trajectory simulate(const SystemSpec& spec, const Vec& x0, const Mat& inputs, double dt) {
    spec.validate();
    if (x0.size() != spec.state_dim || inputs.rows() != spec.input_dim) {
        throw Error(ErrorCode::LengthMismatch, "simulate: x0 / input dimensions do not match the system");
    }
    return simulate([&spec](const Vec& x, const Vec& u) { return spec.deriv(x, u); }, x0, inputs, dt);
}

}  // namespace koopman
