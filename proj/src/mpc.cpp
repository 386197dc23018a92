#include "koopman/mpc.hpp"

#include <chrono>
#include <cmath>

#include "koopman/errors.hpp"

namespace koopman {

MpcConfig MpcConfig::defaults(int state_dim, int input_dim, const std::vector<int>& tracked, double u_max) {
    MpcConfig cfg;
    cfg.q_x = Vec::Zero(state_dim);
    for (int i : tracked) cfg.q_x(i) = 1.0;
    cfg.r_u = Vec::Constant(input_dim, 0.01);
    cfg.u_lo = Vec::Constant(input_dim, -u_max);
    cfg.u_hi = Vec::Constant(input_dim, u_max);
    return cfg;
}

void MpcConfig::validate(int state_dim, int input_dim) const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, "MpcConfig: " + m); };
    if (horizon < 1) fail("horizon must be >= 1");
    if (q_x.size() != state_dim || r_u.size() != input_dim) fail("weight dimensions do not match the model");
    if (u_lo.size() != input_dim || u_hi.size() != input_dim) fail("input box dimensions do not match the model");
    if ((q_x.array() < 0.0).any()) fail("Q_x must be nonnegative");
    if (!(r_u.array() > 0.0).all()) fail("R_u must be strictly positive");
    if (!(u_lo.array() < u_hi.array()).all()) fail("u_lo must be below u_hi");
    if (x_lo.has_value() != x_hi.has_value()) fail("state box needs both bounds");
    if (x_lo && (x_lo->size() != state_dim || x_hi->size() != state_dim || (x_lo->array() > x_hi->array()).any())) {
        fail("invalid state box");
    }
    if (!(rho >= 0.0)) fail("rho must be nonnegative");
    if (!(qp_tol > 0.0) || qp_max_iter < 1) fail("invalid QP settings");
}

namespace {

Vec soft_violation(const BoxQp& qp, const Vec& u) {
    const Vec s = qp.soft_g * u + qp.soft_h;
    return (s - qp.soft_hi).cwiseMax(0.0) - (qp.soft_lo - s).cwiseMax(0.0);
}

bool has_soft(const BoxQp& qp) {
    return qp.soft_g.size() > 0 && qp.rho > 0.0;
}

// phi(u) = (J(u) - c) / 2
double half_objective(const BoxQp& qp, const Vec& u) {
    double v = 0.5 * u.dot(qp.hessian * u) + qp.gradient.dot(u);
    if (has_soft(qp)) v += 0.5 * qp.rho * soft_violation(qp, u).squaredNorm();
    return v;
}

Vec half_gradient(const BoxQp& qp, const Vec& u) {
    Vec g = qp.hessian * u + qp.gradient;
    if (has_soft(qp)) g += qp.rho * qp.soft_g.transpose() * soft_violation(qp, u);
    return g;
}

Vec project(const BoxQp& qp, const Vec& u) {
    return u.cwiseMax(qp.lo).cwiseMin(qp.hi);
}

double kkt_residual(const BoxQp& qp, const Vec& u) {
    return (u - project(qp, u - half_gradient(qp, u))).lpNorm<Eigen::Infinity>();
}

// Newton step restricted to variables not held at a bound by the gradient.
std::optional<Vec> polish(const BoxQp& qp, const Vec& u) {
    const Vec g = half_gradient(qp, u);
    std::vector<Eigen::Index> free;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
        const bool at_lo = u(i) <= qp.lo(i) && g(i) > 0.0;
        const bool at_hi = u(i) >= qp.hi(i) && g(i) < 0.0;
        if (!at_lo && !at_hi) free.push_back(i);
    }
    if (free.empty()) return std::nullopt;
    Mat h = qp.hessian;
    if (has_soft(qp)) {
        const Vec s = qp.soft_g * u + qp.soft_h;
        for (Eigen::Index r = 0; r < s.size(); ++r) {
            if (s(r) > qp.soft_hi(r) || s(r) < qp.soft_lo(r)) {
                h += qp.rho * qp.soft_g.row(r).transpose() * qp.soft_g.row(r);
            }
        }
    }
    const auto nf = static_cast<Eigen::Index>(free.size());
    Mat hff(nf, nf);
    Vec gf(nf);
    for (Eigen::Index i = 0; i < nf; ++i) {
        gf(i) = g(free[static_cast<std::size_t>(i)]);
        for (Eigen::Index j = 0; j < nf; ++j) hff(i, j) = h(free[static_cast<std::size_t>(i)], free[static_cast<std::size_t>(j)]);
    }
    Eigen::LLT<Mat> llt(hff);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const Vec d = llt.solve(-gf);
    Vec out = u;
    for (Eigen::Index i = 0; i < nf; ++i) out(free[static_cast<std::size_t>(i)]) += d(i);
    return project(qp, out);
}

}  // namespace

double BoxQp::cost(const Vec& u) const {
    return 2.0 * half_objective(*this, u) + constant;
}

BoxQp condense(const KoopmanModel& model, const Vec& z0, const Mat& ref, const MpcConfig& cfg) {
    const int n = model.state_dim();
    const int m = model.input_dim();
    const int big_n = model.lifted_dim();
    const int h = cfg.horizon;
    cfg.validate(n, m);
    if (z0.size() != big_n) throw Error(ErrorCode::LengthMismatch, "condense: z0 has wrong size");
    if (ref.rows() != n || ref.cols() != h) throw Error(ErrorCode::LengthMismatch, "condense: reference must be n x H");

    // free response f_k = C A^k z0 and impulse blocks C A^i B
    Vec free(static_cast<Eigen::Index>(h) * n);
    std::vector<Mat> markov;
    markov.reserve(static_cast<std::size_t>(h));
    Vec z = z0;
    Mat ab = model.b;
    for (int k = 0; k < h; ++k) {
        z = model.a * z;
        free.segment(static_cast<Eigen::Index>(k) * n, n) = z.head(n);
        markov.push_back(ab.topRows(n));
        ab = model.a * ab;
    }
    Mat gamma = Mat::Zero(static_cast<Eigen::Index>(h) * n, static_cast<Eigen::Index>(h) * m);
    for (int k = 1; k <= h; ++k) {
        for (int j = 0; j < k; ++j) {
            gamma.block(static_cast<Eigen::Index>(k - 1) * n, static_cast<Eigen::Index>(j) * m, n, m) =
                markov[static_cast<std::size_t>(k - 1 - j)];
        }
    }
    const Vec q_bar = cfg.q_x.replicate(h, 1);
    const Vec r_bar = cfg.r_u.replicate(h, 1);
    const Vec err = free - Eigen::Map<const Vec>(ref.data(), ref.size());

    BoxQp qp;
    qp.hessian = gamma.transpose() * q_bar.asDiagonal() * gamma;
    qp.hessian.diagonal() += r_bar;
    qp.hessian = 0.5 * (qp.hessian + qp.hessian.transpose()).eval();
    qp.gradient = gamma.transpose() * (q_bar.asDiagonal() * err);
    qp.constant = err.dot(q_bar.asDiagonal() * err);
    qp.lo = cfg.u_lo.replicate(h, 1);
    qp.hi = cfg.u_hi.replicate(h, 1);
    if (cfg.x_lo && cfg.rho > 0.0) {
        qp.soft_g = gamma;
        qp.soft_h = free;
        qp.soft_lo = cfg.x_lo->replicate(h, 1);
        qp.soft_hi = cfg.x_hi->replicate(h, 1);
        qp.rho = cfg.rho;
    }
    return qp;
}

QpResult solve_box_qp(const BoxQp& qp, double tol, int max_iter) {
    const Eigen::Index dim = qp.size();
    if (qp.hessian.rows() != dim || qp.hessian.cols() != dim || qp.lo.size() != dim || qp.hi.size() != dim) {
        throw Error(ErrorCode::LengthMismatch, "solve_box_qp: inconsistent problem dimensions");
    }
    if ((qp.lo.array() > qp.hi.array()).any()) throw Error(ErrorCode::PreconditionViolated, "solve_box_qp: empty box");

    double lipschitz = norm2_est(qp.hessian);
    if (has_soft(qp)) {
        const double gn = norm2_est(qp.soft_g);
        lipschitz += qp.rho * gn * gn;
    }
    lipschitz = std::max(lipschitz * 1.01, 1e-12);
    const double step = 1.0 / lipschitz;

    QpResult res;
    Vec u = project(qp, Vec::Zero(dim));
    Vec y = u;
    double t = 1.0;
    double f_u = half_objective(qp, u);
    res.kkt_residual = kkt_residual(qp, u);
    for (int it = 0; it < max_iter && res.kkt_residual >= tol; ++it) {
        res.iterations = it + 1;
        if (it % 10 == 0) {
            if (auto p = polish(qp, u)) {
                const double f_p = half_objective(qp, *p);
                if (f_p <= f_u) {
                    u = *p;
                    y = u;
                    t = 1.0;
                    f_u = f_p;
                    res.kkt_residual = kkt_residual(qp, u);
                    if (res.kkt_residual < tol) break;
                }
            }
        }
        const Vec u_next = project(qp, y - step * half_gradient(qp, y));
        const double f_next = half_objective(qp, u_next);
        if (f_next > f_u) {
            // adaptive restart: drop momentum, take a plain projected step
            t = 1.0;
            y = u;
            continue;
        }
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        y = u_next + ((t - 1.0) / t_next) * (u_next - u);
        t = t_next;
        u = u_next;
        f_u = f_next;
        res.kkt_residual = kkt_residual(qp, u);
    }
    res.u = u;
    res.converged = res.kkt_residual < tol;
    return res;
}

Vec mpc_step(const KoopmanModel& model, const Vec& x_measured, const Mat& ref_window, const MpcConfig& cfg,
             QpResult* info) {
    require_finite(x_measured, "mpc_step: measurement");
    const int n = model.state_dim();
    const int h = cfg.horizon;
    if (ref_window.rows() != n || ref_window.cols() < 1) {
        throw Error(ErrorCode::LengthMismatch, "mpc_step: reference window must be n x k, k >= 1");
    }
    Mat ref(n, h);
    for (int k = 0; k < h; ++k) ref.col(k) = ref_window.col(std::min<Eigen::Index>(k, ref_window.cols() - 1));
    const BoxQp qp = condense(model, model.lift(x_measured), ref, cfg);
    QpResult res = solve_box_qp(qp, cfg.qp_tol, cfg.qp_max_iter);
    Vec u = res.u.head(model.input_dim());
    if (info) *info = std::move(res);
    return u;
}

TrackResult track(const SystemSpec& system, const KoopmanModel& model, const Trajectory& reference,
                  const MpcConfig& cfg, std::uint64_t seed) {
    system.validate();
    reference.validate();
    cfg.validate(model.state_dim(), model.input_dim());
    if (reference.length() < 2) throw Error(ErrorCode::PreconditionViolated, "track: reference needs >= 2 states");
    if (system.state_dim != model.state_dim() || system.input_dim != model.input_dim()) {
        throw Error(ErrorCode::LengthMismatch, "track: model and system dimensions differ");
    }
    const Eigen::Index steps = reference.length();
    const int n = model.state_dim();
    const int m = model.input_dim();
    const Dynamics dyn = [&system](const Vec& x, const Vec& u) { return system.deriv(x, u); };

    Vec sigma = Vec::Zero(n);
    if (cfg.feedback.snr_db) sigma = channel_sigmas(reference.states, *cfg.feedback.snr_db);
    Rng rng = make_rng(seed, "feedback-noise");

    TrackResult out;
    out.dt = reference.dt;
    out.reference = reference.states;
    out.actual.resize(n, steps);
    out.inputs.resize(m, steps - 1);
    Vec x = reference.states.col(0);
    out.actual.col(0) = x;
    for (Eigen::Index k = 0; k + 1 < steps; ++k) {
        const Vec measured = x + gaussian_vec(rng, sigma);
        const Eigen::Index window = std::min<Eigen::Index>(cfg.horizon, steps - 1 - k);
        QpResult info;
        const auto t0 = std::chrono::steady_clock::now();
        const Vec u = mpc_step(model, measured, reference.states.middleCols(k + 1, window), cfg, &info);
        const auto t1 = std::chrono::steady_clock::now();
        if (!info.converged) ++out.qp_failures;
        out.solve_ms.push_back(cfg.record_timing ? std::chrono::duration<double, std::milli>(t1 - t0).count() : 0.0);
        out.cost.push_back(std::numeric_limits<double>::quiet_NaN());
        out.inputs.col(k) = u;
        x = rk4_step(dyn, x, u, reference.dt);
        if (!x.allFinite() || x.norm() > kDivergenceNorm) {
            out.diverged = true;
            out.diverged_step = k + 1;
            out.reference.conservativeResize(Eigen::NoChange, k + 1);
            out.actual.conservativeResize(Eigen::NoChange, k + 1);
            out.inputs.conservativeResize(Eigen::NoChange, k);
            out.solve_ms.pop_back();
            out.cost.pop_back();
            break;
        }
        out.actual.col(k + 1) = x;
        // stage cost actually incurred at the new state
        const Vec e = x - reference.states.col(k + 1);
        out.cost.back() = e.dot(cfg.q_x.asDiagonal() * e) + u.dot(cfg.r_u.asDiagonal() * u);
    }
    return out;
}

}  // namespace koopman
