#include "koopman/datagen.hpp"

#include <cmath>
#include <iostream>

#include "koopman/errors.hpp"
#include "koopman/parallel.hpp"

namespace koopman {

Excitation Excitation::defaults_for(const SystemSpec& spec) {
    Excitation e;
    const int n = spec.state_dim;
    const int m = spec.input_dim;
    switch (spec.kind) {
        case SystemKind::PlanarArm: {
            const int l = spec.arm.links;
            e.state_lo.resize(n);
            e.state_hi.resize(n);
            e.state_lo << Vec::Constant(l, -1.0), Vec::Constant(l, -0.5);
            e.state_hi << Vec::Constant(l, 1.0), Vec::Constant(l, 0.5);
            e.input_lo = Vec::Constant(m, -2.0);
            e.input_hi = Vec::Constant(m, 2.0);
            break;
        }
        default:
            e.state_lo = Vec::Constant(n, -1.0);
            e.state_hi = Vec::Constant(n, 1.0);
            e.input_lo = Vec::Constant(m, -1.0);
            e.input_hi = Vec::Constant(m, 1.0);
            break;
    }
    return e;
}

void Excitation::validate(const SystemSpec& spec) const {
    if (state_lo.size() != spec.state_dim || state_hi.size() != spec.state_dim ||
        input_lo.size() != spec.input_dim || input_hi.size() != spec.input_dim) {
        throw Error(ErrorCode::Config, "Excitation: box dimensions do not match the system");
    }
    if ((state_lo.array() > state_hi.array()).any() || (input_lo.array() > input_hi.array()).any()) {
        throw Error(ErrorCode::Config, "Excitation: lower bound above upper bound");
    }
}

double snr_sigma(const Eigen::Ref<const Vec>& signal, double snr_db) {
    if (!std::isfinite(snr_db)) throw Error(ErrorCode::Config, "snr_sigma: SNR must be finite");
    if (signal.size() == 0) throw Error(ErrorCode::DegenerateChannel, "snr_sigma: empty signal");
    const double rms = std::sqrt(signal.squaredNorm() / static_cast<double>(signal.size()));
    if (rms == 0.0) throw Error(ErrorCode::DegenerateChannel, "snr_sigma: channel has zero rms");
    return rms * std::pow(10.0, -snr_db / 20.0);
}

Vec channel_sigmas(const Mat& signals, double snr_db) {
    Vec sigma(signals.rows());
    for (Eigen::Index r = 0; r < signals.rows(); ++r) {
        try {
            sigma(r) = snr_sigma(signals.row(r).transpose(), snr_db);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::DegenerateChannel) throw;
            std::cerr << "warning: channel " << r << " has zero rms; no noise added\n";
            sigma(r) = 0.0;
        }
    }
    return sigma;
}

Trajectory add_noise(const Trajectory& clean, const Vec& state_sigma, const Vec& input_sigma, Rng& rng) {
    Trajectory out = clean;
    for (Eigen::Index k = 0; k < out.states.cols(); ++k) {
        out.states.col(k) += gaussian_vec(rng, state_sigma);
    }
    if (input_sigma.size() == out.inputs.rows()) {
        for (Eigen::Index k = 0; k < out.inputs.cols(); ++k) {
            out.inputs.col(k) += gaussian_vec(rng, input_sigma);
        }
    }
    return out;
}

Trajectory corrupt(const Trajectory& traj, const NoiseSpec& spec) {
    if (!spec.snr_db) return traj;
    const Vec sx = channel_sigmas(traj.states, *spec.snr_db);
    Vec su = Vec::Zero(0);
    if (spec.corrupt_inputs && traj.inputs.cols() > 0) su = channel_sigmas(traj.inputs, *spec.snr_db);
    Rng rng = make_rng(spec.seed, "corrupt");
    return add_noise(traj, sx, su, rng);
}

Dataset gen_dataset(const SystemSpec& spec, int n_traj, int n_snap, double dt,
                    const Excitation& excitation, const NoiseSpec& noise, std::uint64_t seed) {
    spec.validate();
    excitation.validate(spec);
    if (n_traj < 3 || n_snap < 3) throw Error(ErrorCode::PreconditionViolated, "gen_dataset: n_traj and n_snap must be >= 3");
    if (!(dt > 0.0)) throw Error(ErrorCode::PreconditionViolated, "gen_dataset: dt must be positive");

    Dataset ds;
    ds.system = spec;
    ds.excitation = excitation;
    ds.noise = noise;
    ds.seed = seed;
    ds.dt = dt;
    ds.clean.resize(static_cast<std::size_t>(n_traj));

    constexpr int kMaxRetries = 10;
    parallel_for(ds.clean.size(), [&](std::size_t i) {
        for (int attempt = 0;; ++attempt) {
            Rng rng = make_rng(seed, "trajectory", static_cast<std::uint64_t>(i) * 64 + static_cast<std::uint64_t>(attempt));
            const Vec x0 = uniform_vec(rng, excitation.state_lo, excitation.state_hi);
            Mat inputs(spec.input_dim, n_snap - 1);
            for (int k = 0; k < n_snap - 1; ++k) inputs.col(k) = uniform_vec(rng, excitation.input_lo, excitation.input_hi);
            try {
                ds.clean[i] = simulate(spec, x0, inputs, dt);
                return;
            } catch (const Error& e) {
                if (e.code() != ErrorCode::Diverged || attempt >= kMaxRetries) throw;
            }
        }
    });

    if (!noise.snr_db) {
        ds.noisy = ds.clean;
        ds.state_sigma = Vec::Zero(spec.state_dim);
        ds.input_sigma = Vec::Zero(spec.input_dim);
        return ds;
    }

    Mat all_states(spec.state_dim, static_cast<Eigen::Index>(n_traj) * n_snap);
    Mat all_inputs(spec.input_dim, static_cast<Eigen::Index>(n_traj) * (n_snap - 1));
    for (int i = 0; i < n_traj; ++i) {
        all_states.middleCols(static_cast<Eigen::Index>(i) * n_snap, n_snap) = ds.clean[i].states;
        all_inputs.middleCols(static_cast<Eigen::Index>(i) * (n_snap - 1), n_snap - 1) = ds.clean[i].inputs;
    }
    ds.state_sigma = channel_sigmas(all_states, *noise.snr_db);
    ds.input_sigma = noise.corrupt_inputs ? channel_sigmas(all_inputs, *noise.snr_db) : Vec::Zero(spec.input_dim);

    ds.noisy.resize(ds.clean.size());
    parallel_for(ds.clean.size(), [&](std::size_t i) {
        Rng rng = make_rng(noise.seed, "measurement-noise", i);
        ds.noisy[i] = add_noise(ds.clean[i], ds.state_sigma, ds.input_sigma, rng);
    });
    return ds;
}

TripletBatch TripletBatch::select(const std::vector<Eigen::Index>& columns) const {
    TripletBatch out;
    const auto s = static_cast<Eigen::Index>(columns.size());
    out.dt = dt;
    out.xm_minus.resize(xm.rows(), s);
    out.xm.resize(xm.rows(), s);
    out.xm_plus.resize(xm.rows(), s);
    out.um_minus.resize(um.rows(), s);
    out.um.resize(um.rows(), s);
    out.source.reserve(columns.size());
    for (Eigen::Index j = 0; j < s; ++j) {
        const Eigen::Index c = columns[static_cast<std::size_t>(j)];
        out.xm_minus.col(j) = xm_minus.col(c);
        out.xm.col(j) = xm.col(c);
        out.xm_plus.col(j) = xm_plus.col(c);
        out.um_minus.col(j) = um_minus.col(c);
        out.um.col(j) = um.col(c);
        if (!source.empty()) out.source.push_back(source[static_cast<std::size_t>(c)]);
    }
    return out;
}

TripletBatch build_triplets(const std::vector<Trajectory>& trajs) {
    Eigen::Index total = 0;
    Eigen::Index n = -1, m = -1;
    double dt = 0.0;
    for (const auto& t : trajs) {
        if (t.length() < 3) continue;
        if (n < 0) {
            n = t.state_dim();
            m = t.input_dim();
            dt = t.dt;
        } else if (t.state_dim() != n || t.input_dim() != m) {
            throw Error(ErrorCode::LengthMismatch, "build_triplets: trajectories have different dimensions");
        }
        total += t.length() - 2;
    }
    if (total == 0) throw Error(ErrorCode::Empty, "build_triplets: no trajectory has 3 or more states");

    TripletBatch b;
    b.dt = dt;
    b.xm_minus.resize(n, total);
    b.xm.resize(n, total);
    b.xm_plus.resize(n, total);
    b.um_minus.resize(m, total);
    b.um.resize(m, total);
    b.source.reserve(static_cast<std::size_t>(total));
    Eigen::Index col = 0;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
        const auto& t = trajs[i];
        const Eigen::Index w = t.length() - 2;
        if (w <= 0) continue;
        b.xm_minus.middleCols(col, w) = t.states.leftCols(w);
        b.xm.middleCols(col, w) = t.states.middleCols(1, w);
        b.xm_plus.middleCols(col, w) = t.states.rightCols(w);
        b.um_minus.middleCols(col, w) = t.inputs.leftCols(w);
        b.um.middleCols(col, w) = t.inputs.rightCols(w);
        for (Eigen::Index k = 1; k <= w; ++k) b.source.emplace_back(static_cast<int>(i), static_cast<int>(k));
        col += w;
    }
    return b;
}

}  // namespace koopman
