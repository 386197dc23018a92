#include "koopman/bench.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <map>
#include <sstream>

#include "koopman/errors.hpp"
#include "koopman/parallel.hpp"
#include "koopman/text.hpp"

namespace koopman {

double pred_error(const Trajectory& truth, const Trajectory& pred) {
    if (truth.states.rows() != pred.states.rows() || truth.states.cols() != pred.states.cols()) {
        throw Error(ErrorCode::LengthMismatch, "pred_error: trajectories differ in shape");
    }
    if (truth.length() == 0) throw Error(ErrorCode::Empty, "pred_error: empty trajectory");
    return (truth.states - pred.states).colwise().norm().mean();
}

double track_error(const TrackResult& result, const std::vector<int>& channels) {
    if (result.actual.rows() != result.reference.rows() || result.actual.cols() != result.reference.cols()) {
        throw Error(ErrorCode::LengthMismatch, "track_error: reference and actual differ in shape");
    }
    if (result.actual.cols() == 0) throw Error(ErrorCode::Empty, "track_error: empty result");
    if (channels.empty()) throw Error(ErrorCode::PreconditionViolated, "track_error: no channels");
    double sum = 0.0;
    for (Eigen::Index k = 0; k < result.actual.cols(); ++k) {
        double sq = 0.0;
        for (int c : channels) {
            if (c < 0 || c >= result.actual.rows()) throw Error(ErrorCode::PreconditionViolated, "track_error: bad channel");
            const double d = result.actual(c, k) - result.reference(c, k);
            sq += d * d;
        }
        sum += std::sqrt(sq);
    }
    return sum / static_cast<double>(result.actual.cols());
}

Effort control_effort(const TrackResult& result) {
    Effort e;
    const Eigen::Index k = result.inputs.cols();
    if (k == 0) return e;
    const double total = result.inputs.colwise().norm().sum();
    e.mean_norm = total / static_cast<double>(k);
    e.integral = total * result.dt;
    return e;
}

std::vector<Trajectory> make_eval_set(const SystemSpec& system, const Excitation& excitation, int n_rollouts,
                                      int steps, double dt, std::uint64_t seed) {
    return gen_dataset(system, n_rollouts, steps + 1, dt, excitation, NoiseSpec{}, seed).clean;
}

double mean_pred_error(const KoopmanModel& model, const std::vector<Trajectory>& eval_set) {
    if (eval_set.empty()) throw Error(ErrorCode::Empty, "mean_pred_error: empty evaluation set");
    double sum = 0.0;
    for (const auto& t : eval_set) {
        const Trajectory pred = rollout(model, t.states.col(0), t.inputs);
        if (!pred.states.allFinite()) throw Error(ErrorCode::NonFinite, "mean_pred_error: rollout left the finite range");
        sum += pred_error(t, pred);
    }
    return sum / static_cast<double>(eval_set.size());
}

LinearTruth LinearTruth::random_stable(int n, int m, double radius, std::uint64_t seed) {
    if (n < 1 || m < 1 || !(radius > 0.0)) throw Error(ErrorCode::Config, "LinearTruth: bad dimensions or radius");
    Rng rng = make_rng(seed, "linear-truth");
    std::normal_distribution<double> normal(0.0, 1.0);
    auto gaussian = [&](int r, int c) {
        Mat g(r, c);
        for (int j = 0; j < c; ++j)
            for (int i = 0; i < r; ++i) g(i, j) = normal(rng);
        return g;
    };
    LinearTruth t;
    if (n == 2) {
        const double theta = std::uniform_real_distribution<double>(0.05, 0.3)(rng);
        Mat rot(2, 2);
        rot << std::cos(theta), -std::sin(theta), std::sin(theta), std::cos(theta);
        const Mat tmap = Mat::Identity(2, 2) + 0.1 * gaussian(2, 2);
        t.a = tmap * (radius * rot) * inv(tmap);
    } else {
        Eigen::HouseholderQR<Mat> qr(gaussian(n, n));
        t.a = radius * Mat(qr.householderQ());
    }
    t.b = 0.1 * gaussian(n, m);
    return t;
}

double BiasMcConfig::sigma_from_snr(double snr_db) {
    return std::pow(10.0, -snr_db / 20.0);
}

double sign_test_p(int k, int n) {
    if (n <= 0) return 1.0;
    if (k <= 0) return 1.0;
    if (k > n) return 0.0;
    // log-sum-exp over the upper tail
    std::vector<double> logs;
    for (int i = k; i <= n; ++i) {
        logs.push_back(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) - n * std::log(2.0));
    }
    const double top = *std::max_element(logs.begin(), logs.end());
    double s = 0.0;
    for (double l : logs) s += std::exp(l - top);
    return std::min(1.0, std::exp(top + std::log(s)));
}

namespace {

struct DrawOutcome {
    Mat k_fm2;
    Mat k_prop2;
    double assumption = 0.0;
};

Mat gaussian_like(Rng& rng, const Vec& sigma, Eigen::Index cols) {
    Mat out(sigma.size(), cols);
    for (Eigen::Index j = 0; j < cols; ++j) out.col(j) = gaussian_vec(rng, sigma);
    return out;
}

}  // namespace

BiasDiagnostics bias_mc(const BiasMcConfig& cfg) {
    const Mat& a = cfg.truth.a;
    const Mat& b = cfg.truth.b;
    const Eigen::Index n = a.rows();
    const Eigen::Index m = b.cols();
    if (a.cols() != n || b.rows() != n || m < 1) throw Error(ErrorCode::Config, "bias_mc: inconsistent ground truth");
    if (cfg.draws < 100) throw Error(ErrorCode::PreconditionViolated, "bias_mc: at least 100 draws are required");
    if (cfg.columns <= n + m) throw Error(ErrorCode::PreconditionViolated, "bias_mc: too few columns");
    if (!(cfg.relative_sigma >= 0.0) || !std::isfinite(cfg.relative_sigma)) {
        throw Error(ErrorCode::Config, "bias_mc: relative_sigma must be finite and nonnegative");
    }
    const Eigen::Index s = cfg.columns;

    Rng clean_rng = make_rng(cfg.seed, "bias-clean");
    Mat xm(n, s), u(m, s);
    for (Eigen::Index j = 0; j < s; ++j) {
        xm.col(j) = gaussian_vec(clean_rng, Vec::Ones(n));
        u.col(j) = uniform_vec(clean_rng, Vec::Constant(m, -1.0), Vec::Constant(m, 1.0));
    }
    const Mat x = a * xm + b * u;
    const Mat xp = a * x + b * u;

    Mat all_states(n, 3 * s);
    all_states << xm, x, xp;
    const Vec state_sigma = cfg.relative_sigma * all_states.rowwise().norm() / std::sqrt(3.0 * static_cast<double>(s));
    const Vec input_sigma = cfg.relative_sigma * u.rowwise().norm() / std::sqrt(static_cast<double>(s));

    Mat psi(n + m, s);
    psi << x, u;
    const Mat gram = psi * psi.transpose();
    const double gram_min = Eigen::SelfAdjointEigenSolver<Mat>(gram).eigenvalues().minCoeff();

    const BlockOp truth = cfg.truth.op();
    const Mat k_f2 = (truth * truth).dense();

    std::vector<DrawOutcome> outcomes(static_cast<std::size_t>(cfg.draws));
    parallel_for(static_cast<std::size_t>(cfg.draws), [&](std::size_t d) {
        Rng rng = make_rng(cfg.seed, "bias-draw", d);
        const Mat n_xm = gaussian_like(rng, state_sigma, s);
        const Mat n_x = gaussian_like(rng, state_sigma, s);
        const Mat n_xp = gaussian_like(rng, state_sigma, s);
        const Mat n_u = gaussian_like(rng, input_sigma, s);

        Mat noise(n + m, s);
        noise << n_x, n_u;
        const Mat noisy_psi = psi + noise;
        const Mat fwd = lstsq_right(xp + n_xp, noisy_psi);
        const Mat bwd = lstsq_right(xm + n_xm, noisy_psi);
        const BlockOp k_fm{fwd.leftCols(n), fwd.rightCols(m)};
        const BlockOp k_bm{bwd.leftCols(n), bwd.rightCols(m)};
        const BlockOp k_prop = reduced_bias(k_fm, k_bm);

        DrawOutcome& out = outcomes[d];
        out.k_fm2 = (k_fm * k_fm).dense();
        out.k_prop2 = (k_prop * k_prop).dense();
        const Mat cross = noise * psi.transpose();
        out.assumption = norm2_est(cross + cross.transpose() + noise * noise.transpose()) / gram_min;
    });

    BiasDiagnostics diag;
    diag.n_draws = cfg.draws;
    diag.relative_sigma = cfg.relative_sigma;
    Mat mean_fm2 = Mat::Zero(k_f2.rows(), k_f2.cols());
    Mat mean_prop2 = mean_fm2;
    for (const auto& o : outcomes) {
        mean_fm2 += o.k_fm2;
        mean_prop2 += o.k_prop2;
        if (frob(o.k_prop2 - k_f2) < frob(o.k_fm2 - k_f2)) ++diag.proposed_wins;
        if (!(o.assumption < cfg.assumption_limit)) ++diag.assumption_failures;
        diag.assumption_max = std::max(diag.assumption_max, o.assumption);
    }
    mean_fm2 /= static_cast<double>(cfg.draws);
    mean_prop2 /= static_cast<double>(cfg.draws);
    diag.dev_nominal = frob(mean_fm2 - k_f2);
    diag.dev_proposed = frob(mean_prop2 - k_f2);
    diag.ratio_defined = cfg.relative_sigma > 0.0 && diag.dev_nominal > 0.0;
    diag.ratio = diag.ratio_defined ? diag.dev_proposed / diag.dev_nominal : std::numeric_limits<double>::quiet_NaN();
    diag.sign_test_p = sign_test_p(diag.proposed_wins, diag.n_draws);

    if (10 * diag.assumption_failures > cfg.draws) {
        throw Error(ErrorCode::AssumptionViolated,
                    "bias_mc: small-noise condition failed on " + std::to_string(diag.assumption_failures) + " of " +
                        std::to_string(cfg.draws) + " draws (max " + format_sig(diag.assumption_max) + ")");
    }
    return diag;
}

const CompareCell* CompareReport::find(double snr_db, const std::string& method) const {
    for (const auto& c : cells) {
        if (c.method == method && c.snr_db == snr_db) return &c;
    }
    return nullptr;
}

namespace {

const std::vector<std::string> kCanonicalMethods{"Proposed", "NominalLS", "FBEDMD-fixed"};
const std::string kDash = "—";

std::string snr_label(double snr) {
    return std::isinf(snr) ? std::string("clean") : format_sig(snr, 6);
}

std::size_t display_width(const std::string& s) {
    std::size_t w = 0;
    for (unsigned char c : s) {
        if ((c & 0xC0) != 0x80) ++w;
    }
    return w;
}

std::string pad(const std::string& s, std::size_t width) {
    const std::size_t w = display_width(s);
    return w >= width ? s : std::string(width - w, ' ') + s;
}

std::string opt_csv(const std::optional<double>& v) {
    return v ? format_double(*v) : std::string();
}

}  // namespace

std::string CompareReport::to_csv() const {
    std::ostringstream os;
    os << "snr_db,method,status,e_pred,e_track,effort_mean_norm,effort_integral,solve_time_s,train_time_s\n";
    for (double snr : snrs) {
        for (const auto& method : methods) {
            const CompareCell* c = find(snr, method);
            if (!c) continue;
            os << (std::isinf(snr) ? std::string("inf") : format_double(snr)) << ',' << method << ',';
            if (!c->metrics) {
                os << "failed," << kDash << ',' << kDash << ",,,,\n";
                continue;
            }
            const Metrics& mt = *c->metrics;
            os << "ok," << format_double(mt.e_pred) << ',' << opt_csv(mt.e_track) << ','
               << (mt.effort ? format_double(mt.effort->mean_norm) : "") << ','
               << (mt.effort ? format_double(mt.effort->integral) : "") << ',' << opt_csv(mt.solve_time) << ','
               << opt_csv(mt.train_time) << '\n';
        }
    }
    return os.str();
}

std::string CompareReport::to_table() const {
    struct Block {
        std::string title;
        std::function<std::optional<double>(const Metrics&)> get;
    };
    std::vector<Block> blocks{{"Mean prediction error", [](const Metrics& m) { return std::optional<double>(m.e_pred); }}};
    if (has_tracking) {
        blocks.push_back({"Mean tracking error", [](const Metrics& m) { return m.e_track; }});
        blocks.push_back({"Control effort (mean per-step norm)", [](const Metrics& m) {
                              return m.effort ? std::optional<double>(m.effort->mean_norm) : std::nullopt;
                          }});
        blocks.push_back({"Control effort (time integral)", [](const Metrics& m) {
                              return m.effort ? std::optional<double>(m.effort->integral) : std::nullopt;
                          }});
        blocks.push_back({"Compute time per MPC iteration (s)", [](const Metrics& m) { return m.solve_time; }});
    }
    std::ostringstream os;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
        const Block& blk = blocks[bi];
        std::vector<std::vector<std::string>> rows;
        std::vector<std::string> header{"SNR (dB)"};
        header.insert(header.end(), methods.begin(), methods.end());
        rows.push_back(header);
        for (double snr : snrs) {
            std::vector<std::string> row{snr_label(snr)};
            for (const auto& method : methods) {
                const CompareCell* c = find(snr, method);
                std::optional<double> v;
                if (c && c->metrics) v = blk.get(*c->metrics);
                row.push_back(v ? format_sig(*v) : kDash);
            }
            rows.push_back(row);
        }
        std::vector<std::size_t> widths(header.size(), 0);
        for (const auto& r : rows)
            for (std::size_t i = 0; i < r.size(); ++i) widths[i] = std::max(widths[i], display_width(r[i]));
        if (bi > 0) os << '\n';
        os << blk.title << '\n';
        for (std::size_t ri = 0; ri < rows.size(); ++ri) {
            for (std::size_t i = 0; i < rows[ri].size(); ++i) os << (i ? "  " : "") << pad(rows[ri][i], widths[i]);
            os << '\n';
            if (ri == 0) {
                std::size_t total = 0;
                for (auto w : widths) total += w;
                os << std::string(total + 2 * (widths.size() - 1), '-') << '\n';
            }
        }
    }
    return os.str();
}

CompareReport compare(const std::vector<Candidate>& candidates, const std::vector<Trajectory>& eval_set,
                      const std::optional<TrackSetup>& tracking) {
    CompareReport report;
    report.has_tracking = tracking.has_value();
    for (const auto& name : kCanonicalMethods) {
        for (const auto& c : candidates) {
            if (c.method == name) {
                report.methods.push_back(name);
                break;
            }
        }
    }
    for (const auto& c : candidates) {
        if (std::find(report.methods.begin(), report.methods.end(), c.method) == report.methods.end()) {
            report.methods.push_back(c.method);
        }
        if (std::find(report.snrs.begin(), report.snrs.end(), c.snr_db) == report.snrs.end()) {
            report.snrs.push_back(c.snr_db);
        }
    }
    std::sort(report.snrs.begin(), report.snrs.end(), std::greater<>());

    std::vector<CompareCell> computed(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const Candidate& cand = candidates[i];
        CompareCell& cell = computed[i];
        cell.method = cand.method;
        cell.snr_db = cand.snr_db;
        try {
            const KoopmanModel model = cand.build();
            Metrics mt;
            mt.train_time = cand.train_time;
            mt.e_pred = mean_pred_error(model, eval_set);
            if (tracking) {
                double e_sum = 0.0, eff_mean = 0.0, eff_int = 0.0, solve_s = 0.0;
                std::size_t solve_n = 0;
                for (std::size_t r = 0; r < tracking->references.size(); ++r) {
                    const TrackResult res = track(tracking->system, model, tracking->references[r], tracking->mpc,
                                                  derive_seed(tracking->seed, "compare-track", r));
                    if (res.diverged) {
                        throw Error(ErrorCode::Diverged, "closed loop diverged at step " + std::to_string(res.diverged_step));
                    }
                    e_sum += track_error(res, tracking->channels);
                    const Effort eff = control_effort(res);
                    eff_mean += eff.mean_norm;
                    eff_int += eff.integral;
                    for (double ms : res.solve_ms) solve_s += ms / 1000.0;
                    solve_n += res.solve_ms.size();
                }
                const double nr = static_cast<double>(tracking->references.size());
                mt.e_track = e_sum / nr;
                mt.effort = Effort{eff_mean / nr, eff_int / nr};
                mt.solve_time = solve_n ? solve_s / static_cast<double>(solve_n) : 0.0;
            }
            cell.metrics = mt;
        } catch (const Error& e) {
            cell.failure = e.what();
            std::cerr << "compare: " << cand.method << " at " << snr_label(cand.snr_db) << " dB failed: " << e.what()
                      << '\n';
        }
    }
    for (double snr : report.snrs) {
        for (const auto& method : report.methods) {
            for (const auto& c : computed) {
                if (c.method == method && c.snr_db == snr) report.cells.push_back(c);
            }
        }
    }
    return report;
}

}  // namespace koopman
