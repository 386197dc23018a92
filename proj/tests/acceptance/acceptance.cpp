// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance            run every criterion
//   acceptance 2 7        run only the listed criteria
//
// Exit status is nonzero when a criterion fails that is not in kKnownRed.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "koopman/bench.hpp"
#include "koopman/commands.hpp"
#include "koopman/persistence.hpp"
#include "koopman/text.hpp"

using namespace koopman;
namespace fs = std::filesystem;

namespace {

// Criteria that fail for reasons recorded in the README rather than defects.
const std::set<int> kKnownRed{3};

struct Outcome {
    bool pass = false;
    std::string detail;
};

struct Criterion {
    int id;
    std::string name;
    double budget_s;
    std::function<Outcome()> run;
};

Mat randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Mat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = d(rng);
    return m;
}

double rel_frob(const Mat& a, const Mat& b) {
    return (a - b).norm() / std::max(b.norm(), 1e-300);
}

std::string sig(double v) {
    return format_sig(v, 4);
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("koopman_acceptance_" + name);
    fs::remove_all(dir);
    return dir;
}

// ---------------------------------------------------------------- criterion 1

Outcome gradient_check() {
    const double h = 1e-6;
    double worst = 0.0;
    int instances = 0;
    const std::vector<std::vector<int>> archs{{2, 5, 3}, {3, 6, 4, 2}, {2, 8, 8, 4}};
    for (std::uint64_t seed = 0; seed < 6; ++seed) {
        const auto& dims = archs[seed % archs.size()];
        std::mt19937_64 rng(seed + 11);
        const int n = dims.front(), m = 1 + static_cast<int>(seed % 2);
        TrainState st = TrainState::init(dims, m, seed);
        for (auto& l : st.encoder.layers) l.bias = randn(rng, l.bias.size(), 1, 0.2);
        const Eigen::Index big_n = st.a_f.rows();
        st.a_f += randn(rng, big_n, big_n, 0.1);
        st.a_b += randn(rng, big_n, big_n, 0.1);
        st.b_f = randn(rng, big_n, m, 0.3);
        st.b_b = randn(rng, big_n, m, 0.3);
        TripletBatch b;
        const int s = 4 + static_cast<int>(seed % 5);
        b.xm_minus = randn(rng, n, s);
        b.xm = randn(rng, n, s);
        b.xm_plus = randn(rng, n, s);
        b.um_minus = randn(rng, m, s);
        b.um = randn(rng, m, s);
        LossWeights w;
        w.gamma1 = 0.01;
        w.gamma2 = 0.02;
        const Vec g = loss_and_grad(b, st, w).grad;
        const Vec p0 = pack_parameters(st);
        TrainState probe = st;
        for (Eigen::Index i = 0; i < p0.size(); ++i) {
            Vec p = p0;
            p(i) += h;
            unpack_parameters(p, probe);
            const double up = total_loss(b, probe, w);
            p(i) -= 2 * h;
            unpack_parameters(p, probe);
            const double dn = total_loss(b, probe, w);
            const double fd = (up - dn) / (2 * h);
            worst = std::max(worst, std::abs(fd - g(i)) / std::max({std::abs(fd), std::abs(g(i)), 1e-2}));
        }
        ++instances;
    }
    return {worst < 1e-5, std::to_string(instances) + " instances, worst relative error " + sig(worst) + " (< 1e-5)"};
}

// ---------------------------------------------------------------- criterion 2

Outcome reduced_bias_identity() {
    std::mt19937_64 rng(2);
    double worst_sq = 0.0, worst_consistent = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Eigen::Index big_n = 2 + t % 6, m = 1 + t % 3;
        auto well = [&] {
            return Mat(Mat::Identity(big_n, big_n) + 0.25 * randn(rng, big_n, big_n) / std::sqrt(double(big_n)));
        };
        const BlockOp kf{well(), randn(rng, big_n, m)};
        const BlockOp kb{well(), randn(rng, big_n, m)};
        const Mat target = kf.dense() * kb.dense().inverse();
        const Mat kp = reduced_bias(kf, kb).dense();
        worst_sq = std::max(worst_sq, rel_frob(kp * kp, target));

        const BlockOp consistent{kf.a.inverse(), -kf.a.inverse() * kf.b};
        const BlockOp back = reduced_bias(kf, consistent);
        worst_consistent = std::max({worst_consistent, rel_frob(back.a, kf.a), rel_frob(back.b, kf.b)});
    }
    return {worst_sq < 1e-8 && worst_consistent < 1e-10,
            "square residual " + sig(worst_sq) + " (< 1e-8), consistent-pair recovery " + sig(worst_consistent) +
                " (< 1e-10)"};
}

// ---------------------------------------------------------------- criterion 3

Outcome bias_law() {
    BiasMcConfig cfg;
    cfg.truth = LinearTruth::random_stable(2, 1, 0.95, 3);
    cfg.relative_sigma = BiasMcConfig::sigma_from_snr(40.0);
    cfg.columns = 2000;
    cfg.draws = 500;
    cfg.seed = 3;
    const BiasDiagnostics d = bias_mc(cfg);
    const bool ratio_ok = d.ratio_defined && d.ratio >= 0.3 && d.ratio <= 0.8;
    const bool sign_ok = d.sign_test_p < 0.01;
    std::ostringstream os;
    os << "ratio " << sig(d.ratio) << " (want [0.3, 0.8]), sign test p " << sig(d.sign_test_p) << " (< 0.01), "
       << d.proposed_wins << "/" << d.n_draws << " draws favour the reduced-bias operator, deviations "
       << sig(d.dev_proposed) << " vs " << sig(d.dev_nominal);
    return {ratio_ok && sign_ok, os.str()};
}

// ------------------------------------------------------------ criteria 4 and 6

struct MethodErrors {
    std::map<std::string, std::vector<double>> by_method;
    double mean(const std::string& m) const {
        const auto& v = by_method.at(m);
        double s = 0.0;
        for (double x : v) s += x;
        return s / static_cast<double>(v.size());
    }
};

// Runs gen and train through the command layer, then evaluates every method.
std::map<double, MethodErrors> pipeline(const RunConfig& base, const std::vector<std::uint64_t>& seeds,
                                        const std::string& tag, bool tracking, int& diverged) {
    std::map<double, MethodErrors> out;
    for (std::uint64_t seed : seeds) {
        RunConfig cfg = base;
        cfg.seed = seed;
        cfg.output_dir = scratch(tag + "_" + std::to_string(seed));
        cmd_gen(cfg);
        cmd_train(cfg);
        const auto eval = make_eval_set(cfg.system, cfg.excitation(), cfg.eval.n_rollouts, cfg.eval.steps,
                                        cfg.dataset.dt, derive_seed(seed, "eval-set"));
        const Trajectory ref = cfg.reference.build(cfg.dataset.dt, cfg.system.input_dim);
        const MpcConfig mpc = cfg.mpc.to_mpc(derive_seed(seed, "feedback"));
        for (double snr : cfg.dataset.snr_db) {
            for (const auto& [method, stem] : {std::pair{"Proposed", "drkn"}, std::pair{"NominalLS", "nominal"}}) {
                const KoopmanModel model = load_model(model_dir(cfg, snr) / (std::string(stem) + ".json"));
                if (!tracking) {
                    out[snr].by_method[method].push_back(mean_pred_error(model, eval));
                    continue;
                }
                const TrackResult r = track(cfg.system, model, ref, mpc, derive_seed(seed, "track"));
                if (r.diverged) {
                    if (std::string(method) == "Proposed") ++diverged;
                    out[snr].by_method[method].push_back(INFINITY);
                } else {
                    out[snr].by_method[method].push_back(track_error(r, cfg.eval.tracked_channels));
                }
            }
        }
        fs::remove_all(cfg.output_dir);
    }
    return out;
}

Outcome vdp_ordering() {
    RunConfig cfg = RunConfig::van_der_pol();
    cfg.dataset.snr_db = {20.0, 30.0};
    cfg.mpc.record_timing = false;
    int unused = 0;
    const auto res = pipeline(cfg, {1, 2, 3}, "vdp", false, unused);
    const double d20 = res.at(20.0).mean("Proposed"), n20 = res.at(20.0).mean("NominalLS");
    const double d30 = res.at(30.0).mean("Proposed"), n30 = res.at(30.0).mean("NominalLS");
    const bool ok = d20 <= 0.6 * n20 && d30 <= 0.8 * n30;
    std::ostringstream os;
    os << "20 dB: DRKN " << sig(d20) << " vs nominal " << sig(n20) << " (ratio " << sig(d20 / n20)
       << ", want <= 0.6); 30 dB: DRKN " << sig(d30) << " vs nominal " << sig(n30) << " (ratio " << sig(d30 / n30)
       << ", want <= 0.8)";
    return {ok, os.str()};
}

// ---------------------------------------------------------------- criterion 5

Outcome exact_recovery() {
    const SystemSpec sys = SystemSpec::slow_manifold(-0.5, -1.0);
    const Dataset ds = gen_dataset(sys, 100, 100, 0.01, Excitation::defaults_for(sys), NoiseSpec{}, 5);
    const TripletBatch batch = build_triplets(ds.noisy);
    const auto eval = make_eval_set(sys, Excitation::defaults_for(sys), 20, 200, 0.01, 55);

    MonomialDictionary dict;
    dict.exponents = {{1, 0}, {0, 1}, {2, 0}};
    const Lift lift = Lift::dictionary(2, dict);
    const double e_nom = mean_pred_error(nominal_fit(batch, lift), eval);
    const double e_fb = mean_pred_error(fb_edmd_fit(batch, lift), eval);

    // noise-free recovery needs a tighter fit than the default schedule gives
    TrainConfig tc;
    tc.seed = 5;
    tc.epochs = 4000;
    tc.decay_every = 1000;
    const TrainResult tr = train(batch, tc);
    const double e_drkn = mean_pred_error(drkn_model(tr.state, 0.01), eval);

    const bool ok = e_nom < 1e-3 && e_fb < 1e-3 && e_drkn < 1e-3;
    return {ok, "e_pred nominal " + sig(e_nom) + ", fb-dictionary " + sig(e_fb) + ", DRKN " + sig(e_drkn) +
                    " (each < 1e-3)"};
}

// ---------------------------------------------------------------- criterion 6

Outcome arm_tracking() {
    RunConfig cfg = RunConfig::planar_arm();
    cfg.dataset.n_traj = 100;
    cfg.dataset.n_snap = 100;
    cfg.dataset.snr_db = {30.0};
    cfg.training.epochs = 300;
    cfg.training.decay_every = 100;
    cfg.mpc.feedback_snr_db = 30.0;
    cfg.mpc.record_timing = false;
    cfg.reference.duration = 10.0;
    int diverged = 0;
    const auto res = pipeline(cfg, {1, 2, 3, 4, 5}, "arm", true, diverged);
    const auto& d = res.at(30.0).by_method.at("Proposed");
    const auto& nm = res.at(30.0).by_method.at("NominalLS");
    int wins = 0;
    std::ostringstream per;
    for (std::size_t i = 0; i < d.size(); ++i) {
        wins += d[i] <= nm[i] ? 1 : 0;
        per << (i ? ", " : "") << sig(d[i]) << "/" << sig(nm[i]);
    }
    const bool ok = diverged == 0 && 2 * wins > static_cast<int>(d.size());
    return {ok, "DRKN <= nominal on " + std::to_string(wins) + "/" + std::to_string(d.size()) +
                    " seeds, DRKN divergences " + std::to_string(diverged) + "; e_track DRKN/nominal per seed: " +
                    per.str()};
}

// ---------------------------------------------------------------- criterion 7

Outcome mpc_correctness() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    double worst_cost = 0.0;
    for (int t = 0; t < 50; ++t) {
        const int big_n = 3 + t % 3, m = 1 + t % 2, horizon = 1 + t % 12;
        const KoopmanModel model{randn(rng, big_n, big_n, 0.45), randn(rng, big_n, m), Lift::identity(big_n), 0.01,
                                 Provenance::GroundTruthLinear};
        std::vector<int> tracked(static_cast<std::size_t>(big_n));
        for (int i = 0; i < big_n; ++i) tracked[static_cast<std::size_t>(i)] = i;
        MpcConfig cfg = MpcConfig::defaults(big_n, m, tracked, 1.0);
        cfg.horizon = horizon;
        cfg.q_x = randn(rng, big_n, 1).cwiseAbs();
        if (t % 2) {
            cfg.x_lo = Vec::Constant(big_n, -0.2);
            cfg.x_hi = Vec::Constant(big_n, 0.2);
        }
        const Vec z0 = randn(rng, big_n, 1);
        const Mat ref = randn(rng, big_n, horizon);
        const BoxQp qp = condense(model, z0, ref, cfg);
        Vec u(horizon * m);
        for (Eigen::Index i = 0; i < u.size(); ++i) u(i) = unif(rng);
        // rollout-and-sum oracle
        Vec z = z0;
        double j = 0.0;
        for (int k = 0; k < horizon; ++k) {
            const Vec uk = u.segment(k * m, m);
            z = model.a * z + model.b * uk;
            const Vec e = z - ref.col(k);
            j += e.dot(cfg.q_x.asDiagonal() * e) + uk.dot(cfg.r_u.asDiagonal() * uk);
            if (cfg.x_lo)
                for (int i = 0; i < big_n; ++i) {
                    const double v = std::max({0.0, (*cfg.x_lo)(i) - z(i), z(i) - (*cfg.x_hi)(i)});
                    j += cfg.rho * v * v;
                }
        }
        worst_cost = std::max(worst_cost, std::abs(qp.cost(u) - j) / std::max(1.0, j));
    }

    double worst_qp = 0.0;
    for (int t = 0; t < 50; ++t) {
        const Mat p = randn(rng, 8, 8);
        BoxQp qp;
        qp.hessian = p * p.transpose() + 0.5 * Mat::Identity(8, 8);
        qp.gradient = randn(rng, 8, 1, 0.5);
        const Vec exact = -qp.hessian.llt().solve(qp.gradient);
        const double bound = exact.cwiseAbs().maxCoeff() + 1.0;
        qp.lo = Vec::Constant(8, -bound);
        qp.hi = Vec::Constant(8, bound);
        worst_qp = std::max(worst_qp, (solve_box_qp(qp).u - exact).cwiseAbs().maxCoeff());
    }

    BoxQp one;
    one.hessian = Mat::Identity(1, 1);
    one.gradient = Vec::Constant(1, -5.0);
    one.lo = Vec::Constant(1, -1.0);
    one.hi = Vec::Constant(1, 1.0);
    const double clamped = solve_box_qp(one).u(0);

    const bool ok = worst_cost < 1e-10 && worst_qp < 1e-7 && clamped == 1.0;
    return {ok, "cost mismatch " + sig(worst_cost) + " (< 1e-10), unconstrained QP error " + sig(worst_qp) +
                    " (< 1e-7), clamped 1-D solution " + format_double(clamped) + " (exactly 1)"};
}

// ---------------------------------------------------------------- criterion 8

std::map<std::string, std::string> snapshot(const fs::path& dir) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        const std::string rel = fs::relative(e.path(), dir).string();
        if (rel.rfind("timing", 0) == 0) continue;  // wall-clock training time
        files[rel] = read_text(e.path());
    }
    return files;
}

Outcome determinism() {
    RunConfig cfg = RunConfig::van_der_pol();
    cfg.dataset.n_traj = 20;
    cfg.dataset.n_snap = 50;
    cfg.dataset.snr_db = {20.0, 40.0};
    cfg.training.epochs = 20;
    cfg.eval.n_rollouts = 5;
    cfg.eval.steps = 50;
    cfg.eval.bias_columns = 300;
    cfg.eval.bias_draws = 100;
    cfg.reference.duration = 1.0;
    cfg.mpc.record_timing = false;
    std::vector<std::map<std::string, std::string>> runs;
    for (int rep = 0; rep < 2; ++rep) {
        cfg.output_dir = scratch("determinism_" + std::to_string(rep));
        cmd_gen(cfg);
        cmd_train(cfg);
        for (const char* mode : {"predict", "track", "bias-mc", "compare"}) (void)cmd_eval(cfg, mode);
        runs.push_back(snapshot(cfg.output_dir));
    }
    const bool same = runs[0] == runs[1];

    const fs::path model_file = cfg.output_dir / "models" / "snr_20" / "drkn.json";
    const KoopmanModel original = load_model(model_file);
    const fs::path copy = cfg.output_dir / "roundtrip.json";
    save_model(original, copy);
    const KoopmanModel loaded = load_model(copy);
    std::mt19937_64 rng(8);
    int identical = 0;
    for (int t = 0; t < 100; ++t) {
        const Vec x0 = randn(rng, 2, 1);
        const Mat u = randn(rng, 1, 20);
        identical += rollout(original, x0, u).states == rollout(loaded, x0, u).states ? 1 : 0;
    }
    for (int rep = 0; rep < 2; ++rep) fs::remove_all(scratch("determinism_" + std::to_string(rep)));
    return {same && identical == 100, std::to_string(runs[0].size()) + " artifacts " +
                                          (same ? "byte-identical" : "DIFFER") + " across reruns; " +
                                          std::to_string(identical) + "/100 round-trip rollouts bit-identical"};
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::stoi(argv[i]));

    const std::vector<Criterion> criteria{
        {1, "gradient correctness", 10, gradient_check},
        {2, "reduced-bias operator identity", 5, reduced_bias_identity},
        {3, "bias law", 120, bias_law},
        {4, "Van der Pol ordering", 1800, vdp_ordering},
        {5, "exact-recovery oracle", 600, exact_recovery},
        {6, "closed-loop tracking", 1200, arm_tracking},
        {7, "MPC correctness", 5, mpc_correctness},
        {8, "infrastructure determinism", 300, determinism},
    };

    // the command layer reports progress on stdout; keep only the verdict lines
    std::ostream verdict(std::cout.rdbuf());
    std::ostringstream chatter;
    std::cout.rdbuf(chatter.rdbuf());

    int unexpected = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool in_budget = secs <= c.budget_s;
        const bool pass = o.pass && in_budget;
        verdict << (pass ? "PASS" : "FAIL") << " criterion " << c.id << " (" << c.name << "): " << o.detail
                  << "; runtime " << format_sig(secs, 3) << " s (budget " << c.budget_s << " s)"
                  << (!pass && kKnownRed.count(c.id) ? " [known red]" : "") << std::endl;
        if (!pass && !kKnownRed.count(c.id)) ++unexpected;
        chatter.str("");
    }
    std::cout.rdbuf(verdict.rdbuf());
    return unexpected == 0 ? 0 : 1;
}
