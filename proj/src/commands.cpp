#include "koopman/commands.hpp"

#include <chrono>
#include <iostream>

#include "koopman/bench.hpp"
#include "koopman/persistence.hpp"
#include "koopman/text.hpp"

namespace koopman {

int exit_code_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::Io: return kExitUsage;
        case ErrorCode::Config: return kExitConfig;
        case ErrorCode::Validation: return kExitInvalid;
        case ErrorCode::Diverged: return kExitDiverged;
        default: return kExitNumeric;
    }
}

std::string snr_tag(double snr_db) {
    return format_double(snr_db);
}

fs::path dataset_dir(const RunConfig& cfg, double snr_db) {
    return cfg.output_dir / "data" / ("snr_" + snr_tag(snr_db));
}

fs::path model_dir(const RunConfig& cfg, double snr_db) {
    return cfg.output_dir / "models" / ("snr_" + snr_tag(snr_db));
}

namespace {

struct MethodFile {
    const char* method;
    const char* stem;
};

constexpr MethodFile kMethods[] = {{"Proposed", "drkn"}, {"NominalLS", "nominal"}, {"FBEDMD-fixed", "fbedmd"}};

void log(const std::string& msg) {
    std::cerr << "koopman: " << msg << '\n';
}

void train_one(const RunConfig& cfg, const Dataset& ds, const fs::path& out_dir, const fs::path& timing_file) {
    const TripletBatch batch = build_triplets(ds.noisy);
    TrainConfig tc = cfg.training;
    tc.seed = derive_seed(cfg.seed, "train");
    const auto t0 = std::chrono::steady_clock::now();
    const TrainResult tr = train(batch, tc);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    write_text(out_dir / "loss.csv", loss_csv(tr.history, tc.weights));
    write_text(timing_file, Json{{"train_seconds", seconds}}.dump(2) + "\n");

    auto attempt = [&](const char* stem, const std::function<void()>& fn) {
        const fs::path failed = out_dir / (std::string(stem) + ".failed");
        std::error_code ec;
        fs::remove(failed, ec);
        fs::remove(out_dir / (std::string(stem) + ".json"), ec);
        try {
            fn();
        } catch (const Error& e) {
            log(std::string(stem) + " fit failed: " + e.what());
            write_text(failed, std::string(e.what()) + "\n");
        }
    };
    const Lift frozen = Lift::encoder(tr.state.encoder);
    attempt("drkn", [&] {
        const KoopmanModel model = drkn_model(tr.state, batch.dt);
        save_model(model, out_dir / "drkn.json",
                   FbBlocks{tr.state.a_f, tr.state.b_f, tr.state.a_b, tr.state.b_b});
    });
    attempt("nominal", [&] { save_model(nominal_fit(batch, frozen), out_dir / "nominal.json"); });
    attempt("fbedmd", [&] {
        const int n = ds.system.state_dim;
        const Lift dict = Lift::dictionary(n, MonomialDictionary::up_to_degree(n, cfg.eval.dictionary_degree));
        save_model(fb_edmd_fit(batch, dict), out_dir / "fbedmd.json");
    });
}

std::optional<double> read_train_time(const RunConfig& cfg, double snr) {
    const fs::path f = cfg.output_dir / "timing" / ("snr_" + snr_tag(snr) + ".json");
    if (!fs::exists(f)) return std::nullopt;
    try {
        return Json::parse(read_text(f)).at("train_seconds").get<double>();
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

KoopmanModel load_method(const fs::path& dir, const char* stem) {
    const fs::path file = dir / (std::string(stem) + ".json");
    if (fs::exists(file)) return load_model(file);
    const fs::path failed = dir / (std::string(stem) + ".failed");
    if (fs::exists(failed)) {
        std::string reason = read_text(failed);
        while (!reason.empty() && reason.back() == '\n') reason.pop_back();
        throw Error(ErrorCode::NonFinite, "fit failed during training: " + reason);
    }
    throw Error(ErrorCode::Io, "missing " + file.string());
}

std::vector<Trajectory> eval_set(const RunConfig& cfg) {
    return make_eval_set(cfg.system, cfg.excitation(), cfg.eval.n_rollouts, cfg.eval.steps, cfg.dataset.dt,
                         derive_seed(cfg.seed, "eval-set"));
}

struct Target {
    std::string label;  // file-name stem
    std::string method;
    std::optional<double> snr;
    std::function<KoopmanModel()> load;
};

std::vector<Target> targets(const RunConfig& cfg, const std::optional<fs::path>& checkpoint) {
    std::vector<Target> out;
    if (checkpoint) {
        const fs::path file = *checkpoint;
        out.push_back({"checkpoint", file.stem().string(), std::nullopt, [file] { return load_model(file); }});
        return out;
    }
    for (double snr : cfg.dataset.snr_db) {
        const fs::path dir = model_dir(cfg, snr);
        for (const auto& mf : kMethods) {
            out.push_back({std::string(mf.stem) + "_snr" + snr_tag(snr), mf.method, snr,
                           [dir, stem = mf.stem] { return load_method(dir, stem); }});
        }
    }
    return out;
}

std::string opt_snr(const std::optional<double>& s) {
    return s ? format_double(*s) : std::string();
}

int eval_predict(const RunConfig& cfg, const std::optional<fs::path>& checkpoint) {
    const auto set = eval_set(cfg);
    std::string csv = "snr_db,method,rollout,e_pred\n";
    std::string summary = "snr_db,method,status,mean_e_pred\n";
    for (const auto& t : targets(cfg, checkpoint)) {
        try {
            const KoopmanModel model = t.load();
            double sum = 0.0;
            for (std::size_t i = 0; i < set.size(); ++i) {
                const Trajectory pred = rollout(model, set[i].states.col(0), set[i].inputs);
                if (!pred.states.allFinite()) throw Error(ErrorCode::NonFinite, "rollout left the finite range");
                const double e = pred_error(set[i], pred);
                sum += e;
                csv += opt_snr(t.snr) + "," + t.method + "," + std::to_string(i) + "," + format_double(e) + "\n";
            }
            const double mean = sum / static_cast<double>(set.size());
            summary += opt_snr(t.snr) + "," + t.method + ",ok," + format_double(mean) + "\n";
            std::cout << t.label << ": e_pred = " << format_sig(mean) << '\n';
        } catch (const Error& e) {
            if (checkpoint) throw;
            log(t.label + ": " + e.what());
            summary += opt_snr(t.snr) + "," + t.method + ",failed,—\n";
        }
    }
    write_text(cfg.output_dir / "eval" / "predict.csv", csv);
    write_text(cfg.output_dir / "eval" / "predict_summary.csv", summary);
    return kExitOk;
}

int eval_track(const RunConfig& cfg, const std::optional<fs::path>& checkpoint) {
    const Trajectory ref = cfg.reference.build(cfg.dataset.dt, cfg.system.input_dim);
    const MpcConfig mpc = cfg.mpc.to_mpc(derive_seed(cfg.seed, "feedback"));
    std::string summary = "snr_db,method,status,e_track,effort_mean_norm,effort_integral,solve_time_s,qp_failures\n";
    bool diverged = false;
    for (const auto& t : targets(cfg, checkpoint)) {
        try {
            const KoopmanModel model = t.load();
            const TrackResult res = track(cfg.system, model, ref, mpc, derive_seed(cfg.seed, "track"));
            write_text(cfg.output_dir / "eval" / ("track_" + t.label + ".csv"), track_csv(res));
            const Effort eff = control_effort(res);
            double solve = 0.0;
            for (double ms : res.solve_ms) solve += ms / 1000.0;
            if (!res.solve_ms.empty()) solve /= static_cast<double>(res.solve_ms.size());
            const double e = track_error(res, cfg.eval.tracked_channels);
            summary += opt_snr(t.snr) + "," + t.method + "," + (res.diverged ? "diverged" : "ok") + "," +
                       format_double(e) + "," + format_double(eff.mean_norm) + "," + format_double(eff.integral) + "," +
                       format_double(solve) + "," + std::to_string(res.qp_failures) + "\n";
            if (res.diverged) {
                diverged = true;
                log(t.label + ": closed loop diverged at step " + std::to_string(res.diverged_step));
            }
            std::cout << t.label << ": e_track = " << format_sig(e) << (res.diverged ? " (diverged)" : "") << '\n';
        } catch (const Error& e) {
            if (checkpoint) throw;
            log(t.label + ": " + e.what());
            summary += opt_snr(t.snr) + "," + t.method + ",failed,—,,,,\n";
        }
    }
    write_text(cfg.output_dir / "eval" / "track_summary.csv", summary);
    return diverged ? kExitDiverged : kExitOk;
}

int eval_bias(const RunConfig& cfg) {
    BiasMcConfig bc;
    bc.truth = LinearTruth::random_stable(2, 1, cfg.eval.bias_radius, derive_seed(cfg.seed, "bias-truth"));
    bc.relative_sigma = BiasMcConfig::sigma_from_snr(cfg.eval.bias_snr_db);
    bc.columns = cfg.eval.bias_columns;
    bc.draws = cfg.eval.bias_draws;
    bc.seed = derive_seed(cfg.seed, "bias-mc");
    const BiasDiagnostics d = bias_mc(bc);
    Json j{{"snr_db", cfg.eval.bias_snr_db},
           {"relative_sigma", d.relative_sigma},
           {"n_draws", d.n_draws},
           {"columns", bc.columns},
           {"dev_nominal", d.dev_nominal},
           {"dev_proposed", d.dev_proposed},
           {"ratio", d.ratio_defined ? Json(d.ratio) : Json(nullptr)},
           {"ratio_defined", d.ratio_defined},
           {"proposed_wins", d.proposed_wins},
           {"sign_test_p", d.sign_test_p},
           {"assumption_failures", d.assumption_failures},
           {"assumption_max", d.assumption_max},
           {"truth_a", to_json(bc.truth.a)},
           {"truth_b", to_json(bc.truth.b)}};
    write_text(cfg.output_dir / "eval" / "bias_mc.json", j.dump(2) + "\n");
    std::cout << "bias_mc: |E[K_fm^2]-K_f^2| = " << format_sig(d.dev_nominal)
              << ", |E[K_prop^2]-K_f^2| = " << format_sig(d.dev_proposed) << ", ratio = "
              << (d.ratio_defined ? format_sig(d.ratio) : std::string("undefined")) << ", sign test p = "
              << format_sig(d.sign_test_p) << '\n';
    return kExitOk;
}

int eval_compare(const RunConfig& cfg) {
    std::vector<Candidate> cands;
    for (double snr : cfg.dataset.snr_db) {
        const fs::path dir = model_dir(cfg, snr);
        const auto train_time = cfg.mpc.record_timing ? read_train_time(cfg, snr) : std::nullopt;
        for (const auto& mf : kMethods) {
            cands.push_back({mf.method, snr, [dir, stem = mf.stem] { return load_method(dir, stem); },
                             std::string(mf.stem) == "drkn" ? train_time : std::nullopt});
        }
    }
    TrackSetup ts;
    ts.system = cfg.system;
    ts.references = {cfg.reference.build(cfg.dataset.dt, cfg.system.input_dim)};
    ts.mpc = cfg.mpc.to_mpc(derive_seed(cfg.seed, "feedback"));
    ts.channels = cfg.eval.tracked_channels;
    ts.seed = derive_seed(cfg.seed, "track");
    const CompareReport report = compare(cands, eval_set(cfg), ts);
    write_text(cfg.output_dir / "eval" / "compare.csv", report.to_csv());
    const std::string table = report.to_table();
    write_text(cfg.output_dir / "eval" / "compare.txt", table);
    std::cout << table;
    return kExitOk;
}

}  // namespace

void cmd_gen(const RunConfig& cfg) {
    cfg.validate();
    for (double snr : cfg.dataset.snr_db) {
        NoiseSpec noise{snr, derive_seed(cfg.seed, "noise"), cfg.dataset.corrupt_inputs};
        const Dataset ds = gen_dataset(cfg.system, cfg.dataset.n_traj, cfg.dataset.n_snap, cfg.dataset.dt,
                                       cfg.excitation(), noise, derive_seed(cfg.seed, "dataset"));
        const fs::path dir = dataset_dir(cfg, snr);
        save_dataset(ds, dir);
        std::cout << "wrote " << ds.noisy.size() << " trajectories to " << dir.string() << '\n';
    }
}

void cmd_train(const RunConfig& cfg, const std::optional<fs::path>& dataset) {
    cfg.validate();
    if (dataset) {
        const Dataset ds = load_dataset(*dataset);
        const std::string name = dataset->filename().empty() ? dataset->parent_path().filename().string()
                                                              : dataset->filename().string();
        train_one(cfg, ds, cfg.output_dir / "models" / name, cfg.output_dir / "timing" / (name + ".json"));
        std::cout << "trained on " << dataset->string() << '\n';
        return;
    }
    for (double snr : cfg.dataset.snr_db) {
        const Dataset ds = load_dataset(dataset_dir(cfg, snr));
        train_one(cfg, ds, model_dir(cfg, snr), cfg.output_dir / "timing" / ("snr_" + snr_tag(snr) + ".json"));
        std::cout << "trained models for " << snr_tag(snr) << " dB in " << model_dir(cfg, snr).string() << '\n';
    }
}

int cmd_eval(const RunConfig& cfg, const std::string& mode, const std::optional<fs::path>& checkpoint) {
    cfg.validate();
    if (mode == "predict") return eval_predict(cfg, checkpoint);
    if (mode == "track") return eval_track(cfg, checkpoint);
    if (mode == "bias-mc") return eval_bias(cfg);
    if (mode == "compare") return eval_compare(cfg);
    throw Error(ErrorCode::Config, "unknown eval mode '" + mode + "'");
}

}  // namespace koopman
