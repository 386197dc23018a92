#include "koopman/persistence.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "koopman/text.hpp"

namespace koopman {

std::string read_text(const fs::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::Io, "cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    if (in.bad()) throw Error(ErrorCode::Io, "cannot read " + file.string());
    return ss.str();
}

void write_text(const fs::path& file, const std::string& text) {
    if (file.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(file.parent_path(), ec);
        if (ec) throw Error(ErrorCode::Io, "cannot create " + file.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(file, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + file.string());
    out << text;
    out.close();
    if (!out) throw Error(ErrorCode::Io, "write failed for " + file.string());
}

namespace {

Json parse_json_file(const fs::path& file, ErrorCode code) {
    const std::string text = read_text(file);
    try {
        return Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(code, file.string() + ": malformed JSON: " + e.what());
    }
}

std::string kind_name(SystemKind k) {
    switch (k) {
        case SystemKind::VanDerPol: return "van_der_pol";
        case SystemKind::PlanarArm: return "planar_arm";
        case SystemKind::SlowManifold: return "slow_manifold";
        case SystemKind::Linear: return "linear";
    }
    return "unknown";
}

}  // namespace

Json system_to_json(const SystemSpec& spec) {
    Json j;
    j["kind"] = kind_name(spec.kind);
    switch (spec.kind) {
        case SystemKind::VanDerPol: j["mu"] = spec.mu; break;
        case SystemKind::PlanarArm:
            j["links"] = spec.arm.links;
            j["mass"] = spec.arm.mass;
            j["length"] = spec.arm.length;
            j["com"] = spec.arm.com;
            j["inertia"] = spec.arm.inertia;
            j["gravity"] = spec.arm.gravity;
            break;
        case SystemKind::SlowManifold:
            j["mu"] = spec.mu;
            j["lambda"] = spec.lambda;
            break;
        case SystemKind::Linear:
            j["a"] = to_json(spec.lin_a);
            j["b"] = to_json(spec.lin_b);
            break;
    }
    return j;
}

SystemSpec system_from_json(const Json& j, const std::string& path, ErrorCode code) {
    JsonReader r(j, path, code);
    const std::string kind = r.string("kind");
    SystemSpec spec;
    if (kind == "van_der_pol") {
        spec = SystemSpec::van_der_pol(r.number("mu", 1.0));
    } else if (kind == "planar_arm") {
        ArmParams p;
        p.links = static_cast<int>(r.integer("links", p.links));
        p.mass = r.number("mass", p.mass);
        p.length = r.number("length", p.length);
        p.com = r.number("com", p.com);
        p.inertia = r.number("inertia", p.inertia);
        p.gravity = r.number("gravity", p.gravity);
        spec = SystemSpec::planar_arm(p);
    } else if (kind == "slow_manifold") {
        spec = SystemSpec::slow_manifold(r.number("mu", -0.5), r.number("lambda", -1.0));
    } else if (kind == "linear") {
        spec = SystemSpec::linear(r.mat("a"), r.mat("b"));
    } else {
        throw r.error("kind", "unknown system '" + kind + "'");
    }
    r.finish();
    try {
        spec.validate();
    } catch (const Error& e) {
        throw Error(code, path + ": " + e.what());
    }
    return spec;
}

Json excitation_to_json(const Excitation& e) {
    return Json{{"state_lo", to_json(e.state_lo)},
                {"state_hi", to_json(e.state_hi)},
                {"input_lo", to_json(e.input_lo)},
                {"input_hi", to_json(e.input_hi)}};
}

Excitation excitation_from_json(const Json& j, const std::string& path, ErrorCode code) {
    JsonReader r(j, path, code);
    Excitation e;
    e.state_lo = r.vec("state_lo");
    e.state_hi = r.vec("state_hi");
    e.input_lo = r.vec("input_lo");
    e.input_hi = r.vec("input_hi");
    r.finish();
    return e;
}

std::string trajectory_csv(const Trajectory& traj) {
    traj.validate();
    const Eigen::Index n = traj.state_dim();
    const Eigen::Index m = traj.input_dim();
    std::string out;
    for (Eigen::Index i = 0; i < n; ++i) out += (i ? ",x" : "x") + std::to_string(i);
    for (Eigen::Index i = 0; i < m; ++i) out += ",u" + std::to_string(i);
    out += '\n';
    for (Eigen::Index k = 0; k < traj.length(); ++k) {
        for (Eigen::Index i = 0; i < n; ++i) {
            if (i) out += ',';
            out += format_double(traj.states(i, k));
        }
        for (Eigen::Index i = 0; i < m; ++i) {
            out += ',';
            if (k + 1 < traj.length()) out += format_double(traj.inputs(i, k));
        }
        out += '\n';
    }
    return out;
}

Trajectory parse_trajectory_csv(const std::string& text, int state_dim, int input_dim, double dt,
                                const std::string& origin) {
    auto fail = [&](std::size_t line, const std::string& what) {
        return Error(ErrorCode::Validation, origin + ":" + std::to_string(line) + ": " + what);
    };
    std::vector<std::vector<std::string>> rows;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        for (;;) {
            const std::size_t comma = line.find(',', start);
            cells.push_back(line.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
        rows.push_back(std::move(cells));
    }
    const auto width = static_cast<std::size_t>(state_dim + input_dim);
    if (rows.size() < 2) throw fail(1, "no data rows");
    if (rows[0].size() != width) throw fail(1, "header has the wrong number of columns");
    const auto steps = static_cast<Eigen::Index>(rows.size() - 1);
    Trajectory t;
    t.dt = dt;
    t.states.resize(state_dim, steps);
    t.inputs.resize(input_dim, steps - 1);
    for (Eigen::Index k = 0; k < steps; ++k) {
        const auto& cells = rows[static_cast<std::size_t>(k + 1)];
        const std::size_t line_no = static_cast<std::size_t>(k) + 2;
        if (cells.size() != width) throw fail(line_no, "wrong number of columns");
        try {
            for (int i = 0; i < state_dim; ++i) t.states(i, k) = parse_double(cells[static_cast<std::size_t>(i)]);
            for (int i = 0; i < input_dim; ++i) {
                const std::string& c = cells[static_cast<std::size_t>(state_dim + i)];
                if (k + 1 < steps) {
                    t.inputs(i, k) = parse_double(c);
                } else if (!c.empty()) {
                    throw fail(line_no, "final row must leave inputs empty");
                }
            }
        } catch (const Error& e) {
            if (std::string(e.what()).find(origin) != std::string::npos) throw;
            throw fail(line_no, e.what());
        }
    }
    try {
        t.validate();
    } catch (const Error& e) {
        throw Error(ErrorCode::Validation, origin + ": " + e.what());
    }
    return t;
}

namespace {

std::string traj_name(std::size_t i) {
    std::ostringstream os;
    os << "traj_" << std::setw(4) << std::setfill('0') << i << ".csv";
    return os.str();
}

}  // namespace

void save_dataset(const Dataset& ds, const fs::path& dir) {
    if (ds.clean.size() != ds.noisy.size() || ds.clean.empty()) {
        throw Error(ErrorCode::PreconditionViolated, "save_dataset: clean and noisy sets must be non-empty and equal");
    }
    Json meta;
    meta["format"] = "koopman-dataset";
    meta["version"] = kDatasetVersion;
    meta["system"] = system_to_json(ds.system);
    meta["excitation"] = excitation_to_json(ds.excitation);
    meta["noise"] = Json{{"snr_db", ds.noise.snr_db ? Json(*ds.noise.snr_db) : Json(nullptr)},
                         {"seed", ds.noise.seed},
                         {"corrupt_inputs", ds.noise.corrupt_inputs}};
    meta["seed"] = ds.seed;
    meta["dt"] = ds.dt;
    meta["n_traj"] = ds.clean.size();
    meta["n_snap"] = ds.clean.front().length();
    meta["state_sigma"] = to_json(ds.state_sigma);
    meta["input_sigma"] = to_json(ds.input_sigma);
    write_text(dir / "meta.json", meta.dump(2) + "\n");
    for (std::size_t i = 0; i < ds.clean.size(); ++i) {
        write_text(dir / "clean" / traj_name(i), trajectory_csv(ds.clean[i]));
        write_text(dir / "noisy" / traj_name(i), trajectory_csv(ds.noisy[i]));
    }
}

Dataset load_dataset(const fs::path& dir) {
    const Json meta = parse_json_file(dir / "meta.json", ErrorCode::Validation);
    JsonReader r(meta, "meta", ErrorCode::Validation);
    if (r.string("format") != "koopman-dataset") throw r.error("format", "not a dataset");
    if (r.integer("version") != kDatasetVersion) throw r.error("version", "unsupported version");
    Dataset ds;
    ds.system = system_from_json(r.at("system"), "meta.system", ErrorCode::Validation);
    ds.excitation = excitation_from_json(r.at("excitation"), "meta.excitation", ErrorCode::Validation);
    {
        JsonReader nr = r.object("noise");
        if (nr.has("snr_db")) ds.noise.snr_db = nr.number("snr_db");
        nr.find("snr_db");
        const Json& seed = nr.at("seed");
        if (!seed.is_number_unsigned()) throw nr.error("seed", "expected an unsigned integer");
        ds.noise.seed = seed.get<std::uint64_t>();
        ds.noise.corrupt_inputs = nr.boolean("corrupt_inputs", true);
        nr.finish();
    }
    const Json& seed = r.at("seed");
    if (!seed.is_number_unsigned()) throw r.error("seed", "expected an unsigned integer");
    ds.seed = seed.get<std::uint64_t>();
    ds.dt = r.number("dt");
    const long long n_traj = r.integer("n_traj");
    const long long n_snap = r.integer("n_snap");
    ds.state_sigma = r.vec("state_sigma");
    ds.input_sigma = r.vec("input_sigma");
    r.finish();
    if (!(ds.dt > 0.0) || n_traj < 1 || n_snap < 2) throw Error(ErrorCode::Validation, "meta: invalid counts or dt");
    if (ds.state_sigma.size() != ds.system.state_dim || ds.input_sigma.size() != ds.system.input_dim) {
        throw Error(ErrorCode::Validation, "meta: sigma dimensions do not match the system");
    }
    try {
        ds.excitation.validate(ds.system);
    } catch (const Error& e) {
        throw Error(ErrorCode::Validation, std::string("meta.excitation: ") + e.what());
    }
    for (long long i = 0; i < n_traj; ++i) {
        for (const char* kind : {"clean", "noisy"}) {
            const fs::path file = dir / kind / traj_name(static_cast<std::size_t>(i));
            Trajectory t = parse_trajectory_csv(read_text(file), ds.system.state_dim, ds.system.input_dim, ds.dt,
                                                file.string());
            if (t.length() != n_snap) throw Error(ErrorCode::Validation, file.string() + ": wrong snapshot count");
            (std::string(kind) == "clean" ? ds.clean : ds.noisy).push_back(std::move(t));
        }
    }
    return ds;
}

Json model_to_json(const KoopmanModel& model, const std::optional<FbBlocks>& blocks) {
    model.validate();
    Json j;
    j["format"] = "koopman-model";
    j["version"] = kModelVersion;
    j["provenance"] = to_string(model.provenance);
    j["dt"] = model.dt;
    j["state_dim"] = model.state_dim();
    j["input_dim"] = model.input_dim();
    j["lifted_dim"] = model.lifted_dim();
    Json lift;
    std::visit(
        [&](const auto& impl) {
            using T = std::decay_t<decltype(impl)>;
            if constexpr (std::is_same_v<T, IdentityLift>) {
                lift["kind"] = "identity";
            } else if constexpr (std::is_same_v<T, EncoderParams>) {
                lift["kind"] = "encoder";
                lift["input_shift"] = to_json(impl.input_shift);
                lift["input_scale"] = to_json(impl.input_scale);
                Json layers = Json::array();
                for (const auto& l : impl.layers) layers.push_back(Json{{"weight", to_json(l.weight)}, {"bias", to_json(l.bias)}});
                lift["layers"] = layers;
            } else {
                lift["kind"] = "dictionary";
                lift["exponents"] = impl.exponents;
            }
        },
        model.lift.kind());
    j["lift"] = lift;
    j["a"] = to_json(model.a);
    j["b"] = to_json(model.b);
    if (blocks) {
        j["forward_backward"] = Json{{"a_f", to_json(blocks->a_f)},
                                     {"b_f", to_json(blocks->b_f)},
                                     {"a_b", to_json(blocks->a_b)},
                                     {"b_b", to_json(blocks->b_b)}};
    }
    return j;
}

KoopmanModel model_from_json(const Json& j, std::optional<FbBlocks>* blocks) {
    constexpr ErrorCode code = ErrorCode::Validation;
    JsonReader r(j, "", code);
    if (r.string("format") != "koopman-model") throw r.error("format", "not a model checkpoint");
    if (r.integer("version") != kModelVersion) throw r.error("version", "unsupported version");
    KoopmanModel model;
    try {
        model.provenance = provenance_from_string(r.string("provenance"));
    } catch (const Error& e) {
        throw r.error("provenance", e.what());
    }
    model.dt = r.number("dt");
    const long long n = r.integer("state_dim");
    const long long m = r.integer("input_dim");
    const long long big_n = r.integer("lifted_dim");
    if (n < 1 || m < 1 || big_n < n) throw Error(code, "checkpoint: invalid dimensions");

    JsonReader lr = r.object("lift");
    const std::string kind = lr.string("kind");
    try {
        if (kind == "identity") {
            model.lift = Lift::identity(static_cast<int>(n));
        } else if (kind == "encoder") {
            EncoderParams p;
            p.input_shift = lr.vec("input_shift");
            p.input_scale = lr.vec("input_scale");
            const Json& layers = lr.at("layers");
            if (!layers.is_array() || layers.empty()) throw lr.error("layers", "expected a non-empty array");
            for (std::size_t i = 0; i < layers.size(); ++i) {
                JsonReader lj(layers[i], lr.path("layers") + "[" + std::to_string(i) + "]", code);
                DenseLayer layer;
                layer.weight = lj.mat("weight");
                layer.bias = lj.vec("bias");
                lj.finish();
                p.layers.push_back(std::move(layer));
            }
            p.validate();
            if (p.input_dim() != n) throw Error(code, "checkpoint: encoder input does not match state_dim");
            model.lift = Lift::encoder(std::move(p));
        } else if (kind == "dictionary") {
            const Json& ex = lr.at("exponents");
            MonomialDictionary dict;
            try {
                dict.exponents = ex.get<std::vector<std::vector<int>>>();
            } catch (const Json::exception&) {
                throw lr.error("exponents", "expected an array of integer arrays");
            }
            model.lift = Lift::dictionary(static_cast<int>(n), std::move(dict));
        } else {
            throw lr.error("kind", "unknown lift '" + kind + "'");
        }
    } catch (const Error& e) {
        if (e.code() == code) throw;
        throw Error(code, std::string("checkpoint lift: ") + e.what());
    }
    lr.finish();
    model.a = r.mat("a");
    model.b = r.mat("b");
    std::optional<FbBlocks> fb;
    if (r.has("forward_backward")) {
        JsonReader fr = r.object("forward_backward");
        fb = FbBlocks{fr.mat("a_f"), fr.mat("b_f"), fr.mat("a_b"), fr.mat("b_b")};
        fr.finish();
        for (const Mat* a : {&fb->a_f, &fb->a_b}) {
            if (a->rows() != big_n || a->cols() != big_n) throw Error(code, "checkpoint: forward/backward A has wrong shape");
        }
        for (const Mat* b : {&fb->b_f, &fb->b_b}) {
            if (b->rows() != big_n || b->cols() != m) throw Error(code, "checkpoint: forward/backward B has wrong shape");
        }
    }
    r.find("forward_backward");
    r.finish();
    if (model.lift.lifted_dim() != big_n) throw Error(code, "checkpoint: lift does not match lifted_dim");
    if (model.b.cols() != m) throw Error(code, "checkpoint: B does not match input_dim");
    try {
        model.validate();
    } catch (const Error& e) {
        throw Error(code, std::string("checkpoint: ") + e.what());
    }
    if (blocks) *blocks = std::move(fb);
    return model;
}

void save_model(const KoopmanModel& model, const fs::path& file, const std::optional<FbBlocks>& blocks) {
    write_text(file, model_to_json(model, blocks).dump(1) + "\n");
}

KoopmanModel load_model(const fs::path& file, std::optional<FbBlocks>* blocks) {
    return model_from_json(parse_json_file(file, ErrorCode::Validation), blocks);
}

std::string loss_csv(const std::vector<EpochLoss>& history, const LossWeights& w) {
    std::string out = "epoch,fpred,flift,bpred,blift,con,reg,total\n";
    for (const auto& e : history) {
        const LossTerms& t = e.terms;
        out += std::to_string(e.epoch);
        for (double v : {t.fpred, t.flift, t.bpred, t.blift, t.con, t.reg, t.total(w)}) out += "," + format_double(v);
        out += '\n';
    }
    return out;
}

std::string track_csv(const TrackResult& result) {
    const Eigen::Index n = result.actual.rows();
    const Eigen::Index m = result.inputs.rows();
    const Eigen::Index steps = result.actual.cols();
    if (result.reference.cols() != steps || result.inputs.cols() + 1 != std::max<Eigen::Index>(steps, 1) ||
        static_cast<Eigen::Index>(result.solve_ms.size()) != result.inputs.cols() ||
        static_cast<Eigen::Index>(result.cost.size()) != result.inputs.cols()) {
        throw Error(ErrorCode::LengthMismatch, "track_csv: inconsistent TrackResult lengths");
    }
    std::string out = "t";
    for (Eigen::Index i = 0; i < n; ++i) out += ",ref_x" + std::to_string(i);
    for (Eigen::Index i = 0; i < n; ++i) out += ",x" + std::to_string(i);
    for (Eigen::Index i = 0; i < m; ++i) out += ",u" + std::to_string(i);
    out += ",solve_ms,cost\n";
    for (Eigen::Index k = 0; k < steps; ++k) {
        out += format_double(static_cast<double>(k) * result.dt);
        for (Eigen::Index i = 0; i < n; ++i) out += "," + format_double(result.reference(i, k));
        for (Eigen::Index i = 0; i < n; ++i) out += "," + format_double(result.actual(i, k));
        const bool has_input = k < result.inputs.cols();
        for (Eigen::Index i = 0; i < m; ++i) out += "," + (has_input ? format_double(result.inputs(i, k)) : std::string());
        const auto idx = static_cast<std::size_t>(k);
        out += "," + (has_input ? format_double(result.solve_ms[idx]) : std::string());
        out += "," + (has_input ? format_double(result.cost[idx]) : std::string());
        out += '\n';
    }
    return out;
}

}  // namespace koopman
