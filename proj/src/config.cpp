#include "koopman/config.hpp"

#include <cmath>
#include <numbers>

#include "koopman/persistence.hpp"

namespace koopman {

Trajectory ReferenceConfig::build(double dt, int input_dim) const {
    const auto steps = static_cast<Eigen::Index>(std::llround(duration / dt)) + 1;
    const Eigen::Index n = amplitude.size();
    Trajectory t;
    t.dt = dt;
    t.states.resize(n, steps);
    t.inputs = Mat::Zero(input_dim, steps - 1);
    for (Eigen::Index k = 0; k < steps; ++k) {
        const double time = static_cast<double>(k) * dt;
        for (Eigen::Index i = 0; i < n; ++i) {
            t.states(i, k) = offset(i) + amplitude(i) * std::sin(frequency(i) * time + phase(i));
        }
    }
    return t;
}

MpcConfig MpcSettings::to_mpc(std::uint64_t feedback_seed) const {
    MpcConfig c;
    c.horizon = horizon;
    c.q_x = q_x;
    c.r_u = r_u;
    c.u_lo = u_lo;
    c.u_hi = u_hi;
    c.x_lo = x_lo;
    c.x_hi = x_hi;
    c.rho = rho;
    c.feedback.snr_db = feedback_snr_db;
    c.feedback.seed = feedback_seed;
    c.qp_tol = qp_tol;
    c.qp_max_iter = qp_max_iter;
    c.record_timing = record_timing;
    return c;
}

RunConfig RunConfig::van_der_pol() {
    RunConfig c;
    c.system = SystemSpec::van_der_pol(1.0);
    c.dataset = DatasetConfig{};
    c.training = TrainConfig{};
    c.mpc.q_x = Vec::Ones(2);
    c.mpc.r_u = Vec::Constant(1, 0.01);
    c.mpc.u_lo = Vec::Constant(1, -1.0);
    c.mpc.u_hi = Vec::Constant(1, 1.0);
    // x1 = 0.5 sin t with x2 = -x1' so the reference is consistent with x1' = -x2
    c.reference.amplitude = Vec::Constant(2, 0.5);
    c.reference.frequency = Vec::Ones(2);
    c.reference.phase = (Vec(2) << 0.0, -std::numbers::pi / 2).finished();
    c.reference.offset = Vec::Zero(2);
    c.eval.tracked_channels = {0, 1};
    c.output_dir = "out/vdp";
    return c;
}

RunConfig RunConfig::planar_arm() {
    RunConfig c;
    c.system = SystemSpec::planar_arm();
    c.dataset.n_traj = 350;
    c.dataset.n_snap = 350;
    c.training.hidden = {40, 40, 40};
    c.training.encoder_output = 20;
    c.mpc.q_x = (Vec(4) << 1.0, 1.0, 0.0, 0.0).finished();
    c.mpc.r_u = Vec::Constant(2, 0.01);
    c.mpc.u_lo = Vec::Constant(2, -2.0);
    c.mpc.u_hi = Vec::Constant(2, 2.0);
    // q_i = 0.4 sin(t + phi_i), qd_i its derivative
    c.reference.amplitude = (Vec(4) << 0.4, 0.4, 0.4, 0.4).finished();
    c.reference.frequency = Vec::Ones(4);
    const double h = std::numbers::pi / 2;
    c.reference.phase = (Vec(4) << 0.0, h, h, 2 * h).finished();
    c.reference.offset = Vec::Zero(4);
    c.eval.tracked_channels = {0, 1};
    c.eval.dictionary_degree = 2;
    c.output_dir = "out/arm";
    return c;
}

Excitation RunConfig::excitation() const {
    return dataset.excitation ? *dataset.excitation : Excitation::defaults_for(system);
}

namespace {

Json opt_vec(const std::optional<Vec>& v) {
    return v ? to_json(*v) : Json(nullptr);
}

}  // namespace

Json RunConfig::to_json() const {
    Json j;
    j["schema_version"] = schema_version;
    j["seed"] = seed;
    j["output_dir"] = output_dir.generic_string();
    j["system"] = system_to_json(system);
    Json ds{{"n_traj", dataset.n_traj},
            {"n_snap", dataset.n_snap},
            {"dt", dataset.dt},
            {"snr_db", dataset.snr_db},
            {"corrupt_inputs", dataset.corrupt_inputs}};
    ds["excitation"] = dataset.excitation ? excitation_to_json(*dataset.excitation) : Json(nullptr);
    j["dataset"] = ds;
    j["encoder"] = Json{{"hidden", training.hidden}, {"output", training.encoder_output}};
    const LossWeights& w = training.weights;
    j["loss"] = Json{{"alpha1", w.alpha1}, {"alpha2", w.alpha2}, {"alpha3", w.alpha3}, {"gamma1", w.gamma1}, {"gamma2", w.gamma2}};
    j["training"] = Json{{"epochs", training.epochs},
                         {"batch_size", training.batch_size},
                         {"lr", training.lr},
                         {"lr_decay", training.lr_decay},
                         {"decay_every", training.decay_every},
                         {"clip_norm", training.clip_norm},
                         {"polish_sweeps", training.polish_sweeps}};
    j["mpc"] = Json{{"horizon", mpc.horizon},
                    {"q_x", koopman::to_json(mpc.q_x)},
                    {"r_u", koopman::to_json(mpc.r_u)},
                    {"u_lo", koopman::to_json(mpc.u_lo)},
                    {"u_hi", koopman::to_json(mpc.u_hi)},
                    {"x_lo", opt_vec(mpc.x_lo)},
                    {"x_hi", opt_vec(mpc.x_hi)},
                    {"rho", mpc.rho},
                    {"feedback_snr_db", mpc.feedback_snr_db ? Json(*mpc.feedback_snr_db) : Json(nullptr)},
                    {"qp_tol", mpc.qp_tol},
                    {"qp_max_iter", mpc.qp_max_iter},
                    {"record_timing", mpc.record_timing}};
    j["reference"] = Json{{"amplitude", koopman::to_json(reference.amplitude)},
                          {"frequency", koopman::to_json(reference.frequency)},
                          {"phase", koopman::to_json(reference.phase)},
                          {"offset", koopman::to_json(reference.offset)},
                          {"duration", reference.duration}};
    j["evaluation"] = Json{{"n_rollouts", eval.n_rollouts},
                           {"steps", eval.steps},
                           {"tracked_channels", eval.tracked_channels},
                           {"dictionary_degree", eval.dictionary_degree},
                           {"bias_columns", eval.bias_columns},
                           {"bias_draws", eval.bias_draws},
                           {"bias_snr_db", eval.bias_snr_db},
                           {"bias_radius", eval.bias_radius}};
    return j;
}

RunConfig RunConfig::from_json(const Json& j, const std::filesystem::path& base_dir) {
    constexpr ErrorCode code = ErrorCode::Config;
    JsonReader r(j, "", code);
    RunConfig c;
    c.schema_version = static_cast<int>(r.integer("schema_version"));
    if (c.schema_version != kSchemaVersion) {
        throw r.error("schema_version", "unsupported (expected " + std::to_string(kSchemaVersion) + ")");
    }
    const Json& seed = r.at("seed");
    if (!seed.is_number_unsigned()) throw r.error("seed", "expected a nonnegative integer");
    c.seed = seed.get<std::uint64_t>();
    c.output_dir = r.string("output_dir", "out");
    if (c.output_dir.is_relative() && !base_dir.empty()) c.output_dir = base_dir / c.output_dir;
    c.system = system_from_json(r.at("system"), "system", code);

    {
        JsonReader d = r.object("dataset");
        c.dataset.n_traj = static_cast<int>(d.integer("n_traj"));
        c.dataset.n_snap = static_cast<int>(d.integer("n_snap"));
        c.dataset.dt = d.number("dt");
        c.dataset.snr_db = d.numbers("snr_db");
        c.dataset.corrupt_inputs = d.boolean("corrupt_inputs", true);
        if (const Json* e = d.find("excitation"); e && !e->is_null()) {
            c.dataset.excitation = excitation_from_json(*e, "dataset.excitation", code);
        }
        d.finish();
    }
    {
        JsonReader e = r.object("encoder");
        c.training.hidden = e.integers("hidden");
        c.training.encoder_output = static_cast<int>(e.integer("output"));
        e.finish();
    }
    {
        JsonReader l = r.object("loss");
        LossWeights& w = c.training.weights;
        w.alpha1 = l.number("alpha1");
        w.alpha2 = l.number("alpha2");
        w.alpha3 = l.number("alpha3");
        w.gamma1 = l.number("gamma1", 0.0);
        w.gamma2 = l.number("gamma2", 0.0);
        l.finish();
    }
    {
        JsonReader t = r.object("training");
        c.training.epochs = static_cast<int>(t.integer("epochs"));
        c.training.batch_size = static_cast<int>(t.integer("batch_size"));
        c.training.lr = t.number("lr");
        c.training.lr_decay = t.number("lr_decay", 0.5);
        c.training.decay_every = static_cast<int>(t.integer("decay_every", 200));
        c.training.clip_norm = t.number("clip_norm", 10.0);
        c.training.polish_sweeps = static_cast<int>(t.integer("polish_sweeps", 10));
        t.finish();
    }
    {
        JsonReader m = r.object("mpc");
        c.mpc.horizon = static_cast<int>(m.integer("horizon"));
        c.mpc.q_x = m.vec("q_x");
        c.mpc.r_u = m.vec("r_u");
        c.mpc.u_lo = m.vec("u_lo");
        c.mpc.u_hi = m.vec("u_hi");
        if (m.has("x_lo")) c.mpc.x_lo = m.vec("x_lo");
        if (m.has("x_hi")) c.mpc.x_hi = m.vec("x_hi");
        m.find("x_lo");
        m.find("x_hi");
        c.mpc.rho = m.number("rho", 1e3);
        c.mpc.feedback_snr_db.reset();
        if (m.has("feedback_snr_db")) c.mpc.feedback_snr_db = m.number("feedback_snr_db");
        m.find("feedback_snr_db");
        c.mpc.qp_tol = m.number("qp_tol", 1e-8);
        c.mpc.qp_max_iter = static_cast<int>(m.integer("qp_max_iter", 20000));
        c.mpc.record_timing = m.boolean("record_timing", true);
        m.finish();
    }
    {
        JsonReader f = r.object("reference");
        c.reference.amplitude = f.vec("amplitude");
        c.reference.frequency = f.vec("frequency");
        c.reference.phase = f.vec("phase");
        c.reference.offset = f.vec("offset");
        c.reference.duration = f.number("duration");
        f.finish();
    }
    {
        JsonReader e = r.object("evaluation");
        c.eval.n_rollouts = static_cast<int>(e.integer("n_rollouts", 20));
        c.eval.steps = static_cast<int>(e.integer("steps", 200));
        c.eval.tracked_channels = e.integers("tracked_channels");
        c.eval.dictionary_degree = static_cast<int>(e.integer("dictionary_degree", 3));
        c.eval.bias_columns = static_cast<int>(e.integer("bias_columns", 2000));
        c.eval.bias_draws = static_cast<int>(e.integer("bias_draws", 500));
        c.eval.bias_snr_db = e.number("bias_snr_db", 40.0);
        c.eval.bias_radius = e.number("bias_radius", 0.95);
        e.finish();
    }
    r.finish();
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& file) {
    const std::string text = read_text(file);
    Json j;
    try {
        j = Json::parse(text);
    } catch (const Json::parse_error& e) {
        throw Error(ErrorCode::Config, file.string() + ": malformed JSON: " + e.what());
    }
    return from_json(j);
}

void RunConfig::validate() const {
    auto fail = [](const std::string& m) { throw Error(ErrorCode::Config, m); };
    if (schema_version != kSchemaVersion) fail("schema_version: unsupported");
    system.validate();
    const int n = system.state_dim;
    const int m = system.input_dim;
    if (dataset.n_traj < 3 || dataset.n_snap < 3) fail("dataset: need n_traj >= 3 and n_snap >= 3");
    if (!(dataset.dt > 0.0) || !std::isfinite(dataset.dt)) fail("dataset.dt must be positive");
    if (dataset.snr_db.empty()) fail("dataset.snr_db must list at least one level");
    for (double s : dataset.snr_db) {
        if (!std::isfinite(s)) fail("dataset.snr_db entries must be finite");
    }
    for (std::size_t i = 0; i < dataset.snr_db.size(); ++i) {
        for (std::size_t k = i + 1; k < dataset.snr_db.size(); ++k) {
            if (dataset.snr_db[i] == dataset.snr_db[k]) fail("dataset.snr_db entries must be distinct");
        }
    }
    try {
        excitation().validate(system);
        training.validate();
        mpc.to_mpc(0).validate(n, m);
    } catch (const Error& e) {
        throw Error(ErrorCode::Config, e.what());
    }
    for (const Vec* v : {&reference.amplitude, &reference.frequency, &reference.phase, &reference.offset}) {
        if (v->size() != n) fail("reference: every field needs one entry per state channel");
    }
    if (!(reference.duration >= dataset.dt)) fail("reference.duration must cover at least one step");
    if (eval.n_rollouts < 1 || eval.steps < 1) fail("evaluation: n_rollouts and steps must be positive");
    if (eval.tracked_channels.empty()) fail("evaluation.tracked_channels must not be empty");
    for (int ch : eval.tracked_channels) {
        if (ch < 0 || ch >= n) fail("evaluation.tracked_channels: channel out of range");
    }
    if (eval.dictionary_degree < 1) fail("evaluation.dictionary_degree must be >= 1");
    if (eval.bias_draws < 100 || eval.bias_columns < 10) fail("evaluation: bias_draws >= 100 and bias_columns >= 10");
    if (!(eval.bias_radius > 0.0 && eval.bias_radius < 1.0)) fail("evaluation.bias_radius must lie in (0, 1)");
}

}  // namespace koopman
