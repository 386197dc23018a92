#include "koopman/operator.hpp"

#include "koopman/errors.hpp"

namespace koopman {

BlockOp BlockOp::identity(Eigen::Index big_n, Eigen::Index m) {
    return {Mat::Identity(big_n, big_n), Mat::Zero(big_n, m)};
}

Mat BlockOp::dense() const {
    const Eigen::Index big_n = a.rows();
    const Eigen::Index m = b.cols();
    Mat k = Mat::Zero(big_n + m, big_n + m);
    k.topLeftCorner(big_n, big_n) = a;
    k.topRightCorner(big_n, m) = b;
    k.bottomRightCorner(m, m).setIdentity();
    return k;
}

BlockOp BlockOp::operator*(const BlockOp& rhs) const {
    return {a * rhs.a, a * rhs.b + b};
}

BlockOp BlockOp::inverse() const {
    const Mat a_inv = inv(a);
    return {a_inv, -a_inv * b};
}

std::pair<BlockOp, BlockOp> assemble(const TrainState& st) {
    return {BlockOp{st.a_f, st.b_f}, BlockOp{st.a_b, st.b_b}};
}

BlockOp reduced_bias(const BlockOp& k_fm, const BlockOp& k_bm) {
    if (k_fm.a.rows() != k_bm.a.rows() || k_fm.b.cols() != k_bm.b.cols()) {
        throw Error(ErrorCode::LengthMismatch, "reduced_bias: forward and backward operators differ in shape");
    }
    // M = A_f A_b^-1 computed as (A_b^-T A_f^T)^T
    const Mat m = solve(k_bm.a.transpose(), k_fm.a.transpose()).transpose();
    const Mat n_prime = k_fm.b - m * k_bm.b;
    BlockOp out;
    out.a = sqrtm_principal(m);
    out.b = solve(out.a + Mat::Identity(out.a.rows(), out.a.cols()), n_prime);
    return out;
}

const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::DRKN: return "DRKN";
        case Provenance::NominalLS: return "NominalLS";
        case Provenance::FBEDMD: return "FBEDMD";
        case Provenance::GroundTruthLinear: return "GroundTruthLinear";
    }
    return "?";
}

Provenance provenance_from_string(const std::string& s) {
    if (s == "DRKN") return Provenance::DRKN;
    if (s == "NominalLS") return Provenance::NominalLS;
    if (s == "FBEDMD") return Provenance::FBEDMD;
    if (s == "GroundTruthLinear") return Provenance::GroundTruthLinear;
    throw Error(ErrorCode::Validation, "unknown provenance '" + s + "'");
}

Mat KoopmanModel::c() const {
    Mat c = Mat::Zero(state_dim(), lifted_dim());
    c.leftCols(state_dim()).setIdentity();
    return c;
}

void KoopmanModel::validate() const {
    const int big_n = lifted_dim();
    if (state_dim() < 1 || big_n < state_dim()) throw Error(ErrorCode::Validation, "KoopmanModel: bad lifting dims");
    if (a.rows() != big_n || a.cols() != big_n || b.rows() != big_n || b.cols() < 1) {
        throw Error(ErrorCode::Validation, "KoopmanModel: A/B dims inconsistent with lifting");
    }
    if (!a.allFinite() || !b.allFinite()) throw Error(ErrorCode::Validation, "KoopmanModel: non-finite operator");
    if (!(dt > 0.0)) throw Error(ErrorCode::Validation, "KoopmanModel: dt must be positive");
}

KoopmanModel drkn_model(const TrainState& st, double dt) {
    const auto [k_fm, k_bm] = assemble(st);
    const BlockOp k_p = reduced_bias(k_fm, k_bm);
    KoopmanModel model{k_p.a, k_p.b, Lift::encoder(st.encoder), dt, Provenance::DRKN};
    model.validate();
    return model;
}

namespace {

Mat stack_rows(const Mat& top, const Mat& bottom) {
    Mat out(top.rows() + bottom.rows(), top.cols());
    out << top, bottom;
    return out;
}

BlockOp split(const Mat& ab, Eigen::Index big_n) {
    return {ab.leftCols(big_n), ab.rightCols(ab.cols() - big_n)};
}

void require_columns(const TripletBatch& batch, const Lift& lift, const char* who) {
    const Eigen::Index needed = lift.lifted_dim() + batch.um.rows();
    if (batch.size() <= needed) {
        throw Error(ErrorCode::PreconditionViolated,
                    std::string(who) + ": need more than N + m = " + std::to_string(needed) + " triplets");
    }
    if (batch.xm.rows() != lift.state_dim()) throw Error(ErrorCode::LengthMismatch, std::string(who) + ": lift/state dims differ");
}

}  // namespace

KoopmanModel nominal_fit(const TripletBatch& batch, const Lift& lift) {
    require_columns(batch, lift, "nominal_fit");
    const Mat z = lift.batch(batch.xm);
    const Mat z_plus = lift.batch(batch.xm_plus);
    const BlockOp k = split(lstsq_right(z_plus, stack_rows(z, batch.um)), z.rows());
    KoopmanModel model{k.a, k.b, lift, batch.dt, Provenance::NominalLS};
    model.validate();
    return model;
}

std::pair<BlockOp, BlockOp> fit_forward_backward(const TripletBatch& batch, const Lift& lift) {
    require_columns(batch, lift, "fit_forward_backward");
    const Mat z = lift.batch(batch.xm);
    const Mat z_plus = lift.batch(batch.xm_plus);
    const Mat z_minus = lift.batch(batch.xm_minus);
    const BlockOp k_fm = split(lstsq_right(z_plus, stack_rows(z, batch.um)), z.rows());
    const BlockOp k_bm = split(lstsq_right(z_minus, stack_rows(z, batch.um_minus)), z.rows());
    return {k_fm, k_bm};
}

KoopmanModel fb_edmd_fit(const TripletBatch& batch, const Lift& lift) {
    const auto [k_fm, k_bm] = fit_forward_backward(batch, lift);
    const BlockOp k_p = reduced_bias(k_fm, k_bm);
    KoopmanModel model{k_p.a, k_p.b, lift, batch.dt, Provenance::FBEDMD};
    model.validate();
    return model;
}

Trajectory rollout(const KoopmanModel& model, const Vec& x0, const Mat& inputs) {
    require_finite(x0, "rollout: x0");
    if (x0.size() != model.state_dim()) throw Error(ErrorCode::LengthMismatch, "rollout: x0 has wrong size");
    if (inputs.cols() > 0 && inputs.rows() != model.input_dim()) {
        throw Error(ErrorCode::LengthMismatch, "rollout: inputs have wrong row count");
    }
    const int n = model.state_dim();
    Trajectory out;
    out.dt = model.dt;
    out.inputs = inputs.cols() > 0 ? inputs : Mat(model.input_dim(), 0);
    out.states.resize(n, inputs.cols() + 1);
    Vec z = model.lift(x0);
    out.states.col(0) = z.head(n);
    for (Eigen::Index k = 0; k < inputs.cols(); ++k) {
        z = model.a * z + model.b * inputs.col(k);
        out.states.col(k + 1) = z.head(n);
    }
    return out;
}

}  // namespace koopman
