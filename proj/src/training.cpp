#include "koopman/training.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numeric>
#include <optional>

#include "koopman/errors.hpp"
#include "koopman/random.hpp"

namespace koopman {

void LossWeights::validate() const {
    const double all[] = {alpha1, alpha2, alpha3, gamma1, gamma2};
    for (double v : all) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw Error(ErrorCode::Config, "loss weights must be finite and nonnegative");
    }
    if (!(alpha1 > 0.0 || alpha2 > 0.0)) throw Error(ErrorCode::Config, "alpha1 or alpha2 must be positive");
}

double LossTerms::total(const LossWeights& w) const {
    return w.alpha1 * (fpred + bpred) + w.alpha2 * (flift + blift) + w.alpha3 * con + reg;
}

TrainState TrainState::init(const std::vector<int>& encoder_dims, int input_dim, std::uint64_t seed) {
    TrainState st;
    st.encoder = EncoderParams::init(encoder_dims, seed);
    const int big_n = st.lifted_dim();
    st.a_f = Mat::Identity(big_n, big_n);
    st.a_b = Mat::Identity(big_n, big_n);
    st.b_f = Mat::Zero(big_n, input_dim);
    st.b_b = Mat::Zero(big_n, input_dim);
    st.adam_m = Vec::Zero(st.parameter_count());
    st.adam_v = Vec::Zero(st.parameter_count());
    return st;
}

Eigen::Index TrainState::parameter_count() const {
    return encoder.parameter_count() + a_f.size() + b_f.size() + a_b.size() + b_b.size();
}

void TrainState::validate() const {
    encoder.validate();
    const int big_n = lifted_dim();
    const auto m = b_f.cols();
    if (a_f.rows() != big_n || a_f.cols() != big_n || a_b.rows() != big_n || a_b.cols() != big_n ||
        b_f.rows() != big_n || b_b.rows() != big_n || b_b.cols() != m) {
        throw Error(ErrorCode::Validation, "TrainState: operator blocks inconsistent with lifted size");
    }
}

namespace {

template <typename Visit>
void for_each_tensor(TrainState& st, Visit&& visit) {
    for (auto& l : st.encoder.layers) {
        visit(l.weight);
        visit(l.bias);
    }
    visit(st.a_f);
    visit(st.b_f);
    visit(st.a_b);
    visit(st.b_b);
}

template <typename Dense>
void write_flat(Vec& flat, Eigen::Index& off, const Dense& t) {
    flat.segment(off, t.size()) = Eigen::Map<const Vec>(t.data(), t.size());
    off += t.size();
}

struct Forward {
    Mat z, z_plus, z_minus;  // N x s
    Mat r_fpred, r_flift, r_bpred, r_blift;
    Mat con_a, con_b;  // A_f A_b - I, A_f B_b + B_f
    EncoderTape tape;  // over [x, x+, x-]
};

Forward run_forward(const TripletBatch& batch, const TrainState& st) {
    const Eigen::Index n = batch.xm.rows();
    const Eigen::Index s = batch.size();
    const Eigen::Index r = st.encoder.output_dim();
    Forward f;
    Mat stacked(n, 3 * s);
    stacked << batch.xm, batch.xm_plus, batch.xm_minus;
    f.tape = encode_forward(stacked, st.encoder);

    auto assemble = [&](const Mat& x, Eigen::Index block) {
        Mat z(n + r, s);
        z.topRows(n) = x;
        z.bottomRows(r) = f.tape.output.middleCols(block * s, s);
        return z;
    };
    f.z = assemble(batch.xm, 0);
    f.z_plus = assemble(batch.xm_plus, 1);
    f.z_minus = assemble(batch.xm_minus, 2);

    const Mat pred_f = st.a_f * f.z + st.b_f * batch.um;
    const Mat pred_b = st.a_b * f.z + st.b_b * batch.um_minus;
    f.r_flift = f.z_plus - pred_f;
    f.r_blift = f.z_minus - pred_b;
    f.r_fpred = f.r_flift.topRows(n);
    f.r_bpred = f.r_blift.topRows(n);
    f.con_a = st.a_f * st.a_b - Mat::Identity(st.a_f.rows(), st.a_f.cols());
    f.con_b = st.a_f * st.b_b + st.b_f;
    return f;
}

double weight_l1(const EncoderParams& p) {
    double acc = 0.0;
    for (const auto& l : p.layers) acc += l.weight.cwiseAbs().sum();
    return acc;
}

double weight_l2sq(const EncoderParams& p) {
    double acc = 0.0;
    for (const auto& l : p.layers) acc += l.weight.squaredNorm();
    return acc;
}

LossTerms terms_from(const Forward& f, const TrainState& st, const LossWeights& w, double s) {
    LossTerms t;
    t.fpred = f.r_fpred.squaredNorm() / s;
    t.flift = f.r_flift.squaredNorm() / s;
    t.bpred = f.r_bpred.squaredNorm() / s;
    t.blift = f.r_blift.squaredNorm() / s;
    t.con = f.con_a.squaredNorm() + f.con_b.squaredNorm();
    t.reg = 0.0;
    if (w.gamma1 != 0.0) t.reg += w.gamma1 * weight_l1(st.encoder);
    if (w.gamma2 != 0.0) t.reg += w.gamma2 * weight_l2sq(st.encoder);
    return t;
}

}  // namespace

Vec pack_parameters(const TrainState& st) {
    Vec flat(st.parameter_count());
    Eigen::Index off = 0;
    for (const auto& l : st.encoder.layers) {
        write_flat(flat, off, l.weight);
        write_flat(flat, off, l.bias);
    }
    write_flat(flat, off, st.a_f);
    write_flat(flat, off, st.b_f);
    write_flat(flat, off, st.a_b);
    write_flat(flat, off, st.b_b);
    return flat;
}

void unpack_parameters(const Vec& flat, TrainState& st) {
    if (flat.size() != st.parameter_count()) throw Error(ErrorCode::LengthMismatch, "unpack_parameters: size mismatch");
    Eigen::Index off = 0;
    for_each_tensor(st, [&](auto& t) {
        Eigen::Map<Vec>(t.data(), t.size()) = flat.segment(off, t.size());
        off += t.size();
    });
}

LossTerms loss_terms(const TripletBatch& batch, const TrainState& st, const LossWeights& w) {
    if (batch.size() == 0) throw Error(ErrorCode::Empty, "loss_terms: empty batch");
    return terms_from(run_forward(batch, st), st, w, static_cast<double>(batch.size()));
}

double total_loss(const TripletBatch& batch, const TrainState& st, const LossWeights& w) {
    return loss_terms(batch, st, w).total(w);
}

LossEval loss_and_grad(const TripletBatch& batch, const TrainState& st, const LossWeights& w) {
    if (batch.size() == 0) throw Error(ErrorCode::Empty, "loss_and_grad: empty batch");
    const Eigen::Index n = batch.xm.rows();
    const Eigen::Index s = batch.size();
    const Eigen::Index r = st.encoder.output_dim();
    const double scale = 2.0 / static_cast<double>(s);

    const Forward f = run_forward(batch, st);
    LossEval out;
    out.terms = terms_from(f, st, w, static_cast<double>(s));
    out.total = out.terms.total(w);

    // d/d(prediction) of the forward and backward residual terms, N x s;
    // the state-prediction term only touches the first n rows (C = [I 0]).
    Mat g_f = w.alpha2 * f.r_flift;
    g_f.topRows(n) += w.alpha1 * f.r_fpred;
    Mat g_b = w.alpha2 * f.r_blift;
    g_b.topRows(n) += w.alpha1 * f.r_bpred;
    g_f *= scale;
    g_b *= scale;

    const Mat d_af = -g_f * f.z.transpose() + 2.0 * w.alpha3 * (f.con_a * st.a_b.transpose() + f.con_b * st.b_b.transpose());
    const Mat d_bf = -g_f * batch.um.transpose() + 2.0 * w.alpha3 * f.con_b;
    const Mat d_ab = -g_b * f.z.transpose() + 2.0 * w.alpha3 * st.a_f.transpose() * f.con_a;
    const Mat d_bb = -g_b * batch.um_minus.transpose() + 2.0 * w.alpha3 * st.a_f.transpose() * f.con_b;

    // Cotangents on encoder outputs at x_k, x_{k+1}, x_{k-1}.
    const Mat g_z = -(st.a_f.transpose() * g_f + st.a_b.transpose() * g_b);
    Mat cot(r, 3 * s);
    cot.leftCols(s) = g_z.bottomRows(r);
    cot.middleCols(s, s) = scale * w.alpha2 * f.r_flift.bottomRows(r);
    cot.rightCols(s) = scale * w.alpha2 * f.r_blift.bottomRows(r);
    EncoderGrad eg = encode_backward(f.tape, st.encoder, cot);

    if (w.gamma1 != 0.0 || w.gamma2 != 0.0) {
        for (std::size_t l = 0; l < eg.layers.size(); ++l) {
            const Mat& wt = st.encoder.layers[l].weight;
            eg.layers[l].weight += w.gamma1 * wt.unaryExpr([](double v) { return double((v > 0) - (v < 0)); }) +
                                   2.0 * w.gamma2 * wt;
        }
    }

    out.grad.resize(st.parameter_count());
    Eigen::Index off = 0;
    for (const auto& l : eg.layers) {
        write_flat(out.grad, off, l.weight);
        write_flat(out.grad, off, l.bias);
    }
    write_flat(out.grad, off, d_af);
    write_flat(out.grad, off, d_bf);
    write_flat(out.grad, off, d_ab);
    write_flat(out.grad, off, d_bb);
    return out;
}

LossEval grad_step(const TripletBatch& batch, TrainState& st, const LossWeights& w, double lr, double clip_norm,
                   const AdamSettings& adam) {
    if (!(lr > 0.0)) throw Error(ErrorCode::PreconditionViolated, "grad_step: learning rate must be positive");
    LossEval ev = loss_and_grad(batch, st, w);
    if (!ev.grad.allFinite()) {
        throw Error(ErrorCode::NonFiniteGradient,
                    "grad_step: non-finite gradient at step " + std::to_string(st.step) +
                        " (loss=" + std::to_string(ev.total) + ")");
    }
    Vec g = ev.grad;
    if (clip_norm > 0.0) {
        const double gn = g.norm();
        if (gn > clip_norm) g *= clip_norm / gn;
    }
    if (st.adam_m.size() != g.size()) {
        st.adam_m = Vec::Zero(g.size());
        st.adam_v = Vec::Zero(g.size());
    }
    st.step += 1;
    st.adam_m = adam.beta1 * st.adam_m + (1.0 - adam.beta1) * g;
    st.adam_v = adam.beta2 * st.adam_v + (1.0 - adam.beta2) * g.cwiseAbs2();
    const double t = static_cast<double>(st.step);
    const double bc1 = 1.0 - std::pow(adam.beta1, t);
    const double bc2 = 1.0 - std::pow(adam.beta2, t);
    const Vec update = (st.adam_m.array() / bc1) / ((st.adam_v.array() / bc2).sqrt() + adam.eps);
    Vec theta = pack_parameters(st);
    theta -= lr * update;
    unpack_parameters(theta, st);
    return ev;
}

void TrainConfig::validate() const {
    if (epochs < 0) throw Error(ErrorCode::Config, "epochs must be >= 0");
    if (batch_size < 1) throw Error(ErrorCode::Config, "batch_size must be >= 1");
    if (!(lr > 0.0)) throw Error(ErrorCode::Config, "lr must be positive");
    if (!(lr_decay > 0.0) || decay_every < 1) throw Error(ErrorCode::Config, "invalid learning-rate schedule");
    if (encoder_output < 1) throw Error(ErrorCode::Config, "encoder output must be >= 1");
    if (polish_sweeps < 0) throw Error(ErrorCode::Config, "polish_sweeps must be >= 0");
    for (int h : hidden)
        if (h < 1) throw Error(ErrorCode::Config, "hidden layer widths must be >= 1");
    weights.validate();
}

namespace {

// kron(P, Q) accumulated into h with the given scale.
void add_kron(Mat& h, const Mat& p, const Mat& q, double scale) {
    const Eigen::Index r = q.rows();
    for (Eigen::Index b = 0; b < p.cols(); ++b)
        for (Eigen::Index a = 0; a < p.rows(); ++a) h.block(a * r, b * r, r, r) += (scale * p(a, b)) * q;
}

// argmin_K (1/s) sum_i w_i ||Y_i - K_i X||^2 + alpha ||L K R + C||_F^2, K is N x q.
// Column-major vec: vec(L K R) = (R^T kron L) vec(K).
std::optional<Mat> weighted_block_lstsq(const Mat& y, const Mat& x, const Vec& row_w, double alpha, const Mat& l,
                                        const Mat& r, const Mat& c) {
    const Eigen::Index big_n = y.rows(), q = x.rows();
    const double s = static_cast<double>(x.cols());
    Mat h = Mat::Zero(big_n * q, big_n * q);
    add_kron(h, x * x.transpose() / s, Mat(row_w.asDiagonal()), 1.0);
    add_kron(h, r * r.transpose(), l.transpose() * l, alpha);
    const Mat rhs = row_w.asDiagonal() * y * x.transpose() / s - alpha * l.transpose() * c * r.transpose();
    Eigen::LLT<Mat> llt(h);
    if (llt.info() != Eigen::Success) return std::nullopt;
    Vec k = llt.solve(Eigen::Map<const Vec>(rhs.data(), rhs.size()));
    if (!k.allFinite()) return std::nullopt;
    return Mat(Eigen::Map<Mat>(k.data(), big_n, q));
}

}  // namespace

bool polish_linear_layers(const TripletBatch& data, TrainState& st, const LossWeights& w, int sweeps) {
    if (sweeps <= 0) return true;
    const Eigen::Index n = data.xm.rows();
    const Eigen::Index m = data.um.rows();
    const Eigen::Index big_n = st.lifted_dim();
    const Eigen::Index q = big_n + m;
    auto lift_all = [&](const Mat& x) {
        Mat z(big_n, x.cols());
        z.topRows(n) = x;
        z.bottomRows(big_n - n) = encode_batch(x, st.encoder);
        return z;
    };
    const Mat z = lift_all(data.xm);
    const Mat z_plus = lift_all(data.xm_plus);
    const Mat z_minus = lift_all(data.xm_minus);
    Mat x_f(q, z.cols()), x_b(q, z.cols());
    x_f << z, data.um;
    x_b << z, data.um_minus;

    Vec row_w = Vec::Constant(big_n, w.alpha2);
    row_w.head(n).array() += w.alpha1;
    Mat ident_top = Mat::Zero(big_n, q);
    ident_top.leftCols(big_n).setIdentity();

    TrainState work = st;
    for (int sweep = 0; sweep < sweeps; ++sweep) {
        // forward: || K_f K_b - I ||^2 over the top rows, K_b dense
        Mat kb = Mat::Identity(q, q);
        kb.topLeftCorner(big_n, big_n) = work.a_b;
        kb.topRightCorner(big_n, m) = work.b_b;
        const auto kf = weighted_block_lstsq(z_plus, x_f, row_w, w.alpha3, Mat::Identity(big_n, big_n), kb,
                                             -ident_top);
        if (!kf) return false;
        work.a_f = kf->leftCols(big_n);
        work.b_f = kf->rightCols(m);
        // backward: A_f [A_b B_b] + [0 B_f] - [I 0]
        Mat c = -ident_top;
        c.rightCols(m) += work.b_f;
        const auto kb_top = weighted_block_lstsq(z_minus, x_b, row_w, w.alpha3, work.a_f, Mat::Identity(q, q), c);
        if (!kb_top) return false;
        work.a_b = kb_top->leftCols(big_n);
        work.b_b = kb_top->rightCols(m);
    }
    st.a_f = work.a_f;
    st.b_f = work.b_f;
    st.a_b = work.a_b;
    st.b_b = work.b_b;
    return true;
}

TrainResult train(const TripletBatch& dataset, const TrainConfig& config) {
    config.validate();
    const Eigen::Index s = dataset.size();
    if (s < config.batch_size) {
        throw Error(ErrorCode::PreconditionViolated, "train: dataset has fewer columns than batch_size");
    }
    const int n = static_cast<int>(dataset.xm.rows());
    const int m = static_cast<int>(dataset.um.rows());
    std::vector<int> dims{n};
    dims.insert(dims.end(), config.hidden.begin(), config.hidden.end());
    dims.push_back(config.encoder_output);

    TrainResult result;
    result.state = TrainState::init(dims, m, derive_seed(config.seed, "train-init"));

    const Vec mean = dataset.xm.rowwise().mean();
    Vec stdev = ((dataset.xm.colwise() - mean).rowwise().squaredNorm() / static_cast<double>(s)).cwiseSqrt();
    for (Eigen::Index i = 0; i < stdev.size(); ++i)
        if (!(stdev(i) > 0.0)) stdev(i) = 1.0;
    result.state.encoder.input_shift = mean;
    result.state.encoder.input_scale = stdev;

    Rng shuffle_rng = make_rng(config.seed, "train-shuffle");
    std::vector<Eigen::Index> order(static_cast<std::size_t>(s));
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const auto bs = static_cast<std::size_t>(config.batch_size);

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = config.lr * std::pow(config.lr_decay, epoch / config.decay_every);
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        EpochLoss acc;
        acc.epoch = epoch;
        for (std::size_t start = 0; start < order.size(); start += bs) {
            const std::size_t stop = std::min(order.size(), start + bs);
            const std::vector<Eigen::Index> cols(order.begin() + static_cast<std::ptrdiff_t>(start),
                                                 order.begin() + static_cast<std::ptrdiff_t>(stop));
            const LossEval ev = grad_step(dataset.select(cols), result.state, config.weights, lr, config.clip_norm);
            const double frac = static_cast<double>(stop - start) / static_cast<double>(s);
            acc.terms.fpred += frac * ev.terms.fpred;
            acc.terms.flift += frac * ev.terms.flift;
            acc.terms.bpred += frac * ev.terms.bpred;
            acc.terms.blift += frac * ev.terms.blift;
            acc.terms.con += frac * ev.terms.con;
            acc.terms.reg += frac * ev.terms.reg;
        }
        acc.total = acc.terms.total(config.weights);
        result.history.push_back(acc);
    }
    if (!polish_linear_layers(dataset, result.state, config.weights, config.polish_sweeps)) {
        std::cerr << "warning: linear-layer polish skipped, normal matrix not positive definite\n";
    }
    return result;
}

}  // namespace koopman
