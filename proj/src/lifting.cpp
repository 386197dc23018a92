#include "koopman/lifting.hpp"

#include <cmath>

#include "koopman/errors.hpp"
#include "koopman/random.hpp"

namespace koopman {

EncoderParams EncoderParams::init(const std::vector<int>& dims, std::uint64_t seed) {
    if (dims.size() < 2) throw Error(ErrorCode::Config, "encoder needs at least input and output dims");
    EncoderParams p;
    Rng rng = make_rng(seed, "encoder-init");
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        const int in = dims[l];
        const int out = dims[l + 1];
        if (in <= 0 || out <= 0) throw Error(ErrorCode::Config, "encoder layer dims must be positive");
        const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
        std::uniform_real_distribution<double> dist(-limit, limit);
        DenseLayer layer{Mat(out, in), Vec::Zero(out)};
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j) layer.weight(i, j) = dist(rng);
        p.layers.push_back(std::move(layer));
    }
    p.input_shift = Vec::Zero(dims.front());
    p.input_scale = Vec::Ones(dims.front());
    return p;
}

EncoderParams EncoderParams::zeros(const std::vector<int>& dims) {
    EncoderParams p = init(dims, 0);
    for (auto& l : p.layers) {
        l.weight.setZero();
        l.bias.setZero();
    }
    return p;
}

int EncoderParams::input_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.front().weight.cols());
}

int EncoderParams::output_dim() const {
    return layers.empty() ? 0 : static_cast<int>(layers.back().weight.rows());
}

std::vector<int> EncoderParams::layer_dims() const {
    std::vector<int> dims;
    if (layers.empty()) return dims;
    dims.push_back(input_dim());
    for (const auto& l : layers) dims.push_back(static_cast<int>(l.weight.rows()));
    return dims;
}

Eigen::Index EncoderParams::parameter_count() const {
    Eigen::Index c = 0;
    for (const auto& l : layers) c += l.weight.size() + l.bias.size();
    return c;
}

void EncoderParams::validate() const {
    if (layers.empty()) throw Error(ErrorCode::Validation, "encoder has no layers");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        if (layer.bias.size() != layer.weight.rows()) throw Error(ErrorCode::Validation, "encoder bias size mismatch");
        if (l > 0 && layer.weight.cols() != layers[l - 1].weight.rows()) {
            throw Error(ErrorCode::Validation, "encoder layer dims are not consecutive");
        }
        if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
            throw Error(ErrorCode::Validation, "encoder parameters are not finite");
        }
    }
    if (input_shift.size() != input_dim() || input_scale.size() != input_dim()) {
        throw Error(ErrorCode::Validation, "encoder standardisation size mismatch");
    }
    if (!input_shift.allFinite() || !input_scale.allFinite() || (input_scale.array() <= 0.0).any()) {
        throw Error(ErrorCode::Validation, "encoder standardisation must be finite with positive scale");
    }
}

EncoderTape encode_forward(const Mat& x, const EncoderParams& p) {
    EncoderTape tape;
    tape.input = (x.colwise() - p.input_shift).array().colwise() / p.input_scale.array();
    const Mat* h = &tape.input;
    tape.hidden.reserve(p.layers.size() - 1);
    for (std::size_t l = 0; l + 1 < p.layers.size(); ++l) {
        Mat a = p.layers[l].weight * *h;
        a.colwise() += p.layers[l].bias;
        tape.hidden.push_back(a.array().tanh().matrix());
        h = &tape.hidden.back();
    }
    tape.output = p.layers.back().weight * *h;
    tape.output.colwise() += p.layers.back().bias;
    return tape;
}

Mat encode_batch(const Mat& x, const EncoderParams& p) {
    return encode_forward(x, p).output;
}

Vec encode(const Vec& x, const EncoderParams& p) {
    return encode_batch(x, p).col(0);
}

EncoderGrad encode_backward(const EncoderTape& tape, const EncoderParams& p, const Mat& cotangent) {
    EncoderGrad g;
    g.layers.resize(p.layers.size());
    Mat delta = cotangent;
    for (std::size_t l = p.layers.size(); l-- > 0;) {
        const Mat& below = l == 0 ? tape.input : tape.hidden[l - 1];
        g.layers[l].weight = delta * below.transpose();
        g.layers[l].bias = delta.rowwise().sum();
        Mat back = p.layers[l].weight.transpose() * delta;
        if (l > 0) {
            back.array() *= 1.0 - below.array().square();
        }
        delta = std::move(back);
    }
    g.input = delta.array().colwise() / p.input_scale.array();
    return g;
}

EncoderGrad encode_vjp(const Vec& x, const EncoderParams& p, const Vec& cotangent) {
    return encode_backward(encode_forward(x, p), p, cotangent);
}

Vec encode_bound(const EncoderParams& p) {
    const auto& out = p.layers.back();
    if (p.layers.size() == 1) {
        // no hidden layer: the map is affine and unbounded in x
        return Vec::Constant(out.weight.rows(), std::numeric_limits<double>::infinity());
    }
    return out.weight.cwiseAbs().rowwise().sum() + out.bias.cwiseAbs();
}

MonomialDictionary MonomialDictionary::identity(int n) {
    MonomialDictionary d;
    for (int i = 0; i < n; ++i) {
        std::vector<int> e(static_cast<std::size_t>(n), 0);
        e[static_cast<std::size_t>(i)] = 1;
        d.exponents.push_back(std::move(e));
    }
    return d;
}

MonomialDictionary MonomialDictionary::up_to_degree(int n, int degree) {
    MonomialDictionary d = identity(n);
    for (int total = 2; total <= degree; ++total) {
        // enumerate exponent vectors of the given total degree, lexicographically descending
        std::vector<int> e(static_cast<std::size_t>(n), 0);
        auto rec = [&](auto&& self, int idx, int remaining) -> void {
            if (idx == n - 1) {
                e[static_cast<std::size_t>(idx)] = remaining;
                d.exponents.push_back(e);
                return;
            }
            for (int k = remaining; k >= 0; --k) {
                e[static_cast<std::size_t>(idx)] = k;
                self(self, idx + 1, remaining - k);
            }
        };
        rec(rec, 0, total);
    }
    return d;
}

void MonomialDictionary::validate(int n) const {
    if (static_cast<int>(exponents.size()) < n) throw Error(ErrorCode::Config, "dictionary smaller than the state");
    for (std::size_t i = 0; i < exponents.size(); ++i) {
        const auto& e = exponents[i];
        if (static_cast<int>(e.size()) != n) throw Error(ErrorCode::Config, "dictionary exponent vector has wrong length");
        for (int k : e)
            if (k < 0) throw Error(ErrorCode::Config, "dictionary exponents must be nonnegative");
        if (static_cast<int>(i) < n) {
            for (int j = 0; j < n; ++j) {
                if (e[static_cast<std::size_t>(j)] != (j == static_cast<int>(i) ? 1 : 0)) {
                    throw Error(ErrorCode::Config, "dictionary must start with the coordinate monomials x_1..x_n");
                }
            }
        }
    }
}

Lift Lift::identity(int n) {
    Lift l;
    l.impl_ = IdentityLift{n};
    l.n_ = n;
    return l;
}

Lift Lift::encoder(EncoderParams params) {
    params.validate();
    Lift l;
    l.n_ = params.input_dim();
    l.impl_ = std::move(params);
    return l;
}

Lift Lift::dictionary(int n, MonomialDictionary dict) {
    dict.validate(n);
    Lift l;
    l.n_ = n;
    l.impl_ = std::move(dict);
    return l;
}

int Lift::state_dim() const {
    return n_;
}

int Lift::lifted_dim() const {
    return std::visit(
        [this](const auto& impl) -> int {
            using T = std::decay_t<decltype(impl)>;
            if constexpr (std::is_same_v<T, IdentityLift>) return n_;
            else if constexpr (std::is_same_v<T, EncoderParams>) return n_ + impl.output_dim();
            else return static_cast<int>(impl.exponents.size());
        },
        impl_);
}

Mat Lift::batch(const Mat& x) const {
    return std::visit(
        [&](const auto& impl) -> Mat {
            using T = std::decay_t<decltype(impl)>;
            if constexpr (std::is_same_v<T, IdentityLift>) {
                return x;
            } else if constexpr (std::is_same_v<T, EncoderParams>) {
                Mat z(x.rows() + impl.output_dim(), x.cols());
                z.topRows(x.rows()) = x;
                z.bottomRows(impl.output_dim()) = encode_batch(x, impl);
                return z;
            } else {
                Mat z(static_cast<Eigen::Index>(impl.exponents.size()), x.cols());
                for (std::size_t i = 0; i < impl.exponents.size(); ++i) {
                    const auto& e = impl.exponents[i];
                    for (Eigen::Index c = 0; c < x.cols(); ++c) {
                        double v = 1.0;
                        for (Eigen::Index j = 0; j < x.rows(); ++j) {
                            for (int k = 0; k < e[static_cast<std::size_t>(j)]; ++k) v *= x(j, c);
                        }
                        z(static_cast<Eigen::Index>(i), c) = v;
                    }
                }
                return z;
            }
        },
        impl_);
}

Vec Lift::operator()(const Vec& x) const {
    return batch(x).col(0);
}

Vec lift(const Vec& x, const EncoderParams& p) {
    Vec z(x.size() + p.output_dim());
    z << x, encode(x, p);
    return z;
}

Vec decode(const Vec& z, int n) {
    return z.head(n);
}

}  // namespace koopman
