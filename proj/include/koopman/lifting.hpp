#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include "koopman/numerics.hpp"

namespace koopman {

struct DenseLayer {
    Mat weight;  // out x in
    Vec bias;    // out
};

/// Feed-forward encoder zeta(x): tanh on every hidden layer, linear output.
///
/// Inputs are standardised as (x - input_shift) / input_scale before the
/// first layer; the shift/scale pair is part of the parameters so a stored
/// model applies it transparently.
struct EncoderParams {
    std::vector<DenseLayer> layers;
    Vec input_shift;
    Vec input_scale;

    // dims = {input n, hidden..., output}; Xavier-uniform weights, zero biases.
    static EncoderParams init(const std::vector<int>& dims, std::uint64_t seed);
    // All-zero weights and biases, identity standardisation.
    static EncoderParams zeros(const std::vector<int>& dims);

    [[nodiscard]] int input_dim() const;
    [[nodiscard]] int output_dim() const;
    [[nodiscard]] std::vector<int> layer_dims() const;
    [[nodiscard]] Eigen::Index parameter_count() const;

    // Throws Validation on inconsistent shapes or non-finite values.
    void validate() const;
};

Vec encode(const Vec& x, const EncoderParams& p);
Mat encode_batch(const Mat& x, const EncoderParams& p);

// Activations retained for reverse mode.
struct EncoderTape {
    Mat input;                 // standardised input
    std::vector<Mat> hidden;   // tanh outputs, one per hidden layer
    Mat output;
};

EncoderTape encode_forward(const Mat& x, const EncoderParams& p);

struct EncoderGrad {
    std::vector<DenseLayer> layers;  // same shapes as the parameters
    Mat input;                       // d/dx, n x batch
};

// Reverse-mode gradient of sum_j cotangent(:,j)^T zeta(x_j).
EncoderGrad encode_backward(const EncoderTape& tape, const EncoderParams& p, const Mat& cotangent);

// Single-point vector-Jacobian product.
EncoderGrad encode_vjp(const Vec& x, const EncoderParams& p, const Vec& cotangent);

// Output magnitude bound valid for every input: hidden units lie in (-1, 1)
// so |zeta_i| <= sum_j |W_out(i,j)| + |b_out(i)|. Infinite without a hidden layer.
Vec encode_bound(const EncoderParams& p);

/// Fixed dictionary of monomials in the raw state. The first n entries must be
/// the coordinate monomials x_1..x_n so that the decoder stays C = [I 0].
struct MonomialDictionary {
    std::vector<std::vector<int>> exponents;

    static MonomialDictionary identity(int n);
    // All monomials up to total degree `degree`, coordinates first.
    static MonomialDictionary up_to_degree(int n, int degree);
    void validate(int n) const;
};

struct IdentityLift {
    int n = 0;
};

// The stacked lifting z = phi(x). Decoding is always the first n entries.
class Lift {
public:
    Lift() = default;
    static Lift identity(int n);
    static Lift encoder(EncoderParams params);
    static Lift dictionary(int n, MonomialDictionary dict);

    [[nodiscard]] int state_dim() const;
    [[nodiscard]] int lifted_dim() const;
    [[nodiscard]] Vec operator()(const Vec& x) const;
    [[nodiscard]] Mat batch(const Mat& x) const;

    [[nodiscard]] const std::variant<IdentityLift, EncoderParams, MonomialDictionary>& kind() const { return impl_; }
    [[nodiscard]] const EncoderParams* encoder_params() const { return std::get_if<EncoderParams>(&impl_); }

private:
    std::variant<IdentityLift, EncoderParams, MonomialDictionary> impl_;
    int n_ = 0;
};

// z = [x; zeta(x)]
Vec lift(const Vec& x, const EncoderParams& p);
// C z = first n entries
Vec decode(const Vec& z, int n);

}  // namespace koopman
