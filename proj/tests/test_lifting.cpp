#include <cmath>

#include <doctest.h>

#include "helpers.hpp"
#include "koopman/lifting.hpp"

using namespace koopman;
using testing::randn;

namespace {

EncoderParams random_params(const std::vector<int>& dims, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    EncoderParams p = EncoderParams::init(dims, seed);
    for (auto& layer : p.layers) layer.bias = randn(rng, layer.bias.size(), 1, 0.3);
    p.input_shift = randn(rng, dims.front(), 1, 0.2);
    p.input_scale = Vec::Constant(dims.front(), 1.5);
    return p;
}

double objective(const Vec& x, const EncoderParams& p, const Vec& cot) { return cot.dot(encode(x, p)); }

}  // namespace

TEST_SUITE("lifting") {

TEST_CASE("zero parameters give zero output") {
    const EncoderParams p = EncoderParams::zeros({2, 20, 20, 20, 10});
    std::mt19937_64 rng(1);
    for (int t = 0; t < 10; ++t) CHECK(encode(randn(rng, 2, 1, 3.0), p).cwiseAbs().maxCoeff() == 0.0);
    CHECK(lift(Vec::Zero(2), p) == Vec::Zero(12));
}

TEST_CASE("single linear layer is W x + b") {
    EncoderParams p = EncoderParams::zeros({3, 4});
    std::mt19937_64 rng(2);
    p.layers[0].weight = randn(rng, 4, 3);
    const Vec x = randn(rng, 3, 1);
    CHECK((encode(x, p) - p.layers[0].weight * x).cwiseAbs().maxCoeff() < 1e-15);
    const Vec cot = randn(rng, 4, 1);
    const EncoderGrad g = encode_vjp(x, p, cot);
    CHECK((g.layers[0].weight - cot * x.transpose()).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((g.layers[0].bias - cot).cwiseAbs().maxCoeff() < 1e-15);
    CHECK((g.input.col(0) - p.layers[0].weight.transpose() * cot).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("output respects the analytic bound") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const EncoderParams p = random_params({2, 8, 8, 5}, seed);
        const Vec bound = encode_bound(p);
        std::mt19937_64 rng(seed + 100);
        for (int t = 0; t < 100; ++t) {
            const Vec y = encode(randn(rng, 2, 1, 100.0), p);
            CHECK((y.cwiseAbs().array() <= bound.array()).all());
        }
    }
    CHECK(std::isinf(encode_bound(EncoderParams::zeros({2, 3}))(0)));
}

TEST_CASE("decode of lift is exact and N = 12") {
    const EncoderParams p = random_params({2, 20, 20, 20, 10}, 3);
    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
        const Vec x = randn(rng, 2, 1, 5.0);
        const Vec z = lift(x, p);
        CHECK(z.size() == 12);
        CHECK(decode(z, 2) == x);
    }
    const Lift l = Lift::encoder(p);
    CHECK(l.lifted_dim() == 12);
    const Mat xs = randn(rng, 2, 7);
    const Mat zs = l.batch(xs);
    CHECK(zs.topRows(2) == xs);
    for (int j = 0; j < 7; ++j) CHECK((zs.col(j) - l(xs.col(j))).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("zero cotangent gives zero gradient") {
    const EncoderParams p = random_params({2, 5, 3}, 5);
    const EncoderGrad g = encode_vjp(Vec::Ones(2), p, Vec::Zero(3));
    for (const auto& l : g.layers) {
        CHECK(l.weight.cwiseAbs().maxCoeff() == 0.0);
        CHECK(l.bias.cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK(g.input.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("vjp matches central finite differences") {
    const double h = 1e-6;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        EncoderParams p = random_params({3, 6, 5, 4}, seed);
        std::mt19937_64 rng(seed + 7);
        const Vec x = randn(rng, 3, 1);
        const Vec cot = randn(rng, 4, 1);
        const EncoderGrad g = encode_vjp(x, p, cot);
        double worst = 0.0;
        auto compare = [&](double analytic, double numeric) {
            const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-3});
            worst = std::max(worst, std::abs(analytic - numeric) / scale);
        };
        for (std::size_t l = 0; l < p.layers.size(); ++l) {
            Mat& w = p.layers[l].weight;
            for (Eigen::Index i = 0; i < w.size(); ++i) {
                const double keep = w.data()[i];
                w.data()[i] = keep + h;
                const double up = objective(x, p, cot);
                w.data()[i] = keep - h;
                const double dn = objective(x, p, cot);
                w.data()[i] = keep;
                compare(g.layers[l].weight.data()[i], (up - dn) / (2 * h));
            }
            Vec& b = p.layers[l].bias;
            for (Eigen::Index i = 0; i < b.size(); ++i) {
                const double keep = b(i);
                b(i) = keep + h;
                const double up = objective(x, p, cot);
                b(i) = keep - h;
                const double dn = objective(x, p, cot);
                b(i) = keep;
                compare(g.layers[l].bias(i), (up - dn) / (2 * h));
            }
        }
        for (Eigen::Index i = 0; i < x.size(); ++i) {
            Vec xp = x, xm = x;
            xp(i) += h;
            xm(i) -= h;
            compare(g.input(i, 0), (objective(xp, p, cot) - objective(xm, p, cot)) / (2 * h));
        }
        CHECK(worst < 1e-5);
    }
}

TEST_CASE("batched backward equals summed single-point vjps") {
    const EncoderParams p = random_params({2, 6, 3}, 9);
    std::mt19937_64 rng(10);
    const Mat xs = randn(rng, 2, 5);
    const Mat cots = randn(rng, 3, 5);
    const EncoderGrad all = encode_backward(encode_forward(xs, p), p, cots);
    Mat w0 = Mat::Zero(6, 2);
    for (int j = 0; j < 5; ++j) {
        const EncoderGrad gj = encode_vjp(xs.col(j), p, cots.col(j));
        w0 += gj.layers[0].weight;
        CHECK((all.input.col(j) - gj.input.col(0)).cwiseAbs().maxCoeff() < 1e-13);
    }
    CHECK((all.layers[0].weight - w0).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("init is seeded and validated") {
    const EncoderParams a = EncoderParams::init({2, 20, 20, 20, 10}, 1);
    const EncoderParams b = EncoderParams::init({2, 20, 20, 20, 10}, 1);
    const EncoderParams c = EncoderParams::init({2, 20, 20, 20, 10}, 2);
    CHECK(a.layers[1].weight == b.layers[1].weight);
    CHECK(a.layers[1].weight != c.layers[1].weight);
    CHECK(a.output_dim() == 10);
    CHECK(a.parameter_count() == 2 * 20 + 20 + 20 * 20 + 20 + 20 * 20 + 20 + 20 * 10 + 10);
    EncoderParams bad = a;
    bad.layers[1].weight.resize(3, 3);
    CHECK(testing::error_code_of([&] { bad.validate(); }) == ErrorCode::Validation);
}

TEST_CASE("monomial dictionary") {
    const MonomialDictionary d = MonomialDictionary::up_to_degree(2, 2);
    REQUIRE(d.exponents.size() == 5);
    const Lift l = Lift::dictionary(2, d);
    CHECK(l.lifted_dim() == 5);
    Vec x(2);
    x << 2.0, -3.0;
    const Vec z = l(x);
    CHECK(z.head(2) == x);
    std::vector<double> got(z.data() + 2, z.data() + 5);
    std::sort(got.begin(), got.end());
    CHECK(got == std::vector<double>{-6.0, 4.0, 9.0});
}

}
