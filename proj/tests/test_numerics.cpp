#include <cmath>

#include <doctest.h>

#include "helpers.hpp"
#include "koopman/numerics.hpp"

using namespace koopman;
using testing::error_code_of;
using testing::randn;
using testing::rel_frob;

TEST_SUITE("numerics") {

TEST_CASE("require_finite rejects NaN and Inf") {
    Mat m = Mat::Ones(2, 2);
    CHECK_NOTHROW(require_finite(m, "m"));
    m(1, 0) = std::nan("");
    CHECK(error_code_of([&] { require_finite(m, "m"); }) == ErrorCode::NonFinite);
    m(1, 0) = INFINITY;
    CHECK(error_code_of([&] { (void)checked(m); }) == ErrorCode::NonFinite);
}

TEST_CASE("lstsq_right on exact data") {
    std::mt19937_64 rng(1);
    const Mat x = randn(rng, 3, 3);
    CHECK(rel_frob(lstsq_right(x, x), Mat::Identity(3, 3)) < 1e-10);
    CHECK(rel_frob(lstsq_right(2.0 * x, x), 2.0 * Mat::Identity(3, 3)) < 1e-10);

    const Mat a = randn(rng, 3, 3);
    const Mat xs = randn(rng, 3, 50);
    CHECK((lstsq_right(a * xs, xs) - a).cwiseAbs().maxCoeff() < 1e-8);

    // matches the orthogonal-factorisation route
    const Mat y = randn(rng, 2, 40);
    const Mat z = randn(rng, 4, 40);
    const Mat qr = z.transpose().colPivHouseholderQr().solve(y.transpose()).transpose();
    CHECK(rel_frob(lstsq_right(y, z), qr) < 1e-10);
}

TEST_CASE("lstsq_right recovers K for random full-row-rank X") {
    std::mt19937_64 rng(2);
    for (int t = 0; t < 20; ++t) {
        const Mat k = randn(rng, 4, 5);
        const Mat x = randn(rng, 5, 30);
        CHECK(rel_frob(lstsq_right(k * x, x), k) < 1e-8);
    }
}

TEST_CASE("lstsq_right flags rank deficiency") {
    Mat x = Mat::Zero(2, 20);
    x.row(0).setLinSpaced(20, -1.0, 1.0);
    CHECK(error_code_of([&] { (void)lstsq_right(x, x); }) == ErrorCode::RankDeficient);
    Mat dup(2, 20);
    dup.row(0).setLinSpaced(20, -1.0, 1.0);
    dup.row(1) = 3.0 * dup.row(0);
    CHECK(error_code_of([&] { (void)lstsq_right(dup, dup); }) == ErrorCode::RankDeficient);
}

TEST_CASE("inv") {
    CHECK(inv(Mat::Identity(3, 3)) == Mat::Identity(3, 3));
    Mat d = Mat::Zero(2, 2);
    d.diagonal() << 2, 4;
    Mat expect = Mat::Zero(2, 2);
    expect.diagonal() << 0.5, 0.25;
    CHECK((inv(d) - expect).cwiseAbs().maxCoeff() == 0.0);

    std::mt19937_64 rng(3);
    for (int t = 0; t < 20; ++t) {
        const Mat m = randn(rng, 5, 5) + 5.0 * Mat::Identity(5, 5);
        CHECK((m * inv(m) - Mat::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-9);
        CHECK(rel_frob(inv(inv(m)), m) < 1e-8);
    }
    CHECK(error_code_of([] { (void)inv(Mat::Zero(3, 3)); }) == ErrorCode::Singular);
    Mat near(2, 2);
    near << 1, 1, 1, 1 + 1e-15;
    CHECK(error_code_of([&] { (void)inv(near); }) == ErrorCode::Singular);
}

TEST_CASE("sqrtm_principal closed-form cases") {
    CHECK(rel_frob(sqrtm_principal(Mat::Identity(3, 3)), Mat::Identity(3, 3)) < 1e-14);
    Mat d = Mat::Zero(2, 2);
    d.diagonal() << 4, 9;
    Mat r = Mat::Zero(2, 2);
    r.diagonal() << 2, 3;
    CHECK(rel_frob(sqrtm_principal(d), r) < 1e-12);

    Mat rot(2, 2);
    rot << 0, -1, 1, 0;
    Mat half(2, 2);
    half << 1, -1, 1, 1;
    half /= std::sqrt(2.0);
    CHECK(rel_frob(sqrtm_principal(rot), half) < 1e-12);
}

TEST_CASE("sqrtm_principal squares back on random right-half-plane spectra") {
    std::mt19937_64 rng(4);
    for (int t = 0; t < 50; ++t) {
        const Mat p = randn(rng, 4, 4);
        const Mat m = p * p + 0.1 * Mat::Identity(4, 4);
        // p*p may still put eigenvalues near the negative axis; only accepted results are checked
        try {
            const Mat s = sqrtm_principal(m);
            CHECK(rel_frob(s * s, m) < 1e-8);
        } catch (const Error& e) {
            CHECK(e.code() == ErrorCode::NoPrincipalRoot);
        }
        const Mat spd = p * p.transpose() + 0.1 * Mat::Identity(4, 4);
        const Mat s = sqrtm_principal(spd);
        CHECK(rel_frob(s * s, spd) < 1e-8);
        // principal root of an SPD matrix is SPD
        CHECK(Eigen::SelfAdjointEigenSolver<Mat>(0.5 * (s + s.transpose())).eigenvalues().minCoeff() > 0.0);
    }
}

TEST_CASE("sqrtm_principal commutes with similarity") {
    std::mt19937_64 rng(5);
    for (int t = 0; t < 20; ++t) {
        const Mat q = randn(rng, 3, 3);
        const Mat m = q * q.transpose() + Mat::Identity(3, 3) + 0.3 * randn(rng, 3, 3);
        const Mat tm = Mat::Identity(3, 3) + 0.2 * randn(rng, 3, 3);
        const Mat lhs = sqrtm_principal(tm * m * inv(tm));
        const Mat rhs = tm * sqrtm_principal(m) * inv(tm);
        CHECK(rel_frob(lhs, rhs) < 1e-6);
    }
}

TEST_CASE("sqrtm_principal rejects the negative real axis") {
    Mat m = Mat::Zero(2, 2);
    m.diagonal() << -1.0, 2.0;
    CHECK(error_code_of([&] { (void)sqrtm_principal(m); }) == ErrorCode::NoPrincipalRoot);
    CHECK(error_code_of([] { (void)sqrtm_principal(-Mat::Identity(3, 3)); }) == ErrorCode::NoPrincipalRoot);
}

TEST_CASE("norms") {
    CHECK(frob(Mat::Zero(3, 4)) == 0.0);
    CHECK(norm2_est(Mat::Zero(3, 4)) == 0.0);
    CHECK(frob(Mat::Identity(3, 3)) == doctest::Approx(std::sqrt(3.0)).epsilon(1e-15));
    Mat d = Mat::Zero(2, 2);
    d.diagonal() << 3, 1;
    const double n2 = norm2_est(d);
    CHECK(n2 >= 2.97);
    CHECK(n2 <= 3.03);

    std::mt19937_64 rng(6);
    for (int t = 0; t < 20; ++t) {
        const Mat m = randn(rng, 5, 3);
        const double exact = Eigen::JacobiSVD<Mat>(m).singularValues()(0);
        CHECK(std::abs(norm2_est(m) - exact) <= 0.01 * exact);
    }
}

}
