#include <cmath>
#include <sstream>

#include <doctest.h>

#include "helpers.hpp"
#include "koopman/bench.hpp"

using namespace koopman;
using testing::error_code_of;
using testing::randn;

namespace {

Trajectory random_traj(std::uint64_t seed, int n, int length) {
    std::mt19937_64 rng(seed);
    Trajectory t;
    t.dt = 0.01;
    t.states = randn(rng, n, length);
    t.inputs = randn(rng, 1, length - 1);
    return t;
}

TrackResult tracked(const Mat& ref, const Mat& actual) {
    TrackResult r;
    r.dt = 0.01;
    r.reference = ref;
    r.actual = actual;
    r.inputs = Mat::Zero(1, ref.cols() - 1);
    return r;
}

// Exact binomial tail by direct summation in long double.
double binomial_tail(int k, int n) {
    long double total = 0.0L, c = 1.0L;
    for (int i = 0; i <= n; ++i) {
        if (i > 0) c = c * static_cast<long double>(n - i + 1) / static_cast<long double>(i);
        if (i >= k) total += c;
    }
    return static_cast<double>(total / std::pow(2.0L, n));
}

}  // namespace

TEST_SUITE("bench") {

TEST_CASE("pred_error") {
    const Trajectory a = random_traj(1, 3, 20);
    CHECK(pred_error(a, a) == 0.0);
    Vec d(3);
    d << 0.3, -0.4, 1.2;
    Trajectory b = a;
    b.states.colwise() += d;
    CHECK(pred_error(a, b) == doctest::Approx(d.norm()).epsilon(1e-12));
    Trajectory one = a;
    one.states(1, 7) += 0.5;
    CHECK(pred_error(a, one) > 0.0);
    CHECK(error_code_of([&] { (void)pred_error(a, random_traj(2, 3, 19)); }) == ErrorCode::LengthMismatch);
}

TEST_CASE("track_error") {
    std::mt19937_64 rng(3);
    const Mat ref = randn(rng, 2, 30);
    CHECK(track_error(tracked(ref, ref), {0, 1}) == 0.0);
    Mat off = ref;
    off.row(1).array() += 0.1;
    CHECK(track_error(tracked(ref, off), {0, 1}) == doctest::Approx(0.1).epsilon(1e-12));
    // untracked channels are ignored
    CHECK(track_error(tracked(ref, off), {0}) == 0.0);
}

TEST_CASE("control effort aggregates") {
    TrackResult r = tracked(Mat::Zero(2, 5), Mat::Zero(2, 5));
    r.inputs.resize(2, 4);
    r.inputs << 3, 0, 0, 1, 4, 0, 0, 0;
    const Effort e = control_effort(r);
    CHECK(e.mean_norm == doctest::Approx(6.0 / 4.0));
    CHECK(e.integral == doctest::Approx(6.0 * 0.01));
}

TEST_CASE("sign test tail") {
    CHECK(sign_test_p(0, 10) == doctest::Approx(1.0));
    CHECK(sign_test_p(8, 10) == doctest::Approx(56.0 / 1024.0).epsilon(1e-12));
    for (int n : {20, 100, 500})
        for (int k : {n / 2, 3 * n / 4, n - 2})
            CHECK(sign_test_p(k, n) == doctest::Approx(binomial_tail(k, n)).epsilon(1e-9));
}

TEST_CASE("bias_mc without noise") {
    BiasMcConfig cfg;
    cfg.truth = LinearTruth::random_stable(2, 1, 0.95, 1);
    cfg.relative_sigma = 0.0;
    cfg.columns = 200;
    cfg.draws = 100;
    const BiasDiagnostics d = bias_mc(cfg);
    CHECK(d.dev_nominal < 1e-10);
    CHECK(d.dev_proposed < 1e-10);
    CHECK_FALSE(d.ratio_defined);
    CHECK(std::isnan(d.ratio));
    CHECK(d.n_draws == 100);
}

TEST_CASE("bias_mc preconditions and stable truth") {
    BiasMcConfig cfg;
    cfg.truth = LinearTruth::random_stable(2, 1, 0.95, 2);
    const Eigen::VectorXcd ev = cfg.truth.a.eigenvalues();
    CHECK(ev.cwiseAbs().maxCoeff() == doctest::Approx(0.95).epsilon(1e-9));
    cfg.draws = 50;
    CHECK(error_code_of([&] { (void)bias_mc(cfg); }) == ErrorCode::PreconditionViolated);
    cfg.draws = 100;
    cfg.columns = 3;
    CHECK(error_code_of([&] { (void)bias_mc(cfg); }) == ErrorCode::PreconditionViolated);
    cfg.columns = 200;
    cfg.relative_sigma = 0.5;
    CHECK(error_code_of([&] { (void)bias_mc(cfg); }) == ErrorCode::AssumptionViolated);
}

TEST_CASE("bias_mc favours the reduced-bias operator and scales with noise power") {
    BiasMcConfig cfg;
    cfg.truth = LinearTruth::random_stable(2, 1, 0.95, 3);
    cfg.columns = 2000;
    cfg.draws = 100;
    cfg.seed = 4;
    cfg.relative_sigma = BiasMcConfig::sigma_from_snr(30.0);
    const BiasDiagnostics lo = bias_mc(cfg);
    CHECK(lo.ratio_defined);
    CHECK(lo.ratio < 1.0);
    CHECK(lo.sign_test_p < 0.01);
    CHECK(lo.assumption_failures == 0);

    cfg.relative_sigma *= 2.0;
    const BiasDiagnostics hi = bias_mc(cfg);
    // nominal bias is an attenuation effect of order sigma^2
    const double slope = (hi.dev_nominal / lo.dev_nominal) / 4.0;
    MESSAGE("nominal deviation slope ratio " << slope);
    CHECK(slope > 0.7);
    CHECK(slope < 1.4);
}

TEST_CASE("compare ordering, dashes and exact models") {
    Mat a(2, 2);
    a << 0.9, 0.1, -0.1, 0.9;
    Mat b(2, 1);
    b << 0.0, 0.1;
    const KoopmanModel exact{a, b, Lift::identity(2), 1.0, Provenance::GroundTruthLinear};
    std::vector<Trajectory> eval;
    std::mt19937_64 rng(5);
    for (int i = 0; i < 3; ++i) {
        Trajectory t;
        t.dt = 1.0;
        t.inputs = randn(rng, 1, 30);
        t.states.resize(2, 31);
        t.states.col(0) = randn(rng, 2, 1);
        for (int k = 0; k < 30; ++k) t.states.col(k + 1) = a * t.states.col(k) + b * t.inputs.col(k);
        eval.push_back(t);
    }
    KoopmanModel perturbed = exact;
    perturbed.a(0, 0) += 0.05;
    std::vector<Candidate> cands;
    cands.push_back({"FBEDMD-fixed", 30.0, [&] { return perturbed; }, std::nullopt});
    cands.push_back({"NominalLS", 40.0, [] () -> KoopmanModel { throw Error(ErrorCode::RankDeficient, "boom"); },
                     std::nullopt});
    cands.push_back({"Proposed", 30.0, [&] { return exact; }, 1.5});
    cands.push_back({"Proposed", 40.0, [&] { return exact; }, std::nullopt});
    const CompareReport r = compare(cands, eval, std::nullopt);
    CHECK(r.snrs == std::vector<double>{40.0, 30.0});
    CHECK(r.methods == std::vector<std::string>{"Proposed", "NominalLS", "FBEDMD-fixed"});
    REQUIRE(r.find(30.0, "Proposed"));
    CHECK(r.find(30.0, "Proposed")->metrics->e_pred < 1e-12);
    CHECK(r.find(30.0, "FBEDMD-fixed")->metrics->e_pred > 1e-3);
    CHECK_FALSE(r.find(40.0, "NominalLS")->metrics);
    CHECK(r.find(30.0, "NominalLS") == nullptr);

    const std::string table = r.to_table();
    CHECK(table.find("\xE2\x80\x94") != std::string::npos);
    CHECK(table.find("Proposed") < table.find("NominalLS"));
    const std::string csv = r.to_csv();
    std::istringstream lines(csv);
    std::string header, first;
    std::getline(lines, header);
    std::getline(lines, first);
    CHECK(first.rfind("40,Proposed,ok,", 0) == 0);
    CHECK(csv.find("40,NominalLS,failed") != std::string::npos);

    // rerun is identical
    CHECK(compare(cands, eval, std::nullopt).to_csv() == csv);
}

}
