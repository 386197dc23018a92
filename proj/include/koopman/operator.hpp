#pragma once

#include <string>
#include <utility>

#include "koopman/datagen.hpp"
#include "koopman/lifting.hpp"
#include "koopman/numerics.hpp"
#include "koopman/systems.hpp"
#include "koopman/training.hpp"

namespace koopman {

// Lifted-space operator [[A, B], [0, I]] acting on stacked (z, u). The
// bottom block row is never stored.
struct BlockOp {
    Mat a;  // N x N
    Mat b;  // N x m

    static BlockOp identity(Eigen::Index big_n, Eigen::Index m);

    [[nodiscard]] Eigen::Index lifted_dim() const { return a.rows(); }
    [[nodiscard]] Eigen::Index input_dim() const { return b.cols(); }

    // (N + m) x (N + m) materialisation.
    [[nodiscard]] Mat dense() const;
    [[nodiscard]] BlockOp operator*(const BlockOp& rhs) const;
    // [[A^-1, -A^-1 B], [0, I]]. Throws Singular.
    [[nodiscard]] BlockOp inverse() const;
};

std::pair<BlockOp, BlockOp> assemble(const TrainState& st);

/// Reduced-bias operator sqrt(K_f K_b^-1) in block form.
///
/// With M = A_f A_b^-1 and N' = B_f - M B_b (the top blocks of K_f K_b^-1),
/// returns A_p = sqrtm_principal(M) and B_p solving (A_p + I) B_p = N', which
/// is the top-right block of the square-root identity
/// [[A_p, B_p], [0, I]]^2 = [[A_p^2, A_p B_p + B_p], [0, I]].
/// Throws Singular (A_b or A_p + I) or NoPrincipalRoot.
BlockOp reduced_bias(const BlockOp& k_fm, const BlockOp& k_bm);

enum class Provenance { DRKN, NominalLS, FBEDMD, GroundTruthLinear };

const char* to_string(Provenance p);
Provenance provenance_from_string(const std::string& s);

struct KoopmanModel {
    Mat a;
    Mat b;
    Lift lift;
    double dt = 0.0;
    Provenance provenance = Provenance::DRKN;

    [[nodiscard]] int state_dim() const { return lift.state_dim(); }
    [[nodiscard]] int lifted_dim() const { return lift.lifted_dim(); }
    [[nodiscard]] int input_dim() const { return static_cast<int>(b.cols()); }
    // n x N, exactly [I 0]
    [[nodiscard]] Mat c() const;

    void validate() const;
};

// DRKN model: reduced_bias of the trained forward/backward layers, lifted by
// the trained encoder.
KoopmanModel drkn_model(const TrainState& st, double dt);

// Forward-only least squares of Z+ on [Z; U]. Throws PreconditionViolated
// when s <= N + m and RankDeficient from the solve.
KoopmanModel nominal_fit(const TripletBatch& batch, const Lift& lift);

// Least-squares forward and backward fits on a fixed lifting, then reduced_bias.
KoopmanModel fb_edmd_fit(const TripletBatch& batch, const Lift& lift);

// Separate forward/backward least-squares operators on a fixed lifting.
std::pair<BlockOp, BlockOp> fit_forward_backward(const TripletBatch& batch, const Lift& lift);

// Lift x0 once, then z <- A z + B u; returns x_hat = C z at every step.
Trajectory rollout(const KoopmanModel& model, const Vec& x0, const Mat& inputs);

}  // namespace koopman
