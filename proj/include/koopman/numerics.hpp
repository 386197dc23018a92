#pragma once

#include <Eigen/Dense>
#include <string_view>

namespace koopman {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Inputs whose condition estimate exceeds this are treated as singular.
// Equals 1e-4 / machine epsilon.
inline constexpr double kMaxCondition = 1e-4 / 2.220446049250313e-16;

// Throws Error{NonFinite} naming `what` if any entry is NaN or Inf.
void require_finite(const Eigen::Ref<const Mat>& m, std::string_view what);

// Returns m after validating that every entry is finite.
Mat checked(Mat m, std::string_view what = "matrix");

// argmin_K ||Y - K X||_F via regularised normal equations.
// Throws RankDeficient when X X^T is ill-conditioned.
Mat lstsq_right(const Mat& Y, const Mat& X);

// Dense inverse. Throws Singular when the LU factorisation is ill-conditioned.
Mat inv(const Mat& M);

// Solves M X = rhs for X, same conditioning contract as inv().
Mat solve(const Mat& M, const Mat& rhs);

/// Principal square root by scaled Denman-Beavers iteration.
///
/// Iterates Y <- (mu Y + (mu Z)^-1)/2, Z <- (mu Z + (mu Y)^-1)/2 from
/// Y = M, Z = I with determinant scaling mu = |det Y det Z|^(-1/2n) until the
/// relative step falls below 1e-12 (or 100 iterations). The result is accepted
/// only if ||S S - M||_F <= 1e-8 ||M||_F; otherwise NoPrincipalRoot is thrown,
/// which is how an eigenvalue on the closed negative real axis shows up.
Mat sqrtm_principal(const Mat& M);

double frob(const Mat& M);

// Spectral norm estimate by power iteration on M^T M.
double norm2_est(const Mat& M);

}  // namespace koopman
