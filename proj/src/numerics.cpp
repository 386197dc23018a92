#include "koopman/numerics.hpp"

#include <cmath>
#include <sstream>

#include "koopman/errors.hpp"

namespace koopman {

void require_finite(const Eigen::Ref<const Mat>& m, std::string_view what) {
    if (!m.allFinite()) {
        throw Error(ErrorCode::NonFinite, std::string(what) + " contains NaN or Inf");
    }
}

Mat checked(Mat m, std::string_view what) {
    require_finite(m, what);
    return m;
}

Mat lstsq_right(const Mat& Y, const Mat& X) {
    if (Y.cols() != X.cols()) {
        throw Error(ErrorCode::LengthMismatch, "lstsq_right: Y and X column counts differ");
    }
    const Eigen::Index q = X.rows();
    if (q == 0 || X.cols() < q) {
        throw Error(ErrorCode::PreconditionViolated,
                    "lstsq_right: need at least as many columns as regressors");
    }
    require_finite(Y, "lstsq_right: Y");
    require_finite(X, "lstsq_right: X");

    Mat gram = X * X.transpose();
    Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
    const double lmax = eig.eigenvalues().maxCoeff();
    const double lmin = eig.eigenvalues().minCoeff();
    if (!(lmax > 0.0) || lmin <= lmax / kMaxCondition) {
        std::ostringstream os;
        os << "lstsq_right: regressor Gram matrix condition exceeds threshold (lambda_min="
           << lmin << ", lambda_max=" << lmax << ")";
        throw Error(ErrorCode::RankDeficient, os.str());
    }

    const double ridge = 1e-10 * gram.trace() / static_cast<double>(q);
    Mat floored = gram;
    floored.diagonal().array() += ridge;
    Eigen::LLT<Mat> llt(floored);
    if (llt.info() != Eigen::Success) {
        throw Error(ErrorCode::RankDeficient, "lstsq_right: Cholesky factorisation failed");
    }
    // K^T = (X X^T)^-1 X Y^T; two refinement sweeps against the unfloored Gram
    // remove the ridge bias to second order.
    const Mat rhs = X * Y.transpose();
    Mat kt = llt.solve(rhs);
    for (int sweep = 0; sweep < 2; ++sweep) kt += llt.solve(rhs - gram * kt);
    return kt.transpose();
}

namespace {

Eigen::PartialPivLU<Mat> checked_lu(const Mat& M, const char* who) {
    if (M.rows() != M.cols() || M.rows() == 0) {
        throw Error(ErrorCode::PreconditionViolated, std::string(who) + ": matrix must be square and non-empty");
    }
    require_finite(M, who);
    Eigen::PartialPivLU<Mat> lu(M);
    const double rc = lu.rcond();
    if (!(rc > 1.0 / kMaxCondition)) {
        std::ostringstream os;
        os << who << ": matrix is singular to working precision (rcond=" << rc << ")";
        throw Error(ErrorCode::Singular, os.str());
    }
    return lu;
}

}  // namespace

Mat inv(const Mat& M) {
    return checked_lu(M, "inv").inverse();
}

Mat solve(const Mat& M, const Mat& rhs) {
    if (rhs.rows() != M.rows()) {
        throw Error(ErrorCode::LengthMismatch, "solve: right-hand side has wrong row count");
    }
    return checked_lu(M, "solve").solve(rhs);
}

Mat sqrtm_principal(const Mat& M) {
    if (M.rows() != M.cols() || M.rows() == 0) {
        throw Error(ErrorCode::PreconditionViolated, "sqrtm_principal: matrix must be square and non-empty");
    }
    require_finite(M, "sqrtm_principal");
    const Eigen::Index n = M.rows();
    const double m_norm = frob(M);
    if (m_norm == 0.0) {
        return Mat::Zero(n, n);
    }

    constexpr int kMaxIter = 100;
    constexpr double kStepTol = 1e-12;
    constexpr double kResidualTol = 1e-8;

    Mat y = M;
    Mat z = Mat::Identity(n, n);
    bool scaling = true;
    for (int it = 0; it < kMaxIter; ++it) {
        Eigen::PartialPivLU<Mat> lu_y(y);
        Eigen::PartialPivLU<Mat> lu_z(z);
        const double det_y = lu_y.determinant();
        const double det_z = lu_z.determinant();
        if (!std::isfinite(det_y) || !std::isfinite(det_z) || det_y == 0.0 || det_z == 0.0) {
            throw Error(ErrorCode::NoPrincipalRoot, "sqrtm_principal: iterate became singular");
        }
        double mu = 1.0;
        if (scaling) {
            mu = std::pow(std::abs(det_y * det_z), -1.0 / (2.0 * static_cast<double>(n)));
            if (!std::isfinite(mu) || mu <= 0.0) mu = 1.0;
        }
        Mat y_next = 0.5 * (mu * y + lu_z.inverse() / mu);
        Mat z_next = 0.5 * (mu * z + lu_y.inverse() / mu);
        if (!y_next.allFinite() || !z_next.allFinite()) {
            throw Error(ErrorCode::NoPrincipalRoot, "sqrtm_principal: iteration diverged");
        }
        const double step = frob(y_next - y) / frob(y);
        y = std::move(y_next);
        z = std::move(z_next);
        // Scaling only helps in the early phase; switching it off lets the
        // unscaled iteration finish with quadratic convergence.
        if (step < 1e-2) scaling = false;
        if (step < kStepTol) break;
    }

    const double residual = frob(y * y - M) / m_norm;
    if (!(residual <= kResidualTol)) {
        std::ostringstream os;
        os << "sqrtm_principal: squaring residual " << residual
           << " exceeds tolerance (eigenvalue on or near the negative real axis?)";
        throw Error(ErrorCode::NoPrincipalRoot, os.str());
    }
    return y;
}

double frob(const Mat& M) {
    return M.norm();
}

double norm2_est(const Mat& M) {
    if (M.size() == 0) return 0.0;
    const Mat g = M.transpose() * M;
    // deterministic, non-degenerate start
    Vec v = Vec::LinSpaced(g.cols(), 1.0, 2.0);
    v.normalize();
    double lambda = 0.0;
    for (int it = 0; it < 500; ++it) {
        Vec w = g * v;
        const double wn = w.norm();
        if (wn == 0.0) return 0.0;
        const double next = v.dot(w);
        v = w / wn;
        if (std::abs(next - lambda) <= 1e-12 * std::abs(next)) {
            lambda = next;
            break;
        }
        lambda = next;
    }
    return std::sqrt(std::max(lambda, 0.0));
}

}  // namespace koopman
