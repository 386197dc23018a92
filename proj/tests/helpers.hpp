#pragma once

#include <random>

#include "koopman/errors.hpp"
#include "koopman/numerics.hpp"

namespace testing {

using koopman::Mat;
using koopman::Vec;

inline Mat randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    std::normal_distribution<double> d(0.0, scale);
    Mat m(r, c);
    for (Eigen::Index j = 0; j < c; ++j)
        for (Eigen::Index i = 0; i < r; ++i) m(i, j) = d(rng);
    return m;
}

inline double rel_frob(const Mat& a, const Mat& b) {
    const double denom = std::max(b.norm(), 1e-300);
    return (a - b).norm() / denom;
}

// Runs fn and returns the code of the koopman::Error it throws.
template <typename Fn>
koopman::ErrorCode error_code_of(Fn&& fn) {
    try {
        fn();
    } catch (const koopman::Error& e) {
        return e.code();
    }
    throw std::runtime_error("expected a koopman::Error");
}

}  // namespace testing
