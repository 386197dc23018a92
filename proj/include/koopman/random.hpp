#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "koopman/numerics.hpp"

namespace koopman {

using Rng = std::mt19937_64;

// Named-stream seed derivation: a stream is identified by (root, purpose,
// index), so adding a new consumer never shifts the draws of existing ones.
std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose, std::uint64_t index = 0);

inline Rng make_rng(std::uint64_t root, std::string_view purpose, std::uint64_t index = 0) {
    return Rng(derive_seed(root, purpose, index));
}

// Entrywise uniform on [lo, hi].
Vec uniform_vec(Rng& rng, const Vec& lo, const Vec& hi);

// Zero-mean Gaussian with per-entry standard deviation.
Vec gaussian_vec(Rng& rng, const Vec& sigma);

}  // namespace koopman
