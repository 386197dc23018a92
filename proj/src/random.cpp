#include "koopman/random.hpp"

namespace koopman {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t root, std::string_view purpose, std::uint64_t index) {
    // FNV-1a over the purpose string
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : purpose) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return splitmix64(splitmix64(root ^ h) + index);
}

Vec uniform_vec(Rng& rng, const Vec& lo, const Vec& hi) {
    Vec out(lo.size());
    for (Eigen::Index i = 0; i < lo.size(); ++i) {
        std::uniform_real_distribution<double> dist(lo(i), hi(i));
        out(i) = dist(rng);
    }
    return out;
}

Vec gaussian_vec(Rng& rng, const Vec& sigma) {
    Vec out(sigma.size());
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index i = 0; i < sigma.size(); ++i) {
        out(i) = sigma(i) * dist(rng);
    }
    return out;
}

}  // namespace koopman
