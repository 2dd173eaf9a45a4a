#pragma once

#include <cstdint>
#include <random>

#include <Eigen/Dense>

namespace sigmor {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for one path's private generator. Streams are keyed by (seed, stream
/// id, path index), so every path draws an independent sequence regardless of
/// chunking or thread count, and different pipeline stages (different stream
/// ids) never collide.
inline std::uint64_t path_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t path) {
    return splitmix64(splitmix64(seed ^ splitmix64(stream + 1)) ^ splitmix64(path + 1));
}

/// Deterministic per-path normal source.
class NormalSource {
public:
    explicit NormalSource(std::uint64_t seed) : gen_(seed) {}

    double operator()() { return normal_(gen_); }

    template <class Derived>
    void fill(Eigen::MatrixBase<Derived> const& out_) {
        auto& out = const_cast<Eigen::MatrixBase<Derived>&>(out_);
        for (Eigen::Index j = 0; j < out.cols(); ++j)
            for (Eigen::Index i = 0; i < out.rows(); ++i) out(i, j) = normal_(gen_);
    }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_;
};

} // namespace sigmor
