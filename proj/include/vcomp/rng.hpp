#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <initializer_list>
#include <random>

namespace vcomp {

/// Deterministic RNG stream keyed by a base seed plus structural tags
/// (e.g. sample-size index, replicate index). Jobs that own distinct
/// streams can run in any order, serial or parallel, with identical
/// results.
inline std::mt19937_64 rng_stream(std::uint64_t seed,
                                  std::initializer_list<std::uint64_t> tags = {}) {
    std::seed_seq seq = [&] {
        std::vector<std::uint32_t> words;
        auto push = [&words](std::uint64_t v) {
            words.push_back(static_cast<std::uint32_t>(v & 0xffffffffu));
            words.push_back(static_cast<std::uint32_t>(v >> 32));
        };
        push(seed);
        for (std::uint64_t t : tags) push(t);
        return std::seed_seq(words.begin(), words.end());
    }();
    return std::mt19937_64(seq);
}

inline Eigen::MatrixXd standard_normal_matrix(Eigen::Index rows, Eigen::Index cols,
                                              std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd z(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
        for (Eigen::Index i = 0; i < rows; ++i) z(i, j) = normal(rng);
    return z;
}

inline Eigen::VectorXd standard_normal_vector(Eigen::Index size, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(size);
    for (Eigen::Index i = 0; i < size; ++i) z(i) = normal(rng);
    return z;
}

}  // namespace vcomp
