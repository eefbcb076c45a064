#pragma once

// Shared fixture builders for the test suites.

#include <Eigen/Dense>

#include <random>
#include <vector>

#include <vcomp/rng.hpp>
#include <vcomp/structure_kernel.hpp>
#include <vcomp/trait_matrix.hpp>

namespace helpers {

/// Random unit-diagonal PSD kernel (a correlation-style matrix) usable as a
/// custom structure kernel.
inline vcomp::StructureKernel random_kernel(Eigen::Index n, std::mt19937_64& rng,
                                            Eigen::Index extra = 8) {
    Eigen::MatrixXd z = vcomp::standard_normal_matrix(n, n + extra, rng);
    Eigen::MatrixXd gram = z * z.transpose();
    Eigen::VectorXd d = gram.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd c = d.asDiagonal() * gram * d.asDiagonal();
    c.diagonal().setOnes();
    c = ((c + c.transpose()) / 2.0).eval();
    return vcomp::StructureKernel(std::move(c), vcomp::KernelKind::custom);
}

/// Identity kernel plus k random kernels.
inline vcomp::ComponentSpec random_spec(Eigen::Index n, std::size_t k, std::mt19937_64& rng) {
    std::vector<vcomp::StructureKernel> kernels;
    std::vector<std::string> labels;
    kernels.push_back(vcomp::StructureKernel::identity(n));
    labels.push_back("E");
    for (std::size_t i = 0; i < k; ++i) {
        kernels.push_back(random_kernel(n, rng));
        labels.push_back("K" + std::to_string(i + 1));
    }
    return vcomp::ComponentSpec(std::move(kernels), std::move(labels));
}

inline std::vector<Eigen::MatrixXd> kernel_matrices(const vcomp::ComponentSpec& spec) {
    std::vector<Eigen::MatrixXd> out;
    for (const auto& kernel : spec.kernels()) out.push_back(kernel.matrix());
    return out;
}

/// Random symmetric matrix with entries of unit scale.
inline Eigen::MatrixXd random_symmetric(Eigen::Index q, std::mt19937_64& rng) {
    Eigen::MatrixXd a = vcomp::standard_normal_matrix(q, q, rng);
    return ((a + a.transpose()) / 2.0).eval();
}

/// Random PSD matrix of the given dimension.
inline Eigen::MatrixXd random_psd(Eigen::Index q, std::mt19937_64& rng, Eigen::Index rank = 0) {
    const Eigen::Index r = rank > 0 ? rank : q;
    Eigen::MatrixXd z = vcomp::standard_normal_matrix(q, r, rng);
    Eigen::MatrixXd s = z * z.transpose() / double(r);
    return ((s + s.transpose()) / 2.0).eval();
}

}  // namespace helpers
