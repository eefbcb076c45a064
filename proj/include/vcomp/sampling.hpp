#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>

#include "vcomp/covariance_set.hpp"
#include "vcomp/rng.hpp"
#include "vcomp/structure_kernel.hpp"
#include "vcomp/trait_matrix.hpp"

namespace vcomp {

/// Symmetric PSD square root via eigendecomposition. Tolerates singular
/// input (e.g. MZ-pair kinship blocks) by clamping small negative
/// eigenvalues at zero, which Cholesky would reject.
inline Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, double tol = -1e-10) {
    if (m.rows() != m.cols()) throw std::invalid_argument("psd_sqrt expects a square matrix");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed in psd_sqrt");
    Eigen::VectorXd lambda = es.eigenvalues();
    const double scale = std::max(lambda.cwiseAbs().maxCoeff(), 1.0);
    if (lambda.minCoeff() < tol * scale)
        throw std::invalid_argument("matrix is not PSD (min eigenvalue " +
                                    std::to_string(lambda.minCoeff()) + ")");
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
        lambda(i) = std::sqrt(std::max(lambda(i), 0.0));
    return es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
}

/// One matrix-normal draw L_D Z L_S' from precomputed square roots, so that
/// vec of the result has covariance Sigma (x) D.
inline Eigen::MatrixXd sample_matrix_normal_sqrt(const Eigen::MatrixXd& kernel_sqrt,
                                                 const Eigen::MatrixXd& sigma_sqrt,
                                                 std::mt19937_64& rng) {
    Eigen::MatrixXd z = standard_normal_matrix(kernel_sqrt.rows(), sigma_sqrt.rows(), rng);
    return kernel_sqrt * z * sigma_sqrt;  // sqrt is symmetric, no transpose needed
}

/// Matrix-normal draw MN(0, D, Sigma) for a structure kernel D and trait
/// covariance Sigma.
inline Eigen::MatrixXd sample_matrix_normal(const StructureKernel& kernel,
                                            const Eigen::MatrixXd& sigma, std::uint64_t rng_seed) {
    auto rng = rng_stream(rng_seed);
    return sample_matrix_normal_sqrt(psd_sqrt(kernel.matrix()), psd_sqrt(sigma), rng);
}

/// Observed data Y = sum_k Gamma_k with independent matrix-normal component
/// draws sharing one RNG stream.
inline TraitMatrix sample_observed(const ComponentSpec& spec, const CovarianceSet& truth,
                                   std::mt19937_64& rng) {
    if (spec.n_components() != truth.n_components())
        throw std::invalid_argument("kernel and covariance counts differ");
    const Eigen::Index n = spec.n_subjects();
    const Eigen::Index q = truth.n_traits();
    Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, q);
    for (std::size_t k = 0; k < spec.n_components(); ++k) {
        const Eigen::MatrixXd dk = psd_sqrt(spec.kernels()[k].matrix());
        const Eigen::MatrixXd sk = psd_sqrt(truth.sigmas()[k]);
        y += sample_matrix_normal_sqrt(dk, sk, rng);
    }
    return TraitMatrix::from_values(std::move(y));
}

}  // namespace vcomp
