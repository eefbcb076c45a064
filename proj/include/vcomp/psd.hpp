#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace vcomp {

/// Frobenius-nearest PSD matrix: eigendecompose and truncate negative
/// eigenvalues at zero. Eigenvalues below 1e-12 of the spectral radius are
/// treated as exact zeros so sign noise cannot flip PSD certification.
inline Eigen::MatrixXd psd_project(const Eigen::MatrixXd& s) {
    if (s.rows() != s.cols()) throw std::invalid_argument("psd_project expects a square matrix");
    if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-8 * (1.0 + s.cwiseAbs().maxCoeff()))
        throw std::invalid_argument("psd_project expects a symmetric matrix");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s);
    if (es.info() != Eigen::Success) {
        throw std::runtime_error(
            "eigendecomposition failed in psd_project (dimension " + std::to_string(s.rows()) +
            ", max |entry| " + std::to_string(s.cwiseAbs().maxCoeff()) + ")");
    }
    Eigen::VectorXd lambda = es.eigenvalues();
    if (lambda.minCoeff() >= 0.0) return s;  // already PSD: identity map
    const double radius = lambda.cwiseAbs().maxCoeff();
    const double floor = 1e-12 * radius;
    for (Eigen::Index i = 0; i < lambda.size(); ++i)
        lambda(i) = (lambda(i) <= floor) ? 0.0 : lambda(i);
    Eigen::MatrixXd out =
        es.eigenvectors() * lambda.asDiagonal() * es.eigenvectors().transpose();
    return ((out + out.transpose()) / 2.0).eval();
}

inline double min_eigenvalue(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

/// Spectral norm of a symmetric matrix.
inline double spectral_norm(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

}  // namespace vcomp
