#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "vcomp/trait_matrix.hpp"

namespace vcomp {

/// Replaces each trait column with its residual from a pooled least-squares
/// regression on the covariates: Y - X (X'X)^{-1} X'Y. Family structure is
/// ignored in this nuisance fit.
inline TraitMatrix residualize(const TraitMatrix& y, const CovariateMatrix& x) {
    if (x.values().rows() != y.n_subjects())
        throw std::invalid_argument("covariate rows do not match trait rows");
    const Eigen::MatrixXd& xm = x.values();
    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xm);
    if (qr.rank() < xm.cols())
        throw std::invalid_argument("covariate matrix is rank deficient (rank " +
                                    std::to_string(qr.rank()) + " of " +
                                    std::to_string(xm.cols()) + " columns)");
    Eigen::MatrixXd resid = y.values() - xm * qr.solve(y.values());
    return TraitMatrix(std::move(resid), y.subject_ids(), y.trait_ids());
}

struct StandardizeResult {
    TraitMatrix traits;
    Eigen::VectorXd scale;  // original per-column sample standard deviations
};

/// Rescales every column to unit sample standard deviation (1/(n-1)
/// normalization). The returned scale vector back-transforms covariance
/// estimates via diag(scale) * Sigma * diag(scale).
inline StandardizeResult standardize_columns(const TraitMatrix& y) {
    const Eigen::MatrixXd& v = y.values();
    const double n = static_cast<double>(v.rows());
    Eigen::VectorXd mean = v.colwise().mean();
    Eigen::VectorXd scale(v.cols());
    for (Eigen::Index j = 0; j < v.cols(); ++j) {
        const double ss = (v.col(j).array() - mean(j)).square().sum();
        const double sd = std::sqrt(ss / (n - 1.0));
        if (!(sd > 0.0))
            throw std::invalid_argument("trait '" + y.trait_ids()[static_cast<std::size_t>(j)] +
                                        "' has zero sample standard deviation");
        scale(j) = sd;
    }
    Eigen::MatrixXd scaled = v * scale.cwiseInverse().asDiagonal();
    return {TraitMatrix(std::move(scaled), y.subject_ids(), y.trait_ids()), std::move(scale)};
}

/// diag(scale) * Sigma * diag(scale): maps an estimate obtained on
/// standardized data back to the original trait units.
inline Eigen::MatrixXd back_scale(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& scale) {
    if (sigma.rows() != scale.size() || sigma.cols() != scale.size())
        throw std::invalid_argument("scale length does not match covariance dimension");
    return scale.asDiagonal() * sigma * scale.asDiagonal();
}

}  // namespace vcomp
