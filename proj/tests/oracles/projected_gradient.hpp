#pragma once

// Projected gradient descent on the PSD-constrained moment objective,
// serving as an independent oracle for the block-coordinate-descent solver.
// All ingredients (sufficient statistics, projection, step size) are
// computed here from first principles, using the Jacobi eigensolver rather
// than any library code path.

#include <Eigen/Dense>

#include <vector>

#include "jacobi.hpp"

namespace oracle {

struct PgdResult {
    std::vector<Eigen::MatrixXd> sigmas;
    double objective = 0.0;  // computed via the W/Q expansion
};

inline PgdResult projected_gradient_solve(const Eigen::MatrixXd& y,
                                          const std::vector<Eigen::MatrixXd>& kernels,
                                          int steps) {
    const Eigen::Index n = y.rows(), q = y.cols();
    const auto kcount = kernels.size();

    // sufficient statistics by direct summation
    std::vector<Eigen::MatrixXd> w(kcount, Eigen::MatrixXd::Zero(q, q));
    for (std::size_t k = 0; k < kcount; ++k)
        for (Eigen::Index j = 0; j < q; ++j)
            for (Eigen::Index m = 0; m < q; ++m) {
                double s = 0.0;
                for (Eigen::Index i = 0; i < n; ++i)
                    for (Eigen::Index l = 0; l < n; ++l)
                        s += y(i, j) * kernels[k](i, l) * y(l, m);
                w[k](j, m) = s;
            }
    Eigen::MatrixXd gram(kcount, kcount);
    for (std::size_t z = 0; z < kcount; ++z)
        for (std::size_t k = 0; k < kcount; ++k) {
            double s = 0.0;
            for (Eigen::Index i = 0; i < n; ++i)
                for (Eigen::Index l = 0; l < n; ++l) s += kernels[z](i, l) * kernels[k](i, l);
            gram(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(k)) = s;
        }
    const double constant = y.squaredNorm() * y.squaredNorm();

    auto objective = [&](const std::vector<Eigen::MatrixXd>& sig) {
        double lin = 0.0, quad = 0.0;
        for (std::size_t z = 0; z < kcount; ++z) {
            lin += (w[z].array() * sig[z].array()).sum();
            for (std::size_t k = 0; k < kcount; ++k)
                quad += gram(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(k)) *
                        (sig[z].array() * sig[k].array()).sum();
        }
        return constant - 2.0 * lin + quad;
    };

    // smoothness constant of the quadratic: Hessian is 2 (Q kron I)
    const double lmax = jacobi_eigen(gram).eigenvalues.maxCoeff();
    const double step = 1.0 / (2.0 * lmax);

    std::vector<Eigen::MatrixXd> sig(kcount, Eigen::MatrixXd::Zero(q, q));
    for (int t = 0; t < steps; ++t) {
        std::vector<Eigen::MatrixXd> grad(kcount);
        for (std::size_t z = 0; z < kcount; ++z) {
            Eigen::MatrixXd g = -2.0 * w[z];
            for (std::size_t k = 0; k < kcount; ++k)
                g += 2.0 * gram(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(k)) *
                     sig[k];
            grad[z] = g;
        }
        for (std::size_t z = 0; z < kcount; ++z)
            sig[z] = jacobi_psd_truncate(sig[z] - step * grad[z]);
    }
    return {sig, objective(sig)};
}

}  // namespace oracle
