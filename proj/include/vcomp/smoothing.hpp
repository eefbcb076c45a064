#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace vcomp {

/// Shared observation grid for function-valued traits: strictly increasing
/// timepoints in [0, 1], at least 5 of them.
class FunctionalGrid {
public:
    explicit FunctionalGrid(Eigen::VectorXd timepoints) : t_(std::move(timepoints)) {
        if (t_.size() < 5) throw std::invalid_argument("FunctionalGrid needs at least 5 points");
        for (Eigen::Index j = 0; j < t_.size(); ++j) {
            if (!(t_(j) >= 0.0 && t_(j) <= 1.0))
                throw std::invalid_argument("grid points must lie in [0, 1]");
            if (j > 0 && !(t_(j) > t_(j - 1)))
                throw std::invalid_argument("grid points must be strictly increasing");
        }
    }

    static FunctionalGrid uniform(Eigen::Index q) {
        Eigen::VectorXd t(q);
        for (Eigen::Index j = 0; j < q; ++j) t(j) = double(j) / double(q - 1);
        return FunctionalGrid(std::move(t));
    }

    const Eigen::VectorXd& timepoints() const { return t_; }
    Eigen::Index size() const { return t_.size(); }

    double median_gap() const {
        std::vector<double> gaps;
        for (Eigen::Index j = 1; j < t_.size(); ++j) gaps.push_back(t_(j) - t_(j - 1));
        std::sort(gaps.begin(), gaps.end());
        const std::size_t m = gaps.size() / 2;
        return (gaps.size() % 2) ? gaps[m] : (gaps[m - 1] + gaps[m]) / 2.0;
    }

private:
    Eigen::VectorXd t_;
};

/// Covariance surface estimate on a grid, produced by the bivariate
/// local-linear smoother. noise_variance stays NaN unless filled by
/// estimate_noise_variance for the identity-kernel component.
struct SmoothedCovariance {
    FunctionalGrid grid;
    Eigen::MatrixXd values;
    double bandwidth = 0.0;
    double gcv_score = std::numeric_limits<double>::quiet_NaN();
    double noise_variance = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

struct LocalLinearResult {
    Eigen::MatrixXd surface;   // fitted values on the full grid
    double rss = 0.0;          // over off-diagonal design points
    double hat_trace = 0.0;    // smoother-matrix trace over those points
    bool valid = true;         // false when some local design was singular
};

/// One local-linear pass at a fixed bandwidth. Design points are the
/// off-diagonal entries of sigma; evaluation covers the whole grid. The
/// product-kernel moment sums factorize into q x q matrix products with a
/// rank-one correction that removes the excluded diagonal.
inline LocalLinearResult local_linear_fit(const Eigen::MatrixXd& sigma, const FunctionalGrid& grid,
                                          double h) {
    const Eigen::Index q = grid.size();
    const Eigen::VectorXd& t = grid.timepoints();

    Eigen::MatrixXd u0(q, q), u1(q, q), u2(q, q);
    for (Eigen::Index a = 0; a < q; ++a)
        for (Eigen::Index j = 0; j < q; ++j) {
            const double d = t(j) - t(a);
            const double u = d / h;
            const double w = (std::abs(u) < 1.0) ? 0.75 * (1.0 - u * u) : 0.0;
            u0(a, j) = w;
            u1(a, j) = w * d;
            u2(a, j) = w * d * d;
        }
    Eigen::MatrixXd s0 = sigma;
    s0.diagonal().setZero();

    const Eigen::VectorXd m0 = u0.rowwise().sum();
    const Eigen::VectorXd m1 = u1.rowwise().sum();
    const Eigen::VectorXd m2 = u2.rowwise().sum();
    const Eigen::MatrixXd s00 = m0 * m0.transpose() - u0 * u0.transpose();
    const Eigen::MatrixXd s10 = m1 * m0.transpose() - u1 * u0.transpose();
    const Eigen::MatrixXd s01 = m0 * m1.transpose() - u0 * u1.transpose();
    const Eigen::MatrixXd s20 = m2 * m0.transpose() - u2 * u0.transpose();
    const Eigen::MatrixXd s11 = m1 * m1.transpose() - u1 * u1.transpose();
    const Eigen::MatrixXd s02 = m0 * m2.transpose() - u0 * u2.transpose();
    const Eigen::MatrixXd t00 = u0 * s0 * u0.transpose();
    const Eigen::MatrixXd t10 = u1 * s0 * u0.transpose();
    const Eigen::MatrixXd t01 = u0 * s0 * u1.transpose();

    LocalLinearResult res;
    res.surface.resize(q, q);
    const double self_weight = 0.75 * 0.75;  // Epanechnikov kernel at zero, both axes
    for (Eigen::Index a = 0; a < q; ++a) {
        for (Eigen::Index b = 0; b < q; ++b) {
            Eigen::Matrix3d m;
            m << s00(a, b), s10(a, b), s01(a, b),
                 s10(a, b), s20(a, b), s11(a, b),
                 s01(a, b), s11(a, b), s02(a, b);
            Eigen::Vector3d rhs(t00(a, b), t10(a, b), t01(a, b));
            Eigen::FullPivLU<Eigen::Matrix3d> lu(m);
            if (!lu.isInvertible()) {
                res.valid = false;
                return res;
            }
            const Eigen::Vector3d coef = lu.solve(rhs);
            res.surface(a, b) = coef(0);
            if (a != b) {
                const double fit = coef(0);
                const double obs = sigma(a, b);
                res.rss += (obs - fit) * (obs - fit);
                res.hat_trace += lu.inverse()(0, 0) * self_weight;
            }
        }
    }
    res.surface = ((res.surface + res.surface.transpose()) / 2.0).eval();
    return res;
}

}  // namespace detail

/// Smooths an estimated covariance matrix into a covariance surface: a
/// bivariate local-linear regression with product Epanechnikov weights is
/// fitted to the off-diagonal entries and evaluated over the full grid,
/// which replaces the noise-inflated diagonal by the smooth extension.
/// bandwidth <= 0 selects the GCV minimizer over a log-spaced grid spanning
/// [2 * median grid gap, 0.5]; bandwidths whose local designs turn singular
/// anywhere are excluded from the search.
inline SmoothedCovariance smooth_covariance(const Eigen::MatrixXd& sigma_hat,
                                            const FunctionalGrid& grid, double bandwidth = 0.0,
                                            int gcv_grid_points = 15) {
    if (sigma_hat.rows() != sigma_hat.cols() || sigma_hat.rows() != grid.size())
        throw std::invalid_argument("covariance dimension does not match grid length");
    const auto n_points = double(grid.size() * (grid.size() - 1));

    auto gcv_of = [&](const detail::LocalLinearResult& r) {
        const double denom = 1.0 - r.hat_trace / n_points;
        if (!(denom > 0.0)) return std::numeric_limits<double>::infinity();
        return (r.rss / n_points) / (denom * denom);
    };

    if (bandwidth > 0.0) {
        detail::LocalLinearResult res = detail::local_linear_fit(sigma_hat, grid, bandwidth);
        if (!res.valid)
            throw std::invalid_argument("bandwidth " + std::to_string(bandwidth) +
                                        " leaves a singular local design on this grid");
        return {grid, std::move(res.surface), bandwidth, gcv_of(res),
                std::numeric_limits<double>::quiet_NaN()};
    }

    const double h_lo = 2.0 * grid.median_gap();
    const double h_hi = 0.5;
    if (!(h_lo < h_hi))
        throw std::invalid_argument("grid too coarse for automatic bandwidth selection");
    const int n_grid = gcv_grid_points;
    if (n_grid < 2) throw std::invalid_argument("GCV bandwidth grid needs at least 2 points");
    double best_gcv = std::numeric_limits<double>::infinity();
    double best_h = 0.0;
    Eigen::MatrixXd best_surface;
    for (int i = 0; i < n_grid; ++i) {
        const double h = h_lo * std::pow(h_hi / h_lo, double(i) / (n_grid - 1));
        detail::LocalLinearResult res = detail::local_linear_fit(sigma_hat, grid, h);
        if (!res.valid) continue;
        const double g = gcv_of(res);
        if (g < best_gcv) {
            best_gcv = g;
            best_h = h;
            best_surface = std::move(res.surface);
        }
    }
    if (!(best_h > 0.0))
        throw std::runtime_error("every candidate bandwidth produced a singular local design");
    return {grid, std::move(best_surface), best_h, best_gcv,
            std::numeric_limits<double>::quiet_NaN()};
}

/// Observational-noise variance recovered as the average gap between the raw
/// diagonal and the smoothed diagonal, floored at zero. Meaningful for the
/// identity-kernel component, whose raw estimate absorbs the noise.
inline double estimate_noise_variance(const Eigen::MatrixXd& sigma_hat_identity,
                                      const SmoothedCovariance& smoothed) {
    if (sigma_hat_identity.rows() != smoothed.values.rows())
        throw std::invalid_argument("dimension mismatch between raw and smoothed estimates");
    const double gap =
        (sigma_hat_identity.diagonal() - smoothed.values.diagonal()).mean();
    return std::max(gap, 0.0);
}

/// Closed-form simulation truth: C(s,t) = sum_{k=1}^{50} k^{-2 alpha}
/// cos(k pi s) cos(k pi t), evaluated on the grid.
inline Eigen::MatrixXd functional_truth(int alpha, const FunctionalGrid& grid) {
    if (alpha != 1 && alpha != 2) throw std::invalid_argument("alpha must be 1 or 2");
    const Eigen::Index q = grid.size();
    Eigen::MatrixXd phi(q, 50);
    for (Eigen::Index j = 0; j < q; ++j)
        for (int k = 1; k <= 50; ++k)
            phi(j, k - 1) = std::pow(double(k), -double(alpha)) *
                            std::cos(double(k) * M_PI * grid.timepoints()(j));
    return phi * phi.transpose();
}

/// Trapezoidal quadrature of the squared difference between two surfaces
/// sampled on a shared grid. A raw covariance estimate enters through its
/// grid values, i.e. as the piecewise-constant surface its entries define.
inline double integrated_squared_error(const Eigen::MatrixXd& estimate,
                                       const Eigen::MatrixXd& truth, const FunctionalGrid& grid) {
    const Eigen::Index q = grid.size();
    if (estimate.rows() != q || estimate.cols() != q || truth.rows() != q || truth.cols() != q)
        throw std::invalid_argument("surface dimensions do not match the grid");
    const Eigen::VectorXd& t = grid.timepoints();
    Eigen::VectorXd w(q);
    w(0) = (t(1) - t(0)) / 2.0;
    w(q - 1) = (t(q - 1) - t(q - 2)) / 2.0;
    for (Eigen::Index j = 1; j + 1 < q; ++j) w(j) = (t(j + 1) - t(j - 1)) / 2.0;
    const Eigen::MatrixXd diff2 = (estimate - truth).array().square().matrix();
    return w.dot(diff2 * w);
}

}  // namespace vcomp
