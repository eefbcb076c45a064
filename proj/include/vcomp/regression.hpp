#pragma once

#include <Eigen/Dense>
#include <unsupported/Eigen/KroneckerProduct>

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <vector>

#include "vcomp/rng.hpp"

namespace vcomp {

/// Index sets partitioning the trait columns into predictors (the structural
/// block S) and responses (the functional block F). When the predictor block
/// is the vectorization of a p x p matrix, matrix_dim records p; predictor
/// order is the column-major order of that matrix.
struct BlockPartition {
    std::vector<Eigen::Index> predictors;
    std::vector<Eigen::Index> responses;
    std::optional<Eigen::Index> matrix_dim;

    void validate(Eigen::Index q) const {
        if (predictors.empty()) throw std::invalid_argument("empty predictor set");
        if (responses.empty()) throw std::invalid_argument("empty response set");
        std::vector<char> seen(static_cast<std::size_t>(q), 0);
        auto mark = [&](Eigen::Index i, const char* what) {
            if (i < 0 || i >= q)
                throw std::invalid_argument(std::string(what) + " index out of range");
            if (seen[static_cast<std::size_t>(i)]++)
                throw std::invalid_argument("predictor and response sets must be disjoint");
        };
        for (Eigen::Index i : predictors) mark(i, "predictor");
        for (Eigen::Index i : responses) mark(i, "response");
        if (matrix_dim) {
            if (*matrix_dim < 1 ||
                *matrix_dim * *matrix_dim != static_cast<Eigen::Index>(predictors.size()))
                throw std::invalid_argument(
                    "matrix_dim^2 must equal the number of predictors");
        }
    }

    Eigen::Index response_position(Eigen::Index j) const {
        for (std::size_t i = 0; i < responses.size(); ++i)
            if (responses[i] == j) return static_cast<Eigen::Index>(i);
        throw std::invalid_argument("index " + std::to_string(j) + " is not a response");
    }
};

namespace detail {

inline Eigen::MatrixXd predictor_block(const Eigen::MatrixXd& sigma, const BlockPartition& part) {
    const auto m = static_cast<Eigen::Index>(part.predictors.size());
    Eigen::MatrixXd a(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j)
            a(i, j) = sigma(part.predictors[static_cast<std::size_t>(i)],
                            part.predictors[static_cast<std::size_t>(j)]);
    return ((a + a.transpose()) / 2.0).eval();
}

inline Eigen::VectorXd cross_vector(const Eigen::MatrixXd& sigma, const BlockPartition& part,
                                    Eigen::Index j) {
    part.response_position(j);  // membership check
    const auto m = static_cast<Eigen::Index>(part.predictors.size());
    Eigen::VectorXd c(m);
    for (Eigen::Index i = 0; i < m; ++i)
        c(i) = sigma(part.predictors[static_cast<std::size_t>(i)], j);
    return c;
}

}  // namespace detail

enum class RegressionMethod { ridge, lasso, tensor };

inline const char* regression_method_name(RegressionMethod m) {
    switch (m) {
        case RegressionMethod::ridge: return "ridge";
        case RegressionMethod::lasso: return "lasso";
        case RegressionMethod::tensor: return "tensor";
    }
    return "unknown";
}

/// One fitted latent regression: coefficients over the predictor set for a
/// single response trait, with tuning metadata and latent-R2 values.
struct LatentRegressionFit {
    RegressionMethod method = RegressionMethod::ridge;
    Eigen::Index response_index = 0;
    Eigen::VectorXd beta;
    double lambda = 0.0;       // ridge lambda1, lasso lambda2, or tensor factor penalty
    int rank = 0;              // tensor only
    Eigen::MatrixXd factor_left;   // tensor only: p x r
    Eigen::MatrixXd factor_right;  // tensor only: p x r
    double r2_in_sample = std::numeric_limits<double>::quiet_NaN();
    double r2_out_of_sample = std::numeric_limits<double>::quiet_NaN();
    bool converged = true;
};

/// Latent R2 of Eq.-(5) form at an arbitrary coefficient vector:
///   1 - (S_FF - 2 b'S_SF + b'S_SS b) / S_FF.
/// Any beta is accepted, so a coefficient fitted on one covariance estimate
/// can be scored against another (held-out) estimate.
inline double latent_r2(const Eigen::MatrixXd& sigma, const BlockPartition& part, Eigen::Index j,
                        const Eigen::VectorXd& beta) {
    part.validate(sigma.rows());
    if (beta.size() != static_cast<Eigen::Index>(part.predictors.size()))
        throw std::invalid_argument("beta length does not match predictor count");
    const double var_f = sigma(j, j);
    if (!(var_f > 0.0))
        throw std::invalid_argument("response trait has zero variance in this covariance");
    const Eigen::MatrixXd a = detail::predictor_block(sigma, part);
    const Eigen::VectorXd c = detail::cross_vector(sigma, part, j);
    const double resid = var_f - 2.0 * beta.dot(c) + beta.dot(a * beta);
    return 1.0 - resid / var_f;
}

/// Unregularized minimizer (S_SS)^{-1} S_SF_j of the latent quadratic loss.
inline Eigen::VectorXd latent_beta_unregularized(const Eigen::MatrixXd& sigma,
                                                 const BlockPartition& part, Eigen::Index j) {
    part.validate(sigma.rows());
    const Eigen::MatrixXd a = detail::predictor_block(sigma, part);
    const Eigen::VectorXd c = detail::cross_vector(sigma, part, j);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible())
        throw std::invalid_argument(
            "singular predictor block; use a regularized variant (ridge/lasso/tensor)");
    return lu.solve(c);
}

struct CorrelationResult {
    Eigen::MatrixXd matrix;              // over kept traits, unit diagonal
    std::vector<Eigen::Index> kept;      // original indices retained
    std::vector<Eigen::Index> dropped;   // zero-variance traits removed
};

/// D^{-1/2} Sigma D^{-1/2}. Traits whose estimated variance is zero (to
/// relative tolerance) cannot be standardized and are dropped; callers get
/// the surviving index list to remap partitions.
inline CorrelationResult to_correlation(const Eigen::MatrixXd& sigma, double rel_tol = 1e-12) {
    if (sigma.rows() != sigma.cols()) throw std::invalid_argument("covariance must be square");
    const Eigen::VectorXd d = sigma.diagonal();
    const double dmax = d.maxCoeff();
    if (!(dmax > 0.0)) throw std::invalid_argument("covariance has an all-zero diagonal");
    CorrelationResult out;
    for (Eigen::Index i = 0; i < d.size(); ++i) {
        if (d(i) > rel_tol * dmax)
            out.kept.push_back(i);
        else
            out.dropped.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(out.kept.size());
    out.matrix.resize(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const Eigen::Index oi = out.kept[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < m; ++j) {
            const Eigen::Index oj = out.kept[static_cast<std::size_t>(j)];
            out.matrix(i, j) = sigma(oi, oj) / std::sqrt(d(oi) * d(oj));
        }
        out.matrix(i, i) = 1.0;
    }
    out.matrix = ((out.matrix + out.matrix.transpose()) / 2.0).eval();
    return out;
}

/// Ridge: closed form (S_SS + lambda I)^{-1} S_SF_j.
inline LatentRegressionFit fit_ridge(const Eigen::MatrixXd& sigma, const BlockPartition& part,
                                     Eigen::Index j, double lambda1) {
    part.validate(sigma.rows());
    if (lambda1 < 0.0) throw std::invalid_argument("ridge penalty must be nonnegative");
    const Eigen::MatrixXd a = detail::predictor_block(sigma, part);
    const Eigen::VectorXd c = detail::cross_vector(sigma, part, j);
    Eigen::MatrixXd reg = a;
    reg.diagonal().array() += lambda1;
    LatentRegressionFit fit;
    fit.method = RegressionMethod::ridge;
    fit.response_index = j;
    fit.lambda = lambda1;
    if (lambda1 == 0.0) {
        fit.beta = latent_beta_unregularized(sigma, part, j);
    } else {
        fit.beta = reg.ldlt().solve(c);
    }
    if (sigma(j, j) > 0.0) fit.r2_in_sample = latent_r2(sigma, part, j, fit.beta);
    return fit;
}

/// Lasso by cyclic coordinate descent with soft-thresholding updates,
/// active-set passes, and warm starts along a descending lambda path.
/// The objective is b'S_SS b - 2 b'S_SF + lambda ||b||_1, so the
/// soft-threshold level is lambda/2. KKT residual is verified at exit.
inline LatentRegressionFit fit_lasso(const Eigen::MatrixXd& sigma, const BlockPartition& part,
                                     Eigen::Index j, double lambda2) {
    part.validate(sigma.rows());
    if (lambda2 < 0.0) throw std::invalid_argument("lasso penalty must be nonnegative");
    const Eigen::MatrixXd a = detail::predictor_block(sigma, part);
    const Eigen::VectorXd c = detail::cross_vector(sigma, part, j);
    const auto m = a.rows();
    for (Eigen::Index i = 0; i < m; ++i) {
        if (a(i, i) <= 0.0 && c(i) != 0.0)
            throw std::invalid_argument("predictor " + std::to_string(i) +
                                        " has zero variance but nonzero covariance with the "
                                        "response (coordinate objective unbounded)");
    }

    const double lambda_max = 2.0 * c.cwiseAbs().maxCoeff();
    // descending geometric path: warm starts keep each path step cheap
    std::vector<double> path;
    if (lambda2 >= lambda_max || lambda_max == 0.0) {
        path.push_back(lambda2);
    } else {
        const int steps = 15;
        const double lo = std::max(lambda2, 1e-12 * lambda_max);
        for (int s = 1; s <= steps; ++s)
            path.push_back(lambda_max * std::pow(lo / lambda_max, double(s) / steps));
        path.back() = lambda2;
    }

    Eigen::VectorXd beta = Eigen::VectorXd::Zero(m);
    Eigen::VectorXd abeta = Eigen::VectorXd::Zero(m);  // running A * beta
    const double kkt_tol = 1e-6 * std::max(1.0, lambda_max);
    auto sweep = [&](double lam, bool active_only) {
        double max_delta = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (a(i, i) <= 0.0) continue;
            if (active_only && beta(i) == 0.0) continue;
            const double old = beta(i);
            const double partial = c(i) - (abeta(i) - a(i, i) * old);
            const double thr = lam / 2.0;
            double next = 0.0;
            if (partial > thr)
                next = (partial - thr) / a(i, i);
            else if (partial < -thr)
                next = (partial + thr) / a(i, i);
            if (next != old) {
                abeta += a.col(i) * (next - old);
                beta(i) = next;
                max_delta = std::max(max_delta, std::abs(next - old) * a(i, i));
            }
        }
        return max_delta;
    };
    auto kkt_residual = [&](double lam) {
        const Eigen::VectorXd g = 2.0 * (abeta - c);
        double worst = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            if (a(i, i) <= 0.0) continue;
            if (beta(i) == 0.0)
                worst = std::max(worst, std::max(std::abs(g(i)) - lam, 0.0));
            else
                worst = std::max(worst, std::abs(g(i) + (beta(i) > 0 ? lam : -lam)));
        }
        return worst;
    };

    // KKT residual is the authoritative stop; active-set polishing rounds are
    // bounded and cut off once moves fall below the residual scale, so
    // floating-point noise in flat directions cannot eat the iteration budget
    const int max_outer = 10000;
    for (double lam : path) {
        const double tol =
            (lam == lambda2) ? kkt_tol : 1e-4 * std::max(1.0, lambda_max);
        bool done = false;
        for (int outer = 0; outer < max_outer && !done; ++outer) {
            for (int inner = 0; inner < 100; ++inner)
                if (sweep(lam, true) <= 0.01 * tol) break;
            sweep(lam, false);
            done = kkt_residual(lam) <= tol;
        }
        if (!done) throw std::runtime_error("lasso coordinate descent failed to satisfy KKT");
    }

    LatentRegressionFit fit;
    fit.method = RegressionMethod::lasso;
    fit.response_index = j;
    fit.lambda = lambda2;
    fit.beta = beta;
    if (sigma(j, j) > 0.0) fit.r2_in_sample = latent_r2(sigma, part, j, beta);
    return fit;
}

struct TensorOptions {
    int restarts = 3;
    int max_alternations = 500;
    double tolerance = 1e-10;  // relative objective change
    std::uint64_t seed = 0;
    std::optional<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> init;  // overrides restarts
};

/// Low-rank tensor regression (rank-r factorization of the coefficient
/// matrix) by alternating exact half-updates. Each half-update solves the
/// regularized normal equations in the p*r free entries, so the objective is
/// non-increasing; several random restarts guard the non-convex landscape.
inline LatentRegressionFit fit_tensor(const Eigen::MatrixXd& sigma, const BlockPartition& part,
                                      Eigen::Index j, int rank, double lambda,
                                      const TensorOptions& opts = {}) {
    part.validate(sigma.rows());
    if (!part.matrix_dim)
        throw std::invalid_argument("tensor regression requires a matrix-shaped predictor block");
    if (rank < 1) throw std::invalid_argument("tensor rank must be at least 1");
    if (lambda < 0.0) throw std::invalid_argument("tensor penalty must be nonnegative");
    const Eigen::Index p = *part.matrix_dim;
    const Eigen::MatrixXd a = detail::predictor_block(sigma, part);
    const Eigen::VectorXd c = detail::cross_vector(sigma, part, j);
    const Eigen::MatrixXd cmat = Eigen::Map<const Eigen::MatrixXd>(c.data(), p, p);

    auto objective = [&](const Eigen::MatrixXd& b1, const Eigen::MatrixXd& b2) {
        const Eigen::MatrixXd prod = b1 * b2.transpose();
        const Eigen::Map<const Eigen::VectorXd> v(prod.data(), prod.size());
        return v.dot(a * v) - 2.0 * v.dot(c) +
               lambda * (b1.squaredNorm() + b2.squaredNorm());
    };

    const Eigen::MatrixXd eye_p = Eigen::MatrixXd::Identity(p, p);
    auto run = [&](Eigen::MatrixXd b1, Eigen::MatrixXd b2, bool& converged,
                   std::vector<double>* trace) {
        double prev = objective(b1, b2);
        if (trace) trace->push_back(prev);
        converged = false;
        for (int it = 0; it < opts.max_alternations; ++it) {
            {  // update left factor: vec(b1 b2') = (b2 kron I_p) vec(b1)
                const Eigen::MatrixXd m1 = Eigen::kroneckerProduct(b2, eye_p);
                Eigen::MatrixXd g = m1.transpose() * a * m1;
                g.diagonal().array() += lambda;
                const Eigen::VectorXd rhs = m1.transpose() * c;
                const Eigen::VectorXd x = g.ldlt().solve(rhs);
                b1 = Eigen::Map<const Eigen::MatrixXd>(x.data(), p, rank);
                if (trace) trace->push_back(objective(b1, b2));
            }
            {  // update right factor: vec(b1 b2') = (I_p kron b1) vec(b2')
                const Eigen::MatrixXd m2 = Eigen::kroneckerProduct(eye_p, b1);
                Eigen::MatrixXd g = m2.transpose() * a * m2;
                g.diagonal().array() += lambda;
                const Eigen::VectorXd rhs = m2.transpose() * c;
                const Eigen::VectorXd x = g.ldlt().solve(rhs);
                const Eigen::MatrixXd b2t = Eigen::Map<const Eigen::MatrixXd>(x.data(), rank, p);
                b2 = b2t.transpose();
                if (trace) trace->push_back(objective(b1, b2));
            }
            const double cur = objective(b1, b2);
            if (std::abs(prev - cur) <= opts.tolerance * std::max(std::abs(prev), 1e-300)) {
                converged = true;
                prev = cur;
                break;
            }
            prev = cur;
        }
        return std::make_tuple(b1, b2, prev);
    };

    double best_obj = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd best1, best2;
    bool best_converged = false;
    const int restarts = opts.init ? 1 : std::max(opts.restarts, 1);
    auto rng = rng_stream(opts.seed, {0x7e5011u});
    for (int s = 0; s < restarts; ++s) {
        Eigen::MatrixXd b1, b2;
        if (opts.init) {
            b1 = opts.init->first;
            b2 = opts.init->second;
            if (b1.rows() != p || b1.cols() != rank || b2.rows() != p || b2.cols() != rank)
                throw std::invalid_argument("tensor initialization has wrong dimensions");
        } else {
            const double scale = 1.0 / std::sqrt(double(p));
            b1 = standard_normal_matrix(p, rank, rng) * scale;
            b2 = standard_normal_matrix(p, rank, rng) * scale;
        }
        bool conv = false;
        auto [f1, f2, obj] = run(std::move(b1), std::move(b2), conv, nullptr);
        if (obj < best_obj) {
            best_obj = obj;
            best1 = f1;
            best2 = f2;
            best_converged = conv;
        }
    }

    LatentRegressionFit fit;
    fit.method = RegressionMethod::tensor;
    fit.response_index = j;
    fit.lambda = lambda;
    fit.rank = rank;
    fit.factor_left = best1;
    fit.factor_right = best2;
    const Eigen::MatrixXd prod = best1 * best2.transpose();
    fit.beta = Eigen::Map<const Eigen::VectorXd>(prod.data(), prod.size());
    fit.converged = best_converged;
    if (sigma(j, j) > 0.0) fit.r2_in_sample = latent_r2(sigma, part, j, fit.beta);
    return fit;
}

/// Sums coefficients over symmetric predictor pairs of the p x p layout for
/// display (only the sum affects prediction when the predictor block encodes
/// a symmetric connectome); returns a lower-triangular matrix.
inline Eigen::MatrixXd symmetric_pair_sum(const Eigen::VectorXd& beta, Eigen::Index p) {
    if (beta.size() != p * p) throw std::invalid_argument("beta is not a p*p vector");
    const Eigen::Map<const Eigen::MatrixXd> b(beta.data(), p, p);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        out(i, i) = b(i, i);
        for (Eigen::Index j2 = 0; j2 < i; ++j2) out(i, j2) = b(i, j2) + b(j2, i);
    }
    return out;
}

}  // namespace vcomp
