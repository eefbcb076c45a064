#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcomp/covariance_set.hpp"
#include "vcomp/psd.hpp"
#include "vcomp/structure_kernel.hpp"
#include "vcomp/trait_matrix.hpp"

namespace vcomp {

enum class SvdReduction { automatic, on, off };
enum class Initialization { zeros, mvhe_truncated };

struct SolveOptions {
    int max_iterations = 500;
    double tolerance = 1e-8;  // relative objective decrease per full cycle
    SvdReduction svd_reduction = SvdReduction::automatic;
    Initialization initialization = Initialization::zeros;

    void validate() const {
        if (max_iterations < 1) throw std::invalid_argument("max_iterations must be positive");
        if (!(tolerance > 0.0)) throw std::invalid_argument("tolerance must be positive");
    }
};

/// Precomputed sufficient statistics for the moment-matching objective:
/// W_z = Y' D_z Y and the kernel Gram matrix Q. When the trait dimension
/// exceeds the sample size the state is built from Y V (compact right
/// singular vectors), so all per-iteration work involves min(n, q)-sized
/// matrices; solutions map back through V.
class SolverState {
public:
    SolverState(const Eigen::MatrixXd& y, const ComponentSpec& spec, bool reduce)
        : gram_(spec.gram()), n_(y.rows()), q_(y.cols()) {
        if (y.rows() != spec.n_subjects())
            throw std::invalid_argument("trait rows do not match kernel dimension");
        Eigen::MatrixXd working = y;
        if (reduce) {
            // compact SVD Y = U diag(s) V' obtained from the smaller Gram matrix
            const bool via_rows = q_ > n_;
            Eigen::MatrixXd gram_small =
                via_rows ? (y * y.transpose()).eval() : (y.transpose() * y).eval();
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram_small);
            if (es.info() != Eigen::Success)
                throw std::runtime_error("SVD reduction failed (Gram eigendecomposition)");
            const Eigen::VectorXd evals = es.eigenvalues();
            const double smax = std::sqrt(std::max(evals.maxCoeff(), 0.0));
            const double cutoff = 1e-12 * smax;
            std::vector<Eigen::Index> keep;
            for (Eigen::Index i = 0; i < evals.size(); ++i)
                if (std::sqrt(std::max(evals(i), 0.0)) > cutoff) keep.push_back(i);
            const auto r = static_cast<Eigen::Index>(keep.size());
            Eigen::MatrixXd vecs(gram_small.rows(), r);
            Eigen::VectorXd sv(r);
            for (Eigen::Index j = 0; j < r; ++j) {
                vecs.col(j) = es.eigenvectors().col(keep[static_cast<std::size_t>(j)]);
                sv(j) = std::sqrt(evals(keep[static_cast<std::size_t>(j)]));
            }
            if (via_rows) {
                v_ = y.transpose() * vecs * sv.cwiseInverse().asDiagonal();  // q x r
                working = vecs * sv.asDiagonal();                            // U diag(s)
            } else {
                v_ = vecs;  // right singular vectors directly
                working = y * v_;
            }
            reduced_ = true;
        }
        working_dim_ = working.cols();
        y_frob2_ = working.squaredNorm();
        const auto kcount = spec.n_components();
        w_.reserve(kcount);
        for (std::size_t z = 0; z < kcount; ++z) {
            Eigen::MatrixXd wz = working.transpose() * spec.kernels()[z].matrix() * working;
            w_.push_back(((wz + wz.transpose()) / 2.0).eval());
        }
    }

    const std::vector<Eigen::MatrixXd>& w() const { return w_; }
    const Eigen::MatrixXd& gram() const { return gram_; }
    const Eigen::MatrixXd& v() const { return v_; }
    bool reduced() const { return reduced_; }
    Eigen::Index working_dim() const { return working_dim_; }
    Eigen::Index n_subjects() const { return n_; }
    Eigen::Index n_traits() const { return q_; }
    std::size_t n_components() const { return w_.size(); }

    /// Objective of Eq.-(13) form evaluated from the precomputed statistics:
    ///   ||Y||_F^4 - 2 sum_z tr(W_z S_z) + sum_{z,k} Q_{zk} tr(S_z S_k)
    /// for matrices in the original trait dimension. When the state is
    /// SVD-reduced, the linear term projects through V, which is exact for
    /// any input because tr(W_z^full S) = tr(W_z V' S V).
    double objective(const std::vector<Eigen::MatrixXd>& sigmas) const {
        check_components(sigmas, q_);
        if (!reduced_) return objective_working(sigmas);
        double linear = 0.0, quad = 0.0;
        for (std::size_t z = 0; z < w_.size(); ++z) {
            linear += w_[z].cwiseProduct(v_.transpose() * sigmas[z] * v_).sum();
            for (std::size_t k = 0; k < w_.size(); ++k)
                quad += gram_(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(k)) *
                        sigmas[z].cwiseProduct(sigmas[k]).sum();
        }
        return y_frob2_ * y_frob2_ - 2.0 * linear + quad;
    }

    /// Objective for matrices expressed in the working (possibly reduced)
    /// dimension; equal to objective(expand(sigmas)) by Prop.-2 invariance.
    double objective_working(const std::vector<Eigen::MatrixXd>& sigmas) const {
        check_components(sigmas, working_dim_);
        double linear = 0.0, quad = 0.0;
        for (std::size_t z = 0; z < w_.size(); ++z) {
            linear += w_[z].cwiseProduct(sigmas[z]).sum();
            for (std::size_t k = 0; k < w_.size(); ++k)
                quad += gram_(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(k)) *
                        sigmas[z].cwiseProduct(sigmas[k]).sum();
        }
        return y_frob2_ * y_frob2_ - 2.0 * linear + quad;
    }

    /// Unconstrained least-squares solution in the working dimension:
    /// S_k = sum_z [Q^{-1}]_{kz} W_z.
    std::vector<Eigen::MatrixXd> unconstrained() const {
        const Eigen::MatrixXd qinv = gram_.ldlt().solve(
            Eigen::MatrixXd::Identity(gram_.rows(), gram_.cols()));
        std::vector<Eigen::MatrixXd> sigmas;
        sigmas.reserve(w_.size());
        for (std::size_t k = 0; k < w_.size(); ++k) {
            Eigen::MatrixXd s = Eigen::MatrixXd::Zero(working_dim_, working_dim_);
            for (std::size_t z = 0; z < w_.size(); ++z)
                s += qinv(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(z)) * w_[z];
            sigmas.push_back(((s + s.transpose()) / 2.0).eval());
        }
        return sigmas;
    }

    /// Maps a working-dimension solution back to the trait dimension.
    Eigen::MatrixXd expand(const Eigen::MatrixXd& sigma) const {
        if (!reduced_) return sigma;
        Eigen::MatrixXd s = v_ * sigma * v_.transpose();
        return ((s + s.transpose()) / 2.0).eval();
    }

private:
    void check_components(const std::vector<Eigen::MatrixXd>& sigmas, Eigen::Index dim) const {
        if (sigmas.size() != w_.size())
            throw std::invalid_argument("component count mismatch in objective");
        for (const auto& s : sigmas)
            if (s.rows() != dim || s.cols() != dim)
                throw std::invalid_argument("covariance dimension mismatch in objective");
    }

    std::vector<Eigen::MatrixXd> w_;
    Eigen::MatrixXd gram_;
    Eigen::MatrixXd v_;
    bool reduced_ = false;
    Eigen::Index working_dim_ = 0;
    Eigen::Index n_ = 0;
    Eigen::Index q_ = 0;
    double y_frob2_ = 0.0;
};

struct FitDiagnostics {
    int iterations = 0;  // completed full block cycles
    bool converged = true;
    double objective = 0.0;
    double initial_objective = 0.0;
    std::vector<double> objective_trace;  // objective after every block update
    bool used_svd_reduction = false;
    Eigen::Index working_dim = 0;
    bool unconstrained_already_psd = false;
};

struct FitResult {
    CovarianceSet sigmas;
    FitDiagnostics diagnostics;
};

namespace detail {

inline bool nearly_psd(const Eigen::MatrixXd& s) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(s, Eigen::EigenvaluesOnly);
    const double lo = es.eigenvalues().minCoeff();
    const double hi = std::max(es.eigenvalues().maxCoeff(), 0.0);
    return lo >= -1e-10 * std::max(hi, 1e-300);
}

inline bool should_reduce(SvdReduction mode, Eigen::Index n, Eigen::Index q) {
    switch (mode) {
        case SvdReduction::on: return true;
        case SvdReduction::off: return false;
        case SvdReduction::automatic: return q > n;
    }
    return false;
}

}  // namespace detail

/// Unconstrained multivariate Haseman-Elston estimator (closed form); with
/// truncate = true each component is replaced by its Frobenius-nearest PSD
/// matrix, which is the paper-style mvHE estimator.
inline FitResult mvhe_fit(const TraitMatrix& y, const ComponentSpec& spec, bool truncate,
                          SvdReduction reduction = SvdReduction::automatic) {
    SolverState state(y.values(), spec,
                      detail::should_reduce(reduction, y.n_subjects(), y.n_traits()));
    std::vector<Eigen::MatrixXd> working = state.unconstrained();
    FitDiagnostics diag;
    diag.used_svd_reduction = state.reduced();
    diag.working_dim = state.working_dim();
    diag.initial_objective = state.objective_working(working);
    std::vector<Eigen::MatrixXd> sigmas;
    std::vector<bool> certified;
    sigmas.reserve(working.size());
    for (auto& s : working) {
        if (truncate) {
            s = psd_project(s);
            certified.push_back(true);
        } else {
            certified.push_back(detail::nearly_psd(s));
        }
        sigmas.push_back(state.expand(s));
    }
    diag.objective = state.objective_working(working);
    return {CovarianceSet::certified_by_construction(std::move(sigmas), spec.labels(),
                                                     std::move(certified)),
            std::move(diag)};
}

/// Restricted multivariate Haseman-Elston estimator: minimizes the moment
/// objective subject to every component being PSD, by cyclic block
/// coordinate descent where each block update is an eigenvalue truncation
/// (Lemma-1 projection) of
///   (W_z - sum_{k != z} Q_{zk} S_k) / Q_{zz}.
/// If the unconstrained solution is already PSD in every component it is the
/// constrained minimizer and is returned directly.
inline FitResult mvrehe_fit(const TraitMatrix& y, const ComponentSpec& spec,
                            const SolveOptions& opts = {}) {
    opts.validate();
    SolverState state(y.values(), spec,
                      detail::should_reduce(opts.svd_reduction, y.n_subjects(), y.n_traits()));
    const auto kcount = state.n_components();
    const Eigen::MatrixXd& gram = state.gram();
    FitDiagnostics diag;
    diag.used_svd_reduction = state.reduced();
    diag.working_dim = state.working_dim();

    std::vector<Eigen::MatrixXd> unconstrained = state.unconstrained();
    bool all_psd = true;
    for (const auto& s : unconstrained)
        if (!detail::nearly_psd(s)) {
            all_psd = false;
            break;
        }

    std::vector<Eigen::MatrixXd> working;
    if (all_psd) {
        diag.unconstrained_already_psd = true;
        working.reserve(kcount);
        for (const auto& s : unconstrained) working.push_back(psd_project(s));
        diag.initial_objective = state.objective_working(working);
        diag.objective = diag.initial_objective;
    } else {
        working.assign(kcount, Eigen::MatrixXd::Zero(state.working_dim(), state.working_dim()));
        if (opts.initialization == Initialization::mvhe_truncated)
            for (std::size_t k = 0; k < kcount; ++k) working[k] = psd_project(unconstrained[k]);
        double prev = state.objective_working(working);
        diag.initial_objective = prev;
        diag.converged = false;
        for (int it = 0; it < opts.max_iterations; ++it) {
            for (std::size_t z = 0; z < kcount; ++z) {
                Eigen::MatrixXd m = state.w()[z];
                for (std::size_t k = 0; k < kcount; ++k) {
                    if (k == z) continue;
                    m -= gram(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(k)) *
                         working[k];
                }
                m /= gram(static_cast<Eigen::Index>(z), static_cast<Eigen::Index>(z));
                working[z] = psd_project(m);
                diag.objective_trace.push_back(state.objective_working(working));
            }
            diag.iterations = it + 1;
            const double cur = diag.objective_trace.back();
            if (std::abs(prev - cur) <= opts.tolerance * std::max(std::abs(prev), 1e-300)) {
                diag.converged = true;
                prev = cur;
                break;
            }
            prev = cur;
        }
        diag.objective = diag.objective_trace.back();
    }

    std::vector<Eigen::MatrixXd> sigmas;
    sigmas.reserve(kcount);
    for (const auto& s : working) sigmas.push_back(state.expand(s));
    return {CovarianceSet::certified_by_construction(std::move(sigmas), spec.labels(),
                                                     std::vector<bool>(kcount, true)),
            std::move(diag)};
}

/// Eq.-(13) objective at arbitrary full-dimension covariance matrices,
/// computed through the expanded trace form (no reduction, so the value is
/// exact for matrices outside the data's row space as well).
inline double objective_value(const TraitMatrix& y, const ComponentSpec& spec,
                              const CovarianceSet& sigmas) {
    if (sigmas.n_traits() != y.n_traits())
        throw std::invalid_argument("covariance dimension does not match trait count");
    if (sigmas.n_components() != spec.n_components())
        throw std::invalid_argument("component count mismatch");
    SolverState state(y.values(), spec, false);
    return state.objective(sigmas.sigmas());
}

/// Classical univariate HE regression on a single trait column; with
/// restricted = true, nonnegative-variance REHE (the q = 1 mvREHE case).
inline Eigen::VectorXd univariate_fit(const Eigen::VectorXd& y_column, const ComponentSpec& spec,
                                      bool restricted, const SolveOptions& opts = {}) {
    TraitMatrix y = TraitMatrix::from_values(y_column);
    FitResult fit = restricted ? mvrehe_fit(y, spec, opts) : mvhe_fit(y, spec, false);
    Eigen::VectorXd out(static_cast<Eigen::Index>(spec.n_components()));
    for (std::size_t k = 0; k < spec.n_components(); ++k)
        out(static_cast<Eigen::Index>(k)) = fit.sigmas.sigmas()[k](0, 0);
    return out;
}

}  // namespace vcomp
