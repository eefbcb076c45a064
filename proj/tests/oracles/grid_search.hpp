#pragma once

// Grid-refinement oracles: nonnegative univariate variance estimation on a
// shrinking lattice, and rank-1 tensor regression via search over unit left
// factors with a closed-ish form right factor.

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

/// Minimizes c - 2 s'w + s'Q s over s >= 0 by iterated lattice refinement.
inline Eigen::VectorXd nonnegative_grid_search(const Eigen::MatrixXd& gram,
                                               const Eigen::VectorXd& w, double hi,
                                               int points_per_axis = 17, int refinements = 14) {
    const Eigen::Index k = gram.rows();
    auto objective = [&](const Eigen::VectorXd& s) {
        return -2.0 * s.dot(w) + s.dot(gram * s);
    };
    Eigen::VectorXd lo_v = Eigen::VectorXd::Zero(k);
    Eigen::VectorXd hi_v = Eigen::VectorXd::Constant(k, hi);
    Eigen::VectorXd best = Eigen::VectorXd::Zero(k);
    double best_obj = objective(best);
    for (int round = 0; round < refinements; ++round) {
        std::vector<Eigen::VectorXd> axes(static_cast<std::size_t>(k));
        for (Eigen::Index d = 0; d < k; ++d) {
            Eigen::VectorXd axis(points_per_axis);
            for (int i = 0; i < points_per_axis; ++i)
                axis(i) = lo_v(d) + (hi_v(d) - lo_v(d)) * double(i) / (points_per_axis - 1);
            axes[static_cast<std::size_t>(d)] = axis;
        }
        std::vector<int> idx(static_cast<std::size_t>(k), 0);
        Eigen::VectorXd point(k);
        for (;;) {
            for (Eigen::Index d = 0; d < k; ++d)
                point(d) = axes[static_cast<std::size_t>(d)](idx[static_cast<std::size_t>(d)]);
            const double obj = objective(point);
            if (obj < best_obj) {
                best_obj = obj;
                best = point;
            }
            Eigen::Index d = 0;
            while (d < k && ++idx[static_cast<std::size_t>(d)] == points_per_axis) {
                idx[static_cast<std::size_t>(d)] = 0;
                ++d;
            }
            if (d == k) break;
        }
        // shrink the box around the incumbent
        for (Eigen::Index d = 0; d < k; ++d) {
            const double span = (hi_v(d) - lo_v(d)) / double(points_per_axis - 1) * 2.0;
            lo_v(d) = std::max(0.0, best(d) - span);
            hi_v(d) = best(d) + span;
        }
    }
    return best;
}

/// Rank-1 tensor regression oracle. For a unit left direction u, the
/// balanced objective over the right factor w is
///   w' A_u w - 2 w' c_u + 2 lambda ||w||,
/// where A_u and c_u contract the p^2 x p^2 system through u. The inner
/// problem is solved by a fixed-point iteration on ||w||; the outer search
/// over u mixes random directions with shrinking local perturbations.
struct Rank1Result {
    Eigen::VectorXd u;
    Eigen::VectorXd w;
    double objective = 0.0;  // balanced form; equals the factor form at optima
};

inline Rank1Result rank1_tensor_search(const Eigen::MatrixXd& a, const Eigen::VectorXd& c,
                                       Eigen::Index p, double lambda, int coarse = 6000,
                                       int refine_rounds = 5, int refine_samples = 3000,
                                       unsigned seed = 1234) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);

    auto contract = [&](const Eigen::VectorXd& u, Eigen::MatrixXd& au, Eigen::VectorXd& cu) {
        au.resize(p, p);
        cu.resize(p);
        for (Eigen::Index j = 0; j < p; ++j) {
            for (Eigen::Index l = 0; l < p; ++l)
                au(j, l) = u.dot(a.block(j * p, l * p, p, p) * u);
            cu(j) = u.dot(c.segment(j * p, p));
        }
    };
    auto inner_solve = [&](const Eigen::MatrixXd& au, const Eigen::VectorXd& cu,
                           Eigen::VectorXd& w) {
        w = (au + lambda * Eigen::MatrixXd::Identity(p, p)).ldlt().solve(cu);
        for (int it = 0; it < 100; ++it) {
            const double norm = w.norm();
            if (norm < 1e-14) break;
            Eigen::MatrixXd reg = au;
            reg.diagonal().array() += lambda / norm;
            const Eigen::VectorXd next = reg.ldlt().solve(cu);
            if ((next - w).norm() < 1e-13 * (1.0 + norm)) {
                w = next;
                break;
            }
            w = next;
        }
        return w.dot(au * w) - 2.0 * w.dot(cu) + 2.0 * lambda * w.norm();
    };
    auto evaluate = [&](const Eigen::VectorXd& u, Eigen::VectorXd& w) {
        Eigen::MatrixXd au;
        Eigen::VectorXd cu;
        contract(u, au, cu);
        return inner_solve(au, cu, w);
    };

    Rank1Result best;
    best.u = Eigen::VectorXd::Unit(p, 0);
    best.w = Eigen::VectorXd::Zero(p);
    best.objective = 0.0;  // the zero coefficient is always feasible
    for (int s = 0; s < coarse; ++s) {
        Eigen::VectorXd u(p);
        for (Eigen::Index i = 0; i < p; ++i) u(i) = normal(rng);
        u.normalize();
        Eigen::VectorXd w;
        const double obj = evaluate(u, w);
        if (obj < best.objective) best = {u, w, obj};
    }
    double radius = 0.3;
    for (int round = 0; round < refine_rounds; ++round) {
        for (int s = 0; s < refine_samples; ++s) {
            Eigen::VectorXd u = best.u;
            for (Eigen::Index i = 0; i < p; ++i) u(i) += radius * normal(rng);
            u.normalize();
            Eigen::VectorXd w;
            const double obj = evaluate(u, w);
            if (obj < best.objective) best = {u, w, obj};
        }
        radius /= 3.0;
    }
    return best;
}

}  // namespace oracle
