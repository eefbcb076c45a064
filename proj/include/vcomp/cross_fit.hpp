#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcomp/covariance_set.hpp"
#include "vcomp/parallel.hpp"
#include "vcomp/regression.hpp"
#include "vcomp/rng.hpp"
#include "vcomp/solver.hpp"
#include "vcomp/structure_kernel.hpp"
#include "vcomp/trait_matrix.hpp"

namespace vcomp {

/// Hyperparameter grids for the split-based tuning procedure.
struct RegressionGrids {
    std::vector<double> ridge_lambdas;
    std::vector<double> lasso_lambdas;
    std::vector<int> tensor_ranks;
    std::vector<double> tensor_lambdas;

    static std::vector<double> log_spaced(double lo, double hi, int count) {
        std::vector<double> v;
        for (int i = 0; i < count; ++i)
            v.push_back(lo * std::pow(hi / lo, count == 1 ? 0.0 : double(i) / (count - 1)));
        return v;
    }

    static RegressionGrids defaults() {
        RegressionGrids g;
        g.ridge_lambdas = log_spaced(1e-4, 10.0, 10);
        g.lasso_lambdas = log_spaced(1e-4, 10.0, 10);
        g.tensor_ranks = {1, 2, 3};
        g.tensor_lambdas = log_spaced(1e-3, 1.0, 4);
        return g;
    }

    bool empty() const {
        return ridge_lambdas.empty() && lasso_lambdas.empty() &&
               (tensor_ranks.empty() || tensor_lambdas.empty());
    }
};

struct TuningCandidate {
    RegressionMethod method = RegressionMethod::ridge;
    double lambda = 0.0;
    int rank = 0;  // tensor only
    double mean_r2_out = std::numeric_limits<double>::quiet_NaN();
    int n_evaluations = 0;
};

struct ResponseTuning {
    Eigen::Index response = 0;
    std::vector<TuningCandidate> grid;
    std::size_t selected = 0;  // index into grid; meaningful when has_selection
    bool has_selection = false;
};

struct TuningResult {
    std::vector<ResponseTuning> responses;
    int n_splits = 0;
    std::uint64_t seed = 0;
    std::string component;
    // candidates are ranked with stronger regularization first, so exact
    // ties resolve toward the stronger candidate
    std::string tie_rule = "ties prefer stronger regularization (method order ridge, lasso, "
                           "tensor; larger penalty first; smaller rank first)";
};

/// Connected components of the union positivity graph over all non-identity
/// kernels: rows sharing any kinship/household link form one block. Splits
/// must keep these blocks intact so halves stay independent.
inline std::vector<std::vector<Eigen::Index>> family_blocks(const ComponentSpec& spec) {
    const Eigen::Index n = spec.n_subjects();
    std::vector<Eigen::Index> parent(static_cast<std::size_t>(n));
    std::iota(parent.begin(), parent.end(), 0);
    std::function<Eigen::Index(Eigen::Index)> find = [&](Eigen::Index i) {
        while (parent[static_cast<std::size_t>(i)] != i) {
            parent[static_cast<std::size_t>(i)] =
                parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(i)])];
            i = parent[static_cast<std::size_t>(i)];
        }
        return i;
    };
    for (const auto& kernel : spec.kernels()) {
        if (kernel.kind() == KernelKind::identity) continue;
        const Eigen::MatrixXd& m = kernel.matrix();
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index l = i + 1; l < n; ++l)
                if (m(i, l) != 0.0) {
                    const Eigen::Index a = find(i), b = find(l);
                    if (a != b) parent[static_cast<std::size_t>(a)] = b;
                }
    }
    std::vector<std::vector<Eigen::Index>> blocks;
    std::vector<Eigen::Index> block_of(static_cast<std::size_t>(n), -1);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::Index root = find(i);
        if (block_of[static_cast<std::size_t>(root)] < 0) {
            block_of[static_cast<std::size_t>(root)] = static_cast<Eigen::Index>(blocks.size());
            blocks.emplace_back();
        }
        blocks[static_cast<std::size_t>(block_of[static_cast<std::size_t>(root)])].push_back(i);
    }
    return blocks;
}

namespace detail {

/// Random half-split at the family-block level: blocks are shuffled and
/// greedily assigned to the smaller half so subject counts stay balanced.
inline std::pair<std::vector<Eigen::Index>, std::vector<Eigen::Index>> split_blocks(
    const std::vector<std::vector<Eigen::Index>>& blocks, std::mt19937_64& rng) {
    std::vector<std::size_t> order(blocks.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<Eigen::Index> a, b;
    for (std::size_t idx : order) {
        auto& target = (a.size() <= b.size()) ? a : b;
        target.insert(target.end(), blocks[idx].begin(), blocks[idx].end());
    }
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    return {std::move(a), std::move(b)};
}

struct HalfEstimate {
    Eigen::MatrixXd correlation;       // over kept traits
    std::vector<Eigen::Index> kept;    // original trait indices
    std::vector<Eigen::Index> inverse;  // original index -> kept position or -1
};

inline HalfEstimate half_estimate(const TraitMatrix& y, const ComponentSpec& spec,
                                  const std::vector<Eigen::Index>& rows,
                                  const std::string& component_label, const SolveOptions& opts) {
    const TraitMatrix ysub = y.subset_rows(rows);
    const ComponentSpec ssub = spec.subset(rows);
    const FitResult fit = mvrehe_fit(ysub, ssub, opts);
    const Eigen::MatrixXd sigma = (component_label == "observed")
                                      ? fit.sigmas.total()
                                      : fit.sigmas.component(component_label);
    CorrelationResult corr = to_correlation(sigma);
    HalfEstimate he;
    he.correlation = std::move(corr.matrix);
    he.kept = std::move(corr.kept);
    he.inverse.assign(static_cast<std::size_t>(y.n_traits()), -1);
    for (std::size_t i = 0; i < he.kept.size(); ++i)
        he.inverse[static_cast<std::size_t>(he.kept[i])] = static_cast<Eigen::Index>(i);
    return he;
}

inline std::optional<BlockPartition> map_partition(const BlockPartition& part,
                                                   const HalfEstimate& he, Eigen::Index response) {
    BlockPartition mapped;
    mapped.matrix_dim = part.matrix_dim;
    for (Eigen::Index i : part.predictors) {
        const Eigen::Index m = he.inverse[static_cast<std::size_t>(i)];
        if (m < 0) return std::nullopt;  // a predictor trait was dropped
        mapped.predictors.push_back(m);
    }
    const Eigen::Index jr = he.inverse[static_cast<std::size_t>(response)];
    if (jr < 0) return std::nullopt;
    mapped.responses.push_back(jr);
    return mapped;
}

}  // namespace detail

/// Split-based selection of the regularization method and tuning parameters:
/// the component covariance is estimated separately on each half (splits
/// never break family blocks), converted to a correlation matrix,
/// coefficients are fitted on one half and scored with the Eq.-(5) R2 under
/// the other half's estimate, and both directions of every split are
/// averaged. The per-response maximizer of the averaged out-of-sample R2 is
/// selected. component_label may name any component or "observed" (sum of
/// all components).
inline TuningResult cross_fit_select(const TraitMatrix& y, const ComponentSpec& spec,
                                     const BlockPartition& part,
                                     const std::string& component_label,
                                     const RegressionGrids& grids, int n_splits,
                                     std::uint64_t seed, const SolveOptions& opts = {}) {
    part.validate(y.n_traits());
    if (n_splits < 1) throw std::invalid_argument("n_splits must be at least 1");
    if (grids.empty()) throw std::invalid_argument("empty hyperparameter grids");
    if (component_label != "observed") spec.component_index(component_label);
    const auto blocks = family_blocks(spec);
    if (blocks.size() < 2)
        throw std::invalid_argument("cannot split: all subjects share one family block");

    // canonical candidate order; stronger regularization first within method
    struct Candidate {
        RegressionMethod method;
        double lambda;
        int rank;
    };
    std::vector<Candidate> candidates;
    {
        auto desc = [](std::vector<double> v) {
            std::sort(v.begin(), v.end(), std::greater<double>());
            return v;
        };
        for (double l : desc(grids.ridge_lambdas))
            candidates.push_back({RegressionMethod::ridge, l, 0});
        for (double l : desc(grids.lasso_lambdas))
            candidates.push_back({RegressionMethod::lasso, l, 0});
        if (part.matrix_dim) {
            std::vector<int> ranks = grids.tensor_ranks;
            std::sort(ranks.begin(), ranks.end());
            for (int r : ranks)
                for (double l : desc(grids.tensor_lambdas))
                    candidates.push_back({RegressionMethod::tensor, l, r});
        }
    }
    if (candidates.empty()) throw std::invalid_argument("no applicable candidates");

    struct Direction {
        detail::HalfEstimate fit_half;
        detail::HalfEstimate eval_half;
    };
    std::vector<std::vector<Direction>> split_dirs(static_cast<std::size_t>(n_splits));
    parallel_for_index(static_cast<std::size_t>(n_splits), [&](std::size_t s) {
        auto rng = rng_stream(seed, {0x5917u, static_cast<std::uint64_t>(s)});
        auto [rows_a, rows_b] = detail::split_blocks(blocks, rng);
        detail::HalfEstimate ea = detail::half_estimate(y, spec, rows_a, component_label, opts);
        detail::HalfEstimate eb = detail::half_estimate(y, spec, rows_b, component_label, opts);
        split_dirs[s].push_back({ea, eb});
        split_dirs[s].push_back({std::move(eb), std::move(ea)});
    });

    TuningResult result;
    result.n_splits = n_splits;
    result.seed = seed;
    result.component = component_label;
    for (Eigen::Index j : part.responses) {
        ResponseTuning rt;
        rt.response = j;
        for (const auto& cand : candidates) {
            TuningCandidate tc;
            tc.method = cand.method;
            tc.lambda = cand.lambda;
            tc.rank = cand.rank;
            double sum = 0.0;
            int count = 0;
            for (const auto& dirs : split_dirs) {
                for (const auto& d : dirs) {
                    auto fit_part = detail::map_partition(part, d.fit_half, j);
                    auto eval_part = detail::map_partition(part, d.eval_half, j);
                    if (!fit_part || !eval_part) continue;
                    LatentRegressionFit fit;
                    const Eigen::Index jf = fit_part->responses.front();
                    switch (cand.method) {
                        case RegressionMethod::ridge:
                            fit = fit_ridge(d.fit_half.correlation, *fit_part, jf, cand.lambda);
                            break;
                        case RegressionMethod::lasso:
                            fit = fit_lasso(d.fit_half.correlation, *fit_part, jf, cand.lambda);
                            break;
                        case RegressionMethod::tensor: {
                            TensorOptions topts;
                            topts.seed = seed + static_cast<std::uint64_t>(j);
                            fit = fit_tensor(d.fit_half.correlation, *fit_part, jf, cand.rank,
                                             cand.lambda, topts);
                            break;
                        }
                    }
                    sum += latent_r2(d.eval_half.correlation, *eval_part,
                                     eval_part->responses.front(), fit.beta);
                    ++count;
                }
            }
            if (count > 0) {
                tc.mean_r2_out = sum / count;
                tc.n_evaluations = count;
            }
            rt.grid.push_back(tc);
        }
        // first maximizer wins: candidate order encodes the tie rule
        double best = -std::numeric_limits<double>::infinity();
        std::size_t best_idx = 0;
        bool any = false;
        for (std::size_t i = 0; i < rt.grid.size(); ++i) {
            if (rt.grid[i].n_evaluations == 0) continue;
            if (rt.grid[i].mean_r2_out > best) {
                best = rt.grid[i].mean_r2_out;
                best_idx = i;
                any = true;
            }
        }
        rt.selected = best_idx;
        rt.has_selection = any;  // responses nobody could evaluate stay unselected
        result.responses.push_back(std::move(rt));
    }
    return result;
}

}  // namespace vcomp
