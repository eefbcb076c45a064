#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcomp/covariance_set.hpp"
#include "vcomp/designs.hpp"
#include "vcomp/parallel.hpp"
#include "vcomp/psd.hpp"
#include "vcomp/regression.hpp"
#include "vcomp/sampling.hpp"
#include "vcomp/solver.hpp"

namespace vcomp {

enum class Estimator { oracle, mvhe, mvhe_raw, mvrehe, uni_he, uni_rehe };

inline const char* estimator_name(Estimator e) {
    switch (e) {
        case Estimator::oracle: return "oracle";
        case Estimator::mvhe: return "mvhe";
        case Estimator::mvhe_raw: return "mvhe_raw";
        case Estimator::mvrehe: return "mvrehe";
        case Estimator::uni_he: return "uni_he";
        case Estimator::uni_rehe: return "uni_rehe";
    }
    return "unknown";
}

inline Estimator estimator_from_string(const std::string& s) {
    for (Estimator e : {Estimator::oracle, Estimator::mvhe, Estimator::mvhe_raw, Estimator::mvrehe,
                        Estimator::uni_he, Estimator::uni_rehe})
        if (s == estimator_name(e)) return e;
    throw std::invalid_argument("unknown estimator '" + s + "'");
}

/// Fixed per-method hyperparameters for the sweep's plug-in regressions.
struct RegressionSweepConfig {
    bool enabled = false;
    BlockPartition partition;
    double ridge_lambda = 1e-3;
    double lasso_lambda = 1e-3;
    int tensor_rank = 3;
    double tensor_lambda = 1e-3;
    std::vector<Eigen::Index> responses;  // empty: every partition response
};

struct SimulationDesign {
    explicit SimulationDesign(CovarianceSet ground_truth) : truth(std::move(ground_truth)) {}

    CovarianceSet truth;
    std::vector<Eigen::Index> n_grid;
    KernelRecipe recipe;
    int replicates = 20;
    std::uint64_t seed = 0;
    SolveOptions solve_options;
    std::vector<Estimator> estimators = {Estimator::mvrehe, Estimator::mvhe};
    RegressionSweepConfig regression;
    std::string genetic_label = "G";

    void validate() const {
        if (n_grid.empty()) throw std::invalid_argument("empty sample-size grid");
        for (Eigen::Index n : n_grid)
            if (n < 2) throw std::invalid_argument("sample sizes must be at least 2");
        if (replicates < 1) throw std::invalid_argument("replicates must be at least 1");
        if (estimators.empty()) throw std::invalid_argument("no estimators requested");
        recipe.validate();
        solve_options.validate();
        for (const auto& s : truth.sigmas())
            if (min_eigenvalue(s) < -1e-8 * std::max(max_eigenvalue(s), 1e-300))
                throw std::invalid_argument("ground-truth covariances must be PSD");
        if (regression.enabled) regression.partition.validate(truth.n_traits());
    }
};

struct MetricRow {
    std::string estimator;
    Eigen::Index n = 0;
    int replicate = 0;
    std::string metric;
    double value = 0.0;
};

struct FailureRow {
    std::string estimator;
    Eigen::Index n = 0;
    int replicate = 0;
    std::string message;
};

struct SimulationReport {
    std::vector<MetricRow> rows;
    std::vector<FailureRow> failures;

    std::vector<double> values(const std::string& estimator, Eigen::Index n,
                               const std::string& metric) const {
        std::vector<double> out;
        for (const auto& r : rows)
            if (r.estimator == estimator && r.n == n && r.metric == metric)
                out.push_back(r.value);
        return out;
    }
};

inline double median(std::vector<double> v) {
    if (v.empty()) throw std::invalid_argument("median of empty set");
    std::sort(v.begin(), v.end());
    const std::size_t m = v.size() / 2;
    return (v.size() % 2) ? v[m] : (v[m - 1] + v[m]) / 2.0;
}

namespace detail {

inline Eigen::VectorXd raw_heritability(const CovarianceSet& cs, const std::string& genetic_label) {
    const Eigen::MatrixXd& g = cs.component(genetic_label);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(cs.n_traits());
    for (const auto& s : cs.sigmas()) total += s.diagonal();
    Eigen::VectorXd h(cs.n_traits());
    for (Eigen::Index j = 0; j < h.size(); ++j)
        h(j) = (total(j) != 0.0) ? g(j, j) / total(j) : 0.0;
    return h;
}

inline CovarianceSet diagonal_fit(const TraitMatrix& y, const ComponentSpec& spec,
                                  bool restricted, const SolveOptions& opts) {
    const Eigen::Index q = y.n_traits();
    std::vector<Eigen::MatrixXd> sigmas(spec.n_components(), Eigen::MatrixXd::Zero(q, q));
    for (Eigen::Index j = 0; j < q; ++j) {
        const Eigen::VectorXd v = univariate_fit(y.values().col(j), spec, restricted, opts);
        for (std::size_t k = 0; k < spec.n_components(); ++k)
            sigmas[k](j, j) = v(static_cast<Eigen::Index>(k));
    }
    std::vector<bool> certified;
    for (std::size_t k = 0; k < spec.n_components(); ++k)
        certified.push_back(restricted ||
                            sigmas[k].diagonal().minCoeff() >= 0.0);
    return CovarianceSet(std::move(sigmas), spec.labels(), std::move(certified));
}

struct OracleRegression {
    Eigen::MatrixXd true_correlation;  // genetic component, correlation scale
    std::vector<Eigen::Index> responses;
    std::vector<Eigen::VectorXd> beta;  // unregularized minimizer per response
    std::vector<double> r2;
};

inline OracleRegression oracle_regression(const CovarianceSet& truth,
                                          const RegressionSweepConfig& cfg,
                                          const std::string& genetic_label) {
    OracleRegression o;
    CorrelationResult corr = to_correlation(truth.component(genetic_label));
    if (!corr.dropped.empty())
        throw std::invalid_argument("ground-truth genetic covariance has zero-variance traits");
    o.true_correlation = std::move(corr.matrix);
    o.responses = cfg.responses.empty() ? cfg.partition.responses : cfg.responses;
    for (Eigen::Index j : o.responses) {
        o.beta.push_back(latent_beta_unregularized(o.true_correlation, cfg.partition, j));
        o.r2.push_back(latent_r2(o.true_correlation, cfg.partition, j, o.beta.back()));
    }
    return o;
}

/// Achieved-R2 / oracle-R2, averaged over responses, for one regression
/// method applied to an estimated genetic correlation matrix. Coefficients
/// are fitted on the estimate and scored on the true correlation matrix.
inline double regression_ratio(const Eigen::MatrixXd& est_corr,
                               const std::vector<Eigen::Index>& kept,
                               const RegressionSweepConfig& cfg, const OracleRegression& oracle,
                               RegressionMethod method) {
    // remap the partition through the kept-trait list of the estimate
    std::vector<Eigen::Index> inverse(oracle.true_correlation.rows(), -1);
    for (std::size_t i = 0; i < kept.size(); ++i)
        inverse[static_cast<std::size_t>(kept[i])] = static_cast<Eigen::Index>(i);
    BlockPartition mapped;
    mapped.matrix_dim = cfg.partition.matrix_dim;
    for (Eigen::Index i : cfg.partition.predictors) {
        if (inverse[static_cast<std::size_t>(i)] < 0)
            throw std::runtime_error("estimated covariance dropped a predictor trait");
        mapped.predictors.push_back(inverse[static_cast<std::size_t>(i)]);
    }
    for (Eigen::Index j : cfg.partition.responses)
        if (inverse[static_cast<std::size_t>(j)] >= 0)
            mapped.responses.push_back(inverse[static_cast<std::size_t>(j)]);

    double sum = 0.0;
    int count = 0;
    for (std::size_t r = 0; r < oracle.responses.size(); ++r) {
        const Eigen::Index j = oracle.responses[r];
        const Eigen::Index jm = inverse[static_cast<std::size_t>(j)];
        if (jm < 0) continue;  // response dropped from the estimate
        LatentRegressionFit fit;
        switch (method) {
            case RegressionMethod::ridge:
                fit = fit_ridge(est_corr, mapped, jm, cfg.ridge_lambda);
                break;
            case RegressionMethod::lasso:
                fit = fit_lasso(est_corr, mapped, jm, cfg.lasso_lambda);
                break;
            case RegressionMethod::tensor: {
                TensorOptions topts;
                topts.seed = 0x7e50 + static_cast<std::uint64_t>(j);
                fit = fit_tensor(est_corr, mapped, jm, cfg.tensor_rank, cfg.tensor_lambda, topts);
                break;
            }
        }
        const double achieved =
            latent_r2(oracle.true_correlation, cfg.partition, j, fit.beta);
        sum += achieved / oracle.r2[r];
        ++count;
    }
    if (count == 0) throw std::runtime_error("no responses survived for regression scoring");
    return sum / count;
}

}  // namespace detail

/// Runs the full design: for every (n, replicate) simulate one dataset, fit
/// each estimator, and record spectral errors, heritability error, wall-clock
/// fit time, and (optionally) plug-in regression R2 ratios. Replicates run in
/// parallel with per-replicate RNG streams keyed by (seed, n, replicate), so
/// thread count never changes results. Estimator failures are recorded and
/// skipped rather than aborting the sweep.
inline SimulationReport run_sweep(const SimulationDesign& design) {
    design.validate();
    SimulationReport report;
    const auto& truth = design.truth;
    std::vector<Eigen::MatrixXd> sigma_sqrts;
    for (const auto& s : truth.sigmas()) sigma_sqrts.push_back(psd_sqrt(s));
    const Eigen::VectorXd h2_true = detail::raw_heritability(truth, design.genetic_label);

    std::optional<detail::OracleRegression> oracle;
    if (design.regression.enabled)
        oracle = detail::oracle_regression(truth, design.regression, design.genetic_label);

    for (Eigen::Index n : design.n_grid) {
        const ComponentSpec spec = make_family_mix_spec(n, design.recipe);
        std::vector<Eigen::MatrixXd> kernel_sqrts;
        for (const auto& k : spec.kernels()) kernel_sqrts.push_back(psd_sqrt(k.matrix()));

        struct ReplicateResult {
            std::vector<MetricRow> rows;
            std::vector<FailureRow> failures;
        };
        std::vector<ReplicateResult> results(static_cast<std::size_t>(design.replicates));

        parallel_for_index(static_cast<std::size_t>(design.replicates), [&](std::size_t rep) {
            auto& res = results[rep];
            auto rng = rng_stream(design.seed,
                                  {static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(rep)});
            Eigen::MatrixXd yvals = Eigen::MatrixXd::Zero(n, truth.n_traits());
            for (std::size_t k = 0; k < spec.n_components(); ++k)
                yvals += sample_matrix_normal_sqrt(kernel_sqrts[k], sigma_sqrts[k], rng);
            const TraitMatrix y = TraitMatrix::from_values(std::move(yvals));

            for (Estimator est : design.estimators) {
                const std::string name = estimator_name(est);
                auto push = [&](const std::string& metric, double value) {
                    res.rows.push_back({name, n, static_cast<int>(rep), metric, value});
                };
                try {
                    const auto t0 = std::chrono::steady_clock::now();
                    std::optional<CovarianceSet> fitted;
                    switch (est) {
                        case Estimator::oracle:
                            fitted = truth;
                            break;
                        case Estimator::mvhe:
                            fitted = mvhe_fit(y, spec, true, design.solve_options.svd_reduction)
                                         .sigmas;
                            break;
                        case Estimator::mvhe_raw:
                            fitted = mvhe_fit(y, spec, false, design.solve_options.svd_reduction)
                                         .sigmas;
                            break;
                        case Estimator::mvrehe:
                            fitted = mvrehe_fit(y, spec, design.solve_options).sigmas;
                            break;
                        case Estimator::uni_he:
                            fitted = detail::diagonal_fit(y, spec, false, design.solve_options);
                            break;
                        case Estimator::uni_rehe:
                            fitted = detail::diagonal_fit(y, spec, true, design.solve_options);
                            break;
                    }
                    const auto t1 = std::chrono::steady_clock::now();
                    push("fit_seconds", std::chrono::duration<double>(t1 - t0).count());
                    for (std::size_t k = 0; k < truth.n_components(); ++k)
                        push("spectral_error_" + truth.labels()[k],
                             spectral_norm(fitted->sigmas()[k] - truth.sigmas()[k]));
                    push("heritability_error",
                         (detail::raw_heritability(*fitted, design.genetic_label) - h2_true)
                             .norm());
                    if (oracle) {
                        if (est == Estimator::uni_he || est == Estimator::uni_rehe) {
                            // diagonal estimates carry no cross-block information
                        } else if (est == Estimator::oracle) {
                            // the oracle coefficient achieves the oracle R2 by definition
                            double sum = 0.0;
                            for (std::size_t r = 0; r < oracle->responses.size(); ++r)
                                sum += latent_r2(oracle->true_correlation,
                                                 design.regression.partition,
                                                 oracle->responses[r], oracle->beta[r]) /
                                       oracle->r2[r];
                            const double ratio = sum / double(oracle->responses.size());
                            for (RegressionMethod m :
                                 {RegressionMethod::ridge, RegressionMethod::lasso,
                                  RegressionMethod::tensor})
                                push(std::string("r2_ratio_") + regression_method_name(m), ratio);
                        } else {
                            CorrelationResult corr =
                                to_correlation(fitted->component(design.genetic_label));
                            for (RegressionMethod m :
                                 {RegressionMethod::ridge, RegressionMethod::lasso,
                                  RegressionMethod::tensor})
                                push(std::string("r2_ratio_") + regression_method_name(m),
                                     detail::regression_ratio(corr.matrix, corr.kept,
                                                              design.regression, *oracle, m));
                        }
                    }
                } catch (const std::exception& e) {
                    res.failures.push_back({name, n, static_cast<int>(rep), e.what()});
                }
            }
        });

        for (auto& r : results) {
            report.rows.insert(report.rows.end(), r.rows.begin(), r.rows.end());
            report.failures.insert(report.failures.end(), r.failures.begin(), r.failures.end());
        }
    }
    return report;
}

}  // namespace vcomp
