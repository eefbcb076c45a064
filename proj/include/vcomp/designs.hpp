#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "vcomp/covariance_set.hpp"
#include "vcomp/pedigree.hpp"
#include "vcomp/regression.hpp"
#include "vcomp/rng.hpp"
#include "vcomp/structure_kernel.hpp"

namespace vcomp {

/// Synthetic family mix replicated block-diagonally to reach a target sample
/// size. Fractions are by subject count; the base block keeps them integral.
struct KernelRecipe {
    Eigen::Index base_size = 40;
    double mz_fraction = 0.15;
    double dz_fraction = 0.10;
    double sib_fraction = 0.25;  // full-sibling pairs; remainder are singletons

    void validate() const {
        if (base_size < 2) throw std::invalid_argument("base_size must be at least 2");
        if (mz_fraction < 0 || dz_fraction < 0 || sib_fraction < 0 ||
            mz_fraction + dz_fraction + sib_fraction > 1.0)
            throw std::invalid_argument("family-mix fractions must be nonnegative and sum to <= 1");
    }
};

/// Pedigree realizing the recipe for n subjects: pair types fill the base
/// block in order (MZ, DZ, full-sib pairs, singletons), and the block repeats
/// until n subjects exist. Truncation may orphan one pair member, which
/// simply leaves that subject unrelated.
inline Pedigree make_family_mix_pedigree(Eigen::Index n, const KernelRecipe& recipe) {
    recipe.validate();
    auto pair_count = [&](double frac) {
        return static_cast<Eigen::Index>(std::llround(frac * double(recipe.base_size) / 2.0));
    };
    const Eigen::Index mz_pairs = pair_count(recipe.mz_fraction);
    const Eigen::Index dz_pairs = pair_count(recipe.dz_fraction);
    const Eigen::Index sib_pairs = pair_count(recipe.sib_fraction);

    std::vector<PedigreeRecord> records;
    records.reserve(static_cast<std::size_t>(n));
    Eigen::Index subject = 0, family = 0;
    auto subject_id = [&] { return "s" + std::to_string(++subject); };
    while (subject < n) {
        Eigen::Index placed = 0;
        auto add_pair = [&](RelationClass rc, bool twin) {
            const std::string fam = "f" + std::to_string(++family);
            const std::string pair = twin ? fam + "_tw" : "";
            records.push_back({subject_id(), fam, rc, pair});
            if (subject < n) records.push_back({subject_id(), fam, rc, pair});
            placed += 2;
        };
        for (Eigen::Index i = 0; i < mz_pairs && subject < n; ++i) add_pair(RelationClass::mz, true);
        for (Eigen::Index i = 0; i < dz_pairs && subject < n; ++i) add_pair(RelationClass::dz, true);
        for (Eigen::Index i = 0; i < sib_pairs && subject < n; ++i)
            add_pair(RelationClass::full_sib, false);
        while (placed < recipe.base_size && subject < n) {
            const std::string fam = "f" + std::to_string(++family);
            records.push_back({subject_id(), fam, RelationClass::unrelated, ""});
            ++placed;
        }
    }
    // a truncated twin pair would have one orphan member: demote it
    if (!records.empty() &&
        (records.back().relation == RelationClass::mz ||
         records.back().relation == RelationClass::dz) &&
        (records.size() < 2 || records[records.size() - 2].pair_id != records.back().pair_id)) {
        records.back().relation = RelationClass::unrelated;
        records.back().pair_id.clear();
    }
    return Pedigree(std::move(records));
}

/// Standard ACE component spec (identity, kinship, household) for n subjects
/// under the family-mix recipe.
inline ComponentSpec make_family_mix_spec(Eigen::Index n, const KernelRecipe& recipe) {
    Pedigree ped = make_family_mix_pedigree(n, recipe);
    std::vector<std::string> order;
    order.reserve(ped.records().size());
    for (const auto& r : ped.records()) order.push_back(r.subject_id);
    StructureKernel kin = build_kinship(ped, order);
    StructureKernel hh = build_household(kin);
    return ComponentSpec::ace(kin, hh);
}

namespace detail {

/// Random correlation matrix: normalized Gram of a q x (q + extra) standard
/// normal matrix. extra > 0 keeps the spectrum away from zero.
inline Eigen::MatrixXd random_correlation(Eigen::Index q, std::mt19937_64& rng,
                                          Eigen::Index extra = 0) {
    Eigen::MatrixXd z = standard_normal_matrix(q, q + extra, rng);
    Eigen::MatrixXd gram = z * z.transpose();
    Eigen::VectorXd d = gram.diagonal().cwiseSqrt().cwiseInverse();
    Eigen::MatrixXd c = d.asDiagonal() * gram * d.asDiagonal();
    c.diagonal().setOnes();
    return ((c + c.transpose()) / 2.0).eval();
}

}  // namespace detail

/// Low-dimensional ground truth: one random correlation matrix per component,
/// scaled so every trait's heritability equals the target. The remaining
/// variance splits between common and unique environment by common_env_share.
inline CovarianceSet make_lowdim_truth(Eigen::Index q, double heritability_target,
                                       std::uint64_t rng_seed, double common_env_share = 0.5) {
    if (!(heritability_target > 0.0 && heritability_target < 1.0))
        throw std::invalid_argument("heritability target must lie in (0, 1)");
    if (!(common_env_share >= 0.0 && common_env_share <= 1.0))
        throw std::invalid_argument("common_env_share must lie in [0, 1]");
    auto rng = rng_stream(rng_seed, {0x10u});
    const double rest = 1.0 - heritability_target;
    std::vector<Eigen::MatrixXd> sigmas = {
        rest * (1.0 - common_env_share) * detail::random_correlation(q, rng),
        heritability_target * detail::random_correlation(q, rng),
        rest * common_env_share * detail::random_correlation(q, rng)};
    return CovarianceSet(std::move(sigmas), {"E", "G", "C"}, {true, true, true});
}

/// Connectome-style ground truth with a planted structure-to-function
/// genetic coupling. The predictor block is the column-major vectorization
/// of a p x p matrix (|S| = p^2); the remaining traits are responses. The
/// genetic cross-block is rank `coupling_rank`, and residual response
/// variances are set so each response's oracle latent R2 equals a value
/// drawn uniformly from [r2_low, r2_high]. The per-trait heritability
/// profile is drawn uniformly from [h2_low, h2_high].
struct ConnectomeTruthConfig {
    Eigen::Index p = 10;             // predictor block is p*p
    Eigen::Index n_responses = 100;  // traits beyond the predictor block
    int coupling_rank = 3;
    double r2_low = 0.2, r2_high = 0.6;
    double h2_low = 0.3, h2_high = 0.5;
    double common_env_share = 0.35;  // of the non-genetic variance
};

struct ConnectomeTruth {
    CovarianceSet sigmas;
    BlockPartition partition;
    Eigen::VectorXd oracle_r2;  // per response, by construction
};

inline ConnectomeTruth make_connectome_truth(const ConnectomeTruthConfig& cfg,
                                             std::uint64_t rng_seed) {
    const Eigen::Index ns = cfg.p * cfg.p;
    const Eigen::Index nf = cfg.n_responses;
    const Eigen::Index q = ns + nf;
    auto rng = rng_stream(rng_seed, {0x200u});
    std::uniform_real_distribution<double> unif(0.0, 1.0);

    const Eigen::MatrixXd c_ss = detail::random_correlation(ns, rng, ns / 2);
    // coupling factors are vectorized rank-one p x p matrices, so every
    // response's true coefficient matrix has rank <= coupling_rank
    const Eigen::MatrixXd w_left = standard_normal_matrix(nf, cfg.coupling_rank, rng);
    Eigen::MatrixXd w_right(cfg.coupling_rank, ns);
    for (int r = 0; r < cfg.coupling_rank; ++r) {
        const Eigen::VectorXd a = standard_normal_vector(cfg.p, rng);
        const Eigen::VectorXd b = standard_normal_vector(cfg.p, rng);
        const Eigen::MatrixXd outer = a * b.transpose();
        w_right.row(r) = Eigen::Map<const Eigen::VectorXd>(outer.data(), ns).transpose();
    }
    Eigen::MatrixXd w = w_left * w_right / std::sqrt(double(ns));
    const Eigen::MatrixXd wc = w * c_ss;
    const Eigen::MatrixXd explained = wc * w.transpose();

    Eigen::VectorXd rho(nf);
    for (Eigen::Index j = 0; j < nf; ++j)
        rho(j) = cfg.r2_low + (cfg.r2_high - cfg.r2_low) * unif(rng);
    Eigen::VectorXd resid_scale(nf);
    for (Eigen::Index j = 0; j < nf; ++j)
        resid_scale(j) = std::sqrt(explained(j, j) * (1.0 - rho(j)) / rho(j));
    const Eigen::MatrixXd c_res = detail::random_correlation(nf, rng, nf / 2);

    Eigen::MatrixXd sigma_g(q, q);
    sigma_g.topLeftCorner(ns, ns) = c_ss;
    sigma_g.topRightCorner(ns, nf) = wc.transpose();
    sigma_g.bottomLeftCorner(nf, ns) = wc;
    sigma_g.bottomRightCorner(nf, nf) =
        explained + resid_scale.asDiagonal() * c_res * resid_scale.asDiagonal();
    sigma_g = ((sigma_g + sigma_g.transpose()) / 2.0).eval();

    // environment components scaled per trait to hit the heritability profile
    Eigen::VectorXd h2(q);
    for (Eigen::Index j = 0; j < q; ++j)
        h2(j) = cfg.h2_low + (cfg.h2_high - cfg.h2_low) * unif(rng);
    Eigen::VectorXd env_total(q);
    for (Eigen::Index j = 0; j < q; ++j)
        env_total(j) = sigma_g(j, j) * (1.0 - h2(j)) / h2(j);
    const Eigen::VectorXd c_scale = (env_total * cfg.common_env_share).cwiseSqrt();
    const Eigen::VectorXd e_scale = (env_total * (1.0 - cfg.common_env_share)).cwiseSqrt();
    Eigen::MatrixXd sigma_c =
        c_scale.asDiagonal() * detail::random_correlation(q, rng, q / 2) * c_scale.asDiagonal();
    Eigen::MatrixXd sigma_e =
        e_scale.asDiagonal() * detail::random_correlation(q, rng, q / 2) * e_scale.asDiagonal();

    ConnectomeTruth out{
        CovarianceSet({std::move(sigma_e), std::move(sigma_g), std::move(sigma_c)},
                      {"E", "G", "C"}, {true, true, true}),
        BlockPartition{}, std::move(rho)};
    for (Eigen::Index i = 0; i < ns; ++i) out.partition.predictors.push_back(i);
    for (Eigen::Index j = 0; j < nf; ++j) out.partition.responses.push_back(ns + j);
    out.partition.matrix_dim = cfg.p;
    return out;
}

}  // namespace vcomp
