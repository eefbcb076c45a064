#include <catch2/catch_amalgamated.hpp>

#include <vcomp/designs.hpp>
#include <vcomp/regression.hpp>
#include <vcomp/sampling.hpp>
#include <vcomp/solver.hpp>
#include <vcomp/sweep.hpp>

#include <chrono>
#include <cstdlib>

#include "helpers.hpp"

using namespace vcomp;
using Catch::Approx;

TEST_CASE("PSD square roots") {
    auto rng = rng_stream(70);
    const Eigen::MatrixXd s = helpers::random_psd(5, rng);
    const Eigen::MatrixXd root = psd_sqrt(s);
    REQUIRE((root * root - s).cwiseAbs().maxCoeff() < 1e-10);
    // singular MZ-pair kernel: Cholesky would fail, the eigen route must not
    Eigen::MatrixXd mz(2, 2);
    mz << 1, 1, 1, 1;
    const Eigen::MatrixXd mzroot = psd_sqrt(mz);
    REQUIRE((mzroot * mzroot - mz).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::MatrixXd indef(2, 2);
    indef << 1, 2, 2, 1;
    REQUIRE_THROWS_AS(psd_sqrt(indef), std::invalid_argument);
}

TEST_CASE("matrix-normal sampling") {
    SECTION("zero covariance gives the zero matrix") {
        StructureKernel k = StructureKernel::identity(6);
        const Eigen::MatrixXd y = sample_matrix_normal(k, Eigen::MatrixXd::Zero(3, 3), 5);
        REQUIRE(y.cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("an MZ-pair kernel forces identical rows") {
        Eigen::MatrixXd mz(2, 2);
        mz << 1, 1, 1, 1;
        StructureKernel k(mz, KernelKind::custom);
        const Eigen::MatrixXd y =
            sample_matrix_normal(k, Eigen::MatrixXd::Identity(3, 3), 11);
        REQUIRE((y.row(0) - y.row(1)).cwiseAbs().maxCoeff() < 1e-12);
        REQUIRE(y.cwiseAbs().maxCoeff() > 0.0);
    }
    SECTION("identity kernel and sigma: empirical column covariance near identity") {
        auto rng = rng_stream(71);
        const Eigen::Index n = 100000, q = 2;
        const Eigen::MatrixXd eye_q = Eigen::MatrixXd::Identity(q, q);
        // identity square roots: the draw is the raw normal matrix
        const Eigen::MatrixXd y = standard_normal_matrix(n, q, rng);
        const Eigen::MatrixXd cov = y.transpose() * y / double(n);
        REQUIRE((cov - eye_q).cwiseAbs().maxCoeff() < 0.02);
    }
    SECTION("vec covariance matches the Kronecker structure by Monte Carlo") {
        auto rng = rng_stream(72);
        const Eigen::Index n = 4, q = 2;
        Eigen::MatrixXd d(n, n);
        d.setIdentity();
        d(0, 1) = d(1, 0) = 0.5;
        Eigen::MatrixXd sigma = helpers::random_psd(q, rng);
        const Eigen::MatrixXd droot = psd_sqrt(d);
        const Eigen::MatrixXd sroot = psd_sqrt(sigma);
        const int reps = 100000;
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n * q, n * q);
        for (int r = 0; r < reps; ++r) {
            const Eigen::MatrixXd y = sample_matrix_normal_sqrt(droot, sroot, rng);
            const Eigen::Map<const Eigen::VectorXd> v(y.data(), n * q);
            acc.noalias() += v * v.transpose();
        }
        acc /= double(reps);
        Eigen::MatrixXd expected(n * q, n * q);
        for (Eigen::Index j = 0; j < q; ++j)
            for (Eigen::Index m = 0; m < q; ++m)
                expected.block(j * n, m * n, n, n) = sigma(j, m) * d;
        const double scale = expected.cwiseAbs().maxCoeff();
        REQUIRE((acc - expected).cwiseAbs().maxCoeff() < 0.05 * std::max(scale, 1.0));
    }
    SECTION("identical kernels collapse to the covariance sum") {
        auto rng = rng_stream(73);
        const Eigen::Index n = 3, q = 2;
        std::vector<Eigen::MatrixXd> sigmas = {helpers::random_psd(q, rng),
                                               helpers::random_psd(q, rng),
                                               helpers::random_psd(q, rng)};
        const Eigen::MatrixXd eye = Eigen::MatrixXd::Identity(n, n);
        const int reps = 200000;
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(q, q);
        std::vector<Eigen::MatrixXd> roots;
        for (const auto& s : sigmas) roots.push_back(psd_sqrt(s));
        for (int r = 0; r < reps; ++r) {
            Eigen::MatrixXd y = Eigen::MatrixXd::Zero(n, q);
            for (const auto& root : roots) y += sample_matrix_normal_sqrt(eye, root, rng);
            acc.noalias() += y.transpose() * y;
        }
        acc /= double(reps * n);
        const Eigen::MatrixXd total = sigmas[0] + sigmas[1] + sigmas[2];
        REQUIRE((acc - total).cwiseAbs().maxCoeff() < 0.05 * total.cwiseAbs().maxCoeff());
    }
}

TEST_CASE("low-dimensional ground truth generator") {
    CovarianceSet truth = make_lowdim_truth(5, 0.5, 42);
    REQUIRE(truth.n_components() == 3);
    REQUIRE(truth.all_certified());
    const Eigen::VectorXd h = heritability(truth);
    for (Eigen::Index j = 0; j < 5; ++j) REQUIRE(h(j) == Approx(0.5).epsilon(1e-10));
    // each component is a scaled correlation matrix: constant diagonal
    for (const auto& s : truth.sigmas())
        REQUIRE((s.diagonal().array() - s(0, 0)).abs().maxCoeff() < 1e-12);
    // deterministic in the seed
    CovarianceSet again = make_lowdim_truth(5, 0.5, 42);
    for (std::size_t k = 0; k < 3; ++k)
        REQUIRE((truth.sigmas()[k] - again.sigmas()[k]).cwiseAbs().maxCoeff() == 0.0);
    // uneven split between C and E
    CovarianceSet skew = make_lowdim_truth(4, 0.3, 7, 0.8);
    REQUIRE(skew.component("C")(0, 0) == Approx(0.7 * 0.8));
    REQUIRE(skew.component("E")(0, 0) == Approx(0.7 * 0.2));
    REQUIRE_THROWS_AS(make_lowdim_truth(4, 1.2, 1), std::invalid_argument);
}

TEST_CASE("connectome-style truth has the planted oracle R2 and heritability") {
    ConnectomeTruthConfig cfg;
    cfg.p = 4;
    cfg.n_responses = 6;
    ConnectomeTruth truth = make_connectome_truth(cfg, 99);
    REQUIRE(truth.sigmas.all_certified());
    REQUIRE(truth.partition.predictors.size() == 16);
    REQUIRE(truth.partition.responses.size() == 6);
    const Eigen::MatrixXd& g = truth.sigmas.component("G");
    for (std::size_t r = 0; r < truth.partition.responses.size(); ++r) {
        const Eigen::Index j = truth.partition.responses[r];
        const Eigen::VectorXd beta = latent_beta_unregularized(g, truth.partition, j);
        const double r2 = latent_r2(g, truth.partition, j, beta);
        REQUIRE(r2 == Approx(truth.oracle_r2(static_cast<Eigen::Index>(r))).epsilon(1e-8));
        REQUIRE(r2 >= cfg.r2_low - 1e-9);
        REQUIRE(r2 <= cfg.r2_high + 1e-9);
    }
    const Eigen::VectorXd h = heritability(truth.sigmas);
    REQUIRE(h.minCoeff() >= cfg.h2_low - 1e-9);
    REQUIRE(h.maxCoeff() <= cfg.h2_high + 1e-9);
}

TEST_CASE("family-mix pedigree recipe") {
    KernelRecipe recipe;  // defaults: 15% MZ, 10% DZ, 25% full-sib pairs
    Pedigree ped = make_family_mix_pedigree(40, recipe);
    int mz = 0, dz = 0, fs = 0, un = 0;
    for (const auto& r : ped.records()) {
        switch (r.relation) {
            case RelationClass::mz: ++mz; break;
            case RelationClass::dz: ++dz; break;
            case RelationClass::full_sib: ++fs; break;
            case RelationClass::unrelated: ++un; break;
            default: break;
        }
    }
    REQUIRE(mz == 6);
    REQUIRE(dz == 4);
    REQUIRE(fs == 10);
    REQUIRE(un == 20);
    // non-multiple sizes still build a valid identifiable spec
    for (Eigen::Index n : {37, 41, 95}) {
        ComponentSpec spec = make_family_mix_spec(n, recipe);
        REQUIRE(spec.n_subjects() == n);
        REQUIRE(std::isfinite(spec.gram_condition()));
    }
}

TEST_CASE("run_sweep is deterministic and the oracle row is exact") {
    SimulationDesign design(make_lowdim_truth(4, 0.4, 3));
    design.n_grid = {60, 120};
    design.replicates = 4;
    design.seed = 17;
    design.estimators = {Estimator::oracle, Estimator::mvrehe, Estimator::mvhe,
                         Estimator::uni_rehe};
    SimulationReport a = run_sweep(design);
    SimulationReport b = run_sweep(design);
    REQUIRE(a.rows.size() == b.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        REQUIRE(a.rows[i].metric == b.rows[i].metric);
        if (a.rows[i].metric != "fit_seconds")  // wall clock may differ
            REQUIRE(a.rows[i].value == b.rows[i].value);
    }
    REQUIRE(a.failures.empty());
    for (Eigen::Index n : design.n_grid) {
        for (const auto& label : {"E", "G", "C"}) {
            const auto vals = a.values("oracle", n, std::string("spectral_error_") + label);
            REQUIRE(vals.size() == 4);
            for (double v : vals) REQUIRE(v == 0.0);
        }
        for (double v : a.values("oracle", n, "heritability_error")) REQUIRE(v == 0.0);
    }
    // thread cap must not affect results
    setenv("VCOMP_THREADS", "2", 1);
    SimulationReport c = run_sweep(design);
    unsetenv("VCOMP_THREADS");
    for (std::size_t i = 0; i < a.rows.size(); ++i)
        if (a.rows[i].metric != "fit_seconds") REQUIRE(a.rows[i].value == c.rows[i].value);
}

TEST_CASE("sweep records regression ratios with the oracle pinned at one") {
    ConnectomeTruthConfig cfg;
    cfg.p = 3;
    cfg.n_responses = 4;
    ConnectomeTruth truth = make_connectome_truth(cfg, 5);
    SimulationDesign design(truth.sigmas);
    design.n_grid = {150};
    design.replicates = 2;
    design.seed = 9;
    design.estimators = {Estimator::oracle, Estimator::mvrehe};
    design.regression.enabled = true;
    design.regression.partition = truth.partition;
    SimulationReport rep = run_sweep(design);
    REQUIRE(rep.failures.empty());
    for (const auto* metric : {"r2_ratio_ridge", "r2_ratio_lasso", "r2_ratio_tensor"}) {
        const auto oracle_vals = rep.values("oracle", 150, metric);
        REQUIRE(oracle_vals.size() == 2);
        for (double v : oracle_vals) REQUIRE(v == 1.0);
        const auto est_vals = rep.values("mvrehe", 150, metric);
        REQUIRE(est_vals.size() == 2);
        for (double v : est_vals) REQUIRE(v <= 1.0 + 1e-9);
    }
}

TEST_CASE("median helper") {
    REQUIRE(median({3.0, 1.0, 2.0}) == 2.0);
    REQUIRE(median({4.0, 1.0, 2.0, 3.0}) == 2.5);
    REQUIRE_THROWS_AS(median({}), std::invalid_argument);
}

TEST_CASE("estimator name round trip") {
    for (Estimator e : {Estimator::oracle, Estimator::mvhe, Estimator::mvhe_raw,
                        Estimator::mvrehe, Estimator::uni_he, Estimator::uni_rehe})
        REQUIRE(estimator_from_string(estimator_name(e)) == e);
    REQUIRE_THROWS_AS(estimator_from_string("reml"), std::invalid_argument);
}

TEST_CASE("mvrehe runtime depends on min(n, q), not q", "[runtime]") {
    const Eigen::Index n = 200;
    KernelRecipe recipe;
    const ComponentSpec spec = make_family_mix_spec(n, recipe);
    std::vector<Eigen::MatrixXd> kernel_roots;
    for (const auto& k : spec.kernels()) kernel_roots.push_back(psd_sqrt(k.matrix()));
    auto time_fit = [&](Eigen::Index q) {
        auto rng = rng_stream(1234, {static_cast<std::uint64_t>(q)});
        CovarianceSet truth = make_lowdim_truth(q, 0.4, 2);
        Eigen::MatrixXd yv = Eigen::MatrixXd::Zero(n, q);
        for (std::size_t k = 0; k < 3; ++k)
            yv += sample_matrix_normal_sqrt(kernel_roots[k], psd_sqrt(truth.sigmas()[k]), rng);
        TraitMatrix y = TraitMatrix::from_values(std::move(yv));
        double best = 1e100;
        for (int rep = 0; rep < 2; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            FitResult fit = mvrehe_fit(y, spec);
            const auto t1 = std::chrono::steady_clock::now();
            best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
            REQUIRE(fit.sigmas.all_certified());
        }
        return best;
    };
    const double t200 = time_fit(200);
    const double t1000 = time_fit(1000);
    INFO("q=200: " << t200 << "s, q=1000: " << t1000 << "s");
    REQUIRE(t1000 < 2.0 * t200 + 0.5);  // small absolute slack for the SVD overhead
}
