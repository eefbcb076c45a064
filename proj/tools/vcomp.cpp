// vcomp: batch front-end for latent-component covariance estimation,
// regularized latent regression, simulation sweeps, and covariance smoothing.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <vcomp/cross_fit.hpp>
#include <vcomp/designs.hpp>
#include <vcomp/io.hpp>
#include <vcomp/preprocess.hpp>
#include <vcomp/regression.hpp>
#include <vcomp/solver.hpp>
#include <vcomp/smoothing.hpp>
#include <vcomp/sweep.hpp>

namespace {

constexpr int exit_ok = 0;
constexpr int exit_validation = 2;
constexpr int exit_flagged = 3;
constexpr int exit_internal = 4;

using nlohmann::json;

struct SolverFlags {
    int max_iterations = 500;
    double tolerance = 1e-8;
    std::string svd = "auto";
    std::string init = "zeros";

    vcomp::SolveOptions to_options() const {
        json j{{"max_iterations", max_iterations},
               {"tolerance", tolerance},
               {"svd_reduction", svd},
               {"initialization", init}};
        return vcomp::io::solve_options_from_json(j);
    }
};

void add_solver_flags(CLI::App* cmd, SolverFlags& flags) {
    cmd->add_option("--max-iterations", flags.max_iterations, "solver iteration cap");
    cmd->add_option("--tolerance", flags.tolerance, "relative objective-change threshold");
    cmd->add_option("--svd-reduction", flags.svd, "auto|on|off");
    cmd->add_option("--init", flags.init, "zeros|mvhe-truncated");
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config file: " + path);
    return json::parse(in);
}

/// Trait data plus the component spec assembled from a pedigree or from
/// explicit kernel CSVs.
struct LoadedData {
    vcomp::TraitMatrix traits;
    vcomp::ComponentSpec spec;
};

LoadedData load_data(const std::string& traits_path, const std::string& pedigree_path,
                     const std::vector<std::pair<std::string, std::string>>& kernel_files) {
    vcomp::TraitMatrix traits = vcomp::io::read_trait_matrix(traits_path);
    if (!pedigree_path.empty() && !kernel_files.empty())
        throw std::invalid_argument("give either a pedigree or kernel files, not both");
    if (pedigree_path.empty() && kernel_files.empty())
        throw std::invalid_argument("either a pedigree or kernel files are required");
    if (!pedigree_path.empty()) {
        vcomp::Pedigree ped = vcomp::io::read_pedigree(pedigree_path);
        vcomp::StructureKernel kin = vcomp::build_kinship(ped, traits.subject_ids());
        vcomp::StructureKernel hh = vcomp::build_household(kin);
        return {std::move(traits), vcomp::ComponentSpec::ace(kin, hh)};
    }
    std::vector<vcomp::StructureKernel> kernels;
    std::vector<std::string> labels;
    kernels.push_back(vcomp::StructureKernel::identity(traits.n_subjects()));
    labels.push_back("E");
    for (const auto& [label, path] : kernel_files) {
        kernels.push_back(vcomp::io::read_kernel(path, traits.subject_ids()));
        labels.push_back(label);
        if (kernels.back().psd_warning())
            std::cerr << "warning: custom kernel '" << label
                      << "' has smallest eigenvalue below tolerance\n";
    }
    return {std::move(traits), vcomp::ComponentSpec(std::move(kernels), std::move(labels))};
}

/// residualize (against covariates, or intercept only) then standardize;
/// this fixed order is recorded in output metadata.
struct Preprocessed {
    vcomp::TraitMatrix traits;
    Eigen::VectorXd scale;
    std::vector<std::string> steps;
};

Preprocessed preprocess(const vcomp::TraitMatrix& traits, const std::string& covariates_path) {
    vcomp::CovariateMatrix cov =
        covariates_path.empty()
            ? vcomp::CovariateMatrix::intercept_only(traits.n_subjects())
            : vcomp::io::read_covariates(covariates_path, traits.subject_ids()).covariates;
    vcomp::TraitMatrix resid = vcomp::residualize(traits, cov);
    vcomp::StandardizeResult std_res = vcomp::standardize_columns(resid);
    return {std::move(std_res.traits), std::move(std_res.scale),
            {"residualize", "standardize"}};
}

int run_estimate(const std::string& traits_path, const std::string& pedigree_path,
                 const std::vector<std::pair<std::string, std::string>>& kernel_files,
                 const std::string& covariates_path, const std::string& estimator,
                 bool no_truncate, const SolverFlags& flags, const std::string& out_dir) {
    std::optional<LoadedData> data;
    std::optional<Preprocessed> prep;
    vcomp::SolveOptions opts;
    try {
        opts = flags.to_options();
        if (estimator != "mvrehe" && estimator != "mvhe")
            throw std::invalid_argument("estimator must be mvrehe or mvhe");
        data.emplace(load_data(traits_path, pedigree_path, kernel_files));
        prep.emplace(preprocess(data->traits, covariates_path));
    } catch (const std::exception& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return exit_validation;
    }
    try {
        vcomp::FitResult fit = (estimator == "mvrehe")
                                   ? vcomp::mvrehe_fit(prep->traits, data->spec, opts)
                                   : vcomp::mvhe_fit(prep->traits, data->spec, !no_truncate,
                                                     opts.svd_reduction);
        // back-scale to original trait units
        std::vector<Eigen::MatrixXd> sigmas;
        for (const auto& s : fit.sigmas.sigmas())
            sigmas.push_back(vcomp::back_scale(s, prep->scale));
        vcomp::CovarianceSet scaled(std::move(sigmas), fit.sigmas.labels(),
                                    fit.sigmas.psd_certified());
        vcomp::io::EstimateMetadata meta;
        meta.estimator = no_truncate && estimator == "mvhe" ? "mvhe_raw" : estimator;
        meta.n = prep->traits.n_subjects();
        meta.trait_ids = prep->traits.trait_ids();
        meta.scale = prep->scale;
        meta.preprocessing = prep->steps;
        meta.options = opts;
        meta.diagnostics = fit.diagnostics;
        vcomp::io::write_covariance_set(out_dir, scaled, meta);
        if (!fit.diagnostics.converged) {
            std::cerr << "warning: solver did not converge within " << opts.max_iterations
                      << " iterations; outputs are flagged\n";
            return exit_flagged;
        }
        std::cout << "wrote " << out_dir << "/manifest.json (objective "
                  << fit.diagnostics.objective << ", " << fit.diagnostics.iterations
                  << " iterations)\n";
        return exit_ok;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_internal;
    }
}

std::string component_label_for(const std::string& component) {
    if (component == "genetic") return "G";
    if (component == "common") return "C";
    if (component == "unique") return "E";
    if (component == "observed") return "observed";
    throw std::invalid_argument("component must be genetic, common, unique, or observed");
}

vcomp::BlockPartition partition_from_json(const json& j,
                                          const std::vector<std::string>& trait_ids) {
    vcomp::BlockPartition part;
    auto index_of = [&](const json& e) -> Eigen::Index {
        if (e.is_number_integer()) return e.get<Eigen::Index>();
        const std::string id = e.get<std::string>();
        for (std::size_t i = 0; i < trait_ids.size(); ++i)
            if (trait_ids[i] == id) return static_cast<Eigen::Index>(i);
        throw std::invalid_argument("unknown trait id '" + id + "' in partition");
    };
    for (const auto& e : j.at("predictors")) part.predictors.push_back(index_of(e));
    for (const auto& e : j.at("responses")) part.responses.push_back(index_of(e));
    if (j.contains("matrix_dim")) part.matrix_dim = j.at("matrix_dim").get<Eigen::Index>();
    return part;
}

vcomp::RegressionGrids grids_from_json(const json& cfg) {
    vcomp::RegressionGrids grids = vcomp::RegressionGrids::defaults();
    if (!cfg.contains("grids")) return grids;
    const json& g = cfg.at("grids");
    if (g.contains("ridge_lambdas")) grids.ridge_lambdas = g.at("ridge_lambdas").get<std::vector<double>>();
    if (g.contains("lasso_lambdas")) grids.lasso_lambdas = g.at("lasso_lambdas").get<std::vector<double>>();
    if (g.contains("tensor_ranks")) grids.tensor_ranks = g.at("tensor_ranks").get<std::vector<int>>();
    if (g.contains("tensor_lambdas")) grids.tensor_lambdas = g.at("tensor_lambdas").get<std::vector<double>>();
    return grids;
}

int run_regress(const std::string& config_path, const std::string& component,
                const std::string& out_dir) {
    std::optional<LoadedData> data;
    std::optional<Preprocessed> prep;
    vcomp::BlockPartition part;
    vcomp::RegressionGrids grids;
    vcomp::SolveOptions opts;
    std::string label;
    int n_splits = 10;
    std::uint64_t seed = 1;
    try {
        const json cfg = load_json_file(config_path);
        label = component_label_for(component);
        std::vector<std::pair<std::string, std::string>> kernel_files;
        if (cfg.contains("kernels"))
            for (const auto& [k, v] : cfg.at("kernels").items())
                kernel_files.emplace_back(k, v.get<std::string>());
        data.emplace(load_data(cfg.at("traits").get<std::string>(),
                               cfg.value("pedigree", std::string()), kernel_files));
        prep.emplace(preprocess(data->traits, cfg.value("covariates", std::string())));
        part = partition_from_json(cfg.at("partition"), data->traits.trait_ids());
        part.validate(data->traits.n_traits());
        grids = grids_from_json(cfg);
        n_splits = cfg.value("n_splits", 10);
        seed = cfg.value("seed", std::uint64_t{1});
        if (cfg.contains("solve_options"))
            opts = vcomp::io::solve_options_from_json(cfg.at("solve_options"));
        if (label != "observed") data->spec.component_index(label);
    } catch (const std::exception& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return exit_validation;
    }
    try {
        std::filesystem::create_directories(out_dir);
        vcomp::TuningResult tuning = vcomp::cross_fit_select(prep->traits, data->spec, part,
                                                             label, grids, n_splits, seed, opts);
        const auto& trait_ids = prep->traits.trait_ids();
        json tuning_json = vcomp::io::tuning_to_json(tuning, trait_ids);

        // refit the selected candidate per response on the full-data estimate
        vcomp::FitResult full = vcomp::mvrehe_fit(prep->traits, data->spec, opts);
        const Eigen::MatrixXd sigma =
            (label == "observed") ? full.sigmas.total() : full.sigmas.component(label);
        vcomp::CorrelationResult corr = vcomp::to_correlation(sigma);
        std::vector<std::string> predictor_ids;
        for (Eigen::Index i : part.predictors)
            predictor_ids.push_back(trait_ids[static_cast<std::size_t>(i)]);
        json failures = json::array();
        for (const auto& rt : tuning.responses) {
            const std::string response_id = trait_ids[static_cast<std::size_t>(rt.response)];
            try {
                if (!rt.has_selection)
                    throw std::runtime_error("no split evaluation succeeded");
                if (corr.kept.size() != static_cast<std::size_t>(sigma.rows()))
                    throw std::runtime_error("full-data estimate dropped zero-variance traits");
                const auto& sel = rt.grid[rt.selected];
                vcomp::LatentRegressionFit fit;
                switch (sel.method) {
                    case vcomp::RegressionMethod::ridge:
                        fit = vcomp::fit_ridge(corr.matrix, part, rt.response, sel.lambda);
                        break;
                    case vcomp::RegressionMethod::lasso:
                        fit = vcomp::fit_lasso(corr.matrix, part, rt.response, sel.lambda);
                        break;
                    case vcomp::RegressionMethod::tensor: {
                        vcomp::TensorOptions topts;
                        topts.seed = seed + static_cast<std::uint64_t>(rt.response);
                        fit = vcomp::fit_tensor(corr.matrix, part, rt.response, sel.rank,
                                                sel.lambda, topts);
                        break;
                    }
                }
                fit.r2_out_of_sample = sel.mean_r2_out;
                json fj = vcomp::io::fit_to_json(fit, predictor_ids, response_id);
                std::ofstream out(std::filesystem::path(out_dir) /
                                  ("fit_" + response_id + ".json"));
                out << fj.dump(2) << '\n';
            } catch (const std::exception& e) {
                failures.push_back({{"response_id", response_id}, {"error", e.what()}});
            }
        }
        tuning_json["refit_failures"] = failures;
        std::ofstream out(std::filesystem::path(out_dir) / "tuning.json");
        out << tuning_json.dump(2) << '\n';
        std::cout << "wrote " << out_dir << "/tuning.json (" << tuning.responses.size()
                  << " responses, component " << label << ")\n";
        return exit_ok;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_internal;
    }
}

vcomp::CovarianceSet truth_from_json(const json& t) {
    const std::string kind = t.at("kind").get<std::string>();
    if (kind == "lowdim") {
        return vcomp::make_lowdim_truth(t.at("q").get<Eigen::Index>(),
                                        t.value("heritability", 0.5),
                                        t.value("truth_seed", std::uint64_t{1}),
                                        t.value("common_env_share", 0.5));
    }
    if (kind == "connectome") {
        vcomp::ConnectomeTruthConfig cfg;
        cfg.p = t.value("p", Eigen::Index{10});
        cfg.n_responses = t.value("n_responses", Eigen::Index{100});
        cfg.coupling_rank = t.value("coupling_rank", 3);
        cfg.r2_low = t.value("r2_low", 0.2);
        cfg.r2_high = t.value("r2_high", 0.6);
        cfg.h2_low = t.value("h2_low", 0.3);
        cfg.h2_high = t.value("h2_high", 0.5);
        cfg.common_env_share = t.value("common_env_share", 0.35);
        return vcomp::make_connectome_truth(cfg, t.value("truth_seed", std::uint64_t{1})).sigmas;
    }
    if (kind == "files")
        return vcomp::io::read_covariance_set(t.at("manifest").get<std::string>()).sigmas;
    throw std::invalid_argument("truth kind must be lowdim, connectome, or files");
}

int run_simulate(const std::string& design_path, const std::string& out_dir) {
    std::optional<vcomp::SimulationDesign> design;
    try {
        const json cfg = load_json_file(design_path);
        design.emplace(truth_from_json(cfg.at("truth")));
        for (const auto& n : cfg.at("n_grid")) design->n_grid.push_back(n.get<Eigen::Index>());
        design->replicates = cfg.value("replicates", 20);
        design->seed = cfg.value("seed", std::uint64_t{0});
        if (cfg.contains("kernel_recipe")) {
            const json& r = cfg.at("kernel_recipe");
            design->recipe.base_size = r.value("base_size", Eigen::Index{40});
            design->recipe.mz_fraction = r.value("mz_fraction", 0.15);
            design->recipe.dz_fraction = r.value("dz_fraction", 0.10);
            design->recipe.sib_fraction = r.value("sib_fraction", 0.25);
        }
        if (cfg.contains("estimators")) {
            design->estimators.clear();
            for (const auto& e : cfg.at("estimators"))
                design->estimators.push_back(vcomp::estimator_from_string(e.get<std::string>()));
        }
        if (cfg.contains("solve_options"))
            design->solve_options = vcomp::io::solve_options_from_json(cfg.at("solve_options"));
        if (cfg.contains("regression")) {
            const json& r = cfg.at("regression");
            design->regression.enabled = r.value("enabled", true);
            if (design->regression.enabled) {
                if (r.contains("partition")) {
                    design->regression.partition =
                        partition_from_json(r.at("partition"), {});
                } else if (cfg.at("truth").at("kind").get<std::string>() == "connectome") {
                    vcomp::ConnectomeTruthConfig tcfg;
                    const json& t = cfg.at("truth");
                    tcfg.p = t.value("p", Eigen::Index{10});
                    tcfg.n_responses = t.value("n_responses", Eigen::Index{100});
                    design->regression.partition =
                        vcomp::make_connectome_truth(tcfg, t.value("truth_seed", std::uint64_t{1}))
                            .partition;
                } else {
                    throw std::invalid_argument(
                        "regression requires a partition unless the truth kind is connectome");
                }
                design->regression.ridge_lambda = r.value("ridge_lambda", 1e-3);
                design->regression.lasso_lambda = r.value("lasso_lambda", 1e-3);
                design->regression.tensor_rank = r.value("tensor_rank", 3);
                design->regression.tensor_lambda = r.value("tensor_lambda", 1e-3);
                if (r.contains("responses"))
                    for (const auto& e : r.at("responses"))
                        design->regression.responses.push_back(e.get<Eigen::Index>());
            }
        }
        design->validate();
    } catch (const std::exception& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return exit_validation;
    }
    try {
        vcomp::SimulationReport report = vcomp::run_sweep(*design);
        vcomp::io::write_simulation_report(out_dir, report, *design);
        std::cout << "wrote " << out_dir << "/metrics.csv (" << report.rows.size()
                  << " metric rows, " << report.failures.size() << " failures)\n";
        return exit_ok;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_internal;
    }
}

int run_smooth(const std::string& manifest_path, const std::string& grid_path,
               const std::string& out_dir, double bandwidth) {
    std::optional<vcomp::io::LoadedCovarianceSet> loaded;
    std::optional<vcomp::FunctionalGrid> grid;
    try {
        loaded.emplace(vcomp::io::read_covariance_set(manifest_path));
        grid.emplace(vcomp::io::read_grid(grid_path));
        if (grid->size() != loaded->sigmas.n_traits())
            throw std::invalid_argument("grid length (" + std::to_string(grid->size()) +
                                        ") does not match trait count (" +
                                        std::to_string(loaded->sigmas.n_traits()) + ")");
    } catch (const std::exception& e) {
        std::cerr << "validation error: " << e.what() << '\n';
        return exit_validation;
    }
    try {
        const auto& cs = loaded->sigmas;
        for (std::size_t k = 0; k < cs.n_components(); ++k) {
            vcomp::SmoothedCovariance sm =
                vcomp::smooth_covariance(cs.sigmas()[k], *grid, bandwidth);
            if (k == 0)  // component 0 is the identity-kernel slot
                sm.noise_variance = vcomp::estimate_noise_variance(cs.sigmas()[k], sm);
            vcomp::io::write_smoothed_covariance(out_dir, cs.labels()[k], sm);
        }
        std::cout << "wrote smoothed surfaces for " << cs.n_components() << " components to "
                  << out_dir << '\n';
        return exit_ok;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return exit_internal;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"variance-component covariance estimation and latent regression"};
    app.require_subcommand(1);
    int threads = 0;
    app.add_option("--threads", threads, "cap the worker pool (overrides VCOMP_THREADS)");

    // estimate
    auto* est = app.add_subcommand("estimate", "estimate component covariance matrices");
    std::string traits_path, pedigree_path, covariates_path, out_dir;
    std::vector<std::string> kernel_flags;
    std::string estimator = "mvrehe";
    bool no_truncate = false;
    SolverFlags est_flags;
    est->add_option("--traits", traits_path, "trait matrix CSV")->required();
    est->add_option("--pedigree", pedigree_path, "pedigree CSV");
    est->add_option("--kernel", kernel_flags,
                    "custom kernel as LABEL=path.csv (repeatable; identity added as E)");
    est->add_option("--covariates", covariates_path, "covariate CSV");
    est->add_option("--estimator", estimator, "mvrehe|mvhe");
    est->add_flag("--no-truncate", no_truncate, "with mvhe: skip the PSD truncation");
    est->add_option("--out", out_dir, "output directory")->required();
    add_solver_flags(est, est_flags);

    // regress
    auto* reg = app.add_subcommand("regress", "tune and fit latent-component regressions");
    std::string reg_config, reg_component = "genetic", reg_out;
    reg->add_option("--config", reg_config, "run configuration JSON")->required();
    reg->add_option("--component", reg_component, "genetic|common|unique|observed");
    reg->add_option("--out", reg_out, "output directory")->required();

    // simulate
    auto* sim = app.add_subcommand("simulate", "run a simulation sweep");
    std::string sim_design, sim_out;
    sim->add_option("--design", sim_design, "simulation design JSON")->required();
    sim->add_option("--out", sim_out, "output directory")->required();

    // smooth
    auto* smo = app.add_subcommand("smooth", "smooth estimated covariances into surfaces");
    std::string smo_manifest, smo_grid, smo_out;
    double smo_bandwidth = 0.0;
    smo->add_option("--manifest", smo_manifest, "covariance-set manifest.json")->required();
    smo->add_option("--grid", smo_grid, "grid CSV (single column of timepoints)")->required();
    smo->add_option("--bandwidth", smo_bandwidth, "fixed bandwidth (default: GCV selection)");
    smo->add_option("--out", smo_out, "output directory")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? exit_ok : exit_validation;
    }
    if (threads > 0) setenv("VCOMP_THREADS", std::to_string(threads).c_str(), 1);

    try {
        if (est->parsed()) {
            std::vector<std::pair<std::string, std::string>> kernel_files;
            for (const auto& kf : kernel_flags) {
                const auto pos = kf.find('=');
                if (pos == std::string::npos) {
                    std::cerr << "validation error: --kernel expects LABEL=path\n";
                    return exit_validation;
                }
                kernel_files.emplace_back(kf.substr(0, pos), kf.substr(pos + 1));
            }
            return run_estimate(traits_path, pedigree_path, kernel_files, covariates_path,
                                estimator, no_truncate, est_flags, out_dir);
        }
        if (reg->parsed()) return run_regress(reg_config, reg_component, reg_out);
        if (sim->parsed()) return run_simulate(sim_design, sim_out);
        if (smo->parsed()) return run_smooth(smo_manifest, smo_grid, smo_out, smo_bandwidth);
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << '\n';
        return exit_internal;
    }
    return exit_validation;
}
