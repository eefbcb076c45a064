#pragma once

#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "vcomp/covariance_set.hpp"
#include "vcomp/cross_fit.hpp"
#include "vcomp/csv.hpp"
#include "vcomp/pedigree.hpp"
#include "vcomp/smoothing.hpp"
#include "vcomp/solver.hpp"
#include "vcomp/sweep.hpp"
#include "vcomp/trait_matrix.hpp"

namespace vcomp {

namespace io {

/// Generic labeled-matrix CSV: header is corner label + column ids, each row
/// is a row id followed by values.
struct LabeledMatrix {
    Eigen::MatrixXd values;
    std::vector<std::string> row_ids;
    std::vector<std::string> col_ids;
};

inline LabeledMatrix read_labeled_matrix(const std::string& path) {
    const auto rows = csv::read_table(path);
    if (rows.size() < 2 || rows.front().size() < 2)
        throw std::runtime_error("file " + path + " is not a labeled matrix CSV");
    LabeledMatrix out;
    out.col_ids.assign(rows.front().begin() + 1, rows.front().end());
    const auto ncol = out.col_ids.size();
    out.values.resize(static_cast<Eigen::Index>(rows.size() - 1),
                      static_cast<Eigen::Index>(ncol));
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() != ncol + 1)
            throw std::runtime_error("row " + std::to_string(i) + " of " + path +
                                     " has wrong field count");
        out.row_ids.push_back(rows[i][0]);
        for (std::size_t j = 0; j < ncol; ++j)
            out.values(static_cast<Eigen::Index>(i - 1), static_cast<Eigen::Index>(j)) =
                csv::parse_double(rows[i][j + 1], path);
    }
    return out;
}

inline void write_labeled_matrix(const std::string& path, const Eigen::MatrixXd& values,
                                 const std::vector<std::string>& row_ids,
                                 const std::vector<std::string>& col_ids,
                                 const std::string& corner) {
    if (static_cast<Eigen::Index>(row_ids.size()) != values.rows() ||
        static_cast<Eigen::Index>(col_ids.size()) != values.cols())
        throw std::invalid_argument("id lengths do not match matrix dimensions");
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    std::vector<std::string> header = {corner};
    header.insert(header.end(), col_ids.begin(), col_ids.end());
    csv::write_row(out, header);
    for (Eigen::Index i = 0; i < values.rows(); ++i) {
        std::vector<std::string> row = {row_ids[static_cast<std::size_t>(i)]};
        for (Eigen::Index j = 0; j < values.cols(); ++j)
            row.push_back(format_double(values(i, j)));
        csv::write_row(out, row);
    }
}

inline TraitMatrix read_trait_matrix(const std::string& path) {
    LabeledMatrix m = read_labeled_matrix(path);
    return TraitMatrix(std::move(m.values), std::move(m.row_ids), std::move(m.col_ids));
}

inline void write_trait_matrix(const std::string& path, const TraitMatrix& y) {
    write_labeled_matrix(path, y.values(), y.subject_ids(), y.trait_ids(), "subject_id");
}

struct CovariateTable {
    CovariateMatrix covariates;
    std::vector<std::string> subject_ids;
};

/// Covariates are reordered to the requested subject order; every subject
/// must be present.
inline CovariateTable read_covariates(const std::string& path,
                                      const std::vector<std::string>& subject_order) {
    LabeledMatrix m = read_labeled_matrix(path);
    std::unordered_map<std::string, Eigen::Index> pos;
    for (std::size_t i = 0; i < m.row_ids.size(); ++i)
        pos[m.row_ids[i]] = static_cast<Eigen::Index>(i);
    Eigen::MatrixXd values(static_cast<Eigen::Index>(subject_order.size()), m.values.cols());
    for (std::size_t i = 0; i < subject_order.size(); ++i) {
        auto it = pos.find(subject_order[i]);
        if (it == pos.end())
            throw std::runtime_error("covariate file " + path + " is missing subject '" +
                                     subject_order[i] + "'");
        values.row(static_cast<Eigen::Index>(i)) = m.values.row(it->second);
    }
    return {CovariateMatrix(std::move(values), std::move(m.col_ids)), subject_order};
}

inline Pedigree read_pedigree(const std::string& path) {
    const auto rows = csv::read_table(path);
    if (rows.empty()) throw std::runtime_error("empty pedigree file " + path);
    const std::vector<std::string> expected = {"subject_id", "family_id", "relation_class",
                                               "pair_id"};
    if (rows.front() != expected)
        throw std::runtime_error("pedigree header must be subject_id,family_id,relation_class,pair_id");
    std::vector<PedigreeRecord> records;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        if (rows[i].size() < 3 || rows[i].size() > 4)
            throw std::runtime_error("pedigree row " + std::to_string(i) + " has wrong field count");
        PedigreeRecord r;
        r.subject_id = rows[i][0];
        r.family_id = rows[i][1];
        r.relation = relation_class_from_string(rows[i][2]);
        r.pair_id = rows[i].size() == 4 ? rows[i][3] : "";
        records.push_back(std::move(r));
    }
    return Pedigree(std::move(records));
}

/// Custom structure kernel: symmetric labeled matrix whose row and column
/// ids agree; reordered to the requested subject order when given.
inline StructureKernel read_kernel(const std::string& path,
                                   const std::vector<std::string>& subject_order) {
    LabeledMatrix m = read_labeled_matrix(path);
    if (m.row_ids != m.col_ids)
        throw std::runtime_error("kernel file " + path + " has mismatched row/column ids");
    std::unordered_map<std::string, Eigen::Index> pos;
    for (std::size_t i = 0; i < m.row_ids.size(); ++i)
        pos[m.row_ids[i]] = static_cast<Eigen::Index>(i);
    std::vector<Eigen::Index> order;
    for (const auto& id : subject_order) {
        auto it = pos.find(id);
        if (it == pos.end())
            throw std::runtime_error("kernel file " + path + " is missing subject '" + id + "'");
        order.push_back(it->second);
    }
    Eigen::MatrixXd k(static_cast<Eigen::Index>(order.size()),
                      static_cast<Eigen::Index>(order.size()));
    for (std::size_t i = 0; i < order.size(); ++i)
        for (std::size_t j = 0; j < order.size(); ++j)
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                m.values(order[i], order[j]);
    return StructureKernel(std::move(k), KernelKind::custom);
}

inline FunctionalGrid read_grid(const std::string& path) {
    const auto rows = csv::read_table(path);
    if (rows.size() < 2) throw std::runtime_error("grid file " + path + " has no rows");
    Eigen::VectorXd t(static_cast<Eigen::Index>(rows.size() - 1));
    for (std::size_t i = 1; i < rows.size(); ++i)
        t(static_cast<Eigen::Index>(i - 1)) = csv::parse_double(rows[i][0], path);
    return FunctionalGrid(std::move(t));
}

inline void write_grid(const std::string& path, const FunctionalGrid& grid) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write file: " + path);
    out << "t\n";
    for (Eigen::Index j = 0; j < grid.size(); ++j)
        out << format_double(grid.timepoints()(j)) << '\n';
}

// --- solver options <-> JSON ---

inline nlohmann::json solve_options_to_json(const SolveOptions& o) {
    const char* svd = o.svd_reduction == SvdReduction::automatic
                          ? "auto"
                          : (o.svd_reduction == SvdReduction::on ? "on" : "off");
    const char* init = o.initialization == Initialization::zeros ? "zeros" : "mvhe-truncated";
    return {{"max_iterations", o.max_iterations},
            {"tolerance", o.tolerance},
            {"svd_reduction", svd},
            {"initialization", init}};
}

inline SolveOptions solve_options_from_json(const nlohmann::json& j) {
    SolveOptions o;
    o.max_iterations = j.value("max_iterations", o.max_iterations);
    o.tolerance = j.value("tolerance", o.tolerance);
    const std::string svd = j.value("svd_reduction", "auto");
    if (svd == "auto")
        o.svd_reduction = SvdReduction::automatic;
    else if (svd == "on")
        o.svd_reduction = SvdReduction::on;
    else if (svd == "off")
        o.svd_reduction = SvdReduction::off;
    else
        throw std::runtime_error("svd_reduction must be auto, on, or off");
    const std::string init = j.value("initialization", "zeros");
    if (init == "zeros")
        o.initialization = Initialization::zeros;
    else if (init == "mvhe-truncated")
        o.initialization = Initialization::mvhe_truncated;
    else
        throw std::runtime_error("initialization must be zeros or mvhe-truncated");
    o.validate();
    return o;
}

// --- covariance-set manifest ---

struct EstimateMetadata {
    std::string estimator = "mvrehe";  // or "mvhe"
    Eigen::Index n = 0;
    std::vector<std::string> trait_ids;
    Eigen::VectorXd scale;  // standardization back-transform; empty if none
    std::vector<std::string> preprocessing;
    SolveOptions options;
    FitDiagnostics diagnostics;
};

/// Writes one CSV per component plus manifest.json into dir.
inline void write_covariance_set(const std::filesystem::path& dir, const CovarianceSet& cs,
                                 const EstimateMetadata& meta) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest;
    manifest["labels"] = cs.labels();
    manifest["n"] = meta.n;
    manifest["q"] = cs.n_traits();
    manifest["estimator"] = meta.estimator;
    manifest["objective"] = meta.diagnostics.objective;
    manifest["iterations"] = meta.diagnostics.iterations;
    manifest["converged"] = meta.diagnostics.converged;
    manifest["used_svd_reduction"] = meta.diagnostics.used_svd_reduction;
    manifest["psd_certified"] = cs.psd_certified();
    manifest["preprocessing"] = meta.preprocessing;
    manifest["options"] = solve_options_to_json(meta.options);
    std::vector<double> scale(meta.scale.data(), meta.scale.data() + meta.scale.size());
    manifest["scale_vector"] = scale;
    manifest["trait_ids"] = meta.trait_ids;
    nlohmann::json files = nlohmann::json::object();
    for (std::size_t k = 0; k < cs.n_components(); ++k) {
        const std::string name = "sigma_" + cs.labels()[k] + ".csv";
        files[cs.labels()[k]] = name;
        write_labeled_matrix((dir / name).string(), cs.sigmas()[k], meta.trait_ids,
                             meta.trait_ids, "trait_id");
    }
    manifest["component_files"] = files;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
    out << manifest.dump(2) << '\n';
}

struct LoadedCovarianceSet {
    CovarianceSet sigmas;
    std::vector<std::string> trait_ids;
    nlohmann::json manifest;
};

inline LoadedCovarianceSet read_covariance_set(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path);
    nlohmann::json manifest = nlohmann::json::parse(in);
    const auto dir = std::filesystem::path(manifest_path).parent_path();
    std::vector<std::string> labels = manifest.at("labels").get<std::vector<std::string>>();
    std::vector<bool> certified = manifest.at("psd_certified").get<std::vector<bool>>();
    std::vector<Eigen::MatrixXd> sigmas;
    std::vector<std::string> trait_ids;
    for (const auto& label : labels) {
        const std::string file = manifest.at("component_files").at(label).get<std::string>();
        LabeledMatrix m = read_labeled_matrix((dir / file).string());
        if (m.row_ids != m.col_ids)
            throw std::runtime_error("component file " + file + " has mismatched ids");
        if (trait_ids.empty())
            trait_ids = m.row_ids;
        else if (trait_ids != m.row_ids)
            throw std::runtime_error("component files disagree on trait ids");
        sigmas.push_back(std::move(m.values));
    }
    return {CovarianceSet(std::move(sigmas), std::move(labels), std::move(certified)),
            std::move(trait_ids), std::move(manifest)};
}

// --- tuning / regression fits ---

inline nlohmann::json fit_to_json(const LatentRegressionFit& fit,
                                  const std::vector<std::string>& predictor_ids,
                                  const std::string& response_id) {
    nlohmann::json j;
    j["response_id"] = response_id;
    j["method"] = regression_method_name(fit.method);
    if (fit.method == RegressionMethod::tensor)
        j["hyperparameters"] = {{"rank", fit.rank}, {"lambda", fit.lambda}};
    else
        j["hyperparameters"] = {{"lambda", fit.lambda}};
    j["r2_in"] = fit.r2_in_sample;
    j["r2_out"] = fit.r2_out_of_sample;
    j["converged"] = fit.converged;
    if (fit.method == RegressionMethod::lasso) {
        // sparse representation: only nonzero coefficients
        nlohmann::json sparse = nlohmann::json::object();
        for (Eigen::Index i = 0; i < fit.beta.size(); ++i)
            if (fit.beta(i) != 0.0)
                sparse[predictor_ids[static_cast<std::size_t>(i)]] = fit.beta(i);
        j["beta"] = {{"format", "sparse"}, {"values", sparse}};
    } else if (fit.method == RegressionMethod::tensor) {
        auto mat_to_json = [](const Eigen::MatrixXd& m) {
            nlohmann::json rows = nlohmann::json::array();
            for (Eigen::Index i = 0; i < m.rows(); ++i) {
                nlohmann::json row = nlohmann::json::array();
                for (Eigen::Index jcol = 0; jcol < m.cols(); ++jcol) row.push_back(m(i, jcol));
                rows.push_back(row);
            }
            return rows;
        };
        j["beta"] = {{"format", "factors"},
                     {"left", mat_to_json(fit.factor_left)},
                     {"right", mat_to_json(fit.factor_right)}};
    } else {
        std::vector<double> dense(fit.beta.data(), fit.beta.data() + fit.beta.size());
        j["beta"] = {{"format", "dense"}, {"values", dense}};
    }
    return j;
}

inline nlohmann::json tuning_to_json(const TuningResult& tr,
                                     const std::vector<std::string>& trait_ids) {
    nlohmann::json j;
    j["n_splits"] = tr.n_splits;
    j["seed"] = tr.seed;
    j["component"] = tr.component;
    j["tie_rule"] = tr.tie_rule;
    nlohmann::json responses = nlohmann::json::array();
    for (const auto& rt : tr.responses) {
        nlohmann::json r;
        r["response_id"] = trait_ids[static_cast<std::size_t>(rt.response)];
        nlohmann::json grid = nlohmann::json::array();
        for (const auto& c : rt.grid) {
            nlohmann::json g;
            g["method"] = regression_method_name(c.method);
            g["lambda"] = c.lambda;
            if (c.method == RegressionMethod::tensor) g["rank"] = c.rank;
            g["mean_r2_out"] = c.mean_r2_out;
            g["n_evaluations"] = c.n_evaluations;
            grid.push_back(g);
        }
        r["grid"] = grid;
        if (rt.has_selection) {
            r["selected"] = rt.selected;
            const auto& sel = rt.grid[rt.selected];
            r["selected_method"] = regression_method_name(sel.method);
            r["selected_lambda"] = sel.lambda;
            if (sel.method == RegressionMethod::tensor) r["selected_rank"] = sel.rank;
            r["selected_r2_out"] = sel.mean_r2_out;
        } else {
            r["selected"] = nullptr;
            r["error"] = "response could not be evaluated on any split";
        }
        responses.push_back(r);
    }
    j["responses"] = responses;
    return j;
}

// --- simulation report ---

inline void write_simulation_report(const std::filesystem::path& dir,
                                    const SimulationReport& report,
                                    const SimulationDesign& design) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "metrics.csv");
        if (!out) throw std::runtime_error("cannot write metrics.csv");
        out << "estimator,n,replicate,metric,value\n";
        for (const auto& r : report.rows)
            out << r.estimator << ',' << r.n << ',' << r.replicate << ',' << r.metric << ','
                << format_double(r.value) << '\n';
    }
    if (!report.failures.empty()) {
        std::ofstream out(dir / "failures.csv");
        out << "estimator,n,replicate,message\n";
        for (const auto& f : report.failures) {
            std::string msg = f.message;
            for (auto& ch : msg)
                if (ch == ',' || ch == '\n') ch = ';';
            out << f.estimator << ',' << f.n << ',' << f.replicate << ',' << msg << '\n';
        }
    }
    // median summary per (estimator, n, metric)
    nlohmann::json summary;
    summary["replicates"] = design.replicates;
    summary["seed"] = design.seed;
    summary["failures"] = report.failures.size();
    nlohmann::json medians = nlohmann::json::array();
    std::vector<std::string> metrics;
    for (const auto& r : report.rows)
        if (std::find(metrics.begin(), metrics.end(), r.metric) == metrics.end())
            metrics.push_back(r.metric);
    for (Estimator est : design.estimators) {
        for (Eigen::Index n : design.n_grid) {
            for (const auto& metric : metrics) {
                const auto vals = report.values(estimator_name(est), n, metric);
                if (vals.empty()) continue;
                medians.push_back({{"estimator", estimator_name(est)},
                                   {"n", n},
                                   {"metric", metric},
                                   {"median", median(vals)},
                                   {"count", vals.size()}});
            }
        }
    }
    summary["medians"] = medians;
    std::ofstream out(dir / "summary.json");
    out << summary.dump(2) << '\n';
}

// --- smoothed covariance ---

inline void write_smoothed_covariance(const std::filesystem::path& dir, const std::string& label,
                                      const SmoothedCovariance& sm) {
    std::filesystem::create_directories(dir);
    std::vector<std::string> ids;
    for (Eigen::Index j = 0; j < sm.grid.size(); ++j)
        ids.push_back(format_double(sm.grid.timepoints()(j)));
    write_labeled_matrix((dir / ("smoothed_" + label + ".csv")).string(), sm.values, ids, ids,
                         "t");
    nlohmann::json meta;
    meta["component"] = label;
    meta["bandwidth"] = sm.bandwidth;
    meta["gcv_score"] = sm.gcv_score;
    if (!std::isnan(sm.noise_variance)) meta["noise_variance"] = sm.noise_variance;
    std::ofstream out(dir / ("smoothed_" + label + ".json"));
    out << meta.dump(2) << '\n';
}

}  // namespace io
}  // namespace vcomp
