#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace vcomp {

namespace detail {

inline void require_finite(const Eigen::MatrixXd& m, const std::string& what) {
    if (!m.allFinite()) throw std::invalid_argument(what + " contains non-finite entries");
}

inline void require_unique(const std::vector<std::string>& ids, const std::string& what) {
    std::unordered_set<std::string> seen;
    for (const auto& id : ids) {
        if (!seen.insert(id).second)
            throw std::invalid_argument(what + " contains duplicate id '" + id + "'");
    }
}

inline std::vector<std::string> numbered_ids(const std::string& prefix, Eigen::Index n) {
    std::vector<std::string> ids;
    ids.reserve(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) ids.push_back(prefix + std::to_string(i + 1));
    return ids;
}

}  // namespace detail

/// n x q matrix of phenotype observations: rows are subjects, columns are
/// traits. Values are expected mean-zero after preprocessing; the class
/// itself only enforces shape, finiteness and id uniqueness.
class TraitMatrix {
public:
    TraitMatrix(Eigen::MatrixXd values, std::vector<std::string> subject_ids,
                std::vector<std::string> trait_ids)
        : values_(std::move(values)),
          subject_ids_(std::move(subject_ids)),
          trait_ids_(std::move(trait_ids)) {
        if (values_.rows() < 2) throw std::invalid_argument("TraitMatrix needs at least 2 subjects");
        if (values_.cols() < 1) throw std::invalid_argument("TraitMatrix needs at least 1 trait");
        if (static_cast<Eigen::Index>(subject_ids_.size()) != values_.rows())
            throw std::invalid_argument("subject id count does not match row count");
        if (static_cast<Eigen::Index>(trait_ids_.size()) != values_.cols())
            throw std::invalid_argument("trait id count does not match column count");
        detail::require_finite(values_, "TraitMatrix");
        detail::require_unique(subject_ids_, "subject ids");
        detail::require_unique(trait_ids_, "trait ids");
    }

    /// Convenience constructor generating ids subj1.. / trait1..
    static TraitMatrix from_values(Eigen::MatrixXd values) {
        auto subj = detail::numbered_ids("subj", values.rows());
        auto trait = detail::numbered_ids("trait", values.cols());
        return TraitMatrix(std::move(values), std::move(subj), std::move(trait));
    }

    const Eigen::MatrixXd& values() const { return values_; }
    const std::vector<std::string>& subject_ids() const { return subject_ids_; }
    const std::vector<std::string>& trait_ids() const { return trait_ids_; }
    Eigen::Index n_subjects() const { return values_.rows(); }
    Eigen::Index n_traits() const { return values_.cols(); }

    /// Row subset preserving column structure (used by family-aware splits).
    TraitMatrix subset_rows(const std::vector<Eigen::Index>& rows) const {
        Eigen::MatrixXd v(static_cast<Eigen::Index>(rows.size()), values_.cols());
        std::vector<std::string> ids;
        ids.reserve(rows.size());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            v.row(static_cast<Eigen::Index>(i)) = values_.row(rows[i]);
            ids.push_back(subject_ids_[static_cast<std::size_t>(rows[i])]);
        }
        return TraitMatrix(std::move(v), std::move(ids), trait_ids_);
    }

private:
    Eigen::MatrixXd values_;
    std::vector<std::string> subject_ids_;
    std::vector<std::string> trait_ids_;
};

/// n x c nuisance design matrix. Must contain an explicit intercept column
/// (a nonzero constant column) so residualization always removes means.
class CovariateMatrix {
public:
    CovariateMatrix(Eigen::MatrixXd values, std::vector<std::string> names)
        : values_(std::move(values)), names_(std::move(names)) {
        if (static_cast<Eigen::Index>(names_.size()) != values_.cols())
            throw std::invalid_argument("covariate name count does not match column count");
        detail::require_finite(values_, "CovariateMatrix");
        detail::require_unique(names_, "covariate names");
        bool has_intercept = false;
        for (Eigen::Index j = 0; j < values_.cols(); ++j) {
            const double v0 = values_(0, j);
            if (v0 != 0.0 && (values_.col(j).array() == v0).all()) {
                has_intercept = true;
                break;
            }
        }
        if (!has_intercept)
            throw std::invalid_argument("CovariateMatrix must include an explicit intercept column");
    }

    static CovariateMatrix intercept_only(Eigen::Index n) {
        return CovariateMatrix(Eigen::MatrixXd::Ones(n, 1), {"intercept"});
    }

    const Eigen::MatrixXd& values() const { return values_; }
    const std::vector<std::string>& names() const { return names_; }

private:
    Eigen::MatrixXd values_;
    std::vector<std::string> names_;
};

}  // namespace vcomp
