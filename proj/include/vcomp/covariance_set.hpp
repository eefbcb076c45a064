#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>
#include <vector>

#include "vcomp/psd.hpp"

namespace vcomp {

/// Ordered collection of K+1 estimated q x q component covariance matrices
/// (Sigma_0..Sigma_K in trait-units squared) with per-component PSD
/// certification flags.
class CovarianceSet {
public:
    CovarianceSet(std::vector<Eigen::MatrixXd> sigmas, std::vector<std::string> labels,
                  std::vector<bool> psd_certified)
        : sigmas_(std::move(sigmas)),
          labels_(std::move(labels)),
          psd_certified_(std::move(psd_certified)) {
        check_shape();
        for (std::size_t k = 0; k < sigmas_.size(); ++k) {
            if (psd_certified_[k]) {
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigmas_[k],
                                                                  Eigen::EigenvaluesOnly);
                const double lo = es.eigenvalues().minCoeff();
                const double hi = std::max(es.eigenvalues().maxCoeff(), 0.0);
                if (lo < -1e-8 * std::max(hi, 1e-300))
                    throw std::invalid_argument("component '" + labels_[k] +
                                                "' certified PSD but has eigenvalue " +
                                                std::to_string(lo));
            }
        }
    }

    /// For solver internals whose outputs are PSD by construction
    /// (eigenvalue truncation followed by congruence); skips the
    /// certification eigendecompositions but keeps the shape checks.
    static CovarianceSet certified_by_construction(std::vector<Eigen::MatrixXd> sigmas,
                                                   std::vector<std::string> labels,
                                                   std::vector<bool> psd_certified) {
        CovarianceSet out(trusted_tag{});
        out.sigmas_ = std::move(sigmas);
        out.labels_ = std::move(labels);
        out.psd_certified_ = std::move(psd_certified);
        out.check_shape();
        return out;
    }

    const std::vector<Eigen::MatrixXd>& sigmas() const { return sigmas_; }
    const std::vector<std::string>& labels() const { return labels_; }
    const std::vector<bool>& psd_certified() const { return psd_certified_; }
    std::size_t n_components() const { return sigmas_.size(); }
    Eigen::Index n_traits() const { return sigmas_.front().rows(); }

    const Eigen::MatrixXd& component(const std::string& label) const {
        return sigmas_[component_index(label)];
    }

    std::size_t component_index(const std::string& label) const {
        for (std::size_t k = 0; k < labels_.size(); ++k)
            if (labels_[k] == label) return k;
        throw std::invalid_argument("unknown component label '" + label + "'");
    }

    bool all_certified() const {
        for (bool c : psd_certified_)
            if (!c) return false;
        return true;
    }

    /// Sum of all components (the covariance of an observed row when every
    /// kernel collapses to the identity).
    Eigen::MatrixXd total() const {
        Eigen::MatrixXd t = sigmas_.front();
        for (std::size_t k = 1; k < sigmas_.size(); ++k) t += sigmas_[k];
        return t;
    }

private:
    struct trusted_tag {};
    explicit CovarianceSet(trusted_tag) {}

    void check_shape() {
        if (sigmas_.empty())
            throw std::invalid_argument("CovarianceSet needs at least one component");
        if (labels_.size() != sigmas_.size() || psd_certified_.size() != sigmas_.size())
            throw std::invalid_argument("CovarianceSet field lengths disagree");
        const Eigen::Index q = sigmas_.front().rows();
        for (std::size_t k = 0; k < sigmas_.size(); ++k) {
            auto& s = sigmas_[k];
            if (s.rows() != q || s.cols() != q)
                throw std::invalid_argument("component '" + labels_[k] + "' has wrong dimensions");
            if (!s.allFinite())
                throw std::invalid_argument("component '" + labels_[k] + "' has non-finite entries");
            const double scale = 1.0 + s.cwiseAbs().maxCoeff();
            if ((s - s.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale)
                throw std::invalid_argument("component '" + labels_[k] + "' is not symmetric");
            s = ((s + s.transpose()) / 2.0).eval();
        }
    }

    std::vector<Eigen::MatrixXd> sigmas_;
    std::vector<std::string> labels_;
    std::vector<bool> psd_certified_;
};

/// Per-trait heritability: diag(Sigma_G) / sum_k diag(Sigma_k). Requires all
/// components PSD-certified so every ratio lands in [0, 1].
inline Eigen::VectorXd heritability(const CovarianceSet& sigmas,
                                    const std::string& genetic_label = "G") {
    if (!sigmas.all_certified())
        throw std::invalid_argument("heritability requires all components PSD-certified");
    const Eigen::MatrixXd& g = sigmas.component(genetic_label);
    Eigen::VectorXd total = Eigen::VectorXd::Zero(sigmas.n_traits());
    for (const auto& s : sigmas.sigmas()) total += s.diagonal();
    Eigen::VectorXd h(sigmas.n_traits());
    for (Eigen::Index j = 0; j < h.size(); ++j) {
        if (!(total(j) > 0.0))
            throw std::invalid_argument("zero total variance at trait index " + std::to_string(j));
        h(j) = g(j, j) / total(j);
    }
    return h;
}

}  // namespace vcomp
