#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace vcomp {

enum class KernelKind { identity, kinship, household, custom };

inline const char* kernel_kind_name(KernelKind k) {
    switch (k) {
        case KernelKind::identity: return "identity";
        case KernelKind::kinship: return "kinship";
        case KernelKind::household: return "household";
        case KernelKind::custom: return "custom";
    }
    return "unknown";
}

/// n x n symmetric PSD row-covariance matrix with unit diagonal, describing
/// between-subject dependence for one latent component (kinship, household,
/// identity, or a user-supplied kernel).
///
/// Construction symmetrizes to machine precision after checking symmetry to
/// 1e-12 absolute, snaps the diagonal to exactly 1, and checks the smallest
/// eigenvalue against -1e-10. A failing custom kernel is accepted with
/// psd_warning() set; failing kinship/household kernels are an error.
class StructureKernel {
public:
    static constexpr double symmetry_tol = 1e-12;
    static constexpr double psd_tol = -1e-10;

    StructureKernel(Eigen::MatrixXd matrix, KernelKind kind)
        : matrix_(std::move(matrix)), kind_(kind) {
        const Eigen::Index n = matrix_.rows();
        if (n == 0 || matrix_.cols() != n)
            throw std::invalid_argument("StructureKernel matrix must be square and non-empty");
        if (!matrix_.allFinite())
            throw std::invalid_argument("StructureKernel contains non-finite entries");
        const double asym = (matrix_ - matrix_.transpose()).cwiseAbs().maxCoeff();
        if (asym > symmetry_tol)
            throw std::invalid_argument("StructureKernel not symmetric (max asymmetry " +
                                        std::to_string(asym) + ")");
        matrix_ = ((matrix_ + matrix_.transpose()) / 2.0).eval();
        for (Eigen::Index i = 0; i < n; ++i) {
            if (std::abs(matrix_(i, i) - 1.0) > 1e-8)
                throw std::invalid_argument("StructureKernel diagonal entry " + std::to_string(i) +
                                            " is " + std::to_string(matrix_(i, i)) + ", expected 1");
            matrix_(i, i) = 1.0;
        }
        if (kind_ == KernelKind::identity) {
            if (!matrix_.isIdentity(0.0))
                throw std::invalid_argument("identity kernel has off-diagonal entries");
            min_eigenvalue_ = 1.0;
            return;
        }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(matrix_, Eigen::EigenvaluesOnly);
        if (es.info() != Eigen::Success)
            throw std::runtime_error("eigenvalue computation failed for StructureKernel");
        min_eigenvalue_ = es.eigenvalues().minCoeff();
        if (min_eigenvalue_ < psd_tol) {
            if (kind_ == KernelKind::custom) {
                psd_warning_ = true;
            } else {
                throw std::invalid_argument(std::string(kernel_kind_name(kind_)) +
                                            " kernel is not PSD (min eigenvalue " +
                                            std::to_string(min_eigenvalue_) + ")");
            }
        }
    }

    static StructureKernel identity(Eigen::Index n) {
        return StructureKernel(Eigen::MatrixXd::Identity(n, n), KernelKind::identity);
    }

    const Eigen::MatrixXd& matrix() const { return matrix_; }
    KernelKind kind() const { return kind_; }
    Eigen::Index size() const { return matrix_.rows(); }
    double min_eigenvalue() const { return min_eigenvalue_; }
    bool psd_warning() const { return psd_warning_; }

    /// Principal submatrix on the given subject rows. Kind is preserved and
    /// no eigendecomposition is rerun: by eigenvalue interlacing the
    /// submatrix's smallest eigenvalue is at least the parent's, so PSD
    /// validity carries over and min_eigenvalue() becomes a lower bound.
    StructureKernel subset(const std::vector<Eigen::Index>& rows) const {
        const auto m = static_cast<Eigen::Index>(rows.size());
        Eigen::MatrixXd sub(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j) sub(i, j) = matrix_(rows[i], rows[j]);
        StructureKernel out(trusted_tag{});
        out.matrix_ = std::move(sub);
        out.kind_ = kind_;
        out.min_eigenvalue_ = min_eigenvalue_;
        out.psd_warning_ = psd_warning_;
        return out;
    }

private:
    struct trusted_tag {};
    explicit StructureKernel(trusted_tag) : kind_(KernelKind::custom) {}

    Eigen::MatrixXd matrix_;
    KernelKind kind_;
    double min_eigenvalue_ = 0.0;
    bool psd_warning_ = false;
};

/// Ordered collection of the K+1 structure kernels D_0..D_K of the model,
/// with D_0 fixed to the identity (unique-environment slot), plus the Gram
/// matrix Q of pairwise elementwise-product sums used by the moment solvers.
class ComponentSpec {
public:
    ComponentSpec(std::vector<StructureKernel> kernels, std::vector<std::string> labels)
        : kernels_(std::move(kernels)), labels_(std::move(labels)) {
        if (kernels_.empty()) throw std::invalid_argument("ComponentSpec needs at least one kernel");
        if (labels_.size() != kernels_.size())
            throw std::invalid_argument("label count does not match kernel count");
        const Eigen::Index n = kernels_.front().size();
        for (const auto& k : kernels_)
            if (k.size() != n) throw std::invalid_argument("kernels have mismatched dimensions");
        if (kernels_.front().kind() != KernelKind::identity)
            throw std::invalid_argument("kernel 0 must be the identity kernel");

        const auto kcount = static_cast<Eigen::Index>(kernels_.size());
        gram_.resize(kcount, kcount);
        for (Eigen::Index z = 0; z < kcount; ++z)
            for (Eigen::Index k = z; k < kcount; ++k) {
                const double q = kernels_[static_cast<std::size_t>(z)]
                                     .matrix()
                                     .cwiseProduct(kernels_[static_cast<std::size_t>(k)].matrix())
                                     .sum();
                gram_(z, k) = q;
                gram_(k, z) = q;
            }
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram_, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().maxCoeff();
        gram_condition_ = (lo > 0.0) ? hi / lo : std::numeric_limits<double>::infinity();
        if (!(lo > hi * 1e-14)) {
            // name the pair closest to collinear in the vectorized-kernel geometry
            double worst = 0.0;
            std::size_t wz = 0, wk = 1;
            for (Eigen::Index z = 0; z < kcount; ++z)
                for (Eigen::Index k = z + 1; k < kcount; ++k) {
                    const double corr =
                        std::abs(gram_(z, k)) / std::sqrt(gram_(z, z) * gram_(k, k));
                    if (corr > worst) {
                        worst = corr;
                        wz = static_cast<std::size_t>(z);
                        wk = static_cast<std::size_t>(k);
                    }
                }
            throw std::invalid_argument("structure kernels are linearly dependent (singular Gram "
                                        "matrix); most collinear pair: '" +
                                        labels_[wz] + "' and '" + labels_[wk] + "'");
        }
    }

    /// Standard ACE layout: D_0 = I (E), D_1 = kinship (G), D_2 = household (C).
    static ComponentSpec ace(const StructureKernel& kinship, const StructureKernel& household) {
        std::vector<StructureKernel> kernels;
        kernels.push_back(StructureKernel::identity(kinship.size()));
        kernels.push_back(kinship);
        kernels.push_back(household);
        return ComponentSpec(std::move(kernels), {"E", "G", "C"});
    }

    const std::vector<StructureKernel>& kernels() const { return kernels_; }
    const std::vector<std::string>& labels() const { return labels_; }
    std::size_t n_components() const { return kernels_.size(); }
    Eigen::Index n_subjects() const { return kernels_.front().size(); }
    const Eigen::MatrixXd& gram() const { return gram_; }
    double gram_condition() const { return gram_condition_; }

    std::size_t component_index(const std::string& label) const {
        for (std::size_t k = 0; k < labels_.size(); ++k)
            if (labels_[k] == label) return k;
        throw std::invalid_argument("unknown component label '" + label + "'");
    }

    ComponentSpec subset(const std::vector<Eigen::Index>& rows) const {
        std::vector<StructureKernel> sub;
        sub.reserve(kernels_.size());
        for (const auto& k : kernels_) sub.push_back(k.subset(rows));
        return ComponentSpec(std::move(sub), labels_);
    }

private:
    std::vector<StructureKernel> kernels_;
    std::vector<std::string> labels_;
    Eigen::MatrixXd gram_;
    double gram_condition_ = 0.0;
};

}  // namespace vcomp
