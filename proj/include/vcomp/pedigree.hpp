#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "vcomp/structure_kernel.hpp"

namespace vcomp {

enum class RelationClass { mz, dz, full_sib, half_sib, unrelated };

inline RelationClass relation_class_from_string(const std::string& s) {
    if (s == "mz") return RelationClass::mz;
    if (s == "dz") return RelationClass::dz;
    if (s == "full_sib") return RelationClass::full_sib;
    if (s == "half_sib") return RelationClass::half_sib;
    if (s == "unrelated") return RelationClass::unrelated;
    throw std::invalid_argument("unknown relation class '" + s +
                                "' (expected mz, dz, full_sib, half_sib, or unrelated)");
}

inline const char* relation_class_name(RelationClass r) {
    switch (r) {
        case RelationClass::mz: return "mz";
        case RelationClass::dz: return "dz";
        case RelationClass::full_sib: return "full_sib";
        case RelationClass::half_sib: return "half_sib";
        case RelationClass::unrelated: return "unrelated";
    }
    return "unknown";
}

struct PedigreeRecord {
    std::string subject_id;
    std::string family_id;
    RelationClass relation;
    std::string pair_id;  // required for mz/dz, ignored otherwise
};

/// Family-structure table from which the kinship matrix is built. Relation
/// classes beyond the five supported ones are rejected at parse time rather
/// than mapped to guessed kinship values.
class Pedigree {
public:
    explicit Pedigree(std::vector<PedigreeRecord> records) : records_(std::move(records)) {
        std::map<std::string, int> pair_counts;
        for (std::size_t i = 0; i < records_.size(); ++i) {
            const auto& r = records_[i];
            if (!index_.emplace(r.subject_id, i).second)
                throw std::invalid_argument("duplicate subject id '" + r.subject_id + "' in pedigree");
            if (r.relation == RelationClass::mz || r.relation == RelationClass::dz) {
                if (r.pair_id.empty())
                    throw std::invalid_argument("twin subject '" + r.subject_id +
                                                "' is missing a pair id");
                ++pair_counts[r.family_id + "\x1f" + r.pair_id];
            }
        }
        for (const auto& [key, count] : pair_counts) {
            if (count != 2)
                throw std::invalid_argument("twin pair '" + key.substr(key.find('\x1f') + 1) +
                                            "' references " + std::to_string(count) +
                                            " subjects, expected exactly 2");
        }
    }

    const std::vector<PedigreeRecord>& records() const { return records_; }

    const PedigreeRecord& record_for(const std::string& subject_id) const {
        auto it = index_.find(subject_id);
        if (it == index_.end())
            throw std::invalid_argument("unknown subject id '" + subject_id + "'");
        return records_[it->second];
    }

private:
    std::vector<PedigreeRecord> records_;
    std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

/// Expected genome sharing for two distinct pedigree members.
inline double kinship_value(const PedigreeRecord& a, const PedigreeRecord& b) {
    if (a.family_id != b.family_id) return 0.0;
    if (a.relation == RelationClass::unrelated || b.relation == RelationClass::unrelated) return 0.0;
    if (a.relation == RelationClass::mz && b.relation == RelationClass::mz &&
        a.pair_id == b.pair_id)
        return 1.0;
    if (a.relation == RelationClass::half_sib || b.relation == RelationClass::half_sib) return 0.25;
    // remaining same-family pairs: DZ co-twins, full siblings, and any mix of
    // twins / full siblings from different pairs
    return 0.5;
}

}  // namespace detail

/// Builds the kinship matrix K_n over the requested subject order: 1 for self
/// and MZ co-twins, 0.5 for DZ co-twins and full siblings, 0.25 for
/// half-siblings, 0 for unrelated pairs.
inline StructureKernel build_kinship(const Pedigree& pedigree,
                                     const std::vector<std::string>& subject_order) {
    const auto n = static_cast<Eigen::Index>(subject_order.size());
    if (n == 0) throw std::invalid_argument("empty subject order");
    std::vector<const PedigreeRecord*> recs;
    recs.reserve(subject_order.size());
    for (const auto& id : subject_order) recs.push_back(&pedigree.record_for(id));
    Eigen::MatrixXd k = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i + 1; j < n; ++j) {
            const double v = detail::kinship_value(*recs[i], *recs[j]);
            k(i, j) = v;
            k(j, i) = v;
        }
    return StructureKernel(std::move(k), KernelKind::kinship);
}

/// Shared-household matrix: [H]_il = 1 whenever [K]_il > 0, else 0.
inline StructureKernel build_household(const StructureKernel& kinship) {
    if (kinship.kind() != KernelKind::kinship)
        throw std::invalid_argument("build_household expects a kinship kernel");
    Eigen::MatrixXd h =
        (kinship.matrix().array() > 0.0).cast<double>().matrix();
    return StructureKernel(std::move(h), KernelKind::household);
}

}  // namespace vcomp
