#include "brainalign/types.hpp"

#include <unordered_map>
#include <unordered_set>

namespace brainalign {

ValidationReport validate_dataset(const std::vector<BrainSample>& samples,
                                  const std::vector<SubjectSpec>& specs) {
    ValidationReport report;

    std::unordered_map<std::string, std::size_t> dims;
    std::unordered_set<std::string> seen;
    for (const auto& spec : specs) {
        if (!seen.insert(spec.subject_id).second) {
            report.issues.push_back({"duplicate_subject", 0, spec.subject_id});
        }
        if (spec.voxel_dim < 1) {
            report.issues.push_back({"bad_voxel_dim", 0, spec.subject_id});
        }
        dims[spec.subject_id] = spec.voxel_dim;
    }

    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& s = samples[i];
        auto it = dims.find(s.subject_id);
        if (it == dims.end()) {
            report.issues.push_back({"unknown_subject", i, s.subject_id});
        } else if (static_cast<std::size_t>(s.voxels.size()) != it->second) {
            report.issues.push_back(
                {"length_mismatch", i,
                 s.subject_id + ": got " + std::to_string(s.voxels.size()) + ", expected " +
                     std::to_string(it->second)});
        }
        if (!s.voxels.allFinite()) {
            report.issues.push_back({"nonfinite_voxels", i, s.subject_id});
        }
        if (s.target && !s.target->finite()) {
            report.issues.push_back({"nonfinite_target", i, s.subject_id});
        }
        for (const auto& box : s.boxes) {
            if (!box.valid()) {
                report.issues.push_back({"degenerate_box", i, box.label});
            }
        }
    }
    return report;
}

}  // namespace brainalign
