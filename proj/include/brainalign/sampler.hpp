#pragma once

#include <map>
#include <string>
#include <vector>

#include "brainalign/rng.hpp"

namespace brainalign {

enum class SamplingStrategy { Ours, OursR, Random, Stratified };

SamplingStrategy parse_strategy(const std::string& name);
std::string strategy_name(SamplingStrategy s);

struct BatchEntry {
    std::string subject_id;
    std::size_t sample_index;
};

struct BatchPlan {
    std::vector<BatchEntry> entries;
    std::string dominant_subject;
};

// std::map keeps subject iteration order deterministic.
using SubjectSizes = std::map<std::string, std::size_t>;

/// p_k = size_k / sum(size_n).
std::map<std::string, double> subject_probabilities(const SubjectSizes& sizes);

/// Batch composition: a dominant-subject block of round-half-even(theta*B)
/// entries plus a remainder drawn from the other subjects (strategy-dependent).
BatchPlan compose_batch(const SubjectSizes& sizes, std::size_t batch_size, double theta,
                        SamplingStrategy strategy, Rng& rng);

struct SamplerStats {
    double dominant_fraction_mean = 0.0;
    std::map<std::string, double> dominant_frequency;  // how often each subject dominates
    std::map<std::string, double> sample_frequency;    // share of all entries per subject
};

SamplerStats batch_statistics(const std::vector<BatchPlan>& plans);

}  // namespace brainalign
