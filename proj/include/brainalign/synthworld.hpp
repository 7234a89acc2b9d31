#pragma once

#include <vector>

#include "brainalign/rng.hpp"
#include "brainalign/types.hpp"

namespace brainalign {

/// Generative world with a known grid -> voxel map per subject, so alignment
/// quality has a computable ceiling.
struct WorldSubject {
    SubjectSpec spec;
    Matrix generative_map;  // voxel_dim x (tokens*channels), orthonormal columns or rows
    double noise_sigma = 0.0;
};

struct SyntheticWorld {
    std::size_t grid_tokens = 0;
    std::size_t grid_channels = 0;
    std::vector<WorldSubject> subjects;
    std::vector<FeatureGrid> gallery;  // shared stimuli across subjects
};

SyntheticWorld make_world(std::size_t subject_count, const std::vector<std::size_t>& voxel_dims,
                          std::size_t grid_tokens, std::size_t grid_channels,
                          std::size_t gallery_size, double noise_sigma, Rng& rng);

/// voxels = G_k * flatten(grid) + sigma * noise; target carries the grid.
BrainSample sample_one(const SyntheticWorld& world, std::size_t subject_index,
                       std::size_t gallery_index, Rng& rng);

/// n_per_subject samples per subject, gallery items drawn uniformly.
std::vector<BrainSample> sample_dataset(const SyntheticWorld& world, std::size_t n_per_subject,
                                        Rng& rng);

std::vector<SubjectSpec> world_specs(const SyntheticWorld& world);

/// Retrieval accuracy of the pseudo-inverse decoder by direct simulation:
/// an upper bound for any encoder trained on this world.
double oracle_ceiling(const SyntheticWorld& world, std::size_t pool, std::size_t trials, Rng& rng);

}  // namespace brainalign
