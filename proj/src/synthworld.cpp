#include "brainalign/synthworld.hpp"

#include <Eigen/QR>
#include <stdexcept>

namespace brainalign {

namespace {

// Orthonormal-column matrix of shape rows x cols (rows >= cols), deterministic.
Matrix random_orthonormal(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix a(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) a(i, j) = rng.normal();
    Eigen::HouseholderQR<Matrix> qr(a);
    Matrix q = qr.householderQ() * Matrix::Identity(rows, cols);
    Matrix r = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (Eigen::Index j = 0; j < cols; ++j) {
        if (r(j, j) < 0) q.col(j) = -q.col(j);
    }
    return q;
}

Vector flatten(const FeatureGrid& grid) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = grid.values;
    return Eigen::Map<const Vector>(rm.data(), rm.size());
}

}  // namespace

SyntheticWorld make_world(std::size_t subject_count, const std::vector<std::size_t>& voxel_dims,
                          std::size_t grid_tokens, std::size_t grid_channels,
                          std::size_t gallery_size, double noise_sigma, Rng& rng) {
    if (voxel_dims.size() != subject_count) {
        throw std::invalid_argument("make_world: |voxel_dims| != subject count");
    }
    if (grid_tokens == 0 || grid_channels == 0 || gallery_size == 0) {
        throw std::invalid_argument("make_world: non-positive dimension");
    }
    const auto flat = static_cast<Eigen::Index>(grid_tokens * grid_channels);

    SyntheticWorld world;
    world.grid_tokens = grid_tokens;
    world.grid_channels = grid_channels;
    for (std::size_t k = 0; k < subject_count; ++k) {
        if (voxel_dims[k] == 0) throw std::invalid_argument("make_world: zero voxel_dim");
        WorldSubject subject;
        subject.spec = {"S" + std::to_string(k + 1), voxel_dims[k]};
        subject.noise_sigma = noise_sigma;
        const auto vox = static_cast<Eigen::Index>(voxel_dims[k]);
        if (vox >= flat) {
            subject.generative_map = random_orthonormal(vox, flat, rng);
        } else {
            // compressive map with orthonormal rows
            subject.generative_map = random_orthonormal(flat, vox, rng).transpose();
        }
        world.subjects.push_back(std::move(subject));
    }
    for (std::size_t g = 0; g < gallery_size; ++g) {
        FeatureGrid grid;
        grid.values.resize(static_cast<Eigen::Index>(grid_tokens),
                           static_cast<Eigen::Index>(grid_channels));
        for (Eigen::Index i = 0; i < grid.values.rows(); ++i)
            for (Eigen::Index j = 0; j < grid.values.cols(); ++j)
                grid.values(i, j) = rng.normal();
        world.gallery.push_back(std::move(grid));
    }
    return world;
}

BrainSample sample_one(const SyntheticWorld& world, std::size_t subject_index,
                       std::size_t gallery_index, Rng& rng) {
    const auto& subject = world.subjects.at(subject_index);
    const auto& grid = world.gallery.at(gallery_index);
    BrainSample sample;
    sample.subject_id = subject.spec.subject_id;
    sample.target = grid;
    sample.voxels = subject.generative_map * flatten(grid);
    if (subject.noise_sigma > 0.0) {
        for (Eigen::Index i = 0; i < sample.voxels.size(); ++i) {
            sample.voxels(i) += subject.noise_sigma * rng.normal();
        }
    }
    return sample;
}

std::vector<BrainSample> sample_dataset(const SyntheticWorld& world, std::size_t n_per_subject,
                                        Rng& rng) {
    std::vector<BrainSample> samples;
    samples.reserve(world.subjects.size() * n_per_subject);
    for (std::size_t k = 0; k < world.subjects.size(); ++k) {
        for (std::size_t i = 0; i < n_per_subject; ++i) {
            const auto g = static_cast<std::size_t>(rng.uniform_int(world.gallery.size()));
            samples.push_back(sample_one(world, k, g, rng));
        }
    }
    return samples;
}

std::vector<SubjectSpec> world_specs(const SyntheticWorld& world) {
    std::vector<SubjectSpec> specs;
    for (const auto& s : world.subjects) specs.push_back(s.spec);
    return specs;
}

double oracle_ceiling(const SyntheticWorld& world, std::size_t pool, std::size_t trials,
                      Rng& rng) {
    if (pool < 2 || pool > world.gallery.size()) {
        throw std::invalid_argument("oracle_ceiling: bad pool size");
    }
    std::vector<Vector> gallery_flat;
    gallery_flat.reserve(world.gallery.size());
    for (const auto& g : world.gallery) {
        Vector f = flatten(g);
        gallery_flat.push_back(f / f.norm());
    }

    std::size_t hits = 0, total = 0;
    for (const auto& subject : world.subjects) {
        // pinv(G) = G^T for orthonormal columns; for orthonormal rows too.
        for (std::size_t t = 0; t < trials; ++t) {
            const auto g = static_cast<std::size_t>(rng.uniform_int(world.gallery.size()));
            Vector voxels = subject.generative_map * flatten(world.gallery[g]);
            if (subject.noise_sigma > 0.0) {
                for (Eigen::Index i = 0; i < voxels.size(); ++i) {
                    voxels(i) += subject.noise_sigma * rng.normal();
                }
            }
            Vector decoded = subject.generative_map.transpose() * voxels;
            decoded /= decoded.norm();

            auto distractors = rng.sample_without_replacement(world.gallery.size() - 1, pool - 1);
            double best = decoded.dot(gallery_flat[g]);
            bool top = true;
            for (auto d : distractors) {
                const std::size_t idx = d < g ? d : d + 1;
                if (decoded.dot(gallery_flat[idx]) >= best) {
                    top = false;
                    break;
                }
            }
            if (top) ++hits;
            ++total;
        }
    }
    return static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace brainalign
