#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "brainalign/encoder.hpp"
#include "brainalign/types.hpp"

namespace brainalign {

/// 64-bit FNV-1a over a byte range.
std::uint64_t fnv1a(const void* data, std::size_t len);

// Raw little-endian tensor containers: magic "BATN", version, dtype
// (0 = f32, 1 = f64), ndim, dims, payload. Byte-identical across platforms.
struct TensorHeader {
    int dtype = 0;
    std::vector<std::uint64_t> dims;
};

void write_tensor_f32(std::ostream& out, const std::vector<std::uint64_t>& dims,
                      const std::vector<float>& data);
void write_tensor_f64(std::ostream& out, const std::vector<std::uint64_t>& dims,
                      const std::vector<double>& data);
TensorHeader read_tensor_header(std::istream& in);
std::vector<double> read_tensor_payload(std::istream& in, const TensorHeader& header);

struct DatasetSplits {
    std::vector<BrainSample> train;
    std::vector<BrainSample> test;
};

/// Writes manifest.json, voxel/target blobs, and annotations.json into `dir`.
/// Tensor payloads are float32; checksums are recorded per file.
void save_dataset(const std::string& dir, const std::vector<SubjectSpec>& specs,
                  const DatasetSplits& splits);

struct LoadedDataset {
    std::vector<SubjectSpec> specs;
    DatasetSplits splits;
};

/// Validates checksums and dataset invariants while loading.
LoadedDataset load_dataset(const std::string& manifest_path);

struct OptimizerSnapshot {
    EncoderState m, v;
    std::size_t step_count = 0;
};

struct Provenance {
    std::uint64_t seed = 0;
    std::string config_hash;
    std::vector<std::string> subject_ids;
};

struct Checkpoint {
    EncoderState state;
    std::optional<OptimizerSnapshot> optimizer;
    Provenance provenance;
};

/// Parameters (and optimizer moments, when present) as float64 blobs keyed by
/// canonical tensor names; reload reproduces bitwise-identical forward outputs.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

std::string config_hash(const EncoderConfig& cfg);

/// Aligned feature grids for the downstream language-model bridge; one f32
/// tensor of shape (count, tokens, channels).
void export_features(const std::vector<FeatureGrid>& grids, const std::string& path);
std::vector<FeatureGrid> import_features(const std::string& path);

}  // namespace brainalign
