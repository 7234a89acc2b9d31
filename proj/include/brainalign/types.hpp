#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace brainalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Identity and voxel dimensionality of one subject's signal space.
struct SubjectSpec {
    std::string subject_id;
    std::size_t voxel_dim = 0;
};

/// Axis-aligned box in normalized [0,1] image coordinates.
struct LabeledBox {
    std::string label;
    double x1 = 0, y1 = 0, x2 = 0, y2 = 0;

    bool valid() const {
        return x1 < x2 && y1 < y2 && x1 >= 0.0 && y1 >= 0.0 && x2 <= 1.0 && y2 <= 1.0;
    }
};

/// Fixed token-count x channel output grid / alignment target.
struct FeatureGrid {
    Matrix values;  // tokens x channels

    std::size_t tokens() const { return static_cast<std::size_t>(values.rows()); }
    std::size_t channels() const { return static_cast<std::size_t>(values.cols()); }
    bool finite() const { return values.allFinite(); }
};

/// One (subject, voxel vector, optional target grid, annotations) record.
struct BrainSample {
    std::string subject_id;
    Vector voxels;
    std::optional<FeatureGrid> target;
    std::vector<LabeledBox> boxes;
    std::vector<std::string> captions;
};

struct EncoderConfig {
    std::size_t token_count = 256;        // L, brain tokens per subject
    std::size_t token_dim = 1024;         // D
    std::size_t subject_token_count = 5;  // M
    std::size_t latent_query_count = 256; // T_out
    std::size_t encoder_depth = 4;
    std::size_t attention_heads = 8;
    std::size_t output_channels = 1024;   // D_t

    bool operator==(const EncoderConfig&) const = default;
};

/// Small configuration suitable for CPU-only verification runs.
inline EncoderConfig desk_encoder_config() {
    EncoderConfig cfg;
    cfg.token_count = 16;
    cfg.token_dim = 64;
    cfg.subject_token_count = 2;
    cfg.latent_query_count = 16;
    cfg.encoder_depth = 2;
    cfg.attention_heads = 4;
    cfg.output_channels = 32;
    return cfg;
}

enum class LossKind { MseEncoder, NceEncoder };
enum class LrSchedule { OneCycle, Constant };

struct TrainConfig {
    std::size_t batch_size = 256;
    double theta = 0.5;
    std::size_t epochs = 240;
    double lr_max = 3e-4;
    double weight_decay = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.95;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::MseEncoder;
    LrSchedule schedule = LrSchedule::OneCycle;
};

struct ValidationIssue {
    std::string kind;  // "length_mismatch", "degenerate_box", "unknown_subject", ...
    std::size_t sample_index = 0;
    std::string detail;
};

struct ValidationReport {
    std::vector<ValidationIssue> issues;
    bool ok() const { return issues.empty(); }
};

/// Checks every per-type invariant; violations become report entries.
ValidationReport validate_dataset(const std::vector<BrainSample>& samples,
                                  const std::vector<SubjectSpec>& specs);

}  // namespace brainalign
