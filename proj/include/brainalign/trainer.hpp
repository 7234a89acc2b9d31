#pragma once

#include <functional>
#include <string>
#include <vector>

#include "brainalign/encoder.hpp"
#include "brainalign/rng.hpp"
#include "brainalign/sampler.hpp"
#include "brainalign/types.hpp"

namespace brainalign {

struct LossConfig {
    LossKind kind = LossKind::MseEncoder;
    double temperature = 0.07;  // nce only
    bool mixco_enabled = false;
    double mixco_alpha = 0.2;
};

enum class AdaptationMode { Frozen, Finetuned };

struct AdaptationConfig {
    AdaptationMode mode = AdaptationMode::Frozen;
    double data_ratio = 1.0;  // in (0,1], seeded subsample of the new subject's data
};

struct StepRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::string dominant_subject;
};

struct EpochRecord {
    std::size_t epoch = 0;
    double val_mse = 0.0;
};

struct TrainLog {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
};

/// Mean over all elements of squared differences.
double mse_loss(const FeatureGrid& pred, const FeatureGrid& target);

/// Symmetric InfoNCE over L2-normalized rows; optional MixCo mixing of brain
/// rows with a shuffled partner and soft-mixed targets. If d_brain is given it
/// receives d(loss)/d(brain rows), image rows treated as constants.
double infonce_loss(const Matrix& brain, const Matrix& image, double temperature, Rng* rng,
                    bool mixco, double mixco_alpha = 0.2, Matrix* d_brain = nullptr);

/// Cosine warmup from lr_max/25 over the first 30% of steps, cosine decay to
/// lr_max/1e4 afterward.
double one_cycle_lr(std::size_t step, std::size_t total_steps, double lr_max);

/// AdamW with decoupled weight decay, operating on the tensor registry of an
/// EncoderState. Moment buffers are zeros_like clones.
class AdamW {
  public:
    AdamW(const EncoderState& shape, const TrainConfig& cfg);

    /// Applies one update; `trainable` filters tensors by canonical name
    /// (nullptr trains everything). Gradients are clipped to global norm 1.
    void step(EncoderState& params, EncoderState& grads, double lr,
              const std::function<bool(const std::string&)>* trainable = nullptr);

    const EncoderState& first_moment() const { return m_; }
    const EncoderState& second_moment() const { return v_; }
    std::size_t step_count() const { return t_; }
    void restore(EncoderState m, EncoderState v, std::size_t t);

  private:
    EncoderState m_, v_;
    std::size_t t_ = 0;
    double beta1_, beta2_, weight_decay_;
};

/// Alignment training over a validated dataset; mutates `state` in place and
/// returns the step/epoch log. Deterministic given train_cfg.seed.
TrainLog train_align(EncoderState& state, const std::vector<BrainSample>& samples,
                     const TrainConfig& train_cfg, const LossConfig& loss_cfg,
                     SamplingStrategy strategy);

/// Registers and trains a tokenizer for a new subject on a data_ratio subsample,
/// warm-started from `base`. Frozen mode leaves every perceiver parameter and
/// existing tokenizer bitwise unchanged.
std::pair<EncoderState, TrainLog> adapt_subject(const EncoderState& base,
                                                const SubjectSpec& new_spec,
                                                const std::vector<BrainSample>& new_data,
                                                const AdaptationConfig& adapt_cfg,
                                                const TrainConfig& train_cfg);

}  // namespace brainalign
