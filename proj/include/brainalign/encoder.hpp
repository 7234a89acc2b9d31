#pragma once

#include <functional>
#include <map>
#include <string>
#include <vector>

#include "brainalign/rng.hpp"
#include "brainalign/types.hpp"

namespace brainalign {

// All learnable tensors are Matrix; row vectors are stored 1 x n so the
// parameter registry stays homogeneous.

struct SubjectTokenizerParams {
    Matrix projection;       // (L*D) x voxel_dim
    Matrix projection_bias;  // 1 x (L*D)
    Matrix subject_tokens;   // M x D
};

struct AttentionLayerParams {
    Matrix ln_q_gamma, ln_q_beta;    // 1 x D, normalizes latents before attention
    Matrix ln_kv_gamma, ln_kv_beta;  // 1 x D, normalizes the attended context
    Matrix wq, wk, wv, wo;           // D x D
    Matrix bq, bk, bv, bo;           // 1 x D
    Matrix ln_f_gamma, ln_f_beta;    // 1 x D, pre-feed-forward norm
    Matrix w1;                       // D x H
    Matrix b1;                       // 1 x H
    Matrix w2;                       // H x D
    Matrix b2;                       // 1 x D
};

struct PerceiverParams {
    Matrix latent_queries;                    // T_out x D
    std::vector<AttentionLayerParams> layers; // layer 0 cross-attends to tokens,
                                              // the rest self-attend among latents
    Matrix ln_out_gamma, ln_out_beta;         // 1 x D
    Matrix w_out;                             // D x D_t
    Matrix b_out;                             // 1 x D_t
};

struct EncoderState {
    EncoderConfig config;
    std::vector<SubjectSpec> specs;  // registration order preserved
    std::map<std::string, SubjectTokenizerParams> tokenizers;
    PerceiverParams perceiver;
};

/// Initializes all learnable parameters; deterministic given the rng state.
EncoderState init_encoder(const EncoderConfig& config, const std::vector<SubjectSpec>& specs,
                          Rng& rng);

/// Zero-valued parameter structure with the same shapes (gradient / moment buffers).
EncoderState zeros_like(const EncoderState& state);

/// Enumerates every learnable tensor with a canonical name, in a fixed order.
void visit_tensors(EncoderState& state,
                   const std::function<void(const std::string&, Matrix&)>& fn);
void visit_tensors(const EncoderState& state,
                   const std::function<void(const std::string&, const Matrix&)>& fn);

std::size_t count_parameters(const EncoderState& state);

/// Subject tokens prepended to the linear projection of the voxel vector.
Matrix tokenize(const EncoderState& state, const std::string& subject_id, const Vector& voxels);

// Intermediate activations kept for the backward pass.
struct LayerCache {
    Matrix x_in;                  // latents entering the layer
    Matrix qn, kvn;               // layer-normalized query/context inputs
    Vector q_mean, q_istd;        // LN statistics per row
    Vector kv_mean, kv_istd;
    Matrix q, k, v;               // projected
    std::vector<Matrix> attn;     // per-head softmax weights, T x N
    Matrix heads;                 // concatenated head outputs, T x D
    Matrix x_mid;                 // after attention residual
    Matrix fn;                    // layer-normalized pre-FFN
    Vector f_mean, f_istd;
    Matrix h_pre, h_act;          // FFN hidden pre/post activation
    Matrix x_out;
};

struct ForwardCache {
    Matrix tokens;
    std::vector<LayerCache> layers;
    Matrix out_n;  // final layer-normalized latents
    Vector o_mean, o_istd;
};

/// Projects a token sequence through the latent bottleneck; output shape is
/// (latent_query_count, output_channels) regardless of the input row count.
FeatureGrid encode(const EncoderState& state, const Matrix& tokens, ForwardCache* cache = nullptr);

FeatureGrid forward(const EncoderState& state, const std::string& subject_id, const Vector& voxels,
                    ForwardCache* cache = nullptr);

/// Accumulates parameter gradients for one sample given d(loss)/d(output).
/// `grads` must be shaped like `state` (see zeros_like).
void backward(const EncoderState& state, const std::string& subject_id, const Vector& voxels,
              const ForwardCache& cache, const Matrix& d_out, EncoderState& grads);

/// Max relative error between analytic and central-difference gradients over a
/// random subset of parameters, with squared-error loss against sample.target.
double gradient_check(EncoderState& state, const BrainSample& sample, double eps, Rng& rng,
                      std::size_t probes_per_tensor = 3);

}  // namespace brainalign
