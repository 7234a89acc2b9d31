#include "brainalign/encoder.hpp"

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace brainalign {

namespace {

constexpr double kLnEps = 1e-5;

// Row-wise layer norm. Returns x_hat (pre-affine); per-row mean and 1/std out.
void ln_forward(const Matrix& x, Matrix& x_hat, Vector& mean, Vector& istd) {
    const Eigen::Index n = x.cols();
    mean = x.rowwise().mean();
    Matrix centered = x.colwise() - mean;
    Vector var = centered.array().square().rowwise().mean();
    istd = (var.array() + kLnEps).rsqrt();
    x_hat = centered.array().colwise() * istd.array();
}

Matrix ln_affine(const Matrix& x_hat, const Matrix& gamma, const Matrix& beta) {
    Matrix y = x_hat.array().rowwise() * gamma.row(0).array();
    y.array().rowwise() += beta.row(0).array();
    return y;
}

// Backward through affine + normalization. Accumulates d_gamma/d_beta,
// returns gradient w.r.t. the pre-norm input.
Matrix ln_backward(const Matrix& dy, const Matrix& x_hat, const Vector& istd, const Matrix& gamma,
                   Matrix& d_gamma, Matrix& d_beta) {
    d_gamma.row(0) += (dy.array() * x_hat.array()).colwise().sum().matrix();
    d_beta.row(0) += dy.colwise().sum();
    Matrix dxh = dy.array().rowwise() * gamma.row(0).array();
    Vector m1 = dxh.rowwise().mean();
    Vector m2 = (dxh.array() * x_hat.array()).rowwise().mean();
    Matrix dx = dxh;
    dx.colwise() -= m1;
    dx.array() -= x_hat.array().colwise() * m2.array();
    dx.array().colwise() *= istd.array();
    return dx;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }
inline double gelu_grad(double x) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) + x * phi;
}

Matrix trunc_normal_matrix(Eigen::Index rows, Eigen::Index cols, double sigma, Rng& rng) {
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = rng.truncated_normal(sigma);
    return m;
}

AttentionLayerParams init_layer(std::size_t d, std::size_t hidden, Rng& rng) {
    AttentionLayerParams p;
    const auto D = static_cast<Eigen::Index>(d);
    const auto H = static_cast<Eigen::Index>(hidden);
    p.ln_q_gamma = Matrix::Ones(1, D);
    p.ln_q_beta = Matrix::Zero(1, D);
    p.ln_kv_gamma = Matrix::Ones(1, D);
    p.ln_kv_beta = Matrix::Zero(1, D);
    p.wq = trunc_normal_matrix(D, D, 0.02, rng);
    p.wk = trunc_normal_matrix(D, D, 0.02, rng);
    p.wv = trunc_normal_matrix(D, D, 0.02, rng);
    p.wo = trunc_normal_matrix(D, D, 0.02, rng);
    p.bq = Matrix::Zero(1, D);
    p.bk = Matrix::Zero(1, D);
    p.bv = Matrix::Zero(1, D);
    p.bo = Matrix::Zero(1, D);
    p.ln_f_gamma = Matrix::Ones(1, D);
    p.ln_f_beta = Matrix::Zero(1, D);
    p.w1 = trunc_normal_matrix(D, H, 0.02, rng);
    p.b1 = Matrix::Zero(1, H);
    p.w2 = trunc_normal_matrix(H, D, 0.02, rng);
    p.b2 = Matrix::Zero(1, D);
    return p;
}

std::size_t ffn_hidden(const EncoderConfig& cfg) { return 4 * cfg.token_dim; }

void visit_layer(const std::string& prefix, AttentionLayerParams& p,
                 const std::function<void(const std::string&, Matrix&)>& fn) {
    fn(prefix + ".ln_q_gamma", p.ln_q_gamma);
    fn(prefix + ".ln_q_beta", p.ln_q_beta);
    fn(prefix + ".ln_kv_gamma", p.ln_kv_gamma);
    fn(prefix + ".ln_kv_beta", p.ln_kv_beta);
    fn(prefix + ".wq", p.wq);
    fn(prefix + ".bq", p.bq);
    fn(prefix + ".wk", p.wk);
    fn(prefix + ".bk", p.bk);
    fn(prefix + ".wv", p.wv);
    fn(prefix + ".bv", p.bv);
    fn(prefix + ".wo", p.wo);
    fn(prefix + ".bo", p.bo);
    fn(prefix + ".ln_f_gamma", p.ln_f_gamma);
    fn(prefix + ".ln_f_beta", p.ln_f_beta);
    fn(prefix + ".w1", p.w1);
    fn(prefix + ".b1", p.b1);
    fn(prefix + ".w2", p.w2);
    fn(prefix + ".b2", p.b2);
}

}  // namespace

EncoderState init_encoder(const EncoderConfig& config, const std::vector<SubjectSpec>& specs,
                          Rng& rng) {
    if (specs.empty()) throw std::invalid_argument("init_encoder: no subjects");
    if (config.token_count == 0 || config.token_dim == 0 || config.subject_token_count == 0 ||
        config.latent_query_count == 0 || config.attention_heads == 0 ||
        config.output_channels == 0) {
        throw std::invalid_argument("init_encoder: non-positive dimension in config");
    }
    if (config.token_dim % config.attention_heads != 0) {
        throw std::invalid_argument("init_encoder: token_dim not divisible by attention_heads");
    }
    std::unordered_set<std::string> ids;
    for (const auto& s : specs) {
        if (s.voxel_dim == 0) throw std::invalid_argument("init_encoder: voxel_dim must be >= 1");
        if (!ids.insert(s.subject_id).second) {
            throw std::invalid_argument("init_encoder: duplicate subject_id " + s.subject_id);
        }
    }

    EncoderState state;
    state.config = config;
    state.specs = specs;

    const auto L = static_cast<Eigen::Index>(config.token_count);
    const auto D = static_cast<Eigen::Index>(config.token_dim);
    const auto M = static_cast<Eigen::Index>(config.subject_token_count);
    const auto T = static_cast<Eigen::Index>(config.latent_query_count);
    const auto Dt = static_cast<Eigen::Index>(config.output_channels);

    for (const auto& spec : specs) {
        SubjectTokenizerParams tok;
        tok.projection =
            trunc_normal_matrix(L * D, static_cast<Eigen::Index>(spec.voxel_dim), 0.02, rng);
        tok.projection_bias = Matrix::Zero(1, L * D);
        tok.subject_tokens = trunc_normal_matrix(M, D, 0.02, rng);
        state.tokenizers.emplace(spec.subject_id, std::move(tok));
    }

    auto& pv = state.perceiver;
    pv.latent_queries = trunc_normal_matrix(T, D, 0.02, rng);
    for (std::size_t l = 0; l < config.encoder_depth; ++l) {
        pv.layers.push_back(init_layer(config.token_dim, ffn_hidden(config), rng));
    }
    pv.ln_out_gamma = Matrix::Ones(1, D);
    pv.ln_out_beta = Matrix::Zero(1, D);
    pv.w_out = trunc_normal_matrix(D, Dt, 0.02, rng);
    pv.b_out = Matrix::Zero(1, Dt);
    return state;
}

void visit_tensors(EncoderState& state,
                   const std::function<void(const std::string&, Matrix&)>& fn) {
    for (auto& [id, tok] : state.tokenizers) {
        fn("tokenizer." + id + ".projection", tok.projection);
        fn("tokenizer." + id + ".projection_bias", tok.projection_bias);
        fn("tokenizer." + id + ".subject_tokens", tok.subject_tokens);
    }
    auto& pv = state.perceiver;
    fn("perceiver.latent_queries", pv.latent_queries);
    for (std::size_t l = 0; l < pv.layers.size(); ++l) {
        visit_layer("perceiver.layer" + std::to_string(l), pv.layers[l], fn);
    }
    fn("perceiver.ln_out_gamma", pv.ln_out_gamma);
    fn("perceiver.ln_out_beta", pv.ln_out_beta);
    fn("perceiver.w_out", pv.w_out);
    fn("perceiver.b_out", pv.b_out);
}

void visit_tensors(const EncoderState& state,
                   const std::function<void(const std::string&, const Matrix&)>& fn) {
    visit_tensors(const_cast<EncoderState&>(state),
                  [&](const std::string& name, Matrix& m) { fn(name, m); });
}

EncoderState zeros_like(const EncoderState& state) {
    EncoderState z = state;
    visit_tensors(z, [](const std::string&, Matrix& m) { m.setZero(); });
    return z;
}

std::size_t count_parameters(const EncoderState& state) {
    std::size_t n = 0;
    visit_tensors(state, [&](const std::string&, const Matrix& m) {
        n += static_cast<std::size_t>(m.size());
    });
    return n;
}

Matrix tokenize(const EncoderState& state, const std::string& subject_id, const Vector& voxels) {
    auto it = state.tokenizers.find(subject_id);
    if (it == state.tokenizers.end()) {
        throw std::invalid_argument("tokenize: unknown subject " + subject_id);
    }
    const auto& tok = it->second;
    if (voxels.size() != tok.projection.cols()) {
        throw std::invalid_argument("tokenize: voxel length " + std::to_string(voxels.size()) +
                                    " does not match subject " + subject_id);
    }
    const auto L = static_cast<Eigen::Index>(state.config.token_count);
    const auto D = static_cast<Eigen::Index>(state.config.token_dim);
    const auto M = static_cast<Eigen::Index>(state.config.subject_token_count);

    Vector flat = tok.projection * voxels + tok.projection_bias.row(0).transpose();
    Matrix out(M + L, D);
    out.topRows(M) = tok.subject_tokens;
    // flat is laid out token-major: token i occupies [i*D, (i+1)*D)
    out.bottomRows(L) =
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            flat.data(), L, D);
    return out;
}

FeatureGrid encode(const EncoderState& state, const Matrix& tokens, ForwardCache* cache) {
    const auto& cfg = state.config;
    const auto D = static_cast<Eigen::Index>(cfg.token_dim);
    if (tokens.cols() != D) {
        throw std::invalid_argument("encode: token width " + std::to_string(tokens.cols()) +
                                    " != " + std::to_string(D));
    }
    const std::size_t heads = cfg.attention_heads;
    const Eigen::Index dh = D / static_cast<Eigen::Index>(heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    ForwardCache local;
    ForwardCache& c = cache ? *cache : local;
    c.tokens = tokens;
    c.layers.assign(state.perceiver.layers.size(), {});

    Matrix x = state.perceiver.latent_queries;
    for (std::size_t l = 0; l < state.perceiver.layers.size(); ++l) {
        const auto& p = state.perceiver.layers[l];
        LayerCache& lc = c.layers[l];
        lc.x_in = x;
        const Matrix& ctx = (l == 0) ? tokens : x;

        ln_forward(x, lc.qn, lc.q_mean, lc.q_istd);
        ln_forward(ctx, lc.kvn, lc.kv_mean, lc.kv_istd);
        Matrix qa = ln_affine(lc.qn, p.ln_q_gamma, p.ln_q_beta);
        Matrix kva = ln_affine(lc.kvn, p.ln_kv_gamma, p.ln_kv_beta);

        lc.q = qa * p.wq;
        lc.q.array().rowwise() += p.bq.row(0).array();
        lc.k = kva * p.wk;
        lc.k.array().rowwise() += p.bk.row(0).array();
        lc.v = kva * p.wv;
        lc.v.array().rowwise() += p.bv.row(0).array();

        lc.attn.resize(heads);
        lc.heads.resize(x.rows(), D);
        for (std::size_t h = 0; h < heads; ++h) {
            const auto col = static_cast<Eigen::Index>(h) * dh;
            Matrix s = scale * lc.q.middleCols(col, dh) * lc.k.middleCols(col, dh).transpose();
            s.colwise() -= s.rowwise().maxCoeff();
            Matrix a = s.array().exp();
            a.array().colwise() /= a.rowwise().sum().array();
            lc.attn[h] = a;
            lc.heads.middleCols(col, dh) = a * lc.v.middleCols(col, dh);
        }

        Matrix attn_out = lc.heads * p.wo;
        attn_out.array().rowwise() += p.bo.row(0).array();
        lc.x_mid = x + attn_out;

        ln_forward(lc.x_mid, lc.fn, lc.f_mean, lc.f_istd);
        Matrix fa = ln_affine(lc.fn, p.ln_f_gamma, p.ln_f_beta);
        lc.h_pre = fa * p.w1;
        lc.h_pre.array().rowwise() += p.b1.row(0).array();
        lc.h_act = lc.h_pre.unaryExpr([](double v) { return gelu(v); });
        Matrix ffn_out = lc.h_act * p.w2;
        ffn_out.array().rowwise() += p.b2.row(0).array();
        lc.x_out = lc.x_mid + ffn_out;
        x = lc.x_out;
    }

    ln_forward(x, c.out_n, c.o_mean, c.o_istd);
    Matrix on = ln_affine(c.out_n, state.perceiver.ln_out_gamma, state.perceiver.ln_out_beta);
    FeatureGrid grid;
    grid.values = on * state.perceiver.w_out;
    grid.values.array().rowwise() += state.perceiver.b_out.row(0).array();
    return grid;
}

FeatureGrid forward(const EncoderState& state, const std::string& subject_id, const Vector& voxels,
                    ForwardCache* cache) {
    return encode(state, tokenize(state, subject_id, voxels), cache);
}

void backward(const EncoderState& state, const std::string& subject_id, const Vector& voxels,
              const ForwardCache& cache, const Matrix& d_out, EncoderState& grads) {
    const auto& cfg = state.config;
    const auto D = static_cast<Eigen::Index>(cfg.token_dim);
    const std::size_t heads = cfg.attention_heads;
    const Eigen::Index dh = D / static_cast<Eigen::Index>(heads);
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));

    auto& gpv = grads.perceiver;
    const auto& pv = state.perceiver;

    // output head
    Matrix on = ln_affine(cache.out_n, pv.ln_out_gamma, pv.ln_out_beta);
    gpv.w_out += on.transpose() * d_out;
    gpv.b_out.row(0) += d_out.colwise().sum();
    Matrix d_on = d_out * pv.w_out.transpose();
    Matrix dx = ln_backward(d_on, cache.out_n, cache.o_istd, pv.ln_out_gamma, gpv.ln_out_gamma,
                            gpv.ln_out_beta);

    Matrix d_tokens = Matrix::Zero(cache.tokens.rows(), D);

    for (std::size_t li = pv.layers.size(); li-- > 0;) {
        const auto& p = pv.layers[li];
        auto& g = gpv.layers[li];
        const LayerCache& lc = cache.layers[li];

        // FFN block
        Matrix d_xmid = dx;
        Matrix d_hact = dx * p.w2.transpose();
        g.w2 += lc.h_act.transpose() * dx;
        g.b2.row(0) += dx.colwise().sum();
        Matrix d_hpre =
            d_hact.array() * lc.h_pre.unaryExpr([](double v) { return gelu_grad(v); }).array();
        Matrix fa = ln_affine(lc.fn, p.ln_f_gamma, p.ln_f_beta);
        g.w1 += fa.transpose() * d_hpre;
        g.b1.row(0) += d_hpre.colwise().sum();
        Matrix d_fa = d_hpre * p.w1.transpose();
        d_xmid += ln_backward(d_fa, lc.fn, lc.f_istd, p.ln_f_gamma, g.ln_f_gamma, g.ln_f_beta);

        // attention block
        Matrix d_xin = d_xmid;
        Matrix d_heads = d_xmid * p.wo.transpose();
        g.wo += lc.heads.transpose() * d_xmid;
        g.bo.row(0) += d_xmid.colwise().sum();

        Matrix dq(lc.q.rows(), D), dk(lc.k.rows(), D), dv(lc.v.rows(), D);
        for (std::size_t h = 0; h < heads; ++h) {
            const auto col = static_cast<Eigen::Index>(h) * dh;
            const Matrix& a = lc.attn[h];
            Matrix d_hh = d_heads.middleCols(col, dh);
            Matrix da = d_hh * lc.v.middleCols(col, dh).transpose();
            dv.middleCols(col, dh) = a.transpose() * d_hh;
            Vector rowdot = (da.array() * a.array()).rowwise().sum();
            Matrix ds = a.array() * (da.colwise() - rowdot).array();
            dq.middleCols(col, dh) = scale * ds * lc.k.middleCols(col, dh);
            dk.middleCols(col, dh) = scale * ds.transpose() * lc.q.middleCols(col, dh);
        }

        Matrix qa = ln_affine(lc.qn, p.ln_q_gamma, p.ln_q_beta);
        Matrix kva = ln_affine(lc.kvn, p.ln_kv_gamma, p.ln_kv_beta);
        g.wq += qa.transpose() * dq;
        g.bq.row(0) += dq.colwise().sum();
        g.wk += kva.transpose() * dk;
        g.bk.row(0) += dk.colwise().sum();
        g.wv += kva.transpose() * dv;
        g.bv.row(0) += dv.colwise().sum();

        Matrix d_qa = dq * p.wq.transpose();
        d_xin += ln_backward(d_qa, lc.qn, lc.q_istd, p.ln_q_gamma, g.ln_q_gamma, g.ln_q_beta);

        Matrix d_kva = dk * p.wk.transpose() + dv * p.wv.transpose();
        Matrix d_ctx =
            ln_backward(d_kva, lc.kvn, lc.kv_istd, p.ln_kv_gamma, g.ln_kv_gamma, g.ln_kv_beta);
        if (li == 0) {
            d_tokens += d_ctx;
        } else {
            d_xin += d_ctx;
        }
        dx = d_xin;
    }
    gpv.latent_queries += dx;

    // tokenizer
    auto git = grads.tokenizers.find(subject_id);
    if (git == grads.tokenizers.end()) {
        throw std::invalid_argument("backward: unknown subject " + subject_id);
    }
    auto& gtok = git->second;
    const auto M = static_cast<Eigen::Index>(cfg.subject_token_count);
    const auto L = static_cast<Eigen::Index>(cfg.token_count);
    gtok.subject_tokens += d_tokens.topRows(M);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> d_brain =
        d_tokens.bottomRows(L);
    Eigen::Map<const Vector> d_flat(d_brain.data(), L * D);
    gtok.projection += d_flat * voxels.transpose();
    gtok.projection_bias.row(0) += d_flat.transpose();
}

double gradient_check(EncoderState& state, const BrainSample& sample, double eps, Rng& rng,
                      std::size_t probes_per_tensor) {
    if (!sample.target) throw std::invalid_argument("gradient_check: sample has no target");
    const Matrix& target = sample.target->values;

    auto loss_of = [&](const EncoderState& s) {
        FeatureGrid g = forward(s, sample.subject_id, sample.voxels);
        return (g.values - target).squaredNorm() / static_cast<double>(target.size());
    };

    ForwardCache cache;
    FeatureGrid pred = forward(state, sample.subject_id, sample.voxels, &cache);
    Matrix d_out = 2.0 * (pred.values - target) / static_cast<double>(target.size());
    EncoderState grads = zeros_like(state);
    backward(state, sample.subject_id, sample.voxels, cache, d_out, grads);

    // Pair up tensors of state and grads by visiting in the same fixed order.
    std::vector<Matrix*> params, gparams;
    visit_tensors(state, [&](const std::string&, Matrix& m) { params.push_back(&m); });
    visit_tensors(grads, [&](const std::string&, Matrix& m) { gparams.push_back(&m); });

    // Entries whose gradient is orders of magnitude below the largest one in
    // the model sit under the central-difference noise floor (truncation +
    // cancellation at this eps), so probing them only measures arithmetic
    // noise. Restrict probes to entries the difference quotient can resolve.
    double g_max = 0.0;
    for (const Matrix* g : gparams) {
        if (g->size() > 0) g_max = std::max(g_max, g->cwiseAbs().maxCoeff());
    }
    const double resolvable = 1e-4 * g_max;

    double worst = 0.0;
    for (std::size_t t = 0; t < params.size(); ++t) {
        Matrix& p = *params[t];
        const Matrix& g = *gparams[t];
        for (std::size_t probe = 0; probe < probes_per_tensor; ++probe) {
            Eigen::Index idx = -1;
            for (int attempt = 0; attempt < 32; ++attempt) {
                const auto candidate = static_cast<Eigen::Index>(
                    rng.uniform_int(static_cast<std::uint64_t>(p.size())));
                if (std::abs(g.data()[candidate]) >= resolvable) {
                    idx = candidate;
                    break;
                }
            }
            if (idx < 0) continue;  // tensor has no resolvable entry in reach
            const double saved = p.data()[idx];
            p.data()[idx] = saved + eps;
            const double lp = loss_of(state);
            p.data()[idx] = saved - eps;
            const double lm = loss_of(state);
            p.data()[idx] = saved;
            const double numeric = (lp - lm) / (2.0 * eps);
            const double analytic = g.data()[idx];
            const double rel = std::abs(analytic - numeric) /
                               std::max({std::abs(analytic), std::abs(numeric), 1e-12});
            worst = std::max(worst, rel);
        }
    }
    return worst;
}

}  // namespace brainalign
