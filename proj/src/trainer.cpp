#include "brainalign/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace brainalign {

double mse_loss(const FeatureGrid& pred, const FeatureGrid& target) {
    if (pred.values.rows() != target.values.rows() ||
        pred.values.cols() != target.values.cols()) {
        throw std::invalid_argument("mse_loss: shape mismatch");
    }
    return (pred.values - target.values).squaredNorm() /
           static_cast<double>(pred.values.size());
}

double infonce_loss(const Matrix& brain, const Matrix& image, double temperature, Rng* rng,
                    bool mixco, double mixco_alpha, Matrix* d_brain) {
    const Eigen::Index n = brain.rows();
    if (n < 2) throw std::invalid_argument("infonce_loss: need at least 2 rows");
    if (brain.rows() != image.rows() || brain.cols() != image.cols()) {
        throw std::invalid_argument("infonce_loss: shape mismatch");
    }
    if (temperature <= 0.0) throw std::invalid_argument("infonce_loss: temperature must be > 0");
    if (mixco && rng == nullptr) throw std::invalid_argument("infonce_loss: mixco needs an rng");

    // optional MixCo: convex-mix brain rows with a shuffled partner
    Matrix mixed = brain;
    std::vector<Eigen::Index> partner(n);
    Vector lambda = Vector::Ones(n);
    Matrix targets = Matrix::Identity(n, n);
    if (mixco) {
        auto perm = rng->sample_without_replacement(static_cast<std::size_t>(n),
                                                    static_cast<std::size_t>(n));
        for (Eigen::Index i = 0; i < n; ++i) {
            partner[i] = static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)]);
            lambda(i) = rng->beta(mixco_alpha, mixco_alpha);
            mixed.row(i) = lambda(i) * brain.row(i) + (1.0 - lambda(i)) * brain.row(partner[i]);
            targets(i, i) = 0.0;
            targets(i, i) += lambda(i);
            targets(i, partner[i]) += 1.0 - lambda(i);
        }
    }

    // row normalization (image rows are constants)
    Vector b_norm(n), i_norm(n);
    Matrix bn(n, brain.cols()), in(n, brain.cols());
    for (Eigen::Index i = 0; i < n; ++i) {
        b_norm(i) = mixed.row(i).norm();
        i_norm(i) = image.row(i).norm();
        if (b_norm(i) == 0.0 || i_norm(i) == 0.0) {
            throw std::invalid_argument("infonce_loss: zero-norm row");
        }
        bn.row(i) = mixed.row(i) / b_norm(i);
        in.row(i) = image.row(i) / i_norm(i);
    }

    Matrix logits = (bn * in.transpose()) / temperature;

    // row-wise and column-wise softmax
    Matrix p_row = logits;
    for (Eigen::Index i = 0; i < n; ++i) {
        Vector r = logits.row(i);
        const double m = r.maxCoeff();
        Vector e = (r.array() - m).exp();
        p_row.row(i) = e / e.sum();
    }
    Matrix p_col = logits;
    for (Eigen::Index j = 0; j < n; ++j) {
        Vector c = logits.col(j);
        const double m = c.maxCoeff();
        Vector e = (c.array() - m).exp();
        p_col.col(j) = e / e.sum();
    }

    double loss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            if (targets(i, j) == 0.0) continue;
            loss -= 0.5 * targets(i, j) *
                    (std::log(p_row(i, j)) + std::log(p_col(i, j))) / static_cast<double>(n);
        }
    }

    if (d_brain) {
        Vector col_mass = targets.colwise().sum();
        Matrix d_logits(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                // row targets sum to 1 per row; column mass may differ under mixco
                d_logits(i, j) = 0.5 / static_cast<double>(n) *
                                 ((p_row(i, j) - targets(i, j)) +
                                  (p_col(i, j) * col_mass(j) - targets(i, j)));
            }
        }
        Matrix d_bn = d_logits * in / temperature;
        Matrix d_mixed(n, brain.cols());
        for (Eigen::Index i = 0; i < n; ++i) {
            // through the row normalization
            const Vector u = bn.row(i).transpose();
            const Vector g = d_bn.row(i).transpose();
            d_mixed.row(i) = ((g - u * u.dot(g)) / b_norm(i)).transpose();
        }
        d_brain->setZero(n, brain.cols());
        if (mixco) {
            for (Eigen::Index i = 0; i < n; ++i) {
                d_brain->row(i) += lambda(i) * d_mixed.row(i);
                d_brain->row(partner[i]) += (1.0 - lambda(i)) * d_mixed.row(i);
            }
        } else {
            *d_brain = d_mixed;
        }
    }
    return loss;
}

double one_cycle_lr(std::size_t step, std::size_t total_steps, double lr_max) {
    if (step >= total_steps) throw std::invalid_argument("one_cycle_lr: step out of range");
    const double warmup_frac = 0.3;
    const double start = lr_max / 25.0;
    const double end = lr_max / 1e4;
    const auto warmup =
        static_cast<std::size_t>(warmup_frac * static_cast<double>(total_steps));
    if (warmup > 0 && step <= warmup) {
        const double t = static_cast<double>(step) / static_cast<double>(warmup);
        return start + (lr_max - start) * 0.5 * (1.0 - std::cos(M_PI * t));
    }
    const std::size_t decay_steps = total_steps - 1 - warmup;
    if (decay_steps == 0) return end;
    const double t = static_cast<double>(step - warmup) / static_cast<double>(decay_steps);
    return end + (lr_max - end) * 0.5 * (1.0 + std::cos(M_PI * t));
}

AdamW::AdamW(const EncoderState& shape, const TrainConfig& cfg)
    : m_(zeros_like(shape)),
      v_(zeros_like(shape)),
      beta1_(cfg.beta1),
      beta2_(cfg.beta2),
      weight_decay_(cfg.weight_decay) {}

void AdamW::restore(EncoderState m, EncoderState v, std::size_t t) {
    m_ = std::move(m);
    v_ = std::move(v);
    t_ = t;
}

void AdamW::step(EncoderState& params, EncoderState& grads, double lr,
                 const std::function<bool(const std::string&)>* trainable) {
    std::vector<std::string> names;
    std::vector<Matrix*> p, g, m, v;
    visit_tensors(params, [&](const std::string& name, Matrix& t) {
        names.push_back(name);
        p.push_back(&t);
    });
    visit_tensors(grads, [&](const std::string&, Matrix& t) { g.push_back(&t); });
    visit_tensors(m_, [&](const std::string&, Matrix& t) { m.push_back(&t); });
    visit_tensors(v_, [&](const std::string&, Matrix& t) { v.push_back(&t); });

    // global-norm clip at 1.0 over trainable tensors
    double sq = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (trainable && !(*trainable)(names[i])) continue;
        sq += g[i]->squaredNorm();
    }
    const double gnorm = std::sqrt(sq);
    const double clip = gnorm > 1.0 ? 1.0 / gnorm : 1.0;

    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (trainable && !(*trainable)(names[i])) continue;
        Matrix grad = clip * *g[i];
        *m[i] = beta1_ * *m[i] + (1.0 - beta1_) * grad;
        *v[i] = beta2_ * *v[i] + (1.0 - beta2_) * grad.array().square().matrix();
        Matrix mhat = *m[i] / bc1;
        Matrix vhat = *v[i] / bc2;
        p[i]->array() -=
            lr * (mhat.array() / (vhat.array().sqrt() + 1e-8) + weight_decay_ * p[i]->array());
    }
}

namespace {

Vector flatten_row_major(const Matrix& m) {
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    return Eigen::Map<const Vector>(rm.data(), rm.size());
}

Matrix unflatten_row_major(const Vector& v, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                                          Eigen::RowMajor>>(v.data(), rows, cols);
}

struct Partitions {
    std::map<std::string, std::vector<std::size_t>> train;  // subject -> dataset indices
    std::map<std::string, std::vector<std::size_t>> val;
};

// 2% per subject held out for validation, seeded.
Partitions split_dataset(const std::vector<BrainSample>& samples, Rng& rng) {
    Partitions parts;
    std::map<std::string, std::vector<std::size_t>> by_subject;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        by_subject[samples[i].subject_id].push_back(i);
    }
    for (auto& [id, idx] : by_subject) {
        const auto n_val = static_cast<std::size_t>(0.02 * static_cast<double>(idx.size()));
        auto order = rng.sample_without_replacement(idx.size(), idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) {
            auto& dst = i < n_val ? parts.val[id] : parts.train[id];
            dst.push_back(idx[order[i]]);
        }
        if (parts.train[id].empty()) {  // tiny datasets keep everything for training
            parts.train[id] = idx;
            parts.val.erase(id);
        }
    }
    return parts;
}

TrainLog run_training(EncoderState& state, const std::vector<BrainSample>& samples,
                      const Partitions& parts, const TrainConfig& cfg,
                      const LossConfig& loss_cfg, SamplingStrategy strategy,
                      const std::function<bool(const std::string&)>* trainable) {
    for (const auto& s : samples) {
        if (!s.target) throw std::invalid_argument("train: sample without target grid");
    }

    SubjectSizes sizes;
    for (const auto& [id, idx] : parts.train) sizes[id] = idx.size();
    std::size_t total = 0;
    for (const auto& [id, n] : sizes) total += n;
    const std::size_t steps_per_epoch =
        (total + cfg.batch_size - 1) / std::max<std::size_t>(cfg.batch_size, 1);
    const std::size_t total_steps = cfg.epochs * steps_per_epoch;

    Rng rng(cfg.seed);
    AdamW optimizer(state, cfg);
    TrainLog log;
    const double numel = state.config.latent_query_count * state.config.output_channels;

    std::size_t step = 0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        for (std::size_t b = 0; b < steps_per_epoch; ++b, ++step) {
            const double lr = cfg.schedule == LrSchedule::OneCycle
                                  ? one_cycle_lr(step, total_steps, cfg.lr_max)
                                  : cfg.lr_max;
            BatchPlan plan = compose_batch(sizes, cfg.batch_size, cfg.theta, strategy, rng);

            EncoderState grads = zeros_like(state);
            double loss = 0.0;
            const auto bsz = static_cast<double>(plan.entries.size());

            if (loss_cfg.kind == LossKind::MseEncoder) {
                for (const auto& entry : plan.entries) {
                    const auto& sample =
                        samples[parts.train.at(entry.subject_id)[entry.sample_index]];
                    ForwardCache cache;
                    FeatureGrid pred = forward(state, sample.subject_id, sample.voxels, &cache);
                    const Matrix diff = pred.values - sample.target->values;
                    loss += diff.squaredNorm() / numel / bsz;
                    Matrix d_out = 2.0 * diff / numel / bsz;
                    backward(state, sample.subject_id, sample.voxels, cache, d_out, grads);
                }
            } else {
                std::vector<ForwardCache> caches(plan.entries.size());
                Matrix brain(plan.entries.size(), static_cast<Eigen::Index>(numel));
                Matrix image(plan.entries.size(), static_cast<Eigen::Index>(numel));
                for (std::size_t i = 0; i < plan.entries.size(); ++i) {
                    const auto& entry = plan.entries[i];
                    const auto& sample =
                        samples[parts.train.at(entry.subject_id)[entry.sample_index]];
                    FeatureGrid pred =
                        forward(state, sample.subject_id, sample.voxels, &caches[i]);
                    brain.row(static_cast<Eigen::Index>(i)) =
                        flatten_row_major(pred.values).transpose();
                    image.row(static_cast<Eigen::Index>(i)) =
                        flatten_row_major(sample.target->values).transpose();
                }
                Matrix d_brain;
                loss = infonce_loss(brain, image, loss_cfg.temperature, &rng,
                                    loss_cfg.mixco_enabled, loss_cfg.mixco_alpha, &d_brain);
                for (std::size_t i = 0; i < plan.entries.size(); ++i) {
                    const auto& entry = plan.entries[i];
                    const auto& sample =
                        samples[parts.train.at(entry.subject_id)[entry.sample_index]];
                    Matrix d_out = unflatten_row_major(
                        d_brain.row(static_cast<Eigen::Index>(i)).transpose(),
                        sample.target->values.rows(), sample.target->values.cols());
                    backward(state, sample.subject_id, sample.voxels, caches[i], d_out, grads);
                }
            }

            if (!std::isfinite(loss)) {
                throw std::runtime_error("train: non-finite loss at step " +
                                         std::to_string(step));
            }
            optimizer.step(state, grads, lr, trainable);
            log.steps.push_back({step, epoch, loss, lr, plan.dominant_subject});
        }

        // per-epoch validation MSE over the held-out split
        double val_sum = 0.0;
        std::size_t val_n = 0;
        for (const auto& [id, idx] : parts.val) {
            for (auto i : idx) {
                FeatureGrid pred = forward(state, samples[i].subject_id, samples[i].voxels);
                val_sum += (pred.values - samples[i].target->values).squaredNorm() / numel;
                ++val_n;
            }
        }
        log.epochs.push_back({epoch, val_n ? val_sum / static_cast<double>(val_n) : 0.0});
    }
    return log;
}

}  // namespace

TrainLog train_align(EncoderState& state, const std::vector<BrainSample>& samples,
                     const TrainConfig& train_cfg, const LossConfig& loss_cfg,
                     SamplingStrategy strategy) {
    Rng split_rng(train_cfg.seed ^ 0x5eedULL);
    Partitions parts = split_dataset(samples, split_rng);
    return run_training(state, samples, parts, train_cfg, loss_cfg, strategy, nullptr);
}

std::pair<EncoderState, TrainLog> adapt_subject(const EncoderState& base,
                                                const SubjectSpec& new_spec,
                                                const std::vector<BrainSample>& new_data,
                                                const AdaptationConfig& adapt_cfg,
                                                const TrainConfig& train_cfg) {
    if (base.tokenizers.count(new_spec.subject_id)) {
        throw std::invalid_argument("adapt_subject: subject already registered: " +
                                    new_spec.subject_id);
    }
    if (adapt_cfg.data_ratio <= 0.0 || adapt_cfg.data_ratio > 1.0) {
        throw std::invalid_argument("adapt_subject: data_ratio not in (0,1]");
    }

    EncoderState state = base;
    state.specs.push_back(new_spec);

    // fresh tokenizer init, drawn from the training seed
    Rng init_rng(train_cfg.seed ^ 0xada9d7ULL);
    Rng tmp = init_rng.fork();
    EncoderState fresh = init_encoder(state.config, {new_spec}, tmp);
    state.tokenizers.emplace(new_spec.subject_id,
                             fresh.tokenizers.at(new_spec.subject_id));

    // seeded subsample of the new subject's data
    std::vector<BrainSample> subset;
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(adapt_cfg.data_ratio *
                                    static_cast<double>(new_data.size())));
    Rng sub_rng = init_rng.fork();
    for (auto i : sub_rng.sample_without_replacement(new_data.size(), keep)) {
        if (new_data[i].subject_id != new_spec.subject_id) {
            throw std::invalid_argument("adapt_subject: sample from a different subject");
        }
        subset.push_back(new_data[i]);
    }

    const std::string tokenizer_prefix = "tokenizer." + new_spec.subject_id + ".";
    std::function<bool(const std::string&)> frozen_filter =
        [tokenizer_prefix](const std::string& name) {
            return name.rfind(tokenizer_prefix, 0) == 0;
        };
    const auto* filter =
        adapt_cfg.mode == AdaptationMode::Frozen ? &frozen_filter : nullptr;

    LossConfig loss_cfg;
    loss_cfg.kind = train_cfg.loss;
    Rng split_rng(train_cfg.seed ^ 0x5eedULL);
    Partitions parts = split_dataset(subset, split_rng);
    TrainLog log = run_training(state, subset, parts, train_cfg,
                                loss_cfg, SamplingStrategy::Ours, filter);
    return {std::move(state), std::move(log)};
}

}  // namespace brainalign
