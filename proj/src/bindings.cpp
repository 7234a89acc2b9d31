#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "brainalign/captions.hpp"
#include "brainalign/datahub.hpp"
#include "brainalign/encoder.hpp"
#include "brainalign/metrics.hpp"
#include "brainalign/sampler.hpp"
#include "brainalign/synthworld.hpp"
#include "brainalign/trainer.hpp"
#include "brainalign/types.hpp"

namespace py = pybind11;
using namespace brainalign;

namespace {

BrainSample make_sample(const std::string& subject_id, const Vector& voxels,
                        const std::optional<Matrix>& target) {
    BrainSample s;
    s.subject_id = subject_id;
    s.voxels = voxels;
    if (target) s.target = FeatureGrid{*target};
    return s;
}

}  // namespace

PYBIND11_MODULE(_brainalign, m) {
    m.doc() = "multi-subject brain-signal encoder core";

    py::class_<EncoderConfig>(m, "EncoderConfig")
        .def(py::init([](std::size_t token_count, std::size_t token_dim,
                         std::size_t subject_token_count, std::size_t latent_query_count,
                         std::size_t encoder_depth, std::size_t attention_heads,
                         std::size_t output_channels) {
                 EncoderConfig c;
                 c.token_count = token_count;
                 c.token_dim = token_dim;
                 c.subject_token_count = subject_token_count;
                 c.latent_query_count = latent_query_count;
                 c.encoder_depth = encoder_depth;
                 c.attention_heads = attention_heads;
                 c.output_channels = output_channels;
                 return c;
             }),
             py::arg("token_count") = 256, py::arg("token_dim") = 1024,
             py::arg("subject_token_count") = 5, py::arg("latent_query_count") = 256,
             py::arg("encoder_depth") = 4, py::arg("attention_heads") = 8,
             py::arg("output_channels") = 1024)
        .def_readwrite("token_count", &EncoderConfig::token_count)
        .def_readwrite("token_dim", &EncoderConfig::token_dim)
        .def_readwrite("subject_token_count", &EncoderConfig::subject_token_count)
        .def_readwrite("latent_query_count", &EncoderConfig::latent_query_count)
        .def_readwrite("encoder_depth", &EncoderConfig::encoder_depth)
        .def_readwrite("attention_heads", &EncoderConfig::attention_heads)
        .def_readwrite("output_channels", &EncoderConfig::output_channels)
        .def("__eq__", [](const EncoderConfig& a, const EncoderConfig& b) { return a == b; });

    m.def("desk_encoder_config", &desk_encoder_config,
          "Small configuration for CPU-scale verification runs");

    py::class_<EncoderState>(m, "EncoderState")
        .def_property_readonly("config", [](const EncoderState& s) { return s.config; })
        .def_property_readonly("subject_ids",
                               [](const EncoderState& s) {
                                   std::vector<std::string> ids;
                                   for (const auto& spec : s.specs) ids.push_back(spec.subject_id);
                                   return ids;
                               })
        .def("count_parameters", [](const EncoderState& s) { return count_parameters(s); })
        .def("forward",
             [](const EncoderState& s, const std::string& subject_id, const Vector& voxels) {
                 return forward(s, subject_id, voxels).values;
             },
             py::arg("subject_id"), py::arg("voxels"),
             "Encode one voxel vector into the (latent_queries, output_channels) grid")
        .def("tensors", [](const EncoderState& s) {
            std::map<std::string, Matrix> out;
            visit_tensors(s, [&](const std::string& n, const Matrix& mat) { out[n] = mat; });
            return out;
        });

    m.def(
        "init_encoder",
        [](const EncoderConfig& cfg,
           const std::vector<std::pair<std::string, std::size_t>>& subjects,
           std::uint64_t seed) {
            std::vector<SubjectSpec> specs;
            for (const auto& [id, dim] : subjects) specs.push_back({id, dim});
            Rng rng(seed);
            return init_encoder(cfg, specs, rng);
        },
        py::arg("config"), py::arg("subjects"), py::arg("seed") = 0,
        "subjects: list of (subject_id, voxel_dim) pairs");

    m.def(
        "train_align",
        [](EncoderState& state,
           const std::vector<std::tuple<std::string, Vector, Matrix>>& samples,
           std::size_t batch_size, double theta, std::size_t epochs, double lr_max,
           std::uint64_t seed, const std::string& loss, const std::string& strategy) {
            std::vector<BrainSample> data;
            for (const auto& [id, voxels, target] : samples) {
                data.push_back(make_sample(id, voxels, target));
            }
            TrainConfig tc;
            tc.batch_size = batch_size;
            tc.theta = theta;
            tc.epochs = epochs;
            tc.lr_max = lr_max;
            tc.seed = seed;
            LossConfig lc;
            if (loss == "mse") {
                lc.kind = LossKind::MseEncoder;
            } else if (loss == "nce") {
                lc.kind = LossKind::NceEncoder;
            } else if (loss == "nce_mixco") {
                lc.kind = LossKind::NceEncoder;
                lc.mixco_enabled = true;
            } else {
                throw std::invalid_argument("loss must be mse, nce, or nce_mixco");
            }
            tc.loss = lc.kind;
            auto log = train_align(state, data, tc, lc, parse_strategy(strategy));
            py::list steps;
            for (const auto& s : log.steps) {
                steps.append(py::dict(py::arg("step") = s.step, py::arg("epoch") = s.epoch,
                                      py::arg("loss") = s.loss, py::arg("lr") = s.lr,
                                      py::arg("dominant_subject") = s.dominant_subject));
            }
            py::list epochs_out;
            for (const auto& e : log.epochs) {
                epochs_out.append(
                    py::dict(py::arg("epoch") = e.epoch, py::arg("val_mse") = e.val_mse));
            }
            return py::dict(py::arg("steps") = steps, py::arg("epochs") = epochs_out);
        },
        py::arg("state"), py::arg("samples"), py::arg("batch_size") = 64,
        py::arg("theta") = 0.5, py::arg("epochs") = 10, py::arg("lr_max") = 2e-3,
        py::arg("seed") = 0, py::arg("loss") = "mse", py::arg("strategy") = "ours",
        "samples: list of (subject_id, voxels, target_grid) tuples; mutates state");

    m.def(
        "adapt_subject",
        [](const EncoderState& base, const std::string& subject_id, std::size_t voxel_dim,
           const std::vector<std::tuple<std::string, Vector, Matrix>>& samples,
           double data_ratio, bool finetune, std::size_t batch_size, std::size_t epochs,
           double lr_max, std::uint64_t seed) {
            std::vector<BrainSample> data;
            for (const auto& [id, voxels, target] : samples) {
                data.push_back(make_sample(id, voxels, target));
            }
            AdaptationConfig ac;
            ac.mode = finetune ? AdaptationMode::Finetuned : AdaptationMode::Frozen;
            ac.data_ratio = data_ratio;
            TrainConfig tc;
            tc.batch_size = batch_size;
            tc.epochs = epochs;
            tc.lr_max = lr_max;
            tc.seed = seed;
            auto [adapted, log] = adapt_subject(base, {subject_id, voxel_dim}, data, ac, tc);
            return adapted;
        },
        py::arg("base"), py::arg("subject_id"), py::arg("voxel_dim"), py::arg("samples"),
        py::arg("data_ratio") = 1.0, py::arg("finetune") = false, py::arg("batch_size") = 32,
        py::arg("epochs") = 10, py::arg("lr_max") = 2e-3, py::arg("seed") = 0);

    m.def(
        "compose_batch",
        [](const std::map<std::string, std::size_t>& sizes, std::size_t batch_size,
           double theta, const std::string& strategy, std::uint64_t seed) {
            Rng rng(seed);
            auto plan = compose_batch(sizes, batch_size, theta, parse_strategy(strategy), rng);
            std::vector<std::pair<std::string, std::size_t>> entries;
            for (const auto& e : plan.entries) entries.emplace_back(e.subject_id, e.sample_index);
            return py::make_tuple(entries, plan.dominant_subject);
        },
        py::arg("sizes"), py::arg("batch_size"), py::arg("theta") = 0.5,
        py::arg("strategy") = "ours", py::arg("seed") = 0,
        "Returns (entries, dominant_subject)");

    m.def("save_checkpoint",
          [](const EncoderState& state, const std::string& path, std::uint64_t seed) {
              Checkpoint ckpt;
              ckpt.state = state;
              ckpt.provenance.seed = seed;
              ckpt.provenance.config_hash = config_hash(state.config);
              for (const auto& spec : state.specs) {
                  ckpt.provenance.subject_ids.push_back(spec.subject_id);
              }
              save_checkpoint(ckpt, path);
          },
          py::arg("state"), py::arg("path"), py::arg("seed") = 0);
    m.def("load_checkpoint",
          [](const std::string& path) { return load_checkpoint(path).state; }, py::arg("path"));

    // metrics
    m.def(
        "iou",
        [](const std::vector<double>& a, const std::vector<double>& b) {
            if (a.size() != 4 || b.size() != 4) {
                throw std::invalid_argument("boxes are [x1, y1, x2, y2]");
            }
            return iou({"", a[0], a[1], a[2], a[3]}, {"", b[0], b[1], b[2], b[3]});
        },
        py::arg("box_a"), py::arg("box_b"));
    m.def(
        "retrieval_report",
        [](const Matrix& brain, const Matrix& image, std::size_t pool, std::size_t trials,
           std::uint64_t seed) {
            Rng rng(seed);
            auto r = retrieval_report(brain, image, pool, trials, rng);
            return py::dict(py::arg("forward_acc") = r.forward_acc,
                            py::arg("backward_acc") = r.backward_acc,
                            py::arg("exemplar_acc") = r.exemplar_acc,
                            py::arg("pool") = r.pool_size, py::arg("trials") = r.trials);
        },
        py::arg("brain"), py::arg("image"), py::arg("pool") = 300, py::arg("trials") = 30,
        py::arg("seed") = 0);
    m.def("bleu_k", &bleu_k, py::arg("candidate"), py::arg("references"), py::arg("k") = 4);
    m.def("rouge_l", &rouge_l, py::arg("candidate"), py::arg("reference"),
          py::arg("beta") = 1.2);

    m.def(
        "grounding_accuracy",
        [](const std::vector<std::tuple<std::string, double, double, double, double>>& gts,
           const std::vector<std::tuple<double, double, double, double>>& preds) {
            std::vector<LabeledBox> g, p;
            for (const auto& [label, x1, y1, x2, y2] : gts) g.push_back({label, x1, y1, x2, y2});
            for (const auto& [x1, y1, x2, y2] : preds) p.push_back({"", x1, y1, x2, y2});
            auto rep = grounding_accuracy(p, g, default_taxonomy());
            py::dict out;
            for (const auto& [name, b] : rep.buckets) {
                py::dict acc;
                for (const auto& [t, v] : b.acc) acc[py::float_(t)] = v;
                out[py::str(name)] =
                    py::dict(py::arg("count") = b.count, py::arg("mean_iou") = b.mean_iou,
                             py::arg("acc") = acc);
            }
            return out;
        },
        py::arg("ground_truths"), py::arg("predictions"),
        "ground_truths: (label, x1, y1, x2, y2); predictions: (x1, y1, x2, y2)");

    // synthetic world
    m.def(
        "synthetic_dataset",
        [](std::size_t subjects, const std::vector<std::size_t>& dims, std::size_t grid_tokens,
           std::size_t grid_channels, std::size_t gallery, double sigma,
           std::size_t n_per_subject, std::uint64_t seed) {
            Rng rng(seed);
            auto world =
                make_world(subjects, dims, grid_tokens, grid_channels, gallery, sigma, rng);
            auto data = sample_dataset(world, n_per_subject, rng);
            std::vector<std::tuple<std::string, Vector, Matrix>> out;
            for (const auto& s : data) out.emplace_back(s.subject_id, s.voxels, s.target->values);
            return out;
        },
        py::arg("subjects"), py::arg("dims"), py::arg("grid_tokens") = 16,
        py::arg("grid_channels") = 32, py::arg("gallery") = 400, py::arg("sigma") = 0.0,
        py::arg("n_per_subject") = 100, py::arg("seed") = 0,
        "Returns a list of (subject_id, voxels, target_grid) tuples");
}
