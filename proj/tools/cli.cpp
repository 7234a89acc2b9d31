// Command-line front end: dataset simulation, training, adaptation sweeps,
// evaluation reports, and artifact inspection.
//
// Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "brainalign/captions.hpp"
#include "brainalign/datahub.hpp"
#include "brainalign/encoder.hpp"
#include "brainalign/metrics.hpp"
#include "brainalign/sampler.hpp"
#include "brainalign/synthworld.hpp"
#include "brainalign/trainer.hpp"
#include "brainalign/types.hpp"

using namespace brainalign;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

struct CliDataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

// Resolves a config file against $BRAINALIGN_CONFIG_DIR when the given path
// does not exist as written.
std::string resolve_config(const std::string& path) {
    if (fs::exists(path)) return path;
    if (const char* dir = std::getenv("BRAINALIGN_CONFIG_DIR")) {
        const auto candidate = fs::path(dir) / path;
        if (fs::exists(candidate)) return candidate.string();
    }
    throw CliDataError("config file not found: " + path);
}

struct EncoderFlags {
    std::string config_file;
    std::size_t token_count = 0, token_dim = 0, subject_tokens = 0;
    std::size_t latent_queries = 0, depth = 0, heads = 0, output_channels = 0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_file,
                        "JSON encoder config (defaults to the desk-scale preset)");
        cmd->add_option("--token-count", token_count, "brain tokens per subject");
        cmd->add_option("--token-dim", token_dim, "token embedding width");
        cmd->add_option("--subject-tokens", subject_tokens, "prepended subject tokens");
        cmd->add_option("--latent-queries", latent_queries, "latent bottleneck size");
        cmd->add_option("--depth", depth, "encoder layers");
        cmd->add_option("--heads", heads, "attention heads");
        cmd->add_option("--output-channels", output_channels, "output grid channels");
    }

    EncoderConfig materialize() const {
        EncoderConfig cfg = desk_encoder_config();
        if (!config_file.empty()) {
            std::ifstream in(resolve_config(config_file));
            json j = json::parse(in);
            if (j.contains("token_count")) cfg.token_count = j["token_count"];
            if (j.contains("token_dim")) cfg.token_dim = j["token_dim"];
            if (j.contains("subject_token_count"))
                cfg.subject_token_count = j["subject_token_count"];
            if (j.contains("latent_query_count"))
                cfg.latent_query_count = j["latent_query_count"];
            if (j.contains("encoder_depth")) cfg.encoder_depth = j["encoder_depth"];
            if (j.contains("attention_heads")) cfg.attention_heads = j["attention_heads"];
            if (j.contains("output_channels")) cfg.output_channels = j["output_channels"];
        }
        if (token_count) cfg.token_count = token_count;
        if (token_dim) cfg.token_dim = token_dim;
        if (subject_tokens) cfg.subject_token_count = subject_tokens;
        if (latent_queries) cfg.latent_query_count = latent_queries;
        if (depth) cfg.encoder_depth = depth;
        if (heads) cfg.attention_heads = heads;
        if (output_channels) cfg.output_channels = output_channels;
        return cfg;
    }
};

LoadedDataset load_dataset_checked(const std::string& manifest) {
    try {
        return load_dataset(manifest);
    } catch (const std::exception& e) {
        throw CliDataError(e.what());
    }
}

std::vector<BrainSample> filter_subjects(const std::vector<BrainSample>& samples,
                                         const std::vector<std::string>& keep) {
    if (keep.empty()) return samples;
    std::vector<BrainSample> out;
    for (const auto& s : samples) {
        for (const auto& id : keep) {
            if (s.subject_id == id) {
                out.push_back(s);
                break;
            }
        }
    }
    return out;
}

Vector flatten_grid(const Matrix& m) {
    Vector out(m.size());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out(k++) = m(i, j);
    return out;
}

void embed_samples(const EncoderState& state, const std::vector<BrainSample>& samples,
                   Matrix& brain, Matrix& image) {
    const auto rows = static_cast<Eigen::Index>(samples.size());
    const auto cols = static_cast<Eigen::Index>(state.config.latent_query_count *
                                                state.config.output_channels);
    brain.resize(rows, cols);
    image.resize(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& s = samples[static_cast<std::size_t>(i)];
        if (!s.target) throw CliDataError("sample without target grid: " + s.subject_id);
        brain.row(i) = flatten_grid(forward(state, s.subject_id, s.voxels).values).transpose();
        image.row(i) = flatten_grid(s.target->values).transpose();
    }
}

void write_text(const std::string& path, const std::string& text) {
    fs::create_directories(fs::path(path).parent_path().empty()
                               ? "."
                               : fs::path(path).parent_path().string());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CliDataError("cannot write: " + path);
    out << text;
}

void write_log(const TrainLog& log, const std::string& tsv_path,
               const std::string& json_path) {
    std::ostringstream tsv;
    tsv << "step\tepoch\tloss\tlr\tdominant_subject\n";
    for (const auto& s : log.steps) {
        tsv << s.step << '\t' << s.epoch << '\t' << fmt(s.loss) << '\t' << fmt(s.lr) << '\t'
            << s.dominant_subject << '\n';
    }
    for (const auto& e : log.epochs) {
        tsv << "epoch\t" << e.epoch << "\tval_mse\t" << fmt(e.val_mse) << "\t-\n";
    }
    write_text(tsv_path, tsv.str());

    json j;
    j["steps"] = json::array();
    for (const auto& s : log.steps) {
        j["steps"].push_back({{"step", s.step},
                              {"epoch", s.epoch},
                              {"loss", s.loss},
                              {"lr", s.lr},
                              {"dominant_subject", s.dominant_subject}});
    }
    j["epochs"] = json::array();
    for (const auto& e : log.epochs) {
        j["epochs"].push_back({{"epoch", e.epoch}, {"val_mse", e.val_mse}});
    }
    write_text(json_path, j.dump(1) + "\n");
}

// --------------------------------------------------------------------------
// simulate

struct SimulateArgs {
    std::size_t subjects = 3;
    std::vector<std::size_t> dims = {512, 640, 768};
    std::size_t grid_tokens = 16, grid_channels = 32;
    std::size_t gallery = 1200;
    double sigma = 0.0;
    std::size_t train_per_subject = 512, test_per_subject = 200;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_simulate(const SimulateArgs& a) {
    Rng rng(a.seed);
    auto world = make_world(a.subjects, a.dims, a.grid_tokens, a.grid_channels, a.gallery,
                            a.sigma, rng);
    DatasetSplits splits;
    splits.train = sample_dataset(world, a.train_per_subject, rng);
    splits.test = sample_dataset(world, a.test_per_subject, rng);
    save_dataset(a.out, world_specs(world), splits);
    std::printf("wrote %zu train / %zu test samples for %zu subjects to %s\n",
                splits.train.size(), splits.test.size(), a.subjects, a.out.c_str());
    return 0;
}

// --------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string manifest;
    std::vector<std::string> subjects;
    double theta = 0.5;
    std::string strategy = "ours";
    std::size_t epochs = 30;
    std::size_t batch = 64;
    std::string loss = "mse";
    double lr_max = 2e-3;
    std::uint64_t seed = 0;
    std::string out;
    EncoderFlags encoder;
};

int cmd_train(const TrainArgs& a) {
    auto dataset = load_dataset_checked(a.manifest);
    auto samples = filter_subjects(dataset.splits.train, a.subjects);
    if (samples.empty()) throw CliDataError("no training samples after subject filtering");

    std::vector<SubjectSpec> specs;
    for (const auto& spec : dataset.specs) {
        if (a.subjects.empty()) {
            specs.push_back(spec);
        } else {
            for (const auto& id : a.subjects) {
                if (spec.subject_id == id) specs.push_back(spec);
            }
        }
    }
    if (specs.empty()) throw CliDataError("no matching subjects in the manifest");

    EncoderConfig cfg = a.encoder.materialize();
    TrainConfig tc;
    tc.batch_size = a.batch;
    tc.theta = a.theta;
    tc.epochs = a.epochs;
    tc.lr_max = a.lr_max;
    tc.seed = a.seed;
    LossConfig loss_cfg;
    if (a.loss == "mse") {
        loss_cfg.kind = LossKind::MseEncoder;
    } else if (a.loss == "nce") {
        loss_cfg.kind = LossKind::NceEncoder;
    } else if (a.loss == "nce_mixco") {
        loss_cfg.kind = LossKind::NceEncoder;
        loss_cfg.mixco_enabled = true;
    } else {
        throw CLI::ValidationError("--loss must be mse, nce, or nce_mixco");
    }
    tc.loss = loss_cfg.kind;

    Rng init_rng(a.seed);
    auto state = init_encoder(cfg, specs, init_rng);
    auto log = train_align(state, samples, tc, loss_cfg, parse_strategy(a.strategy));

    fs::create_directories(a.out);
    Checkpoint ckpt;
    ckpt.state = state;
    ckpt.provenance.seed = a.seed;
    ckpt.provenance.config_hash = config_hash(cfg);
    for (const auto& spec : specs) ckpt.provenance.subject_ids.push_back(spec.subject_id);
    save_checkpoint(ckpt, a.out + "/model.ckpt");
    write_log(log, a.out + "/train_log.tsv", a.out + "/train_log.json");
    std::printf("trained %zu epochs on %zu samples; checkpoint at %s/model.ckpt\n", a.epochs,
                samples.size(), a.out.c_str());
    return 0;
}

// --------------------------------------------------------------------------
// adapt

struct AdaptArgs {
    std::string checkpoint;
    std::string manifest;
    std::string subject;
    std::vector<double> ratios = {0.05, 0.1, 0.2, 0.3, 0.5, 0.8, 1.0};
    std::string mode = "frozen";
    std::size_t epochs = 20;
    std::size_t batch = 32;
    double lr_max = 2e-3;
    std::size_t pool = 100;
    std::size_t trials = 10;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_adapt(const AdaptArgs& a) {
    Checkpoint base;
    try {
        base = load_checkpoint(a.checkpoint);
    } catch (const std::exception& e) {
        throw CliDataError(e.what());
    }
    auto dataset = load_dataset_checked(a.manifest);

    SubjectSpec new_spec;
    for (const auto& spec : dataset.specs) {
        if (spec.subject_id == a.subject) new_spec = spec;
    }
    if (new_spec.subject_id.empty()) {
        throw CliDataError("subject not present in the manifest: " + a.subject);
    }
    auto new_train = filter_subjects(dataset.splits.train, {a.subject});
    auto new_test = filter_subjects(dataset.splits.test, {a.subject});
    if (new_train.empty() || new_test.empty()) {
        throw CliDataError("need train and test samples for subject " + a.subject);
    }

    AdaptationConfig ac;
    if (a.mode == "frozen") {
        ac.mode = AdaptationMode::Frozen;
    } else if (a.mode == "finetuned") {
        ac.mode = AdaptationMode::Finetuned;
    } else {
        throw CLI::ValidationError("--mode must be frozen or finetuned");
    }

    TrainConfig tc;
    tc.batch_size = a.batch;
    tc.epochs = a.epochs;
    tc.lr_max = a.lr_max;
    tc.seed = a.seed;

    std::ostringstream tsv;
    tsv << "ratio\tmode\tsamples\tforward_acc\tbackward_acc\texemplar_acc\n";
    json rows = json::array();
    for (double ratio : a.ratios) {
        ac.data_ratio = ratio;
        auto [adapted, log] = adapt_subject(base.state, new_spec, new_train, ac, tc);
        Matrix brain, image;
        embed_samples(adapted, new_test, brain, image);
        const std::size_t pool = std::min<std::size_t>(a.pool, new_test.size());
        Rng eval_rng(a.seed + 1);
        auto rep = retrieval_report(brain, image, pool, a.trials, eval_rng);
        const auto used = static_cast<std::size_t>(
            std::max<double>(1.0, std::floor(ratio * static_cast<double>(new_train.size()))));
        tsv << fmt(ratio) << '\t' << a.mode << '\t' << used << '\t' << fmt(rep.forward_acc)
            << '\t' << fmt(rep.backward_acc) << '\t' << fmt(rep.exemplar_acc) << '\n';
        rows.push_back({{"ratio", ratio},
                        {"mode", a.mode},
                        {"samples", used},
                        {"forward_acc", rep.forward_acc},
                        {"backward_acc", rep.backward_acc},
                        {"exemplar_acc", rep.exemplar_acc}});
        std::printf("ratio %.2f: forward %.4f\n", ratio, rep.forward_acc);
    }
    fs::create_directories(a.out);
    write_text(a.out + "/adapt.tsv", tsv.str());
    write_text(a.out + "/adapt.json", rows.dump(1) + "\n");
    return 0;
}

// --------------------------------------------------------------------------
// eval

struct EvalRetrievalArgs {
    std::string checkpoint;
    std::string manifest;
    std::vector<std::string> subjects;
    std::size_t pool = 300;
    std::size_t trials = 30;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_eval_retrieval(const EvalRetrievalArgs& a) {
    Checkpoint ckpt;
    try {
        ckpt = load_checkpoint(a.checkpoint);
    } catch (const std::exception& e) {
        throw CliDataError(e.what());
    }
    auto dataset = load_dataset_checked(a.manifest);
    auto samples = filter_subjects(dataset.splits.test, a.subjects);
    if (samples.empty()) throw CliDataError("no test samples after subject filtering");

    Matrix brain, image;
    embed_samples(ckpt.state, samples, brain, image);
    const std::size_t pool = std::min<std::size_t>(a.pool, samples.size());
    Rng rng(a.seed);
    auto rep = retrieval_report(brain, image, pool, a.trials, rng);

    std::ostringstream tsv;
    tsv << "pool\ttrials\tforward_acc\tbackward_acc\texemplar_acc\n";
    tsv << rep.pool_size << '\t' << rep.trials << '\t' << fmt(rep.forward_acc) << '\t'
        << fmt(rep.backward_acc) << '\t' << fmt(rep.exemplar_acc) << '\n';
    write_text(a.out + ".tsv", tsv.str());
    json j = {{"pool", rep.pool_size},
              {"trials", rep.trials},
              {"forward_acc", rep.forward_acc},
              {"backward_acc", rep.backward_acc},
              {"exemplar_acc", rep.exemplar_acc}};
    write_text(a.out + ".json", j.dump(1) + "\n");
    std::printf("forward %.4f backward %.4f exemplar %.4f (pool %zu)\n", rep.forward_acc,
                rep.backward_acc, rep.exemplar_acc, rep.pool_size);
    return 0;
}

struct EvalGroundingArgs {
    std::string pairs;  // label gx1 gy1 gx2 gy2 px1 py1 px2 py2 per tab-separated line
    std::string out;
};

int cmd_eval_grounding(const EvalGroundingArgs& a) {
    std::ifstream in(a.pairs);
    if (!in) throw CliDataError("missing pairs file: " + a.pairs);
    std::vector<LabeledBox> gts, preds;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream is(line);
        std::string label;
        double g[4], p[4];
        if (!(is >> label >> g[0] >> g[1] >> g[2] >> g[3] >> p[0] >> p[1] >> p[2] >> p[3])) {
            throw CliDataError("malformed grounding pair at line " + std::to_string(lineno));
        }
        gts.push_back({label, g[0], g[1], g[2], g[3]});
        preds.push_back({label, p[0], p[1], p[2], p[3]});
    }
    if (gts.empty()) throw CliDataError("no grounding pairs in " + a.pairs);

    GroundingReport rep;
    try {
        rep = grounding_accuracy(preds, gts, default_taxonomy());
    } catch (const std::exception& e) {
        throw CliDataError(e.what());
    }
    std::ostringstream tsv;
    tsv << "bucket\tcount\tmean_iou\tacc@0.3\tacc@0.5\tacc@0.7\n";
    json j = json::object();
    for (const auto& [name, b] : rep.buckets) {
        tsv << name << '\t' << b.count << '\t' << fmt(b.mean_iou);
        for (double m : {0.3, 0.5, 0.7}) tsv << '\t' << fmt(b.acc.at(m));
        tsv << '\n';
        j[name] = {{"count", b.count},
                   {"mean_iou", b.mean_iou},
                   {"acc@0.3", b.acc.at(0.3)},
                   {"acc@0.5", b.acc.at(0.5)},
                   {"acc@0.7", b.acc.at(0.7)}};
    }
    write_text(a.out + ".tsv", tsv.str());
    write_text(a.out + ".json", j.dump(1) + "\n");
    std::printf("%zu grounding pairs, acc@0.5(A) = %.4f\n", rep.buckets.at("A").count,
                rep.buckets.at("A").acc.at(0.5));
    return 0;
}

struct EvalCaptionArgs {
    std::string pairs;  // candidate<TAB>ref1<TAB>ref2... per line
    std::vector<std::string> scorers;  // name=command
    std::string out;
};

int cmd_eval_caption(const EvalCaptionArgs& a) {
    std::ifstream in(a.pairs);
    if (!in) throw CliDataError("missing pairs file: " + a.pairs);
    std::vector<CaptionPair> pairs;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
            auto tab = line.find('\t', start);
            cells.push_back(line.substr(start, tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cells.size() < 2) throw CliDataError("caption line needs candidate + reference");
        pairs.push_back({cells[0], {cells.begin() + 1, cells.end()}});
    }
    if (pairs.empty()) throw CliDataError("no caption pairs in " + a.pairs);

    auto mean_of = [&](const std::function<double(const CaptionPair&)>& f) {
        double sum = 0.0;
        for (const auto& p : pairs) sum += f(p);
        return sum / static_cast<double>(pairs.size());
    };

    json j;
    std::ostringstream tsv;
    tsv << "metric\tvalue\n";
    for (std::size_t k = 1; k <= 4; ++k) {
        const double v = mean_of(
            [&](const CaptionPair& p) { return bleu_k(p.candidate, p.references, k); });
        tsv << "bleu" << k << '\t' << fmt(v) << '\n';
        j["bleu" + std::to_string(k)] = v;
    }
    const double rl = mean_of(
        [&](const CaptionPair& p) { return rouge_l(p.candidate, p.references[0]); });
    tsv << "rouge_l\t" << fmt(rl) << '\n';
    j["rouge_l"] = rl;

    ScorerRegistry registry;
    for (const auto& s : a.scorers) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) {
            throw CLI::ValidationError("--scorer must be name=command");
        }
        registry.register_scorer(s.substr(0, eq), s.substr(eq + 1));
    }
    for (const auto& s : a.scorers) {
        const std::string name = s.substr(0, s.find('='));
        auto result = registry.score(name, pairs);
        if (result.available) {
            tsv << name << '\t' << fmt(result.mean()) << '\n';
            j[name] = result.mean();
        } else {
            tsv << name << "\tunavailable\n";
            j[name] = nullptr;
            std::fprintf(stderr, "scorer %s unavailable: %s\n", name.c_str(),
                         result.error.c_str());
        }
    }
    write_text(a.out + ".tsv", tsv.str());
    write_text(a.out + ".json", j.dump(1) + "\n");
    std::printf("%zu caption pairs scored\n", pairs.size());
    return 0;
}

// --------------------------------------------------------------------------
// inspect

struct InspectArgs {
    std::string checkpoint;
    std::string manifest;
};

int cmd_inspect(const InspectArgs& a) {
    if (a.checkpoint.empty() == a.manifest.empty()) {
        throw CLI::ValidationError("pass exactly one of --checkpoint / --manifest");
    }
    if (!a.checkpoint.empty()) {
        Checkpoint ckpt;
        try {
            ckpt = load_checkpoint(a.checkpoint);
        } catch (const std::exception& e) {
            throw CliDataError(e.what());
        }
        const auto& c = ckpt.state.config;
        std::printf("checkpoint: %s\n", a.checkpoint.c_str());
        std::printf("config: tokens=%zu dim=%zu subject_tokens=%zu latents=%zu depth=%zu "
                    "heads=%zu out=%zu\n",
                    c.token_count, c.token_dim, c.subject_token_count, c.latent_query_count,
                    c.encoder_depth, c.attention_heads, c.output_channels);
        std::printf("parameters: %zu\n", count_parameters(ckpt.state));
        std::printf("optimizer state: %s\n", ckpt.optimizer ? "present" : "absent");
        std::printf("provenance: seed=%llu config_hash=%s\n",
                    static_cast<unsigned long long>(ckpt.provenance.seed),
                    ckpt.provenance.config_hash.c_str());
        for (const auto& spec : ckpt.state.specs) {
            std::printf("subject %s: voxel_dim=%zu\n", spec.subject_id.c_str(),
                        spec.voxel_dim);
        }
    } else {
        auto dataset = load_dataset_checked(a.manifest);
        std::printf("manifest: %s\n", a.manifest.c_str());
        std::printf("subjects: %zu, train samples: %zu, test samples: %zu\n",
                    dataset.specs.size(), dataset.splits.train.size(),
                    dataset.splits.test.size());
        for (const auto& spec : dataset.specs) {
            std::size_t n_train = 0, n_test = 0;
            for (const auto& s : dataset.splits.train) {
                if (s.subject_id == spec.subject_id) ++n_train;
            }
            for (const auto& s : dataset.splits.test) {
                if (s.subject_id == spec.subject_id) ++n_test;
            }
            std::printf("subject %s: voxel_dim=%zu train=%zu test=%zu\n",
                        spec.subject_id.c_str(), spec.voxel_dim, n_train, n_test);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-subject brain-signal encoder toolkit"};
    app.require_subcommand(1);

    SimulateArgs sim;
    auto* simulate = app.add_subcommand("simulate", "generate a synthetic-world dataset");
    simulate->add_option("--subjects", sim.subjects, "subject count");
    simulate->add_option("--dims", sim.dims, "voxel dims, one per subject")->delimiter(',');
    simulate->add_option("--grid-tokens", sim.grid_tokens, "target grid rows");
    simulate->add_option("--grid-channels", sim.grid_channels, "target grid columns");
    simulate->add_option("--gallery", sim.gallery, "shared stimulus count");
    simulate->add_option("--sigma", sim.sigma, "voxel noise level");
    simulate->add_option("--train-per-subject", sim.train_per_subject, "train samples");
    simulate->add_option("--test-per-subject", sim.test_per_subject, "test samples");
    simulate->add_option("--seed", sim.seed, "rng seed");
    simulate->add_option("--out", sim.out, "output dataset directory")->required();

    TrainArgs tr;
    auto* train = app.add_subcommand("train", "alignment training run");
    train->add_option("--manifest", tr.manifest, "dataset manifest")->required();
    train->add_option("--subjects", tr.subjects, "subject filter")->delimiter(',');
    train->add_option("--theta", tr.theta, "dominant-subject batch fraction");
    train->add_option("--strategy", tr.strategy, "ours|ours_r|random|stratified");
    train->add_option("--epochs", tr.epochs, "training epochs");
    train->add_option("--batch", tr.batch, "batch size");
    train->add_option("--loss", tr.loss, "mse|nce|nce_mixco");
    train->add_option("--lr-max", tr.lr_max, "one-cycle peak learning rate");
    train->add_option("--seed", tr.seed, "rng seed");
    train->add_option("--out", tr.out, "output directory")->required();
    tr.encoder.attach(train);

    AdaptArgs ad;
    auto* adapt = app.add_subcommand("adapt", "new-subject adaptation sweep");
    adapt->add_option("--checkpoint", ad.checkpoint, "base checkpoint")->required();
    adapt->add_option("--manifest", ad.manifest, "dataset with the new subject")->required();
    adapt->add_option("--subject", ad.subject, "new subject id")->required();
    adapt->add_option("--ratios", ad.ratios, "data ratios to sweep")->delimiter(',');
    adapt->add_option("--mode", ad.mode, "frozen|finetuned");
    adapt->add_option("--epochs", ad.epochs, "epochs per point");
    adapt->add_option("--batch", ad.batch, "batch size");
    adapt->add_option("--lr-max", ad.lr_max, "one-cycle peak learning rate");
    adapt->add_option("--pool", ad.pool, "retrieval pool size");
    adapt->add_option("--trials", ad.trials, "retrieval pool resamplings");
    adapt->add_option("--seed", ad.seed, "rng seed");
    adapt->add_option("--out", ad.out, "output directory")->required();

    auto* eval = app.add_subcommand("eval", "evaluation reports");
    eval->require_subcommand(1);

    EvalRetrievalArgs er;
    auto* eval_r = eval->add_subcommand("retrieval", "pooled top-1 retrieval accuracy");
    eval_r->add_option("--checkpoint", er.checkpoint, "model checkpoint")->required();
    eval_r->add_option("--manifest", er.manifest, "dataset manifest")->required();
    eval_r->add_option("--subjects", er.subjects, "subject filter")->delimiter(',');
    eval_r->add_option("--pool", er.pool, "candidate pool size");
    eval_r->add_option("--trials", er.trials, "pool resamplings");
    eval_r->add_option("--seed", er.seed, "rng seed");
    eval_r->add_option("--out", er.out, "report path prefix (.tsv/.json)")->required();

    EvalGroundingArgs eg;
    auto* eval_g = eval->add_subcommand("grounding", "box grounding accuracy by salience");
    eval_g->add_option("--pairs", eg.pairs, "tab-separated label + gt box + predicted box")
        ->required();
    eval_g->add_option("--out", eg.out, "report path prefix (.tsv/.json)")->required();

    EvalCaptionArgs ec;
    auto* eval_c = eval->add_subcommand("caption", "caption quality metrics");
    eval_c->add_option("--pairs", ec.pairs, "candidate<TAB>references file")->required();
    eval_c->add_option("--scorer", ec.scorers, "external scorer as name=command");
    eval_c->add_option("--out", ec.out, "report path prefix (.tsv/.json)")->required();

    InspectArgs ins;
    auto* inspect = app.add_subcommand("inspect", "describe a checkpoint or manifest");
    inspect->add_option("--checkpoint", ins.checkpoint, "checkpoint to describe");
    inspect->add_option("--manifest", ins.manifest, "dataset manifest to describe");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (*simulate) return cmd_simulate(sim);
        if (*train) return cmd_train(tr);
        if (*adapt) return cmd_adapt(ad);
        if (*eval_r) return cmd_eval_retrieval(er);
        if (*eval_g) return cmd_eval_grounding(eg);
        if (*eval_c) return cmd_eval_caption(ec);
        if (*inspect) return cmd_inspect(ins);
    } catch (const CLI::ValidationError& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const CliDataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "usage error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return kExitNumeric;
    }
    return kExitUsage;
}
