#include "brainalign/datahub.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <json.hpp>

namespace brainalign {

static_assert(std::endian::native == std::endian::little,
              "container formats assume a little-endian host");

using nlohmann::json;
namespace fs = std::filesystem;

std::uint64_t fnv1a(const void* data, std::size_t len) {
    const auto* p = static_cast<const unsigned char*>(data);
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

namespace {

constexpr char kTensorMagic[4] = {'B', 'A', 'T', 'N'};
constexpr char kCheckpointMagic[4] = {'B', 'A', 'C', 'K'};
constexpr std::uint32_t kFormatVersion = 1;

// Exclusive advisory lock held for the duration of a write.
class FileLock {
  public:
    explicit FileLock(const std::string& path) {
        fd_ = ::open((path + ".lock").c_str(), O_CREAT | O_RDWR, 0644);
        if (fd_ >= 0) ::flock(fd_, LOCK_EX);
    }
    ~FileLock() {
        if (fd_ >= 0) {
            ::flock(fd_, LOCK_UN);
            ::close(fd_);
        }
    }

  private:
    int fd_ = -1;
};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw std::runtime_error("container truncated");
    return v;
}

void write_tensor_header(std::ostream& out, int dtype,
                         const std::vector<std::uint64_t>& dims) {
    out.write(kTensorMagic, 4);
    write_pod<std::uint32_t>(out, kFormatVersion);
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dtype));
    write_pod<std::uint32_t>(out, static_cast<std::uint32_t>(dims.size()));
    for (auto d : dims) write_pod<std::uint64_t>(out, d);
}

std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << v;
    return os.str();
}

std::uint64_t file_fnv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string s = buf.str();
    return fnv1a(s.data(), s.size());
}

std::vector<float> to_f32(const Vector& v) {
    std::vector<float> out(static_cast<std::size_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) out[static_cast<std::size_t>(i)] =
        static_cast<float>(v(i));
    return out;
}

std::vector<float> to_f32_row_major(const Matrix& m) {
    std::vector<float> out(static_cast<std::size_t>(m.size()));
    std::size_t k = 0;
    for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) out[k++] = static_cast<float>(m(i, j));
    return out;
}

}  // namespace

void write_tensor_f32(std::ostream& out, const std::vector<std::uint64_t>& dims,
                      const std::vector<float>& data) {
    write_tensor_header(out, 0, dims);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(float)));
}

void write_tensor_f64(std::ostream& out, const std::vector<std::uint64_t>& dims,
                      const std::vector<double>& data) {
    write_tensor_header(out, 1, dims);
    out.write(reinterpret_cast<const char*>(data.data()),
              static_cast<std::streamsize>(data.size() * sizeof(double)));
}

TensorHeader read_tensor_header(std::istream& in) {
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kTensorMagic, 4) != 0) {
        throw std::runtime_error("not a tensor container");
    }
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kFormatVersion) {
        throw std::runtime_error("unsupported tensor container version " +
                                 std::to_string(version));
    }
    TensorHeader h;
    h.dtype = static_cast<int>(read_pod<std::uint32_t>(in));
    const auto ndim = read_pod<std::uint32_t>(in);
    for (std::uint32_t i = 0; i < ndim; ++i) h.dims.push_back(read_pod<std::uint64_t>(in));
    return h;
}

std::vector<double> read_tensor_payload(std::istream& in, const TensorHeader& header) {
    std::uint64_t count = 1;
    for (auto d : header.dims) count *= d;
    std::vector<double> out(count);
    if (header.dtype == 0) {
        std::vector<float> tmp(count);
        in.read(reinterpret_cast<char*>(tmp.data()),
                static_cast<std::streamsize>(count * sizeof(float)));
        if (!in) throw std::runtime_error("tensor payload truncated");
        for (std::uint64_t i = 0; i < count; ++i) out[i] = tmp[i];
    } else if (header.dtype == 1) {
        in.read(reinterpret_cast<char*>(out.data()),
                static_cast<std::streamsize>(count * sizeof(double)));
        if (!in) throw std::runtime_error("tensor payload truncated");
    } else {
        throw std::runtime_error("unknown tensor dtype " + std::to_string(header.dtype));
    }
    return out;
}

// ---------------------------------------------------------------------------
// dataset

void save_dataset(const std::string& dir, const std::vector<SubjectSpec>& specs,
                  const DatasetSplits& splits) {
    fs::create_directories(dir);
    FileLock lock(dir + "/manifest.json");

    json manifest;
    manifest["format_version"] = kFormatVersion;
    for (const auto& spec : specs) {
        manifest["subjects"].push_back(
            {{"subject_id", spec.subject_id}, {"voxel_dim", spec.voxel_dim}});
    }
    manifest["subjects"] = manifest.value("subjects", json::array());

    std::ofstream voxels(dir + "/voxels.bin", std::ios::binary);
    std::ofstream targets(dir + "/targets.bin", std::ios::binary);
    json annotations = json::array();

    auto write_split = [&](const char* name, const std::vector<BrainSample>& samples) {
        json list = json::array();
        for (std::size_t i = 0; i < samples.size(); ++i) {
            const auto& s = samples[i];
            json entry;
            entry["subject_id"] = s.subject_id;
            entry["voxel_offset"] = static_cast<std::uint64_t>(voxels.tellp());
            entry["voxel_bytes"] = s.voxels.size() * sizeof(float);
            auto vf = to_f32(s.voxels);
            voxels.write(reinterpret_cast<const char*>(vf.data()),
                         static_cast<std::streamsize>(vf.size() * sizeof(float)));
            if (s.target) {
                entry["target_offset"] = static_cast<std::uint64_t>(targets.tellp());
                entry["target_rows"] = s.target->tokens();
                entry["target_cols"] = s.target->channels();
                auto tf = to_f32_row_major(s.target->values);
                targets.write(reinterpret_cast<const char*>(tf.data()),
                              static_cast<std::streamsize>(tf.size() * sizeof(float)));
            }
            if (!s.boxes.empty() || !s.captions.empty()) {
                json rec;
                rec["split"] = name;
                rec["index"] = i;
                for (const auto& b : s.boxes) {
                    rec["boxes"].push_back({b.label, b.x1, b.y1, b.x2, b.y2});
                }
                rec["captions"] = s.captions;
                annotations.push_back(rec);
            }
            list.push_back(entry);
        }
        manifest["splits"][name] = list;
    };
    write_split("train", splits.train);
    write_split("test", splits.test);
    voxels.close();
    targets.close();

    {
        std::ofstream ann(dir + "/annotations.json");
        ann << annotations.dump(1) << '\n';
    }
    manifest["files"]["voxels"] = {{"path", "voxels.bin"},
                                   {"fnv1a", hex64(file_fnv(dir + "/voxels.bin"))}};
    manifest["files"]["targets"] = {{"path", "targets.bin"},
                                    {"fnv1a", hex64(file_fnv(dir + "/targets.bin"))}};
    manifest["annotations"] = "annotations.json";

    std::ofstream out(dir + "/manifest.json");
    out << manifest.dump(1) << '\n';
}

LoadedDataset load_dataset(const std::string& manifest_path) {
    std::ifstream in(manifest_path);
    if (!in) throw std::runtime_error("missing manifest: " + manifest_path);
    json manifest = json::parse(in);
    if (manifest.at("format_version").get<std::uint32_t>() != kFormatVersion) {
        throw std::runtime_error("unsupported dataset format_version");
    }
    const std::string dir = fs::path(manifest_path).parent_path().string();
    auto resolve = [&](const std::string& rel) {
        return dir.empty() ? rel : dir + "/" + rel;
    };

    LoadedDataset result;
    for (const auto& s : manifest.at("subjects")) {
        result.specs.push_back(
            {s.at("subject_id").get<std::string>(), s.at("voxel_dim").get<std::size_t>()});
    }

    for (const char* key : {"voxels", "targets"}) {
        const auto& f = manifest.at("files").at(key);
        const auto expect = f.at("fnv1a").get<std::string>();
        const auto actual = hex64(file_fnv(resolve(f.at("path").get<std::string>())));
        if (expect != actual) {
            throw std::runtime_error(std::string("checksum mismatch for ") + key);
        }
    }

    std::ifstream voxels(resolve(manifest["files"]["voxels"]["path"].get<std::string>()),
                         std::ios::binary);
    std::ifstream targets(resolve(manifest["files"]["targets"]["path"].get<std::string>()),
                          std::ios::binary);

    auto read_split = [&](const char* name) {
        std::vector<BrainSample> samples;
        if (!manifest.at("splits").contains(name)) return samples;
        for (const auto& entry : manifest["splits"][name]) {
            BrainSample s;
            s.subject_id = entry.at("subject_id").get<std::string>();
            const auto off = entry.at("voxel_offset").get<std::uint64_t>();
            const auto bytes = entry.at("voxel_bytes").get<std::uint64_t>();
            const auto count = bytes / sizeof(float);
            std::vector<float> buf(count);
            voxels.seekg(static_cast<std::streamoff>(off));
            voxels.read(reinterpret_cast<char*>(buf.data()),
                        static_cast<std::streamsize>(bytes));
            if (!voxels) throw std::runtime_error("voxel blob truncated");
            s.voxels.resize(static_cast<Eigen::Index>(count));
            for (std::size_t i = 0; i < count; ++i) {
                s.voxels(static_cast<Eigen::Index>(i)) = buf[i];
            }
            if (entry.contains("target_offset")) {
                const auto toff = entry.at("target_offset").get<std::uint64_t>();
                const auto rows = entry.at("target_rows").get<std::size_t>();
                const auto cols = entry.at("target_cols").get<std::size_t>();
                std::vector<float> tbuf(rows * cols);
                targets.seekg(static_cast<std::streamoff>(toff));
                targets.read(reinterpret_cast<char*>(tbuf.data()),
                             static_cast<std::streamsize>(tbuf.size() * sizeof(float)));
                if (!targets) throw std::runtime_error("target blob truncated");
                FeatureGrid grid;
                grid.values.resize(static_cast<Eigen::Index>(rows),
                                   static_cast<Eigen::Index>(cols));
                std::size_t k = 0;
                for (std::size_t i = 0; i < rows; ++i)
                    for (std::size_t j = 0; j < cols; ++j)
                        grid.values(static_cast<Eigen::Index>(i),
                                    static_cast<Eigen::Index>(j)) = tbuf[k++];
                s.target = std::move(grid);
            }
            samples.push_back(std::move(s));
        }
        return samples;
    };
    result.splits.train = read_split("train");
    result.splits.test = read_split("test");

    if (manifest.contains("annotations")) {
        std::ifstream ann(resolve(manifest["annotations"].get<std::string>()));
        if (ann) {
            json records = json::parse(ann);
            for (const auto& rec : records) {
                auto& list = rec.at("split").get<std::string>() == "train"
                                 ? result.splits.train
                                 : result.splits.test;
                auto& s = list.at(rec.at("index").get<std::size_t>());
                if (rec.contains("boxes")) {
                    for (const auto& b : rec["boxes"]) {
                        s.boxes.push_back({b.at(0).get<std::string>(), b.at(1).get<double>(),
                                           b.at(2).get<double>(), b.at(3).get<double>(),
                                           b.at(4).get<double>()});
                    }
                }
                if (rec.contains("captions")) {
                    s.captions = rec["captions"].get<std::vector<std::string>>();
                }
            }
        }
    }

    std::vector<BrainSample> all = result.splits.train;
    all.insert(all.end(), result.splits.test.begin(), result.splits.test.end());
    auto report = validate_dataset(all, result.specs);
    if (!report.ok()) {
        throw std::runtime_error("dataset invariant violated: " + report.issues[0].kind +
                                 " (" + report.issues[0].detail + ")");
    }
    return result;
}

// ---------------------------------------------------------------------------
// checkpoint

std::string config_hash(const EncoderConfig& cfg) {
    json j = {cfg.token_count,         cfg.token_dim,      cfg.subject_token_count,
              cfg.latent_query_count,  cfg.encoder_depth,  cfg.attention_heads,
              cfg.output_channels};
    const std::string s = j.dump();
    return hex64(fnv1a(s.data(), s.size()));
}

namespace {

json config_to_json(const EncoderConfig& c) {
    return {{"token_count", c.token_count},
            {"token_dim", c.token_dim},
            {"subject_token_count", c.subject_token_count},
            {"latent_query_count", c.latent_query_count},
            {"encoder_depth", c.encoder_depth},
            {"attention_heads", c.attention_heads},
            {"output_channels", c.output_channels}};
}

EncoderConfig config_from_json(const json& j) {
    EncoderConfig c;
    c.token_count = j.at("token_count").get<std::size_t>();
    c.token_dim = j.at("token_dim").get<std::size_t>();
    c.subject_token_count = j.at("subject_token_count").get<std::size_t>();
    c.latent_query_count = j.at("latent_query_count").get<std::size_t>();
    c.encoder_depth = j.at("encoder_depth").get<std::size_t>();
    c.attention_heads = j.at("attention_heads").get<std::size_t>();
    c.output_channels = j.at("output_channels").get<std::size_t>();
    return c;
}

void collect_blobs(const EncoderState& state, const std::string& prefix, json& table,
                   std::string& blobs) {
    visit_tensors(state, [&](const std::string& name, const Matrix& m) {
        json t;
        t["name"] = prefix + name;
        t["rows"] = m.rows();
        t["cols"] = m.cols();
        t["offset"] = blobs.size();
        // column-major doubles, Eigen's native layout
        const auto bytes = static_cast<std::size_t>(m.size()) * sizeof(double);
        t["fnv1a"] = hex64(fnv1a(m.data(), bytes));
        blobs.append(reinterpret_cast<const char*>(m.data()), bytes);
        table.push_back(t);
    });
}

void restore_blobs(EncoderState& state, const std::string& prefix, const json& table,
                   const std::string& blobs) {
    std::map<std::string, const json*> by_name;
    for (const auto& t : table) by_name[t.at("name").get<std::string>()] = &t;
    visit_tensors(state, [&](const std::string& name, Matrix& m) {
        auto it = by_name.find(prefix + name);
        if (it == by_name.end()) {
            throw std::runtime_error("checkpoint missing tensor " + prefix + name);
        }
        const json& t = *it->second;
        const auto rows = t.at("rows").get<Eigen::Index>();
        const auto cols = t.at("cols").get<Eigen::Index>();
        const auto offset = t.at("offset").get<std::size_t>();
        const auto bytes = static_cast<std::size_t>(rows * cols) * sizeof(double);
        if (offset + bytes > blobs.size()) throw std::runtime_error("checkpoint truncated");
        m.resize(rows, cols);
        std::memcpy(m.data(), blobs.data() + offset, bytes);
        const auto expect = t.at("fnv1a").get<std::string>();
        if (expect != hex64(fnv1a(m.data(), bytes))) {
            throw std::runtime_error("checkpoint blob checksum mismatch: " + prefix + name);
        }
    });
}

EncoderState empty_state_for(const EncoderConfig& cfg, const std::vector<SubjectSpec>& specs) {
    Rng rng(0);  // values are overwritten from the blobs
    return init_encoder(cfg, specs, rng);
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    FileLock lock(path);
    json header;
    header["format_version"] = kFormatVersion;
    header["config"] = config_to_json(ckpt.state.config);
    for (const auto& spec : ckpt.state.specs) {
        header["subjects"].push_back(
            {{"subject_id", spec.subject_id}, {"voxel_dim", spec.voxel_dim}});
    }
    header["provenance"] = {{"seed", ckpt.provenance.seed},
                            {"config_hash", ckpt.provenance.config_hash},
                            {"subject_ids", ckpt.provenance.subject_ids}};

    json table = json::array();
    std::string blobs;
    collect_blobs(ckpt.state, "param.", table, blobs);
    if (ckpt.optimizer) {
        header["optimizer_steps"] = ckpt.optimizer->step_count;
        collect_blobs(ckpt.optimizer->m, "adam_m.", table, blobs);
        collect_blobs(ckpt.optimizer->v, "adam_v.", table, blobs);
    }
    header["tensors"] = std::move(table);

    const std::string header_str = header.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kCheckpointMagic, 4);
    write_pod<std::uint32_t>(out, kFormatVersion);
    write_pod<std::uint64_t>(out, header_str.size());
    out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
    out.write(blobs.data(), static_cast<std::streamsize>(blobs.size()));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw std::runtime_error("not a checkpoint file: " + path);
    }
    const auto version = read_pod<std::uint32_t>(in);
    if (version != kFormatVersion) {
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    }
    const auto header_len = read_pod<std::uint64_t>(in);
    std::string header_str(header_len, '\0');
    in.read(header_str.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("checkpoint header truncated");
    json header = json::parse(header_str);

    std::ostringstream rest;
    rest << in.rdbuf();
    const std::string blobs = rest.str();

    Checkpoint ckpt;
    std::vector<SubjectSpec> specs;
    for (const auto& s : header.at("subjects")) {
        specs.push_back(
            {s.at("subject_id").get<std::string>(), s.at("voxel_dim").get<std::size_t>()});
    }
    ckpt.state = empty_state_for(config_from_json(header.at("config")), specs);
    restore_blobs(ckpt.state, "param.", header.at("tensors"), blobs);

    if (header.contains("optimizer_steps")) {
        OptimizerSnapshot opt;
        opt.step_count = header["optimizer_steps"].get<std::size_t>();
        opt.m = zeros_like(ckpt.state);
        opt.v = zeros_like(ckpt.state);
        restore_blobs(opt.m, "adam_m.", header.at("tensors"), blobs);
        restore_blobs(opt.v, "adam_v.", header.at("tensors"), blobs);
        ckpt.optimizer = std::move(opt);
    }

    const auto& prov = header.at("provenance");
    ckpt.provenance.seed = prov.at("seed").get<std::uint64_t>();
    ckpt.provenance.config_hash = prov.at("config_hash").get<std::string>();
    ckpt.provenance.subject_ids = prov.at("subject_ids").get<std::vector<std::string>>();
    return ckpt;
}

// ---------------------------------------------------------------------------
// feature export

void export_features(const std::vector<FeatureGrid>& grids, const std::string& path) {
    FileLock lock(path);
    std::uint64_t rows = 0, cols = 0;
    if (!grids.empty()) {
        rows = grids[0].tokens();
        cols = grids[0].channels();
        for (const auto& g : grids) {
            if (g.tokens() != rows || g.channels() != cols) {
                throw std::invalid_argument("export_features: inconsistent grid shapes");
            }
        }
    }
    std::vector<float> data;
    data.reserve(grids.size() * rows * cols);
    for (const auto& g : grids) {
        for (Eigen::Index i = 0; i < g.values.rows(); ++i)
            for (Eigen::Index j = 0; j < g.values.cols(); ++j)
                data.push_back(static_cast<float>(g.values(i, j)));
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write features: " + path);
    write_tensor_f32(out, {grids.size(), rows, cols}, data);
}

std::vector<FeatureGrid> import_features(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("missing feature file: " + path);
    TensorHeader h = read_tensor_header(in);
    if (h.dims.size() != 3) throw std::runtime_error("feature file must be rank 3");
    auto data = read_tensor_payload(in, h);
    std::vector<FeatureGrid> grids;
    std::size_t k = 0;
    for (std::uint64_t n = 0; n < h.dims[0]; ++n) {
        FeatureGrid g;
        g.values.resize(static_cast<Eigen::Index>(h.dims[1]),
                        static_cast<Eigen::Index>(h.dims[2]));
        for (Eigen::Index i = 0; i < g.values.rows(); ++i)
            for (Eigen::Index j = 0; j < g.values.cols(); ++j) g.values(i, j) = data[k++];
        grids.push_back(std::move(g));
    }
    return grids;
}

}  // namespace brainalign
