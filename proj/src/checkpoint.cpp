#include <liteinc/checkpoint.hpp>
#include <liteinc/serde.hpp>

#include <bit>
#include <cstring>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

namespace liteinc {

namespace {

constexpr char kMagic[4] = {'L', 'I', 'T', 'N'};
constexpr uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, Model<float>& model, uint64_t seed,
                     const std::map<std::string, std::string>& provenance) {
    nlohmann::json header;
    header["model_spec"] = to_json(model.spec());
    header["seed"] = seed;
    header["provenance"] = provenance;

    nlohmann::json manifest = nlohmann::json::array();
    uint64_t offset = 0;
    auto params = model.named_params();
    auto state = model.named_state();
    for (auto& p : params) {
        manifest.push_back({{"name", p.name},
                            {"shape", p.tensor.shape()},
                            {"offset", offset},
                            {"kind", "param"}});
        offset += static_cast<uint64_t>(p.tensor.numel()) * sizeof(float);
    }
    for (auto& s : state) {
        manifest.push_back({{"name", s.name},
                            {"shape", std::vector<int>{static_cast<int>(s.data->size())}},
                            {"offset", offset},
                            {"kind", "state"}});
        offset += static_cast<uint64_t>(s.data->size()) * sizeof(float);
    }
    header["tensors"] = manifest;
    const std::string header_text = header.dump();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    const uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (auto& p : params)
        out.write(reinterpret_cast<const char*>(p.tensor.data()),
                  static_cast<std::streamsize>(p.tensor.numel() * sizeof(float)));
    for (auto& s : state)
        out.write(reinterpret_cast<const char*>(s.data->data()),
                  static_cast<std::streamsize>(s.data->size() * sizeof(float)));
    if (!out) throw std::runtime_error("short write on checkpoint: " + path);
}

std::pair<std::unique_ptr<Model<float>>, CheckpointMeta> load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    uint32_t version = 0;
    in.read(reinterpret_cast<char*>(&version), sizeof(version));
    if (version != kVersion)
        throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
    uint64_t header_len = 0;
    in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
    std::string header_text(header_len, '\0');
    in.read(header_text.data(), static_cast<std::streamsize>(header_len));
    if (!in) throw std::runtime_error("truncated checkpoint header: " + path);
    const nlohmann::json header = nlohmann::json::parse(header_text);

    CheckpointMeta meta;
    meta.spec = model_spec_from_json(header.at("model_spec"));
    meta.seed = header.at("seed").get<uint64_t>();
    meta.provenance = header.at("provenance").get<std::map<std::string, std::string>>();

    auto model = build_model<float>(meta.spec, meta.seed);
    std::map<std::string, std::pair<uint64_t, int64_t>> manifest;  // name -> (offset, count)
    for (auto& t : header.at("tensors")) {
        int64_t count = 1;
        for (int d : t.at("shape").get<std::vector<int>>()) count *= d;
        manifest[t.at("name").get<std::string>()] = {t.at("offset").get<uint64_t>(), count};
    }

    const std::streampos blob_base = in.tellg();
    auto read_blob = [&](const std::string& name, float* dst, int64_t expect) {
        auto it = manifest.find(name);
        if (it == manifest.end()) throw std::runtime_error("checkpoint missing tensor " + name);
        if (it->second.second != expect)
            throw std::runtime_error("checkpoint tensor " + name + " has wrong size");
        in.seekg(blob_base + static_cast<std::streamoff>(it->second.first));
        in.read(reinterpret_cast<char*>(dst), static_cast<std::streamsize>(expect * sizeof(float)));
        if (!in) throw std::runtime_error("truncated checkpoint blob for " + name);
    };
    for (auto& p : model->named_params()) read_blob(p.name, p.tensor.data(), p.tensor.numel());
    for (auto& s : model->named_state())
        read_blob(s.name, s.data->data(), static_cast<int64_t>(s.data->size()));
    return {std::move(model), std::move(meta)};
}

}  // namespace liteinc
