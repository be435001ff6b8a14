#include "graphonomy/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace graphonomy {

using nlohmann::json;

namespace {

std::uint64_t fnv_bytes(std::uint64_t h, const void* data, std::size_t n) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

constexpr std::uint64_t kFnvInit = 1469598103934665603ULL;

std::string hex64(std::uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::uint64_t param_checksum(const Param& param) {
    return fnv_bytes(kFnvInit, param.value->data(), param.value->size() * sizeof(double));
}

std::uint64_t params_checksum(const ParamStore& params) {
    std::uint64_t h = kFnvInit;
    for (const Param& p : params.all())
        h = fnv_bytes(h, p.value->data(), p.value->size() * sizeof(double));
    return h;
}

std::uint64_t file_checksum(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::uint64_t h = kFnvInit;
    char buf[4096];
    while (in.read(buf, sizeof(buf)) || in.gcount() > 0)
        h = fnv_bytes(h, buf, static_cast<std::size_t>(in.gcount()));
    return h;
}

void save_checkpoint(const GraphonomyModel& model, const std::string& path,
                     const CheckpointMeta& meta) {
    {
        std::ofstream bin(path, std::ios::binary | std::ios::trunc);
        if (!bin) throw IoError("cannot write checkpoint " + path);
        for (const Param& p : model.params().all())
            bin.write(reinterpret_cast<const char*>(p.value->data()),
                      static_cast<std::streamsize>(p.value->size() * sizeof(double)));
        if (!bin) throw IoError("short write to checkpoint " + path);
    }

    json manifest;
    manifest["format"] = "graphonomy-checkpoint";
    manifest["version"] = 1;
    manifest["config"] = json::parse(experiment_config_json(model.config()));
    manifest["channels"] = model.channels();
    manifest["extensions"] = model.extensions();
    manifest["iteration"] = meta.iteration;
    manifest["rng"] = meta.rng_state;
    manifest["checksum"] = hex64(file_checksum(path));

    json params = json::array();
    std::size_t offset = 0;
    for (const Param& p : model.params().all()) {
        params.push_back({{"name", p.name},
                          {"shape", p.shape},
                          {"frozen", p.frozen},
                          {"offset", offset}});
        offset += p.value->size();
    }
    manifest["params"] = params;
    manifest["total_values"] = offset;

    std::ofstream mf(path + ".manifest.json", std::ios::trunc);
    if (!mf) throw IoError("cannot write manifest for " + path);
    mf << manifest.dump(2) << '\n';
}

GraphonomyModel load_checkpoint(const std::string& path, const LabelTaxonomy& taxonomy,
                                const EmbeddingTable* embeddings, CheckpointMeta* meta) {
    std::ifstream mf(path + ".manifest.json");
    if (!mf) throw IoError("cannot open manifest " + path + ".manifest.json");
    json manifest;
    try {
        mf >> manifest;
    } catch (const json::exception& e) {
        throw IntegrityError("manifest mismatch: not valid JSON: " + std::string(e.what()));
    }
    if (manifest.value("format", "") != "graphonomy-checkpoint")
        throw IntegrityError("manifest mismatch: unknown format");

    if (manifest.value("checksum", "") != hex64(file_checksum(path)))
        throw IntegrityError("manifest mismatch: checksum of " + path +
                             " does not match its manifest");

    ExperimentConfig config = parse_experiment_config(manifest.at("config").dump());
    GraphonomyModel model = GraphonomyModel::create(
        config, taxonomy, embeddings, manifest.at("channels").get<std::size_t>());
    for (const auto& ext : manifest.value("extensions", std::vector<std::string>{}))
        model.extend(ext, taxonomy, embeddings);

    const json& params = manifest.at("params");
    if (params.size() != model.params().all().size())
        throw IntegrityError("manifest mismatch: parameter count differs from model");

    std::ifstream bin(path, std::ios::binary);
    if (!bin) throw IoError("cannot open checkpoint " + path);
    std::size_t expect_offset = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        Param& p = model.params().all()[i];
        const json& pj = params[i];
        if (pj.at("name").get<std::string>() != p.name ||
            pj.at("shape").get<Shape>() != p.shape ||
            pj.at("offset").get<std::size_t>() != expect_offset)
            throw IntegrityError("manifest mismatch: parameter table entry " +
                                 std::to_string(i) + " does not match the model layout");
        p.frozen = pj.at("frozen").get<bool>();
        bin.read(reinterpret_cast<char*>(p.value->data()),
                 static_cast<std::streamsize>(p.value->size() * sizeof(double)));
        if (static_cast<std::size_t>(bin.gcount()) != p.value->size() * sizeof(double))
            throw IntegrityError("manifest mismatch: checkpoint binary is too short");
        expect_offset += p.value->size();
    }
    bin.peek();
    if (!bin.eof()) throw IntegrityError("manifest mismatch: checkpoint binary has trailing data");

    if (meta) {
        meta->iteration = manifest.value("iteration", std::size_t{0});
        meta->rng_state = manifest.value("rng", "");
    }
    return model;
}

}  // namespace graphonomy
