#include "graphonomy/config.hpp"

#include <fstream>
#include <sstream>

#include "graphonomy/transfer.hpp"
#include "json.hpp"

namespace graphonomy {

using nlohmann::json;

namespace {

template <typename T>
void maybe(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }

    ExperimentConfig c;
    maybe(j, "mode", c.mode);
    maybe(j, "taxonomy", c.taxonomy_path);
    maybe(j, "embeddings", c.embeddings_path);
    maybe(j, "data_dir", c.data_dir);
    maybe(j, "domains", c.domains);
    maybe(j, "train_domain", c.train_domain);
    maybe(j, "things", c.thing_labels);
    maybe(j, "seed", c.seed);

    if (j.contains("model")) {
        const json& m = j["model"];
        maybe(m, "node_dim", c.model.node_dim);
        maybe(m, "gcn_layers", c.model.gcn_layers);
        maybe(m, "leaky_slope", c.model.leaky_slope);
    }
    if (j.contains("intra")) {
        const json& m = j["intra"];
        maybe(m, "enabled", c.model.intra_enabled);
        maybe(m, "use_adjacency", c.model.intra_use_adjacency);
    }
    if (j.contains("transfer")) {
        const json& m = j["transfer"];
        maybe(m, "scheme", c.model.transfer_scheme);
        maybe(m, "activation", c.model.transfer_activation);
        maybe(m, "bidirectional", c.model.bidirectional);
        maybe(m, "attention_shared", c.model.attention_shared);
    }
    if (j.contains("optimizer")) {
        const json& o = j["optimizer"];
        maybe(o, "base_lr", c.optimizer.base_lr);
        maybe(o, "momentum", c.optimizer.momentum);
        maybe(o, "weight_decay", c.optimizer.weight_decay);
        maybe(o, "lr_power", c.optimizer.lr_power);
        maybe(o, "iterations", c.optimizer.iterations);
        maybe(o, "batch_size", c.optimizer.batch_size);
    }

    if (c.train_domain.empty() && !c.domains.empty()) c.train_domain = c.domains.front();
    validate_config(c);
    return c;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_experiment_config(os.str());
}

void validate_config(const ExperimentConfig& c) {
    const bool known_mode = c.mode == "single" || c.mode == "transfer" ||
                            c.mode == "universal" || c.mode == "incremental" ||
                            c.mode == "panoptic";
    if (!known_mode) throw ConfigError("unknown mode \"" + c.mode + "\"");
    if (c.domains.empty()) throw ConfigError("config lists no domains");
    for (std::size_t i = 0; i < c.domains.size(); ++i)
        for (std::size_t k = i + 1; k < c.domains.size(); ++k)
            if (c.domains[i] == c.domains[k])
                throw ConfigError("domain \"" + c.domains[i] + "\" listed twice");
    if (c.model.intra_use_adjacency && !c.model.intra_enabled)
        throw ConfigError("intra.use_adjacency requires intra.enabled");
    if (c.model.node_dim == 0 || c.model.gcn_layers == 0)
        throw ConfigError("node_dim and gcn_layers must be positive");
    if (!c.model.transfer_scheme.empty())
        parse_transfer_schemes(c.model.transfer_scheme);  // throws on bad names
    if (c.model.transfer_activation != "relu" && c.model.transfer_activation != "leaky")
        throw ConfigError("transfer.activation must be relu or leaky");
    if (c.model.bidirectional != "synchronous" && c.model.bidirectional != "sequential")
        throw ConfigError("transfer.bidirectional must be synchronous or sequential");
    if (!c.train_domain.empty()) {
        bool found = false;
        for (const auto& d : c.domains) found = found || d == c.train_domain;
        if (!found && c.mode != "incremental")
            throw ConfigError("train_domain \"" + c.train_domain +
                              "\" is not among the configured domains");
    }
    if (c.mode == "panoptic" && c.thing_labels.empty())
        throw ConfigError("panoptic mode needs a \"things\" list");
    if (c.optimizer.batch_size == 0 || c.optimizer.iterations == 0)
        throw ConfigError("optimizer.batch_size and optimizer.iterations must be positive");
    if (c.optimizer.base_lr <= 0.0) throw ConfigError("optimizer.base_lr must be positive");
}

std::string experiment_config_json(const ExperimentConfig& c) {
    json j;
    j["mode"] = c.mode;
    j["taxonomy"] = c.taxonomy_path;
    j["embeddings"] = c.embeddings_path;
    j["data_dir"] = c.data_dir;
    j["domains"] = c.domains;
    j["train_domain"] = c.train_domain;
    if (!c.thing_labels.empty()) j["things"] = c.thing_labels;
    j["seed"] = c.seed;
    j["model"] = {{"node_dim", c.model.node_dim},
                  {"gcn_layers", c.model.gcn_layers},
                  {"leaky_slope", c.model.leaky_slope}};
    j["intra"] = {{"enabled", c.model.intra_enabled},
                  {"use_adjacency", c.model.intra_use_adjacency}};
    j["transfer"] = {{"scheme", c.model.transfer_scheme},
                     {"activation", c.model.transfer_activation},
                     {"bidirectional", c.model.bidirectional},
                     {"attention_shared", c.model.attention_shared}};
    j["optimizer"] = {{"base_lr", c.optimizer.base_lr},
                      {"momentum", c.optimizer.momentum},
                      {"weight_decay", c.optimizer.weight_decay},
                      {"lr_power", c.optimizer.lr_power},
                      {"iterations", c.optimizer.iterations},
                      {"batch_size", c.optimizer.batch_size}};
    return j.dump(2);
}

}  // namespace graphonomy
