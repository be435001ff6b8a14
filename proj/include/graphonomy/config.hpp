#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "graphonomy/errors.hpp"

namespace graphonomy {

struct OptimizerConfig {
    double base_lr = 0.01;
    double momentum = 0.9;
    double weight_decay = 5e-4;
    double lr_power = 0.9;  // poly schedule exponent
    std::size_t iterations = 300;
    std::size_t batch_size = 4;
};

struct ModelConfig {
    std::size_t node_dim = 32;   // D; paper-scale runs use 128
    std::size_t gcn_layers = 3;  // T
    double leaky_slope = 0.2;
    bool intra_enabled = true;
    bool intra_use_adjacency = true;       // false: identity instead of A_hat
    std::string transfer_scheme;           // "" disables inter-graph transfer
    std::string transfer_activation = "relu";
    std::string bidirectional = "synchronous";
    bool attention_shared = false;  // one scorer per direction by default
};

struct ExperimentConfig {
    std::string mode = "single";  // single|transfer|universal|incremental|panoptic
    std::string taxonomy_path;
    std::string embeddings_path;
    std::string data_dir;
    std::vector<std::string> domains;  // graphs in the model, in order
    std::string train_domain;          // pool used by single/transfer/incremental
    std::vector<std::string> thing_labels;  // panoptic mode
    ModelConfig model;
    OptimizerConfig optimizer;
    std::uint64_t seed = 1;
};

// Parses and validates; ConfigError on any violation (unknown mode, adjacency
// toggle without intra, unknown scheme, missing domains...).
ExperimentConfig load_experiment_config(const std::string& path);
ExperimentConfig parse_experiment_config(const std::string& json_text);
void validate_config(const ExperimentConfig& config);

std::string experiment_config_json(const ExperimentConfig& config);

}  // namespace graphonomy
