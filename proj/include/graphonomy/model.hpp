#pragma once

#include <map>
#include <string>
#include <vector>

#include "graphonomy/config.hpp"
#include "graphonomy/metrics.hpp"
#include "graphonomy/projection.hpp"
#include "graphonomy/reasoning.hpp"
#include "graphonomy/synthetic.hpp"
#include "graphonomy/taxonomy.hpp"
#include "graphonomy/tensor.hpp"
#include "graphonomy/transfer.hpp"

namespace graphonomy {

struct Param {
    std::string name;
    Shape shape;
    std::shared_ptr<std::vector<double>> value;
    bool frozen = false;
};

// Ordered, named parameter storage. Order is creation order and defines the
// checkpoint layout.
class ParamStore {
public:
    void add(const std::string& name, Shape shape, std::vector<double> init);
    bool has(const std::string& name) const;
    Param& at(const std::string& name);
    const Param& at(const std::string& name) const;
    std::vector<Param>& all() { return params_; }
    const std::vector<Param>& all() const { return params_; }
    std::size_t total_values() const;
    void freeze_all();

private:
    std::vector<Param> params_;
    std::map<std::string, std::size_t> index_;
};

struct DomainBranch {
    std::string name;
    std::size_t label_count = 0;
    Tensor adjacency;  // normalized A_hat (identity when adjacency is toggled off)
};

// Fixed per-direction transfer matrices (handcraft indicator, semantic
// similarity); trainable pieces live in the parameter store.
struct PairConstants {
    Tensor handcraft;
    Tensor semantic;
};

class GraphonomyModel {
public:
    // `channels` is the dataset's feature width C; structure, sizes and
    // initial values are fully determined by (config, taxonomy, channels).
    static GraphonomyModel create(const ExperimentConfig& config,
                                  const LabelTaxonomy& taxonomy,
                                  const EmbeddingTable* embeddings, std::size_t channels);

    // Adds a new branch plus transfer connections to every existing branch and
    // freezes all pre-existing parameters (incremental training protocol).
    void extend(const std::string& new_domain, const LabelTaxonomy& taxonomy,
                const EmbeddingTable* embeddings);

    // Select the scheme used by future transfer connections. Only legal while
    // the model has no transfer pairs yet (e.g. a single-branch checkpoint
    // about to be extended); ConfigError otherwise.
    void override_transfer_scheme(const std::string& scheme);

    const ExperimentConfig& config() const { return config_; }
    ParamStore& params() { return params_; }
    const ParamStore& params() const { return params_; }
    const std::vector<DomainBranch>& branches() const { return branches_; }
    bool has_branch(const std::string& domain) const;
    const DomainBranch& branch(const std::string& domain) const;
    std::size_t channels() const { return channels_; }
    std::size_t node_dim() const { return config_.model.node_dim; }
    std::size_t layers() const { return config_.model.gcn_layers; }
    bool panoptic() const { return config_.mode == "panoptic"; }
    const std::vector<int>& thing_label_indices() const { return thing_indices_; }
    const PairConstants& pair_constants(const std::string& source,
                                        const std::string& target) const;

    // Structural description for the checkpoint manifest.
    std::vector<std::pair<std::string, std::size_t>> domain_sizes() const;
    // Domains added after creation, in order; replaying create + extend
    // reproduces the exact parameter layout.
    const std::vector<std::string>& extensions() const { return extensions_; }

private:
    void add_branch(const std::string& domain, const LabelTaxonomy& taxonomy,
                    const EmbeddingTable* embeddings, std::uint64_t seed_salt,
                    bool with_head = true);
    void add_pair(const std::string& source, const std::string& target,
                  const LabelTaxonomy& taxonomy, const EmbeddingTable* embeddings,
                  std::uint64_t seed_salt);
    void create_panoptic(const LabelTaxonomy& taxonomy);

    ExperimentConfig config_;
    std::size_t channels_ = 0;
    std::vector<DomainBranch> branches_;
    std::map<std::pair<std::string, std::string>, PairConstants> pair_constants_;
    ParamStore params_;
    std::vector<int> thing_indices_;  // panoptic: scene-label indices of things
    std::vector<std::string> extensions_;
};

// Per-pass binding of every parameter to a tensor: tape leaves while training
// (frozen parameters tracked without grad), untracked constants at inference.
struct ModelView {
    const GraphonomyModel* model = nullptr;
    Tape* tape = nullptr;
    std::map<std::string, Tensor> tensors;

    const Tensor& operator[](const std::string& name) const;
};

ModelView bind(const GraphonomyModel& model, Tape* tape);

struct ForwardResult {
    Tensor logits;           // {HW, L} of the active domain
    Tensor loss;             // {1} when targets were supplied
    Tensor instance_logits;  // panoptic: {K, n_things}
};

// Algorithm-1 forward for one parsing sample: project every branch, T rounds
// of one graph-convolution layer each followed by bidirectional transfer
// between the active branch and every other branch, re-project the active
// branch, classify per pixel.
ForwardResult parsing_forward(const ModelView& view, const SceneSample& sample,
                              const std::string& active_domain, bool with_loss);

// Stuff graph + instance graph coupled by attention transfer; pixel head on
// the stuff-enhanced features concatenated with per-region node features,
// plus a per-instance classification head.
ForwardResult panoptic_forward(const ModelView& view, const SceneSample& sample,
                               bool with_loss);

// Mean loss over a batch.
Tensor batch_loss(const ModelView& view, const std::vector<const SceneSample*>& batch,
                  const std::string& active_domain);

// Per-pixel argmax prediction for one domain (ties break to the smaller
// index).
std::vector<int> predict_labels(const GraphonomyModel& model, const SceneSample& sample,
                                const std::string& domain);

std::vector<int> argmax_rows(const Tensor& logits);

// Panoptic prediction: per-region thing segments (last region wins overlaps)
// plus one stuff segment per predicted class outside all regions.
struct PanopticPrediction {
    std::vector<int> label_map;
    std::vector<Segment> segments;
};

PanopticPrediction predict_panoptic(const GraphonomyModel& model, const SceneSample& sample);

// Ground-truth segments of an instance-mode sample.
std::vector<Segment> ground_truth_segments(const SceneSample& sample,
                                           const std::string& domain);

}  // namespace graphonomy
