#pragma once

#include <map>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "graphonomy/tensor.hpp"

namespace graphonomy {

struct Domain {
    std::string name;
    std::vector<std::string> labels;  // index = graph node index
};

// Per-domain label sets plus the human-knowledge relations that drive
// intra-graph adjacency and handcraft transfer.
//
// File format (JSON):
//   {"domains":    [{"name": "...", "labels": ["...", ...]}, ...],
//    "adjacency":  {"<domain>": [["a","b"], ...], ...},
//    "subordinate":[["fine_label","coarse_label"], ...]}
//
// Subordinate entries name labels; a name appearing in several domains (e.g.
// "background") registers the pair for every ordered domain combination that
// contains both labels.
class LabelTaxonomy {
public:
    static LabelTaxonomy load(const std::string& path);
    static LabelTaxonomy parse(const std::string& json_text);

    const std::vector<Domain>& domains() const { return domains_; }
    bool has_domain(const std::string& name) const;
    const Domain& domain(const std::string& name) const;  // InputError if unknown
    std::size_t domain_index(const std::string& name) const;
    std::size_t label_count(const std::string& domain) const;
    // -1 when the label is not in the domain.
    int label_index(const std::string& domain, const std::string& label) const;

    bool adjacent(const std::string& domain, const std::string& a, const std::string& b) const;
    // Directed (fine, coarse) pairs as (fine_domain, fine_label, coarse_domain,
    // coarse_label) index tuples.
    const std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>>&
    subordinate_pairs() const {
        return subordinate_;
    }
    bool subordinate(const std::string& fine_domain, const std::string& fine_label,
                     const std::string& coarse_domain, const std::string& coarse_label) const;

    // Binary N x N adjacency with zero diagonal (self-loops are added later by
    // normalization).
    Tensor intra_adjacency(const std::string& domain) const;

    // Binary N_t x N_s indicator: 1 iff the target and source label are
    // related by a subordinate pair in either direction.
    Tensor handcraft_transfer(const std::string& source, const std::string& target) const;

    // Index of `label`'s ancestor in `to_domain`, following subordinate pairs
    // transitively; -1 if there is none.
    int ancestor_in(const std::string& from_domain, std::size_t label,
                    const std::string& to_domain) const;

private:
    std::vector<Domain> domains_;
    std::map<std::string, std::size_t> domain_index_;
    // per-domain unordered adjacency, stored with i < j
    std::vector<std::set<std::pair<std::size_t, std::size_t>>> adjacency_;
    std::set<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>> subordinate_;
};

// Label word embeddings: one line per label, token followed by
// whitespace-separated reals.
class EmbeddingTable {
public:
    static EmbeddingTable load(const std::string& path);
    static EmbeddingTable parse(const std::string& text);
    EmbeddingTable() = default;

    std::size_t dimension() const { return dim_; }
    std::size_t size() const { return table_.size(); }
    bool contains(const std::string& label) const;
    const std::vector<double>& vector_for(const std::string& label) const;
    void insert(const std::string& label, std::vector<double> v);

private:
    std::size_t dim_ = 0;
    std::map<std::string, std::vector<double>> table_;
};

// Row-stochastic N_t x N_s matrix: softmax over sources of the cosine
// similarity between label word embeddings (constant during training).
Tensor semantic_transfer(const EmbeddingTable& table,
                         const std::vector<std::string>& target_labels,
                         const std::vector<std::string>& source_labels);

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b);

}  // namespace graphonomy
