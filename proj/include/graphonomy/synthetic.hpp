#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "graphonomy/taxonomy.hpp"
#include "graphonomy/tensor.hpp"

namespace graphonomy {

// One pool of synthetic scenes. The same spec always regenerates
// bit-identical samples; per-scene streams derive from (seed, scene index).
struct DatasetSpec {
    std::string domain;  // pool domain (which labels supervise training)
    std::size_t scenes = 0;
    std::size_t height = 24;
    std::size_t width = 24;
    std::size_t channels = 16;
    std::uint64_t seed = 0;
    double noise = 0.5;
    bool instance_mode = false;
    std::vector<std::string> thing_labels;  // instance mode only
};

struct RegionInfo {
    Box box;
    int cls = 0;       // label index in the sample's domain
    int identity = 0;  // distinguishes same-class instances
};

struct SceneSample {
    std::string domain;  // pool domain
    Tensor features;     // {H,W,C}
    // per-pixel label index maps for every taxonomy domain
    std::map<std::string, std::vector<int>> labels;
    std::vector<RegionInfo> regions;  // instance mode
    std::vector<int> identity_map;    // H*W, -1 = no instance (instance mode)
};

// Per-label feature prototypes for one domain. The two label pairs that are
// farthest apart in the domain's adjacency graph get deliberately close
// prototypes, so per-pixel features alone cannot separate them reliably and
// scene context carries signal.
class PrototypeTable {
public:
    static PrototypeTable build(const LabelTaxonomy& taxonomy, const std::string& domain,
                                std::size_t channels, std::uint64_t seed);

    const std::vector<double>& prototype(std::size_t label) const { return protos_[label]; }
    std::size_t labels() const { return protos_.size(); }
    // label pairs forced close, ordered as chosen
    const std::vector<std::pair<std::size_t, std::size_t>>& confusable() const {
        return confusable_;
    }

private:
    std::vector<std::vector<double>> protos_;
    std::vector<std::pair<std::size_t, std::size_t>> confusable_;
};

// The domain used for scene synthesis: the one with the most labels.
std::string finest_domain(const LabelTaxonomy& taxonomy);

// 2-5 blob-shaped parts chosen by a random walk over the finest domain's
// adjacency graph, placed so graph-adjacent parts are spatial neighbours.
// Features are per-label prototypes plus seeded Gaussian noise; label maps
// for the coarser domains are derived through the taxonomy.
SceneSample generate_parsing_scene(const DatasetSpec& spec, const LabelTaxonomy& taxonomy,
                                   std::size_t scene_index);

// Per-pixel replacement of each label by its ancestor in `to`. A label with
// no ancestor falls back to the same-named label in `to`; otherwise it is an
// orphan (TaxonomyError).
std::vector<int> relabel_granularity(const std::vector<int>& map, const std::string& from,
                                     const std::string& to, const LabelTaxonomy& taxonomy);

// Stuff background split plus up to 4 thing instances with identities and
// ground-truth boxes jittered by at most 10% of the box size.
SceneSample generate_panoptic_scene(const DatasetSpec& spec, const LabelTaxonomy& taxonomy,
                                    std::size_t scene_index);

SceneSample generate_scene(const DatasetSpec& spec, const LabelTaxonomy& taxonomy,
                           std::size_t scene_index);

// Sample files: <base>.bin holds the features as little-endian 64-bit floats,
// row-major, no header; <base>.meta.json carries shapes, domains, label maps
// and regions.
void save_sample(const SceneSample& sample, const std::string& base_path);
SceneSample load_sample(const std::string& base_path);

}  // namespace graphonomy
