#pragma once

#include <cstdint>
#include <string>

#include "graphonomy/model.hpp"

namespace graphonomy {

struct CheckpointMeta {
    std::size_t iteration = 0;
    std::string rng_state;
};

// Flat binary of parameter values (64-bit little-endian, store order) at
// `path`, with a JSON manifest at `path`.manifest.json carrying the config,
// parameter table (names, shapes, offsets, frozen flags), RNG state and a
// checksum over the binary.
void save_checkpoint(const GraphonomyModel& model, const std::string& path,
                     const CheckpointMeta& meta = {});

// Rebuilds the model structure from the manifest (create + recorded extends),
// verifies the parameter table and checksum, then loads the values.
// IntegrityError on any mismatch.
GraphonomyModel load_checkpoint(const std::string& path, const LabelTaxonomy& taxonomy,
                                const EmbeddingTable* embeddings,
                                CheckpointMeta* meta = nullptr);

std::uint64_t file_checksum(const std::string& path);
// FNV-1a over the concatenated parameter bytes, in store order.
std::uint64_t params_checksum(const ParamStore& params);
std::uint64_t param_checksum(const Param& param);

}  // namespace graphonomy
