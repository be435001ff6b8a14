#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "graphonomy/reasoning.hpp"
#include "graphonomy/tensor.hpp"

namespace graphonomy {

enum class TransferScheme {
    Handcraft,           // binary taxonomy indicator, fixed
    Learnable,           // trainable matrix, randomly initialized
    FeatureSimilarity,   // softmaxed cosine similarity of node features, dynamic
    SemanticSimilarity,  // softmaxed cosine similarity of word embeddings, fixed
    Attention,           // cross-graph attention scores, dynamic
};

TransferScheme parse_transfer_scheme(const std::string& name);
std::string transfer_scheme_name(TransferScheme s);
// "feature+semantic" style lists; ConfigError on unknown names or duplicates.
std::vector<TransferScheme> parse_transfer_schemes(const std::string& spec);

// One direction of inter-graph transfer: everything needed to build A_tr under
// the configured scheme(s) plus the trainable feature transform.
struct TransferSpec {
    std::vector<TransferScheme> schemes;  // several entries are averaged
    Tensor handcraft;                     // {N_t,N_s}, for Handcraft
    Tensor semantic;                      // {N_t,N_s}, for SemanticSimilarity
    Tensor learnable;                     // {N_t,N_s}, for Learnable
    AttentionParams attention;            // for Attention
    Tensor w_tr;                          // {D_s,D_t}
    Activation activation = Activation::Relu;
    double leaky_slope = 0.2;
};

enum class BidirectionalMode { Synchronous, Sequential };

// Row-stochastic N_t x N_s matrix of softmaxed cosine similarities between
// target and source node features; recomputed every forward pass and
// differentiable through both inputs.
Tensor feature_similarity_matrix(const Tensor& z_target, const Tensor& z_source,
                                 double eps = 1e-12);

// The transfer matrix for the spec's scheme list; multiple schemes are
// averaged elementwise. ConfigError when a scheme's inputs are missing.
Tensor build_transfer(const TransferSpec& spec, const Tensor& z_target,
                      const Tensor& z_source);

// Residual transfer Z_t + act(A_tr * Z_s * W_tr). The source is not modified.
Tensor inter_transfer(const Tensor& z_target, const Tensor& z_source, const Tensor& a_tr,
                      const Tensor& w_tr, Activation activation = Activation::Relu,
                      double leaky_slope = 0.2);

// Both directions of transfer between two graphs. Synchronous mode (the
// default) computes both updates from the pre-step states, so the result does
// not depend on argument order; sequential mode updates a first and lets b see
// the new a.
std::pair<Tensor, Tensor> bidirectional_step(const Tensor& z_a, const Tensor& z_b,
                                             const TransferSpec& into_a,
                                             const TransferSpec& into_b,
                                             BidirectionalMode mode =
                                                 BidirectionalMode::Synchronous);

// Uniform values in [0, 2/N_s], so initial rows are stochastic in expectation.
Tensor init_learnable_transfer(std::size_t n_target, std::size_t n_source,
                               std::uint64_t seed);

}  // namespace graphonomy
