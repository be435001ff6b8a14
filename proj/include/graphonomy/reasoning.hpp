#pragma once

#include <optional>
#include <vector>

#include "graphonomy/tensor.hpp"

namespace graphonomy {

enum class Activation { Relu, LeakyRelu };

Tensor apply_activation(const Tensor& x, Activation kind, double leaky_slope);

// Symmetric renormalized adjacency with self-loops:
//   A_hat = D^{-1/2} (A + I) D^{-1/2},  D = degree matrix of A + I.
// Input must be symmetric with zero diagonal (ContractError otherwise).
Tensor normalize_adjacency(const Tensor& a);

// T graph-convolution layers, each a square D x D weight.
struct GcnStack {
    std::vector<Tensor> layers;
    Activation activation = Activation::Relu;
    double leaky_slope = 0.2;
};

// Graph propagation Z <- act(A_hat * Z * W_t) applied for every layer of the
// stack in order. The adjacency may be a constant or a tape-tracked dynamic
// matrix.
Tensor intra_reason(const Tensor& z, const Tensor& adjacency, const GcnStack& stack);

// Pair scorer for attention-derived adjacency: a 2D x 1 weight applied to the
// concatenation [z_i || z_j], followed by a leaky nonlinearity.
struct AttentionParams {
    Tensor w_att;  // {2D, 1}
    double leaky_slope = 0.2;
};

// Row-stochastic N x N attention adjacency over one node set: softmax over j
// of leaky(w_att^T [z_i || z_j]). An optional untracked binary mask restricts
// each row's neighborhood; a fully masked row is a ContractError.
Tensor attention_adjacency(const Tensor& z, const AttentionParams& params,
                           const Tensor* neighborhood = nullptr);

// Cross-graph generalization used as a dynamic transfer matrix: rows index
// target nodes, columns source nodes, softmax over the source.
Tensor attention_matrix(const Tensor& z_target, const Tensor& z_source,
                        const AttentionParams& params, const Tensor* neighborhood = nullptr);

}  // namespace graphonomy
