#include "graphonomy/reasoning.hpp"

#include <cmath>

namespace graphonomy {

Tensor apply_activation(const Tensor& x, Activation kind, double leaky_slope) {
    return kind == Activation::Relu ? relu(x) : leaky_relu(x, leaky_slope);
}

Tensor normalize_adjacency(const Tensor& a) {
    if (a.rank() != 2 || a.dim(0) != a.dim(1))
        throw ShapeError("normalize_adjacency expects a square matrix, got " +
                         shape_str(a.shape()));
    const std::size_t n = a.dim(0);
    const auto& ad = a.data();
    for (std::size_t i = 0; i < n; ++i) {
        if (ad[i * n + i] != 0.0)
            throw ContractError("adjacency has a self-loop at node " + std::to_string(i));
        for (std::size_t j = i + 1; j < n; ++j)
            if (ad[i * n + j] != ad[j * n + i])
                throw ContractError("adjacency is asymmetric at (" + std::to_string(i) + "," +
                                    std::to_string(j) + ")");
    }

    std::vector<double> dinv(n);
    for (std::size_t i = 0; i < n; ++i) {
        double deg = 1.0;  // self-loop
        for (std::size_t j = 0; j < n; ++j) deg += ad[i * n + j];
        dinv[i] = 1.0 / std::sqrt(deg);
    }
    std::vector<double> out(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double aug = ad[i * n + j] + (i == j ? 1.0 : 0.0);
            out[i * n + j] = dinv[i] * aug * dinv[j];
        }
    return Tensor::values({n, n}, std::move(out));
}

Tensor intra_reason(const Tensor& z, const Tensor& adjacency, const GcnStack& stack) {
    if (adjacency.rank() != 2 || adjacency.dim(0) != adjacency.dim(1) ||
        adjacency.dim(0) != z.dim(0))
        throw ShapeError("adjacency " + shape_str(adjacency.shape()) +
                         " does not match node matrix " + shape_str(z.shape()));
    Tensor cur = z;
    for (const Tensor& w : stack.layers) {
        if (w.rank() != 2 || w.dim(0) != z.dim(1) || w.dim(1) != z.dim(1))
            throw ShapeError("graph convolution weight " + shape_str(w.shape()) +
                             " does not match node dimension " + std::to_string(z.dim(1)));
        cur = apply_activation(matmul(matmul(adjacency, cur), w), stack.activation,
                               stack.leaky_slope);
    }
    return cur;
}

Tensor attention_matrix(const Tensor& z_target, const Tensor& z_source,
                        const AttentionParams& params, const Tensor* neighborhood) {
    const std::size_t d = z_target.dim(1);
    if (z_source.dim(1) != d)
        throw ShapeError("attention node dimensions disagree: " + shape_str(z_target.shape()) +
                         " vs " + shape_str(z_source.shape()));
    if (params.w_att.rank() != 2 || params.w_att.dim(0) != 2 * d || params.w_att.dim(1) != 1)
        throw ShapeError("attention weight must be {" + std::to_string(2 * d) + ",1}, got " +
                         shape_str(params.w_att.shape()));

    // w^T [z_i || z_j] splits into (w_a . z_i) + (w_b . z_j), so the full score
    // matrix is an outer sum of two projections.
    Tensor wa = slice_rows(params.w_att, 0, d);
    Tensor wb = slice_rows(params.w_att, d, 2 * d);
    Tensor u = reshape(matmul(z_target, wa), {z_target.dim(0)});
    Tensor v = reshape(matmul(z_source, wb), {z_source.dim(0)});
    Tensor scores = leaky_relu(outer_sum(u, v), params.leaky_slope);
    return neighborhood ? softmax_rows_masked(scores, *neighborhood) : softmax_rows(scores);
}

Tensor attention_adjacency(const Tensor& z, const AttentionParams& params,
                           const Tensor* neighborhood) {
    return attention_matrix(z, z, params, neighborhood);
}

}  // namespace graphonomy
