#pragma once

#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "graphonomy/errors.hpp"

namespace graphonomy {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

// Dense row-major tensor of 64-bit reals. Tensors are immutable values; a
// tensor created by an op on a tape carries a handle back into that tape so
// backward() can find its gradient.
class Tensor {
public:
    Tensor() = default;

    // Untracked constants.
    static Tensor values(Shape shape, std::vector<double> data);
    // Aliases existing storage instead of copying.
    static Tensor shared(Shape shape, std::shared_ptr<const std::vector<double>> data);
    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor identity(std::size_t n);
    static Tensor scalar(double v) { return values({1}, {v}); }

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_[i]; }
    std::size_t size() const;
    const std::vector<double>& data() const;
    double operator[](std::size_t flat) const { return data()[flat]; }
    double at(std::size_t r, std::size_t c) const;  // rank-2 access
    double item() const;                            // scalar value

    bool tracked() const { return tape_ != nullptr; }
    bool requires_grad() const { return node_ >= 0; }
    Tape* tape() const { return tape_; }
    int node() const { return node_; }

    // Same shape and bit-identical values.
    bool same_values(const Tensor& other) const;

private:
    friend struct OpAccess;
    Tensor(Shape shape, std::shared_ptr<const std::vector<double>> data,
           Tape* tape, int node)
        : shape_(std::move(shape)), data_(std::move(data)), tape_(tape), node_(node) {}

    Shape shape_;
    std::shared_ptr<const std::vector<double>> data_;
    Tape* tape_ = nullptr;
    int node_ = -1;  // >= 0 iff a gradient will be available after backward
};

// Axis-aligned pixel region, half-open: rows [y0,y1), cols [x0,x1).
struct Box {
    std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;
    std::size_t height() const { return y1 - y0; }
    std::size_t width() const { return x1 - x0; }
    std::size_t area() const { return height() * width(); }
};

// Reverse-mode tape. Rebuilt per forward pass (define-by-run); single
// threaded — one tape per worker.
class Tape {
public:
    using BackFn = std::function<void(Tape&, const std::vector<double>& upstream)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Leaf tensors. Gradients are recorded only for requires_grad leaves.
    Tensor leaf(Shape shape, std::vector<double> values, bool requires_grad = true);
    // Aliases external storage (e.g. the parameter store) instead of copying.
    Tensor leaf_shared(Shape shape, std::shared_ptr<const std::vector<double>> values,
                       bool requires_grad = true);

    // Reverse pass from a scalar loss. Clears previous gradients first, so
    // repeated calls on the same tape are bit-identical. Gradients accumulate
    // additively across multiple uses of a tensor within the pass.
    void backward(const Tensor& loss);

    // Gradient of a tensor on this tape; zeros if no gradient flowed (or the
    // tensor does not require grad). ContractError for foreign tensors.
    Tensor grad(const Tensor& t) const;

    std::size_t node_count() const { return nodes_.size(); }

    // Inputs of every relu/leaky activation, in execution order. grad_check
    // compares these between the +h and -h evaluations and skips coordinates
    // whose finite difference straddles a kink (an input changing sign).
    const std::vector<double>& kink_inputs() const { return kink_inputs_; }
    void note_kinks(const std::vector<double>& values) {
        kink_inputs_.insert(kink_inputs_.end(), values.begin(), values.end());
    }

private:
    friend struct OpAccess;

    struct Node {
        const char* kind;
        std::size_t size;
        std::vector<double> grad;  // allocated lazily during backward
        BackFn back;               // null for leaves
    };

    int add_node(const char* kind, std::size_t size, BackFn back);
    // Adds `v` (scaled by `scale`) into a node's gradient buffer; no-op for
    // node_id < 0.
    void accumulate(int node_id, const std::vector<double>& v, double scale = 1.0);
    void accumulate_raw(int node_id, const double* v, std::size_t n);
    std::vector<double>& grad_buffer(int node_id);

    std::vector<Node> nodes_;
    std::vector<double> kink_inputs_;
};

// --- Operations -------------------------------------------------------------
//
// All ops compute eagerly and record a backward closure when any operand
// requires grad. Operands from different tapes are a ContractError.

Tensor matmul(const Tensor& a, const Tensor& b);        // {m,k}x{k,n} -> {m,n}
Tensor transpose(const Tensor& a);                      // {r,c} -> {c,r}
Tensor add(const Tensor& a, const Tensor& b);           // elementwise, same shape
Tensor add_bias(const Tensor& m, const Tensor& bias);   // {r,c} + {c} per row
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);       // slope in (0,1)
Tensor softmax_rows(const Tensor& x);
// Masked row softmax: entries where mask == 0 get output 0 and take no part
// in the normalization. mask is an untracked {r,c} tensor; a fully masked row
// is a ContractError.
Tensor softmax_rows_masked(const Tensor& x, const Tensor& mask);
// Concatenation along the last axis; leading dimensions must agree.
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor reshape(const Tensor& x, Shape shape);
Tensor sum(const Tensor& x);                            // -> {1}
Tensor mean(const Tensor& x);                           // -> {1}
// Mean over P of -log softmax(logits)[target].
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& targets);
// Rows rescaled to unit L2 norm; denominator is ||row|| + eps.
Tensor normalize_rows(const Tensor& x, double eps = 1e-12);
// out[i][j] = u[i] + v[j] for rank-1 u {n}, v {m}.
Tensor outer_sum(const Tensor& u, const Tensor& v);
// Rows [r0, r1) of a rank-2 tensor.
Tensor slice_rows(const Tensor& x, std::size_t r0, std::size_t r1);
// Mean feature vector over each box of a {h,w,c} map -> {k,c}.
Tensor region_mean_pool(const Tensor& x, const std::vector<Box>& boxes);
// Per-pixel channel concat of x {h,w,c} with z {k,d} of the pixel's covering
// region (highest region index wins on overlap); uncovered pixels get zeros.
Tensor region_concat(const Tensor& x, const Tensor& z, const std::vector<Box>& boxes);

// Pixels' winning region index per the region_concat rule; -1 if uncovered.
std::vector<int> region_owners(std::size_t h, std::size_t w, const std::vector<Box>& boxes);
void check_boxes(std::size_t h, std::size_t w, const std::vector<Box>& boxes);

}  // namespace graphonomy
