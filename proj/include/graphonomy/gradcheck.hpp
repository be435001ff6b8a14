#pragma once

#include <functional>
#include <string>
#include <vector>

#include "graphonomy/tensor.hpp"

namespace graphonomy {

// A scalar-valued function of leaf tensors, rebuilt on the given tape.
using DifferentiableFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheckReport {
    bool passed = true;
    double max_rel_error = 0.0;
    std::size_t checked = 0;
    std::size_t skipped = 0;  // coordinates too close to an activation kink
    std::string worst;        // where the max error occurred
};

// Compares tape gradients of f against central finite differences
// (f(x+h) - f(x-h)) / 2h for every coordinate of every input. A coordinate is
// skipped when the step lands the evaluation across a relu/leaky kink (an
// activation input within step of zero changes sign between the two sides),
// where the two-sided difference is meaningless. The error measure is
// |analytic - numeric| / max(1, |analytic|, |numeric|).
GradCheckReport grad_check(const DifferentiableFn& f, const std::vector<Shape>& shapes,
                           const std::vector<std::vector<double>>& values,
                           double step = 1e-5, double tol = 1e-4);

// Named differentiable paths checked by the gradcheck command: projection
// (with re-projection), intra-graph reasoning (3 layers), transfer under the
// feature / learnable / attention schemes, attention adjacency, and the full
// forward composite (two domains, feature transfer, cross-entropy loss).
struct PathReport {
    std::string path;
    std::size_t instances = 0;
    GradCheckReport report;
};

std::vector<std::string> gradcheck_path_names();

// Runs every path whose name contains `filter` (all when empty) on
// `instances` seeded random instances each; InputError for a filter matching
// nothing.
std::vector<PathReport> run_gradcheck_paths(const std::string& filter,
                                            std::size_t instances, double step, double tol,
                                            std::uint64_t seed);

}  // namespace graphonomy
