#include <cmath>

#include "doctest.h"
#include "graphonomy/gradcheck.hpp"
#include "graphonomy/rng.hpp"

using namespace graphonomy;

namespace {

std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> d(n);
    for (double& v : d) v = rng.uniform(lo, hi);
    return d;
}

}  // namespace

TEST_CASE("grad_check passes sum(matmul(A,B)) with tight error") {
    Rng rng(3);
    auto f = [](Tape&, const std::vector<Tensor>& in) { return sum(matmul(in[0], in[1])); };
    GradCheckReport r = grad_check(f, {{3, 4}, {4, 2}},
                                   {random_values(rng, 12), random_values(rng, 8)});
    CHECK(r.passed);
    CHECK(r.max_rel_error < 1e-6);
    CHECK(r.checked == 20);
    CHECK(r.skipped == 0);
}

TEST_CASE("grad_check passes cross_entropy of random 4x3 logits") {
    Rng rng(4);
    auto f = [](Tape&, const std::vector<Tensor>& in) {
        return cross_entropy(in[0], {0, 2, 1, 2});
    };
    GradCheckReport r = grad_check(f, {{4, 3}}, {random_values(rng, 12, -2.0, 2.0)},
                                   1e-5, 1e-4);
    CHECK(r.passed);
}

TEST_CASE("grad_check of a constant reports zero everywhere") {
    auto f = [](Tape&, const std::vector<Tensor>&) { return Tensor::scalar(3.5); };
    GradCheckReport r = grad_check(f, {{2, 2}}, {{1, 2, 3, 4}});
    CHECK(r.passed);
    CHECK(r.max_rel_error == 0.0);
}

TEST_CASE("grad_check composite relu chain matches finite differences") {
    Rng rng(9);
    auto f = [](Tape&, const std::vector<Tensor>& in) {
        return sum(relu(matmul(in[0], in[1])));
    };
    GradCheckReport r = grad_check(f, {{3, 3}, {3, 3}},
                                   {random_values(rng, 9), random_values(rng, 9)});
    CHECK(r.passed);
}

TEST_CASE("grad_check skips coordinates sitting on a relu kink") {
    // One input coordinate is exactly at the kink: relu(x) finite differences
    // would report 0.5 against a subgradient of 0.
    auto f = [](Tape&, const std::vector<Tensor>& in) { return sum(relu(in[0])); };
    GradCheckReport r = grad_check(f, {{2}}, {{0.0, 1.0}});
    CHECK(r.passed);
    CHECK(r.skipped >= 1);
}

TEST_CASE("grad_check covers the softmax/normalize path") {
    Rng rng(13);
    auto f = [](Tape&, const std::vector<Tensor>& in) {
        Tensor sim = matmul(normalize_rows(in[0]), transpose(normalize_rows(in[1])));
        Tensor w = Tensor::values({3, 1}, {0.3, -0.2, 0.9});
        return sum(matmul(softmax_rows(sim), w));
    };
    GradCheckReport r = grad_check(f, {{2, 4}, {3, 4}},
                                   {random_values(rng, 8), random_values(rng, 12)});
    CHECK(r.passed);
}

TEST_CASE("a tolerance below float attainability fails as expected") {
    Rng rng(21);
    auto f = [](Tape&, const std::vector<Tensor>& in) {
        return cross_entropy(in[0], {0, 2, 1, 2});
    };
    GradCheckReport r = grad_check(f, {{4, 3}}, {random_values(rng, 12, -3.0, 3.0)},
                                   1e-5, 1e-12);
    CHECK_FALSE(r.passed);
    CHECK(r.max_rel_error > 1e-12);
}
