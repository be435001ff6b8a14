#include <cmath>

#include "doctest.h"
#include "graphonomy/rng.hpp"
#include "graphonomy/tensor.hpp"

using namespace graphonomy;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
    std::vector<double> d(shape_size(shape));
    for (double& v : d) v = rng.uniform(lo, hi);
    return Tensor::values(std::move(shape), std::move(d));
}

}  // namespace

TEST_CASE("matmul identity and hand-computed product") {
    Tensor i2 = Tensor::values({2, 2}, {1, 0, 0, 1});
    Tensor v = Tensor::values({2, 1}, {3, 4});
    Tensor out = matmul(i2, v);
    CHECK(out.data() == std::vector<double>{3, 4});

    Tensor a = Tensor::values({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::values({2, 2}, {5, 6, 7, 8});
    Tensor p = matmul(a, b);
    CHECK(p.data() == std::vector<double>{19, 22, 43, 50});
}

TEST_CASE("matmul shape error names both shapes") {
    Tensor a = Tensor::zeros({2, 3});
    Tensor b = Tensor::zeros({2, 2});
    CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("gradient of sum(A*B) wrt A") {
    Tape tape;
    Tensor a = tape.leaf({2, 2}, {1, 2, 3, 4});
    Tensor b = Tensor::values({2, 2}, {5, 6, 7, 8});
    Tensor loss = sum(matmul(a, b));
    tape.backward(loss);
    Tensor da = tape.grad(a);
    // each row of dA is [5+6, 7+8] = [11, 15]
    CHECK(da.data() == std::vector<double>{11, 15, 11, 15});
}

TEST_CASE("relu and leaky_relu basics") {
    Tensor x = Tensor::values({3}, {-1, 0, 2});
    CHECK(relu(x).data() == std::vector<double>{0, 0, 2});

    Tensor y = Tensor::values({1}, {-1});
    CHECK(leaky_relu(y, 0.2)[0] == doctest::Approx(-0.2));

    CHECK_THROWS_AS(leaky_relu(y, 1.5), InputError);
    CHECK_THROWS_AS(leaky_relu(y, 0.0), InputError);
}

TEST_CASE("relu gradient uses subgradient 0 at the origin") {
    Tape tape;
    Tensor x = tape.leaf({2}, {-1, 2});
    tape.backward(sum(relu(x)));
    CHECK(tape.grad(x).data() == std::vector<double>{0, 1});

    Tape tape2;
    Tensor z = tape2.leaf({1}, {0.0});
    tape2.backward(sum(relu(z)));
    CHECK(tape2.grad(z).data() == std::vector<double>{0});

    Tape tape3;
    Tensor w = tape3.leaf({2}, {-1, 0.5});
    tape3.backward(sum(leaky_relu(w, 0.2)));
    CHECK(tape3.grad(w).data() == std::vector<double>{0.2, 1});
}

TEST_CASE("softmax_rows symmetry and stability") {
    CHECK(softmax_rows(Tensor::values({1, 2}, {0, 0})).data() == std::vector<double>{0.5, 0.5});
    CHECK(softmax_rows(Tensor::values({1, 2}, {1000, 1000})).data() ==
          std::vector<double>{0.5, 0.5});

    Tensor s = softmax_rows(Tensor::values({1, 2}, {std::log(2.0), 0}));
    CHECK(s[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK(s[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax_rows rows sum to one and entries lie in [0,1]") {
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor x = random_tensor(rng, {5, 7}, -30.0, 30.0);
        Tensor y = softmax_rows(x);
        for (std::size_t i = 0; i < 5; ++i) {
            double s = 0.0;
            for (std::size_t j = 0; j < 7; ++j) {
                const double v = y.at(i, j);
                CHECK(v >= 0.0);
                CHECK(v <= 1.0);
                s += v;
            }
            CHECK(std::fabs(s - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("masked softmax ignores masked entries; fully masked row is an error") {
    Tensor x = Tensor::values({1, 3}, {5, 1, 1});
    Tensor m = Tensor::values({1, 3}, {0, 1, 1});
    Tensor y = softmax_rows_masked(x, m);
    CHECK(y[0] == 0.0);
    CHECK(y[1] == doctest::Approx(0.5));
    CHECK(y[2] == doctest::Approx(0.5));

    Tensor all0 = Tensor::values({1, 3}, {0, 0, 0});
    CHECK_THROWS_AS(softmax_rows_masked(x, all0), ContractError);
}

TEST_CASE("concat_channels values and gradient split") {
    Tensor a = Tensor::values({2}, {1, 2});
    Tensor b = Tensor::values({1}, {3});
    CHECK(concat_channels(a, b).data() == std::vector<double>{1, 2, 3});

    // empty second operand leaves a unchanged
    Tensor e = Tensor::zeros({0});
    CHECK(concat_channels(a, e).data() == a.data());

    Tape tape;
    Tensor ta = tape.leaf({2}, {1, 2});
    Tensor tb = tape.leaf({1}, {3});
    Tensor cat = concat_channels(ta, tb);
    // weight the upstream so the split is visible: loss = 1*g1 + 2*g2 + 3*g3
    Tensor w = Tensor::values({3}, {1, 2, 3});
    tape.backward(sum(matmul(reshape(cat, {1, 3}), reshape(w, {3, 1}))));
    CHECK(tape.grad(ta).data() == std::vector<double>{1, 2});
    CHECK(tape.grad(tb).data() == std::vector<double>{3});
}

TEST_CASE("concat_channels rejects mismatched leading dimensions") {
    CHECK_THROWS_AS(concat_channels(Tensor::zeros({2, 3}), Tensor::zeros({3, 3})), ShapeError);
}

TEST_CASE("cross_entropy examples") {
    Tensor sat = Tensor::values({1, 2}, {10, -10});
    CHECK(cross_entropy(sat, {0}).item() == doctest::Approx(0.0).epsilon(1e-4));

    Tensor even = Tensor::values({1, 2}, {0, 0});
    CHECK(cross_entropy(even, {0}).item() == doctest::Approx(std::log(2.0)).epsilon(1e-14));

    for (std::size_t l : {3u, 5u, 9u}) {
        Tensor u = Tensor::zeros({2, l});
        CHECK(cross_entropy(u, {0, l - 1}).item() ==
              doctest::Approx(std::log(double(l))).epsilon(1e-14));
    }

    CHECK_THROWS_AS(cross_entropy(even, {2}), InputError);
    CHECK_THROWS_AS(cross_entropy(even, {0, 1}), ShapeError);
}

TEST_CASE("backward of sum is all ones; reuse accumulates") {
    Tape tape;
    Tensor x = tape.leaf({2, 3}, {1, 2, 3, 4, 5, 6});
    tape.backward(sum(x));
    CHECK(tape.grad(x).data() == std::vector<double>(6, 1.0));

    Tape tape2;
    Tensor y = tape2.leaf({3}, {1, 2, 3});
    tape2.backward(sum(concat_channels(y, y)));
    CHECK(tape2.grad(y).data() == std::vector<double>(3, 2.0));
}

TEST_CASE("backward requires a scalar on the active tape") {
    Tape tape;
    Tensor x = tape.leaf({2}, {1, 2});
    CHECK_THROWS_AS(tape.backward(x), ContractError);
    CHECK_THROWS_AS(tape.backward(Tensor::scalar(1.0)), ContractError);
}

TEST_CASE("backward is deterministic: repeated runs are bit-identical") {
    Rng rng(5);
    Tape tape;
    Tensor a = tape.leaf({4, 4}, random_tensor(rng, {4, 4}).data());
    Tensor b = tape.leaf({4, 4}, random_tensor(rng, {4, 4}).data());
    Tensor loss = sum(relu(matmul(a, b)));
    tape.backward(loss);
    Tensor ga1 = tape.grad(a), gb1 = tape.grad(b);
    tape.backward(loss);
    CHECK(tape.grad(a).same_values(ga1));
    CHECK(tape.grad(b).same_values(gb1));
}

TEST_CASE("matmul associativity on well-conditioned random 8x8 inputs") {
    Rng rng(77);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor a = random_tensor(rng, {8, 8});
        Tensor b = random_tensor(rng, {8, 8});
        Tensor c = random_tensor(rng, {8, 8});
        Tensor l = matmul(matmul(a, b), c);
        Tensor r = matmul(a, matmul(b, c));
        for (std::size_t i = 0; i < l.size(); ++i)
            CHECK(std::fabs(l[i] - r[i]) <= 1e-9);
    }
}

TEST_CASE("transpose, reshape, outer_sum, slice_rows") {
    Tensor a = Tensor::values({2, 3}, {1, 2, 3, 4, 5, 6});
    CHECK(transpose(a).data() == std::vector<double>{1, 4, 2, 5, 3, 6});
    CHECK(reshape(a, {3, 2}).data() == a.data());
    CHECK_THROWS_AS(reshape(a, {4, 2}), ShapeError);

    Tensor u = Tensor::values({2}, {1, 10});
    Tensor v = Tensor::values({3}, {1, 2, 3});
    CHECK(outer_sum(u, v).data() == std::vector<double>{2, 3, 4, 11, 12, 13});

    CHECK(slice_rows(a, 1, 2).data() == std::vector<double>{4, 5, 6});
    CHECK_THROWS_AS(slice_rows(a, 1, 3), InputError);
}

TEST_CASE("normalize_rows is scale invariant and guards zero rows") {
    Tensor x = Tensor::values({2, 2}, {3, 4, 0, 0});
    Tensor y = normalize_rows(x);
    CHECK(y.at(0, 0) == doctest::Approx(0.6).epsilon(1e-12));
    CHECK(y.at(0, 1) == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(y.at(1, 0) == 0.0);  // zero row stays finite

    Tensor xs = Tensor::values({1, 2}, {30, 40});
    Tensor ys = normalize_rows(xs);
    CHECK(std::fabs(ys[0] - 0.6) <= 1e-12);
    CHECK(std::fabs(ys[1] - 0.8) <= 1e-12);
}

TEST_CASE("region_mean_pool matches the mean oracle") {
    // 2x1 map with values [1,3], one region covering both pixels, W = I
    Tensor x = Tensor::values({2, 1, 1}, {1, 3});
    Tensor pooled = region_mean_pool(x, {Box{0, 0, 2, 1}});
    CHECK(pooled.data() == std::vector<double>{2});

    // constant map: pooled value equals the constant
    Tensor cmap = Tensor::full({3, 3, 2}, 7.0);
    Tensor p2 = region_mean_pool(cmap, {Box{0, 0, 2, 2}});
    CHECK(p2.data() == std::vector<double>{7, 7});

    // two identical regions give identical node features
    Tensor p3 = region_mean_pool(cmap, {Box{1, 1, 3, 3}, Box{1, 1, 3, 3}});
    CHECK(p3.at(0, 0) == p3.at(1, 0));

    // empty region list is fine; degenerate box is not
    CHECK(region_mean_pool(cmap, {}).size() == 0);
    CHECK_THROWS_AS(region_mean_pool(cmap, {Box{2, 2, 2, 3}}), InputError);
    CHECK_THROWS_AS(region_mean_pool(cmap, {Box{0, 0, 4, 1}}), InputError);
}

TEST_CASE("region_concat appends node features; later region wins overlap") {
    Tensor x = Tensor::values({1, 1, 1}, {1});
    Tensor z = Tensor::values({1, 2}, {5, 6});
    Tensor out = region_concat(x, z, {Box{0, 0, 1, 1}});
    CHECK(out.data() == std::vector<double>{1, 5, 6});

    // zero node features leave the region pixels as original + zeros
    Tensor z0 = Tensor::zeros({1, 2});
    CHECK(region_concat(x, z0, {Box{0, 0, 1, 1}}).data() == std::vector<double>{1, 0, 0});

    // uncovered pixels get zero padding
    Tensor x2 = Tensor::values({1, 2, 1}, {1, 2});
    Tensor out2 = region_concat(x2, z, {Box{0, 0, 1, 1}});
    CHECK(out2.data() == std::vector<double>{1, 5, 6, 2, 0, 0});

    // overlapping regions: the later index owns the pixel
    Tensor z2 = Tensor::values({2, 1}, {10, 20});
    Tensor out3 = region_concat(x2, z2, {Box{0, 0, 1, 2}, Box{0, 1, 1, 2}});
    CHECK(out3.data() == std::vector<double>{1, 10, 2, 20});
}

TEST_CASE("mixing tensors from two tapes is rejected") {
    Tape t1, t2;
    Tensor a = t1.leaf({1, 1}, {1});
    Tensor b = t2.leaf({1, 1}, {2});
    CHECK_THROWS_AS(matmul(a, b), ContractError);
}

TEST_CASE("untracked computation records no nodes") {
    Tape tape;
    Tensor a = tape.leaf({2, 2}, {1, 2, 3, 4}, /*requires_grad=*/false);
    const std::size_t before = tape.node_count();
    Tensor out = relu(matmul(a, a));
    CHECK(tape.node_count() == before);
    CHECK(out.tracked());
    CHECK_FALSE(out.requires_grad());
}
