#include <cmath>

#include "doctest.h"
#include "graphonomy/gradcheck.hpp"
#include "graphonomy/rng.hpp"
#include "graphonomy/taxonomy.hpp"
#include "graphonomy/transfer.hpp"

using namespace graphonomy;

namespace {

std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> d(n);
    for (double& v : d) v = rng.uniform(lo, hi);
    return d;
}

void check_row_stochastic(const Tensor& m, double tol = 1e-12) {
    for (std::size_t i = 0; i < m.dim(0); ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < m.dim(1); ++j) s += m.at(i, j);
        CHECK(std::fabs(s - 1.0) <= tol);
    }
}

}  // namespace

TEST_CASE("scheme parsing handles single names and combinations") {
    CHECK(parse_transfer_scheme("feature") == TransferScheme::FeatureSimilarity);
    CHECK(parse_transfer_schemes("feature+semantic").size() == 2);
    CHECK(parse_transfer_schemes("handcraft").size() == 1);
    CHECK_THROWS_AS(parse_transfer_schemes("feature+feature"), ConfigError);
    CHECK_THROWS_AS(parse_transfer_schemes("fancy"), ConfigError);
    CHECK_THROWS_AS(parse_transfer_schemes("feature+"), ConfigError);
}

TEST_CASE("feature similarity degenerate rows") {
    // all source nodes identical: uniform rows
    Tensor zt = Tensor::values({2, 2}, {1, 0, 0.3, 0.4});
    Tensor zs = Tensor::values({3, 2}, {2, 1, 2, 1, 2, 1});
    Tensor a = feature_similarity_matrix(zt, zs);
    for (double v : a.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-13));

    // target parallel to source 0, orthogonal to source 1: softmax([1, 0])
    Tensor t = Tensor::values({1, 2}, {2, 0});
    Tensor s = Tensor::values({2, 2}, {5, 0, 0, 3});
    Tensor b = feature_similarity_matrix(t, s);
    const double e = std::exp(1.0);
    CHECK(b[0] == doctest::Approx(e / (e + 1)).epsilon(1e-9));
    CHECK(b[1] == doctest::Approx(1 / (e + 1)).epsilon(1e-9));
}

TEST_CASE("feature similarity is scale invariant and row stochastic") {
    Rng rng(42);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor zt = Tensor::values({3, 4}, random_values(rng, 12));
        std::vector<double> src = random_values(rng, 16);
        Tensor zs = Tensor::values({4, 4}, src);
        Tensor a = feature_similarity_matrix(zt, zs);
        check_row_stochastic(a);

        // scaling a source node vector by 5 leaves the matrix unchanged
        std::vector<double> scaled = src;
        for (std::size_t j = 0; j < 4; ++j) scaled[2 * 4 + j] *= 5.0;
        Tensor b = feature_similarity_matrix(zt, Tensor::values({4, 4}, scaled));
        for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::fabs(a[i] - b[i]) <= 1e-12);
    }
}

TEST_CASE("build_transfer: combined schemes average; identical members collapse") {
    Rng rng(43);
    Tensor zt = Tensor::values({2, 3}, random_values(rng, 6));
    Tensor zs = Tensor::values({4, 3}, random_values(rng, 12));
    Tensor m = feature_similarity_matrix(zt, zs);

    TransferSpec spec;
    spec.schemes = {TransferScheme::Handcraft, TransferScheme::SemanticSimilarity};
    spec.handcraft = m;
    spec.semantic = m;
    Tensor combined = build_transfer(spec, zt, zs);
    for (std::size_t i = 0; i < m.size(); ++i)
        CHECK(combined[i] == doctest::Approx(m[i]).epsilon(1e-15));
}

TEST_CASE("learnable transfer init is deterministic under its seed") {
    Tensor a = init_learnable_transfer(2, 3, 7);
    Tensor b = init_learnable_transfer(2, 3, 7);
    CHECK(a.same_values(b));
    // recorded fixture, seed 7, shape {2,3}
    const std::vector<double> expect{
        0.50292353610190532, 0.63286746859509613, 0.078276187356345339,
        0.59460878447498411, 0.094181042135857831, 0.036728772335962015};
    REQUIRE(a.size() == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(a[i] == expect[i]);
    // values live in [0, 2/N_s]
    for (double v : a.data()) {
        CHECK(v >= 0.0);
        CHECK(v <= 2.0 / 3.0);
    }
}

TEST_CASE("handcraft scheme delegates to the taxonomy indicator") {
    LabelTaxonomy t = LabelTaxonomy::load("data/human_taxonomy.json");
    Tensor indicator = t.handcraft_transfer("medium", "fine");
    TransferSpec spec;
    spec.schemes = {TransferScheme::Handcraft};
    spec.handcraft = indicator;
    Tensor zt = Tensor::zeros({12, 4});
    Tensor zs = Tensor::zeros({7, 4});
    CHECK(build_transfer(spec, zt, zs).same_values(indicator));
}

TEST_CASE("build_transfer reports missing scheme inputs") {
    TransferSpec spec;
    spec.schemes = {TransferScheme::Handcraft};
    CHECK_THROWS_AS(build_transfer(spec, Tensor::zeros({2, 2}), Tensor::zeros({2, 2})),
                    ConfigError);
    spec.schemes = {TransferScheme::Learnable};
    CHECK_THROWS_AS(build_transfer(spec, Tensor::zeros({2, 2}), Tensor::zeros({2, 2})),
                    ConfigError);
}

TEST_CASE("inter_transfer residual identities and the 1x1 example") {
    Rng rng(44);
    Tensor zt = Tensor::values({3, 2}, random_values(rng, 6));
    Tensor zs = Tensor::values({2, 2}, random_values(rng, 4));

    Tensor zero_a = Tensor::zeros({3, 2});
    Tensor w = Tensor::values({2, 2}, random_values(rng, 4));
    CHECK(inter_transfer(zt, zs, zero_a, w).same_values(zt));

    Tensor a = Tensor::values({3, 2}, random_values(rng, 6));
    Tensor zero_w = Tensor::zeros({2, 2});
    CHECK(inter_transfer(zt, zs, a, zero_w).same_values(zt));

    // 1 + relu(1 * 2 * 3) = 7
    Tensor out = inter_transfer(Tensor::values({1, 1}, {1}), Tensor::values({1, 1}, {2}),
                                Tensor::values({1, 1}, {1}), Tensor::values({1, 1}, {3}));
    CHECK(out.data() == std::vector<double>{7});

    CHECK_THROWS_AS(inter_transfer(zt, zs, Tensor::zeros({3, 3}), w), ShapeError);
    CHECK_THROWS_AS(inter_transfer(zt, zs, zero_a, Tensor::zeros({3, 2})), ShapeError);
}

TEST_CASE("inter_transfer never touches the source graph") {
    Rng rng(45);
    std::vector<double> src = random_values(rng, 6);
    Tensor zs = Tensor::values({3, 2}, src);
    Tensor zt = Tensor::values({2, 2}, random_values(rng, 4));
    Tensor a = Tensor::values({2, 3}, random_values(rng, 6));
    Tensor w = Tensor::values({2, 2}, random_values(rng, 4));
    (void)inter_transfer(zt, zs, a, w);
    CHECK(zs.data() == src);
}

TEST_CASE("bidirectional_step semantics") {
    Rng rng(46);
    Tensor za = Tensor::values({2, 2}, random_values(rng, 4));
    Tensor zb = Tensor::values({3, 2}, random_values(rng, 6));

    auto make_spec = [&](std::size_t nt, std::size_t ns, double fill_a, double fill_w) {
        TransferSpec s;
        s.schemes = {TransferScheme::Learnable};
        s.learnable = Tensor::full({nt, ns}, fill_a);
        s.w_tr = Tensor::full({2, 2}, fill_w);
        return s;
    };

    SUBCASE("both transfer matrices zero: unchanged") {
        auto [a2, b2] = bidirectional_step(za, zb, make_spec(2, 3, 0.0, 1.0),
                                           make_spec(3, 2, 0.0, 1.0));
        CHECK(a2.same_values(za));
        CHECK(b2.same_values(zb));
    }

    SUBCASE("one direction zeroed: only the other graph updates") {
        Tensor za_pos = Tensor::values({2, 2}, random_values(rng, 4, 0.2, 1.0));
        auto [a2, b2] = bidirectional_step(za_pos, zb, make_spec(2, 3, 0.0, 1.0),
                                           make_spec(3, 2, 0.5, 0.7));
        CHECK(a2.same_values(za_pos));
        CHECK_FALSE(b2.same_values(zb));
    }

    SUBCASE("synchronous update is argument-order independent") {
        TransferSpec into_a = make_spec(2, 3, 0.4, 0.3);
        TransferSpec into_b = make_spec(3, 2, 0.2, 0.8);
        auto [a2, b2] = bidirectional_step(za, zb, into_a, into_b);
        auto [b3, a3] = bidirectional_step(zb, za, into_b, into_a);
        CHECK(a2.same_values(a3));
        CHECK(b2.same_values(b3));
    }

    SUBCASE("symmetric setup keeps the graphs identical") {
        TransferSpec spec = make_spec(2, 2, 0.3, 0.5);
        auto [a2, b2] = bidirectional_step(za, za, spec, spec);
        CHECK(a2.same_values(b2));
    }

    SUBCASE("sequential mode differs when the first update feeds the second") {
        TransferSpec into_a = make_spec(2, 3, 0.4, 0.3);
        TransferSpec into_b = make_spec(3, 2, 0.2, 0.8);
        auto [a_sync, b_sync] = bidirectional_step(za, zb, into_a, into_b,
                                                   BidirectionalMode::Synchronous);
        auto [a_seq, b_seq] = bidirectional_step(za, zb, into_a, into_b,
                                                 BidirectionalMode::Sequential);
        CHECK(a_sync.same_values(a_seq));
        CHECK_FALSE(b_sync.same_values(b_seq));
    }
}

TEST_CASE("attention transfer matrices are row stochastic") {
    Rng rng(47);
    for (int trial = 0; trial < 10; ++trial) {
        Tensor zt = Tensor::values({3, 4}, random_values(rng, 12));
        Tensor zs = Tensor::values({5, 4}, random_values(rng, 20));
        TransferSpec spec;
        spec.schemes = {TransferScheme::Attention};
        spec.attention = {Tensor::values({8, 1}, random_values(rng, 8)), 0.2};
        check_row_stochastic(build_transfer(spec, zt, zs));
    }
}

TEST_CASE("gradients flow through feature similarity into inter_transfer") {
    Rng rng(48);
    auto f = [](Tape&, const std::vector<Tensor>& in) {
        Tensor a_tr = feature_similarity_matrix(in[0], in[1]);
        return sum(inter_transfer(in[0], in[1], a_tr, in[2]));
    };
    GradCheckReport r = grad_check(
        f, {{2, 3}, {4, 3}, {3, 3}},
        {random_values(rng, 6), random_values(rng, 12), random_values(rng, 9)}, 1e-5, 1e-4);
    CHECK(r.passed);
}
