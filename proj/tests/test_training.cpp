#include <cmath>
#include <cstdio>
#include <map>

#include "doctest.h"
#include "graphonomy/checkpoint.hpp"
#include "graphonomy/training.hpp"

using namespace graphonomy;

namespace {

const char* kTinyTaxonomy = R"({
  "domains": [
    {"name": "coarse", "labels": ["background", "body"]},
    {"name": "fine", "labels": ["background", "arm", "leg"]}
  ],
  "adjacency": {"fine": [["arm", "leg"]]},
  "subordinate": [["background", "background"], ["arm", "body"], ["leg", "body"]]
})";

SamplePools make_pools(const LabelTaxonomy& tax, const std::vector<std::string>& domains,
                       std::size_t count, std::uint64_t seed) {
    SamplePools pools;
    for (const std::string& d : domains) {
        DatasetSpec spec;
        spec.domain = d;
        spec.height = 12;
        spec.width = 12;
        spec.channels = 6;
        spec.seed = mix_seed(seed, fnv1a(d));
        spec.noise = 0.4;
        for (std::size_t i = 0; i < count; ++i)
            pools[d].push_back(generate_parsing_scene(spec, tax, i));
    }
    return pools;
}

ExperimentConfig small_train_config() {
    ExperimentConfig c;
    c.mode = "single";
    c.domains = {"fine"};
    c.model.node_dim = 6;
    c.model.gcn_layers = 2;
    c.optimizer.iterations = 60;
    c.optimizer.batch_size = 2;
    c.optimizer.base_lr = 0.02;
    c.seed = 5;
    return c;
}

}  // namespace

TEST_CASE("poly learning rate starts at the base rate") {
    OptimizerConfig oc;
    oc.base_lr = 0.007;
    oc.iterations = 100;
    SgdOptimizer opt(oc);
    CHECK(opt.learning_rate() == 0.007);
}

TEST_CASE("sgd_step basics") {
    LabelTaxonomy tax = LabelTaxonomy::parse(R"({
        "domains": [{"name": "d", "labels": ["a", "b"]}]})");
    ExperimentConfig c;
    c.mode = "single";
    c.domains = {"d"};
    c.model.intra_enabled = false;
    c.model.intra_use_adjacency = false;
    GraphonomyModel m = GraphonomyModel::create(c, tax, nullptr, 2);

    SUBCASE("zero gradients and zero weight decay leave parameters unchanged") {
        OptimizerConfig oc;
        oc.weight_decay = 0.0;
        oc.iterations = 5;
        SgdOptimizer opt(oc);
        const std::vector<double> before = *m.params().at("d.head.W").value;
        std::map<std::string, std::vector<double>> grads;
        for (const Param& p : m.params().all())
            grads[p.name] = std::vector<double>(p.value->size(), 0.0);
        opt.step(m.params(), grads);
        CHECK(*m.params().at("d.head.W").value == before);
    }

    SUBCASE("one plain step moves theta by -lr * g") {
        OptimizerConfig oc;
        oc.base_lr = 0.1;
        oc.momentum = 0.0;
        oc.weight_decay = 0.0;
        oc.iterations = 10;
        oc.lr_power = 0.9;
        SgdOptimizer opt(oc);
        auto& theta = *m.params().at("d.head.b").value;
        std::fill(theta.begin(), theta.end(), 0.0);
        std::map<std::string, std::vector<double>> grads;
        grads["d.head.b"] = std::vector<double>(theta.size(), 1.0);
        opt.step(m.params(), grads);
        for (double v : theta) CHECK(v == doctest::Approx(-0.1));
    }

    SUBCASE("stepping past max iterations is a contract error") {
        OptimizerConfig oc;
        oc.iterations = 1;
        SgdOptimizer opt(oc);
        std::map<std::string, std::vector<double>> grads;
        opt.step(m.params(), grads);
        CHECK_THROWS_AS(opt.step(m.params(), grads), ContractError);
    }

    SUBCASE("frozen parameters are bit-identical after any step") {
        OptimizerConfig oc;
        oc.iterations = 3;
        SgdOptimizer opt(oc);
        m.params().at("d.head.W").frozen = true;
        const std::vector<double> before = *m.params().at("d.head.W").value;
        std::map<std::string, std::vector<double>> grads;
        grads["d.head.W"] = std::vector<double>(before.size(), 7.0);
        opt.step(m.params(), grads);
        CHECK(*m.params().at("d.head.W").value == before);
    }
}

TEST_CASE("universal sampler respects pools and determinism") {
    SUBCASE("single domain: every batch from that domain") {
        UniversalSampler s({{"only", 10}}, 2, 1);
        for (int i = 0; i < 20; ++i) CHECK(s.next().domain == "only");
    }

    SUBCASE("two equal pools alternate to an exact 50/50 split") {
        UniversalSampler s({{"a", 50}, {"b", 50}}, 2, 1);
        std::map<std::string, int> counts;
        for (int i = 0; i < 100; ++i) counts[s.next().domain]++;
        CHECK(counts["a"] == 50);
        CHECK(counts["b"] == 50);
    }

    SUBCASE("pools sized 200/100 give batch counts in ratio 2:1") {
        UniversalSampler s({{"big", 200}, {"small", 100}}, 4, 9);
        std::map<std::string, int> counts;
        for (int i = 0; i < 300; ++i) counts[s.next().domain]++;
        CHECK(counts["big"] == 200);
        CHECK(counts["small"] == 100);
    }

    SUBCASE("empty pools are rejected") {
        CHECK_THROWS_AS(UniversalSampler({}, 2, 1), InputError);
        CHECK_THROWS_AS(UniversalSampler({{"a", 0}}, 2, 1), InputError);
    }

    SUBCASE("identical seeds give identical schedules") {
        UniversalSampler s1({{"a", 7}, {"b", 13}}, 3, 42);
        UniversalSampler s2({{"a", 7}, {"b", 13}}, 3, 42);
        for (int i = 0; i < 40; ++i) {
            UniversalSampler::Batch b1 = s1.next(), b2 = s2.next();
            CHECK(b1.domain == b2.domain);
            CHECK(b1.indices == b2.indices);
        }
    }
}

TEST_CASE("a small training run reduces the loss and is deterministic") {
    LabelTaxonomy tax = LabelTaxonomy::parse(kTinyTaxonomy);
    SamplePools pools = make_pools(tax, {"fine"}, 24, 17);

    ExperimentConfig c = small_train_config();
    GraphonomyModel m1 = GraphonomyModel::create(c, tax, nullptr, 6);
    TrainOutcome o1 = train_model(m1, pools, c.seed);
    CHECK(o1.last_window_mean < o1.first_window_mean);

    GraphonomyModel m2 = GraphonomyModel::create(c, tax, nullptr, 6);
    TrainOutcome o2 = train_model(m2, pools, c.seed);
    CHECK(o1.log_lines == o2.log_lines);  // bit-identical loss trajectory
    CHECK(params_checksum(m1.params()) == params_checksum(m2.params()));
}

TEST_CASE("incremental extension freezes the old parameters for good") {
    LabelTaxonomy tax = LabelTaxonomy::parse(kTinyTaxonomy);
    SamplePools pools = make_pools(tax, {"fine", "coarse"}, 16, 23);

    ExperimentConfig c = small_train_config();
    c.model.transfer_scheme = "feature";
    c.optimizer.iterations = 30;
    GraphonomyModel model = GraphonomyModel::create(c, tax, nullptr, 6);
    TrainOutcome base_run = train_model(model, pools, c.seed);
    (void)base_run;

    SceneSample probe = pools.at("fine")[0];
    Tensor before_logits = parsing_forward(bind(model, nullptr), probe, "fine", false).logits;
    std::map<std::string, std::uint64_t> before;
    for (const Param& p : model.params().all()) before[p.name] = param_checksum(p);

    CHECK_THROWS_AS(model.extend("fine", tax, nullptr), ConfigError);
    model.extend("coarse", tax, nullptr);
    CHECK(model.has_branch("coarse"));
    for (const Param& p : model.params().all())
        if (before.count(p.name)) CHECK(p.frozen);

    // train the new branch; every pre-existing parameter must stay bit-identical
    ExperimentConfig& cfg = const_cast<ExperimentConfig&>(model.config());
    cfg.train_domain = "coarse";
    cfg.optimizer.iterations = 20;
    TrainOutcome ext_run = train_model(model, pools, 99);
    (void)ext_run;
    for (const Param& p : model.params().all())
        if (before.count(p.name)) CHECK(param_checksum(p) == before.at(p.name));

    // with the new-domain transfer weights zeroed, the old-domain forward is
    // bit-identical to the pre-extension output
    std::fill(model.params().at("tr.coarse>fine.Wtr").value->begin(),
              model.params().at("tr.coarse>fine.Wtr").value->end(), 0.0);
    Tensor after_logits = parsing_forward(bind(model, nullptr), probe, "fine", false).logits;
    CHECK(after_logits.same_values(before_logits));
}

TEST_CASE("checkpoints round-trip exactly and catch corruption") {
    LabelTaxonomy tax = LabelTaxonomy::parse(kTinyTaxonomy);
    SamplePools pools = make_pools(tax, {"fine"}, 8, 31);
    ExperimentConfig c = small_train_config();
    c.optimizer.iterations = 10;
    GraphonomyModel model = GraphonomyModel::create(c, tax, nullptr, 6);
    train_model(model, pools, c.seed);

    const std::string path = "build/test_ckpt.bin";
    CheckpointMeta meta;
    meta.iteration = 10;
    meta.rng_state = "12345";
    save_checkpoint(model, path, meta);

    CheckpointMeta loaded_meta;
    GraphonomyModel loaded = load_checkpoint(path, tax, nullptr, &loaded_meta);
    CHECK(loaded_meta.iteration == 10);
    CHECK(params_checksum(loaded.params()) == params_checksum(model.params()));

    SceneSample probe = pools.at("fine")[0];
    Tensor a = parsing_forward(bind(model, nullptr), probe, "fine", false).logits;
    Tensor b = parsing_forward(bind(loaded, nullptr), probe, "fine", false).logits;
    CHECK(a.same_values(b));

    // flip one byte: the checksum must catch it
    {
        std::FILE* f = std::fopen(path.c_str(), "r+b");
        REQUIRE(f);
        std::fseek(f, 40, SEEK_SET);
        int ch = std::fgetc(f);
        std::fseek(f, 40, SEEK_SET);
        std::fputc(ch ^ 0xff, f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(load_checkpoint(path, tax, nullptr, nullptr), IntegrityError);
    std::remove(path.c_str());
    std::remove((path + ".manifest.json").c_str());
}

TEST_CASE("extended checkpoints reload through the recorded extension") {
    LabelTaxonomy tax = LabelTaxonomy::parse(kTinyTaxonomy);
    ExperimentConfig c = small_train_config();
    c.model.transfer_scheme = "feature";
    GraphonomyModel model = GraphonomyModel::create(c, tax, nullptr, 6);
    model.extend("coarse", tax, nullptr);

    const std::string path = "build/test_ckpt_ext.bin";
    save_checkpoint(model, path);
    GraphonomyModel loaded = load_checkpoint(path, tax, nullptr, nullptr);
    CHECK(loaded.has_branch("coarse"));
    CHECK(loaded.extensions() == std::vector<std::string>{"coarse"});
    CHECK(params_checksum(loaded.params()) == params_checksum(model.params()));
    for (const Param& p : loaded.params().all())
        CHECK(p.frozen == model.params().at(p.name).frozen);
    std::remove(path.c_str());
    std::remove((path + ".manifest.json").c_str());
}
