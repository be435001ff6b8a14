#include "commands.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "graphonomy/checkpoint.hpp"
#include "graphonomy/gradcheck.hpp"
#include "graphonomy/metrics.hpp"
#include "graphonomy/render.hpp"
#include "graphonomy/training.hpp"
#include "json.hpp"

namespace graphonomy::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError(path + " is not valid JSON: " + std::string(e.what()));
    }
    return j;
}

// Runs fn(i) for i in [0, n) across `workers` threads. Exceptions from
// workers are rethrown on the caller.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> threads;
    std::vector<std::exception_ptr> errors(workers);
    for (std::size_t t = 0; t < workers; ++t)
        threads.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += workers) fn(i);
            } catch (...) {
                errors[t] = std::current_exception();
            }
        });
    for (auto& th : threads) th.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct PoolMetrics {
    SegMetrics seg;
    PqResult pq;
    bool has_pq = false;
    std::size_t samples = 0;
};

json seg_json(const SegMetrics& m, const std::vector<std::string>& labels) {
    json per_iou = json::object(), per_f1 = json::object();
    for (std::size_t c = 0; c < labels.size(); ++c) {
        if (m.iou[c] >= 0.0) per_iou[labels[c]] = m.iou[c];
        if (m.f1[c] >= 0.0) per_f1[labels[c]] = m.f1[c];
    }
    return {{"miou", m.miou},
            {"accuracy", m.accuracy},
            {"mean_f1", m.mean_f1},
            {"per_class_iou", per_iou},
            {"per_class_f1", per_f1}};
}

std::optional<std::string> manifest_path_for(const std::string& ckpt) {
    const std::string p = ckpt + ".manifest.json";
    if (!fs::exists(p)) return std::nullopt;
    return p;
}

}  // namespace

int cmd_gen(const GenArgs& args) {
    json spec_json = read_json(args.spec_path);
    const std::string taxonomy_path = spec_json.at("taxonomy").get<std::string>();
    LabelTaxonomy taxonomy = LabelTaxonomy::load(taxonomy_path);

    DatasetSpec base;
    base.height = spec_json.value("height", std::size_t{24});
    base.width = spec_json.value("width", std::size_t{24});
    base.channels = spec_json.value("channels", std::size_t{16});
    base.noise = spec_json.value("noise", 0.5);
    base.seed = spec_json.value("seed", std::uint64_t{0});
    base.instance_mode = spec_json.value("instance_mode", false);
    if (spec_json.contains("things"))
        base.thing_labels = spec_json["things"].get<std::vector<std::string>>();
    if (args.seed) base.seed = *args.seed;

    const auto domains = spec_json.at("domains").get<std::vector<std::string>>();
    if (domains.empty()) throw ConfigError("gen spec lists no domains");
    const std::size_t n_train = spec_json.value("train_scenes", std::size_t{200});
    const std::size_t n_test = spec_json.value("test_scenes", std::size_t{50});

    for (const std::string& domain : domains) {
        if (!taxonomy.has_domain(domain))
            throw ConfigError("gen spec domain \"" + domain + "\" is not in the taxonomy");
        const fs::path dir = fs::path(args.out_dir) / domain;
        std::error_code ec;
        fs::create_directories(dir, ec);
        if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

        for (const auto& [split, count] :
             {std::pair<const char*, std::size_t>{"train", n_train}, {"test", n_test}}) {
            DatasetSpec spec = base;
            spec.domain = domain;
            spec.scenes = count;
            spec.seed = mix_seed(base.seed, fnv1a(domain + "/" + split));
            const std::string prefix = (dir / split).string();
            parallel_for(count, args.workers, [&](std::size_t i) {
                SceneSample sample = generate_scene(spec, taxonomy, i);
                char name[32];
                std::snprintf(name, sizeof(name), "_%04zu", i);
                save_sample(sample, prefix + name);
            });
        }
        std::printf("domain %s: %zu train + %zu test scenes\n", domain.c_str(), n_train,
                    n_test);
    }
    return 0;
}

int cmd_train(const TrainArgs& args) {
    ExperimentConfig config = load_experiment_config(args.config_path);
    if (args.seed) config.seed = *args.seed;
    if (args.out_path.empty()) throw ConfigError("train needs --out for the checkpoint");

    LabelTaxonomy taxonomy = LabelTaxonomy::load(config.taxonomy_path);
    EmbeddingTable embeddings;
    const bool have_embeddings = !config.embeddings_path.empty();
    if (have_embeddings) embeddings = EmbeddingTable::load(config.embeddings_path);
    const EmbeddingTable* emb = have_embeddings ? &embeddings : nullptr;

    std::vector<std::string> train_domains;
    if (config.mode == "universal")
        train_domains = config.domains;
    else if (config.mode == "panoptic")
        train_domains = {config.domains.front()};
    else
        train_domains = {config.train_domain};
    SamplePools pools = load_pools(config.data_dir, train_domains, "train");
    const std::size_t channels = pools.begin()->second.front().features.dim(2);

    GraphonomyModel model = [&]() -> GraphonomyModel {
        if (config.mode == "incremental") {
            if (args.from_path.empty())
                throw ConfigError("incremental mode needs --from <checkpoint>");
            GraphonomyModel base = load_checkpoint(args.from_path, taxonomy, emb);
            if (base.channels() != channels)
                throw ConfigError("checkpoint channels " + std::to_string(base.channels()) +
                                  " do not match data channels " + std::to_string(channels));
            if (!config.model.transfer_scheme.empty())
                base.override_transfer_scheme(config.model.transfer_scheme);
            base.extend(config.train_domain, taxonomy, emb);
            return base;
        }
        GraphonomyModel fresh = GraphonomyModel::create(config, taxonomy, emb, channels);
        if (!args.from_path.empty()) {
            // transfer protocol: adopt every matching pre-trained parameter
            GraphonomyModel donor = load_checkpoint(args.from_path, taxonomy, emb);
            std::size_t adopted = 0;
            for (Param& p : fresh.params().all()) {
                if (!donor.params().has(p.name)) continue;
                const Param& q = donor.params().at(p.name);
                if (q.shape != p.shape) continue;
                *p.value = *q.value;
                ++adopted;
            }
            std::printf("adopted %zu parameter tensors from %s\n", adopted,
                        args.from_path.c_str());
        }
        return fresh;
    }();

    TrainOutcome outcome = train_model(model, pools, config.seed);

    const fs::path out(args.out_path);
    if (out.has_parent_path()) {
        std::error_code ec;
        fs::create_directories(out.parent_path(), ec);
    }
    CheckpointMeta meta;
    meta.iteration = config.optimizer.iterations;
    Rng rng(config.seed);
    meta.rng_state = rng.state();
    save_checkpoint(model, args.out_path, meta);

    std::ofstream log(args.out_path + ".log", std::ios::trunc);
    if (!log) throw IoError("cannot write " + args.out_path + ".log");
    for (const std::string& line : outcome.log_lines) log << line << '\n';

    std::printf("trained %zu iterations; loss %.6g (first 10) -> %.6g (last 10)\n",
                config.optimizer.iterations, outcome.first_window_mean,
                outcome.last_window_mean);
    std::printf("checkpoint: %s\n", args.out_path.c_str());
    return 0;
}

int cmd_eval(const EvalArgs& args) {
    const auto manifest_path = manifest_path_for(args.from_path);
    if (!manifest_path) throw IoError("no manifest next to " + args.from_path);
    json manifest = read_json(*manifest_path);
    ExperimentConfig config =
        parse_experiment_config(manifest.at("config").dump());

    LabelTaxonomy taxonomy = LabelTaxonomy::load(config.taxonomy_path);
    EmbeddingTable embeddings;
    const bool have_embeddings = !config.embeddings_path.empty();
    if (have_embeddings) embeddings = EmbeddingTable::load(config.embeddings_path);
    GraphonomyModel model = load_checkpoint(args.from_path, taxonomy,
                                            have_embeddings ? &embeddings : nullptr);

    std::vector<std::string> domains;
    for (const DomainBranch& b : model.branches()) {
        if (!args.domain.empty() && b.name != args.domain) continue;
        domains.push_back(b.name);
    }
    if (domains.empty())
        throw ConfigError("domain \"" + args.domain + "\" is not in this checkpoint");

    json report;
    report["checkpoint"] = args.from_path;
    report["domains"] = json::object();
    for (const std::string& domain : domains) {
        SamplePools pools = load_pools(config.data_dir, {domain}, "test");
        const std::vector<SceneSample>& pool = pools.at(domain);
        const std::size_t labels = model.branch(domain).label_count;

        std::vector<ConfusionMatrix> shards(pool.size(), ConfusionMatrix(labels));
        std::vector<PqCounts> pq_all(pool.size()), pq_thing(pool.size()),
            pq_stuff(pool.size());
        parallel_for(pool.size(), args.workers, [&](std::size_t i) {
            const SceneSample& sample = pool[i];
            if (model.panoptic()) {
                PanopticPrediction pred = predict_panoptic(model, sample);
                shards[i].add_maps(sample.labels.at(domain), pred.label_map);
                std::set<int> things(model.thing_label_indices().begin(),
                                     model.thing_label_indices().end());
                PqResult pq = panoptic_quality(pred.segments,
                                               ground_truth_segments(sample, domain), things);
                pq_all[i] = pq.all;
                pq_thing[i] = pq.thing;
                pq_stuff[i] = pq.stuff;
            } else {
                shards[i].add_maps(sample.labels.at(domain),
                                   predict_labels(model, sample, domain));
            }
        });

        ConfusionMatrix cm(labels);
        for (const ConfusionMatrix& shard : shards) cm.merge(shard);
        json dj = seg_json(segmentation_metrics(cm), taxonomy.domain(domain).labels);
        dj["samples"] = pool.size();
        if (model.panoptic()) {
            PqCounts all, thing, stuff;
            for (std::size_t i = 0; i < pool.size(); ++i) {
                all.merge(pq_all[i]);
                thing.merge(pq_thing[i]);
                stuff.merge(pq_stuff[i]);
            }
            dj["panoptic"] = {{"pq", all.pq()},
                              {"pq_thing", thing.pq()},
                              {"pq_stuff", stuff.pq()},
                              {"tp", all.tp},
                              {"fp", all.fp},
                              {"fn", all.fn}};
        }
        report["domains"][domain] = dj;
    }

    const std::string text = report.dump(2);
    std::printf("%s\n", text.c_str());
    if (!args.out_path.empty()) {
        std::ofstream out(args.out_path, std::ios::trunc);
        if (!out) throw IoError("cannot write " + args.out_path);
        out << text << '\n';
    }
    return 0;
}

int cmd_gradcheck(const GradcheckArgs& args) {
    const std::uint64_t seed = args.seed.value_or(12345);
    std::vector<PathReport> reports =
        run_gradcheck_paths(args.path, args.instances, args.step, args.tol, seed);
    bool all_pass = true;
    for (const PathReport& r : reports) {
        std::printf("%-20s %3zu instances  checked %5zu  skipped %3zu  max_rel_err %.3e  %s\n",
                    r.path.c_str(), r.instances, r.report.checked, r.report.skipped,
                    r.report.max_rel_error, r.report.passed ? "PASS" : "FAIL");
        if (!r.report.passed && !r.report.worst.empty())
            std::printf("    worst: %s\n", r.report.worst.c_str());
        all_pass = all_pass && r.report.passed;
    }
    return all_pass ? 0 : 1;
}

int cmd_render(const RenderArgs& args) {
    const auto manifest_path = manifest_path_for(args.from_path);
    if (!manifest_path) throw IoError("no manifest next to " + args.from_path);
    json manifest = read_json(*manifest_path);
    ExperimentConfig config = parse_experiment_config(manifest.at("config").dump());

    LabelTaxonomy taxonomy = LabelTaxonomy::load(config.taxonomy_path);
    EmbeddingTable embeddings;
    const bool have_embeddings = !config.embeddings_path.empty();
    if (have_embeddings) embeddings = EmbeddingTable::load(config.embeddings_path);
    GraphonomyModel model = load_checkpoint(args.from_path, taxonomy,
                                            have_embeddings ? &embeddings : nullptr);

    std::vector<std::string> domains;
    for (const DomainBranch& b : model.branches())
        if (args.domain == "all" || args.domain.empty() || b.name == args.domain)
            domains.push_back(b.name);
    if (domains.empty())
        throw ConfigError("domain \"" + args.domain + "\" is not in this checkpoint");

    std::error_code ec;
    fs::create_directories(args.out_dir, ec);
    if (ec) throw IoError("cannot create " + args.out_dir + ": " + ec.message());

    std::size_t written = 0;
    for (const std::string& domain : domains) {
        SamplePools pools = load_pools(config.data_dir, {domain}, "test");
        const std::vector<SceneSample>& pool = pools.at(domain);
        const std::size_t count = std::min(args.count, pool.size());
        for (std::size_t i = 0; i < count; ++i) {
            const SceneSample& sample = pool[i];
            const std::size_t h = sample.features.dim(0), w = sample.features.dim(1);
            char stem[128];
            std::snprintf(stem, sizeof(stem), "%s/%s_%04zu", args.out_dir.c_str(),
                          domain.c_str(), i);
            write_ppm(std::string(stem) + "_features.ppm", h, w,
                      render_feature_magnitude(sample.features));
            write_ppm(std::string(stem) + "_gt.ppm", h, w,
                      render_label_map(sample.labels.at(domain)));
            write_ppm(std::string(stem) + "_pred.ppm", h, w,
                      render_label_map(predict_labels(model, sample, domain)));
            written += 3;
        }
    }
    std::printf("wrote %zu images to %s\n", written, args.out_dir.c_str());
    return 0;
}

}  // namespace graphonomy::cli
