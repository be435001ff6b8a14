#include <cstdio>
#include <cstdlib>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "commands.hpp"
#include "graphonomy/errors.hpp"

namespace {

using namespace graphonomy;
using namespace graphonomy::cli;

// flag wins over the environment; neither leaves the config's seed in place
std::optional<std::uint64_t> resolve_seed(const std::optional<std::uint64_t>& flag) {
    if (flag) return flag;
    if (const char* env = std::getenv("GRAPHONOMY_SEED")) {
        try {
            return std::stoull(env);
        } catch (...) {
            throw ConfigError("GRAPHONOMY_SEED is not a number: " + std::string(env));
        }
    }
    return std::nullopt;
}

template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const IntegrityError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const GenerationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const TaxonomyError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"graph reasoning and transfer for multi-granularity image parsing"};
    app.require_subcommand(1);

    GenArgs gen;
    TrainArgs train;
    EvalArgs eval;
    GradcheckArgs gradcheck;
    RenderArgs render;
    std::optional<std::uint64_t> seed_flag;

    CLI::App* c_gen = app.add_subcommand("gen", "generate a synthetic dataset");
    c_gen->add_option("--spec", gen.spec_path, "dataset spec (JSON)")->required();
    c_gen->add_option("--out", gen.out_dir, "output directory")->required();
    c_gen->add_option("--seed", seed_flag, "override the spec seed");
    c_gen->add_option("--workers", gen.workers, "parallel scene generation");

    CLI::App* c_train = app.add_subcommand("train", "train a model");
    c_train->add_option("--config", train.config_path, "experiment config (JSON)")->required();
    c_train->add_option("--out", train.out_path, "checkpoint path to write")->required();
    c_train->add_option("--from", train.from_path, "checkpoint to start from");
    c_train->add_option("--seed", seed_flag, "override the config seed");

    CLI::App* c_eval = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
    c_eval->add_option("--from", eval.from_path, "checkpoint to evaluate")->required();
    c_eval->add_option("--domain", eval.domain, "restrict the report to one domain");
    c_eval->add_option("--out", eval.out_path, "also write the metrics JSON here");
    c_eval->add_option("--workers", eval.workers, "parallel batched evaluation");

    CLI::App* c_gc = app.add_subcommand("gradcheck",
                                        "finite-difference check of every module path");
    c_gc->add_option("--tol", gradcheck.tol, "relative error tolerance");
    c_gc->add_option("--path", gradcheck.path, "only paths containing this substring");
    c_gc->add_option("--seed", seed_flag, "instance seed");
    c_gc->add_option("--instances", gradcheck.instances, "instances per path");

    CLI::App* c_render = app.add_subcommand("render", "write qualitative PPM images");
    c_render->add_option("--from", render.from_path, "checkpoint to render")->required();
    c_render->add_option("--out", render.out_dir, "output directory")->required();
    c_render->add_option("--domain", render.domain, "domain name or 'all'");
    c_render->add_option("--count", render.count, "samples per domain");

    CLI11_PARSE(app, argc, argv);

    return guarded([&]() -> int {
        const std::optional<std::uint64_t> seed = resolve_seed(seed_flag);
        if (c_gen->parsed()) {
            gen.seed = seed;
            return cmd_gen(gen);
        }
        if (c_train->parsed()) {
            train.seed = seed;
            return cmd_train(train);
        }
        if (c_eval->parsed()) return cmd_eval(eval);
        if (c_gc->parsed()) {
            gradcheck.seed = seed;
            return cmd_gradcheck(gradcheck);
        }
        if (c_render->parsed()) return cmd_render(render);
        return 2;
    });
}
