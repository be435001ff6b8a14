#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace graphonomy::cli {

struct GenArgs {
    std::string spec_path;
    std::string out_dir;
    std::optional<std::uint64_t> seed;
    std::size_t workers = 1;
};

struct TrainArgs {
    std::string config_path;
    std::string out_path;  // checkpoint; log goes to <out>.log
    std::string from_path;
    std::optional<std::uint64_t> seed;
};

struct EvalArgs {
    std::string from_path;
    std::string domain;  // empty = every domain in the checkpoint
    std::string out_path;
    std::size_t workers = 1;
};

struct GradcheckArgs {
    double tol = 1e-4;
    double step = 1e-5;
    std::string path;  // substring filter
    std::size_t instances = 20;
    std::optional<std::uint64_t> seed;
};

struct RenderArgs {
    std::string from_path;
    std::string out_dir;
    std::string domain = "all";
    std::size_t count = 4;
};

int cmd_gen(const GenArgs& args);
int cmd_train(const TrainArgs& args);
int cmd_eval(const EvalArgs& args);
int cmd_gradcheck(const GradcheckArgs& args);
int cmd_render(const RenderArgs& args);

}  // namespace graphonomy::cli
