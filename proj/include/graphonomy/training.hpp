#pragma once

#include <map>
#include <string>
#include <vector>

#include "graphonomy/model.hpp"
#include "graphonomy/rng.hpp"

namespace graphonomy {

// SGD with momentum, weight decay and a poly learning-rate schedule:
//   lr(i) = base * (1 - i/max_iter)^power
//   v <- m*v + g + wd*theta;  theta <- theta - lr*v
// Frozen parameters are never touched.
class SgdOptimizer {
public:
    explicit SgdOptimizer(OptimizerConfig config);

    double learning_rate() const;  // for the upcoming step
    std::size_t iteration() const { return iteration_; }

    // Applies one step from the given per-parameter gradients (missing or
    // frozen entries are skipped). ContractError once max iterations are done.
    void step(ParamStore& params, const std::map<std::string, std::vector<double>>& grads);

private:
    OptimizerConfig config_;
    std::size_t iteration_ = 0;
    std::map<std::string, std::vector<double>> velocity_;
};

// Emits batches drawn entirely from one domain each; domains alternate by a
// smooth weighted round-robin on pool sizes, so counts stay proportional.
// Scene order within a domain is a seeded permutation, reshuffled per epoch.
class UniversalSampler {
public:
    struct Batch {
        std::string domain;
        std::vector<std::size_t> indices;
    };

    UniversalSampler(std::vector<std::pair<std::string, std::size_t>> pools,
                     std::size_t batch_size, std::uint64_t seed);
    Batch next();

private:
    struct Pool {
        std::string domain;
        long long weight;
        long long current = 0;
        std::vector<std::size_t> order;
        std::size_t cursor = 0;
        Rng rng{0};
    };
    std::vector<Pool> pools_;
    long long total_weight_ = 0;
    std::size_t batch_size_;
};

using SamplePools = std::map<std::string, std::vector<SceneSample>>;

struct TrainOutcome {
    std::vector<std::string> log_lines;  // "<iter> <domain> <loss> <lr>"
    double first_window_mean = 0.0;      // mean loss over the first 10 steps
    double last_window_mean = 0.0;       // mean loss over the last 10 steps
};

// Runs config.optimizer.iterations steps of the configured mode over the
// given pools (single/transfer/incremental train on config.train_domain,
// universal alternates across all domains, panoptic trains the scene domain).
TrainOutcome train_model(GraphonomyModel& model, const SamplePools& pools,
                         std::uint64_t seed);

// One training step on an explicit batch; returns the loss. Exposed for
// tests and the training loop alike.
double train_step(GraphonomyModel& model, SgdOptimizer& optimizer,
                  const std::vector<const SceneSample*>& batch,
                  const std::string& active_domain);

// Loads "<split>_NNNN" samples for every domain subdirectory in `data_dir`.
SamplePools load_pools(const std::string& data_dir, const std::vector<std::string>& domains,
                       const std::string& split);

}  // namespace graphonomy
