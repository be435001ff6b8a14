#include "graphonomy/training.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>

namespace graphonomy {

SgdOptimizer::SgdOptimizer(OptimizerConfig config) : config_(config) {}

double SgdOptimizer::learning_rate() const {
    const double progress =
        static_cast<double>(iteration_) / static_cast<double>(config_.iterations);
    return config_.base_lr * std::pow(1.0 - progress, config_.lr_power);
}

void SgdOptimizer::step(ParamStore& params,
                        const std::map<std::string, std::vector<double>>& grads) {
    if (iteration_ >= config_.iterations)
        throw ContractError("optimizer ran past its " + std::to_string(config_.iterations) +
                            " configured iterations");
    const double lr = learning_rate();
    for (Param& p : params.all()) {
        if (p.frozen) continue;
        auto it = grads.find(p.name);
        if (it == grads.end()) continue;
        const std::vector<double>& g = it->second;
        if (g.size() != p.value->size())
            throw ShapeError("gradient for \"" + p.name + "\" has wrong size");
        std::vector<double>& v = velocity_[p.name];
        if (v.empty()) v.assign(g.size(), 0.0);
        std::vector<double>& theta = *p.value;
        for (std::size_t i = 0; i < g.size(); ++i) {
            v[i] = config_.momentum * v[i] + g[i] + config_.weight_decay * theta[i];
            theta[i] -= lr * v[i];
        }
    }
    ++iteration_;
}

UniversalSampler::UniversalSampler(std::vector<std::pair<std::string, std::size_t>> pools,
                                   std::size_t batch_size, std::uint64_t seed)
    : batch_size_(batch_size) {
    for (const auto& [domain, size] : pools) {
        if (size == 0) continue;
        Pool p;
        p.domain = domain;
        p.weight = static_cast<long long>(size);
        p.order.resize(size);
        for (std::size_t i = 0; i < size; ++i) p.order[i] = i;
        p.rng = Rng(mix_seed(seed, fnv1a(domain)));
        pools_.push_back(std::move(p));
        total_weight_ += static_cast<long long>(size);
    }
    if (pools_.empty()) throw InputError("all sample pools are empty");
}

UniversalSampler::Batch UniversalSampler::next() {
    // smooth weighted round-robin: deterministic, proportional to pool sizes
    Pool* pick = nullptr;
    for (Pool& p : pools_) {
        p.current += p.weight;
        if (!pick || p.current > pick->current) pick = &p;
    }
    pick->current -= total_weight_;

    Batch batch;
    batch.domain = pick->domain;
    for (std::size_t i = 0; i < batch_size_; ++i) {
        if (pick->cursor == 0) {
            // reshuffle per epoch (Fisher-Yates on the seeded stream)
            for (std::size_t j = pick->order.size(); j > 1; --j)
                std::swap(pick->order[j - 1], pick->order[pick->rng.below(j)]);
        }
        batch.indices.push_back(pick->order[pick->cursor]);
        pick->cursor = (pick->cursor + 1) % pick->order.size();
    }
    return batch;
}

double train_step(GraphonomyModel& model, SgdOptimizer& optimizer,
                  const std::vector<const SceneSample*>& batch,
                  const std::string& active_domain) {
    Tape tape;
    ModelView view = bind(model, &tape);
    Tensor loss = batch_loss(view, batch, active_domain);
    tape.backward(loss);

    std::map<std::string, std::vector<double>> grads;
    for (const Param& p : model.params().all()) {
        if (p.frozen) continue;
        grads[p.name] = tape.grad(view[p.name]).data();
    }
    optimizer.step(model.params(), grads);
    return loss.item();
}

TrainOutcome train_model(GraphonomyModel& model, const SamplePools& pools,
                         std::uint64_t seed) {
    const ExperimentConfig& config = model.config();
    const OptimizerConfig& oc = config.optimizer;

    // pools the sampler draws from, in model branch order
    std::vector<std::pair<std::string, std::size_t>> sizes;
    if (config.mode == "universal") {
        for (const DomainBranch& b : model.branches()) {
            auto it = pools.find(b.name);
            if (it != pools.end() && !it->second.empty())
                sizes.emplace_back(b.name, it->second.size());
        }
    } else {
        const std::string d = config.train_domain.empty() ? model.branches().front().name
                                                          : config.train_domain;
        auto it = pools.find(d);
        if (it == pools.end() || it->second.empty())
            throw InputError("no training samples for domain \"" + d + "\"");
        sizes.emplace_back(d, it->second.size());
    }

    UniversalSampler sampler(sizes, oc.batch_size, seed);
    SgdOptimizer optimizer(oc);
    TrainOutcome outcome;
    std::vector<double> losses;

    for (std::size_t iter = 0; iter < oc.iterations; ++iter) {
        UniversalSampler::Batch b = sampler.next();
        std::vector<const SceneSample*> batch;
        for (std::size_t idx : b.indices) batch.push_back(&pools.at(b.domain)[idx]);

        const double lr = optimizer.learning_rate();
        const double loss = train_step(model, optimizer, batch, b.domain);
        losses.push_back(loss);

        char line[160];
        std::snprintf(line, sizeof(line), "%zu %s %.12g %.12g", iter, b.domain.c_str(), loss,
                      lr);
        outcome.log_lines.emplace_back(line);
    }

    const std::size_t window = std::min<std::size_t>(10, losses.size());
    for (std::size_t i = 0; i < window; ++i) {
        outcome.first_window_mean += losses[i] / static_cast<double>(window);
        outcome.last_window_mean += losses[losses.size() - 1 - i] / static_cast<double>(window);
    }
    return outcome;
}

SamplePools load_pools(const std::string& data_dir, const std::vector<std::string>& domains,
                       const std::string& split) {
    SamplePools pools;
    for (const std::string& domain : domains) {
        const std::filesystem::path dir = std::filesystem::path(data_dir) / domain;
        std::vector<SceneSample>& pool = pools[domain];
        for (std::size_t i = 0;; ++i) {
            char name[64];
            std::snprintf(name, sizeof(name), "%s_%04zu", split.c_str(), i);
            const std::filesystem::path base = dir / name;
            if (!std::filesystem::exists(base.string() + ".meta.json")) break;
            pool.push_back(load_sample(base.string()));
        }
        if (pool.empty())
            throw InputError("no \"" + split + "\" samples for domain \"" + domain +
                             "\" under " + data_dir);
    }
    return pools;
}

}  // namespace graphonomy
