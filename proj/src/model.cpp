#include "graphonomy/model.hpp"

#include <algorithm>
#include <cmath>

#include "graphonomy/rng.hpp"

namespace graphonomy {

namespace {

std::uint64_t name_hash(const std::string& s) { return fnv1a(s); }

std::vector<double> fan_in_uniform(const Shape& shape, std::size_t fan_in,
                                   std::uint64_t seed) {
    Rng rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::vector<double> v(shape_size(shape));
    for (double& x : v) x = rng.uniform(-bound, bound);
    return v;
}

Activation transfer_activation(const ModelConfig& mc) {
    return mc.transfer_activation == "leaky" ? Activation::LeakyRelu : Activation::Relu;
}

std::string dir_name(const std::string& source, const std::string& target) {
    return "tr." + source + ">" + target;
}

std::string att_name(const ModelConfig& mc, const std::string& source,
                     const std::string& target) {
    if (!mc.attention_shared) return dir_name(source, target) + ".Watt";
    const std::string a = std::min(source, target), b = std::max(source, target);
    return "tr." + a + "|" + b + ".Watt";
}

}  // namespace

// --- ParamStore ---------------------------------------------------------------

void ParamStore::add(const std::string& name, Shape shape, std::vector<double> init) {
    if (index_.count(name)) throw ContractError("parameter \"" + name + "\" already exists");
    if (shape_size(shape) != init.size())
        throw ShapeError("init for \"" + name + "\" does not match " + shape_str(shape));
    index_[name] = params_.size();
    params_.push_back(Param{name, std::move(shape),
                            std::make_shared<std::vector<double>>(std::move(init)), false});
}

bool ParamStore::has(const std::string& name) const { return index_.count(name) != 0; }

Param& ParamStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter \"" + name + "\"");
    return params_[it->second];
}

const Param& ParamStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ContractError("unknown parameter \"" + name + "\"");
    return params_[it->second];
}

std::size_t ParamStore::total_values() const {
    std::size_t n = 0;
    for (const Param& p : params_) n += p.value->size();
    return n;
}

void ParamStore::freeze_all() {
    for (Param& p : params_) p.frozen = true;
}

// --- GraphonomyModel ------------------------------------------------------------

void GraphonomyModel::add_branch(const std::string& domain, const LabelTaxonomy& taxonomy,
                                 const EmbeddingTable* embeddings, std::uint64_t seed_salt,
                                 bool with_head) {
    (void)embeddings;
    const std::size_t n = taxonomy.label_count(domain);
    const std::size_t c = channels_, d = config_.model.node_dim;

    DomainBranch b;
    b.name = domain;
    b.label_count = n;
    b.adjacency = config_.model.intra_use_adjacency
                      ? normalize_adjacency(taxonomy.intra_adjacency(domain))
                      : Tensor::identity(n);
    branches_.push_back(b);

    auto init = [&](const std::string& name, Shape shape, std::size_t fan_in) {
        params_.add(name, shape,
                    fan_in_uniform(shape, fan_in,
                                   mix_seed(config_.seed ^ seed_salt, name_hash(name))));
    };
    init(domain + ".P", {c, n}, c);
    init(domain + ".W1", {c, d}, c);
    init(domain + ".Wre", {d, c}, d);
    for (std::size_t t = 0; t < config_.model.gcn_layers; ++t)
        init(domain + ".gcn." + std::to_string(t), {d, d}, d);
    if (with_head) {
        init(domain + ".head.W", {c, n}, c);
        params_.add(domain + ".head.b", {n}, std::vector<double>(n, 0.0));
    }
}

void GraphonomyModel::add_pair(const std::string& source, const std::string& target,
                               const LabelTaxonomy& taxonomy, const EmbeddingTable* embeddings,
                               std::uint64_t seed_salt) {
    const std::vector<TransferScheme> schemes =
        parse_transfer_schemes(config_.model.transfer_scheme);
    const std::size_t d = config_.model.node_dim;
    const std::string base = dir_name(source, target);

    auto init = [&](const std::string& name, Shape shape, std::size_t fan_in) {
        params_.add(name, shape,
                    fan_in_uniform(shape, fan_in,
                                   mix_seed(config_.seed ^ seed_salt, name_hash(name))));
    };
    init(base + ".Wtr", {d, d}, d);

    PairConstants constants;
    for (TransferScheme s : schemes) {
        switch (s) {
            case TransferScheme::Handcraft:
                constants.handcraft = taxonomy.handcraft_transfer(source, target);
                break;
            case TransferScheme::SemanticSimilarity: {
                if (!embeddings)
                    throw ConfigError("semantic transfer scheme needs an embedding table");
                constants.semantic = semantic_transfer(*embeddings,
                                                       taxonomy.domain(target).labels,
                                                       taxonomy.domain(source).labels);
                break;
            }
            case TransferScheme::Learnable: {
                const std::size_t nt = taxonomy.label_count(target);
                const std::size_t ns = taxonomy.label_count(source);
                const std::string name = base + ".Atr";
                Tensor a = init_learnable_transfer(
                    nt, ns, mix_seed(config_.seed ^ seed_salt, name_hash(name)));
                params_.add(name, a.shape(), a.data());
                break;
            }
            case TransferScheme::Attention: {
                const std::string name = att_name(config_.model, source, target);
                if (!params_.has(name)) init(name, {2 * d, 1}, 2 * d);
                break;
            }
            case TransferScheme::FeatureSimilarity:
                break;  // recomputed from node features every pass
        }
    }
    pair_constants_[{source, target}] = std::move(constants);
}

void GraphonomyModel::create_panoptic(const LabelTaxonomy& taxonomy) {
    const std::string& scene = config_.domains.front();
    const Domain& dom = taxonomy.domain(scene);
    const std::size_t c = channels_, d = config_.model.node_dim;
    const std::size_t l = dom.labels.size();

    for (const std::string& thing : config_.thing_labels) {
        const int idx = taxonomy.label_index(scene, thing);
        if (idx < 0)
            throw ConfigError("thing label \"" + thing + "\" is not in domain \"" + scene +
                              "\"");
        thing_indices_.push_back(idx);
    }
    const std::size_t nt = thing_indices_.size();

    for (TransferScheme s : parse_transfer_schemes(config_.model.transfer_scheme))
        if (s != TransferScheme::Attention && s != TransferScheme::FeatureSimilarity)
            throw ConfigError("panoptic transfer supports attention/feature schemes, not " +
                              transfer_scheme_name(s));

    add_branch(scene, taxonomy, nullptr, 0, /*with_head=*/false);
    auto init = [&](const std::string& name, Shape shape, std::size_t fan_in) {
        params_.add(name, shape,
                    fan_in_uniform(shape, fan_in, mix_seed(config_.seed, name_hash(name))));
    };
    init("ins.Wpool", {c, d}, c);
    for (std::size_t t = 0; t < config_.model.gcn_layers; ++t)
        init("ins.gcn." + std::to_string(t), {d, d}, d);
    init("ins.Watt", {2 * d, 1}, 2 * d);
    init(dir_name("ins", scene) + ".Wtr", {d, d}, d);
    init(dir_name(scene, "ins") + ".Wtr", {d, d}, d);
    init(att_name(config_.model, "ins", scene), {2 * d, 1}, 2 * d);
    if (!params_.has(att_name(config_.model, scene, "ins")))
        init(att_name(config_.model, scene, "ins"), {2 * d, 1}, 2 * d);
    init("head.pixel.W", {c + d, l}, c + d);
    params_.add("head.pixel.b", {l}, std::vector<double>(l, 0.0));
    init("head.instance.W", {d, nt}, d);
    params_.add("head.instance.b", {nt}, std::vector<double>(nt, 0.0));
}

GraphonomyModel GraphonomyModel::create(const ExperimentConfig& config,
                                        const LabelTaxonomy& taxonomy,
                                        const EmbeddingTable* embeddings,
                                        std::size_t channels) {
    validate_config(config);
    GraphonomyModel m;
    m.config_ = config;
    m.channels_ = channels;

    if (config.mode == "panoptic") {
        if (config.model.transfer_scheme.empty())
            throw ConfigError("panoptic mode needs a transfer scheme");
        m.create_panoptic(taxonomy);
        return m;
    }

    for (const std::string& d : config.domains) m.add_branch(d, taxonomy, embeddings, 0);
    if (!config.model.transfer_scheme.empty())
        for (const std::string& t : config.domains)
            for (const std::string& s : config.domains)
                if (s != t) m.add_pair(s, t, taxonomy, embeddings, 0);
    return m;
}

void GraphonomyModel::extend(const std::string& new_domain, const LabelTaxonomy& taxonomy,
                             const EmbeddingTable* embeddings) {
    if (panoptic()) throw ConfigError("panoptic models cannot be extended");
    if (has_branch(new_domain))
        throw ConfigError("domain \"" + new_domain + "\" is already part of the model");
    if (taxonomy.label_count(new_domain) == 0)
        throw ConfigError("domain \"" + new_domain + "\" has no labels");

    params_.freeze_all();
    const std::uint64_t salt = name_hash("extend." + new_domain);
    std::vector<std::string> existing;
    for (const DomainBranch& b : branches_) existing.push_back(b.name);

    add_branch(new_domain, taxonomy, embeddings, salt);
    if (!config_.model.transfer_scheme.empty()) {
        for (const std::string& other : existing) {
            add_pair(other, new_domain, taxonomy, embeddings, salt);
            add_pair(new_domain, other, taxonomy, embeddings, salt);
        }
    }
    extensions_.push_back(new_domain);
}

void GraphonomyModel::override_transfer_scheme(const std::string& scheme) {
    if (scheme == config_.model.transfer_scheme) return;
    if (!pair_constants_.empty() || branches_.size() > 1)
        throw ConfigError(
            "cannot change the transfer scheme of a model that already has "
            "transfer connections");
    parse_transfer_schemes(scheme);  // validate
    config_.model.transfer_scheme = scheme;
}

bool GraphonomyModel::has_branch(const std::string& domain) const {
    for (const DomainBranch& b : branches_)
        if (b.name == domain) return true;
    return false;
}

const DomainBranch& GraphonomyModel::branch(const std::string& domain) const {
    for (const DomainBranch& b : branches_)
        if (b.name == domain) return b;
    throw ConfigError("domain \"" + domain + "\" is not part of the model");
}

const PairConstants& GraphonomyModel::pair_constants(const std::string& source,
                                                     const std::string& target) const {
    auto it = pair_constants_.find({source, target});
    if (it == pair_constants_.end())
        throw ContractError("no transfer pair " + source + " -> " + target);
    return it->second;
}

std::vector<std::pair<std::string, std::size_t>> GraphonomyModel::domain_sizes() const {
    std::vector<std::pair<std::string, std::size_t>> out;
    for (const DomainBranch& b : branches_) out.emplace_back(b.name, b.label_count);
    return out;
}

// --- binding and forward -------------------------------------------------------

const Tensor& ModelView::operator[](const std::string& name) const {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw ContractError("parameter \"" + name + "\" is not bound");
    return it->second;
}

ModelView bind(const GraphonomyModel& model, Tape* tape) {
    ModelView view;
    view.model = &model;
    view.tape = tape;
    for (const Param& p : model.params().all()) {
        std::shared_ptr<const std::vector<double>> data = p.value;
        view.tensors[p.name] = tape ? tape->leaf_shared(p.shape, data, !p.frozen)
                                    : Tensor::shared(p.shape, data);
    }
    return view;
}

namespace {

TransferSpec make_transfer_spec(const ModelView& view, const std::string& source,
                                const std::string& target) {
    const GraphonomyModel& m = *view.model;
    const ModelConfig& mc = m.config().model;
    TransferSpec spec;
    spec.schemes = parse_transfer_schemes(mc.transfer_scheme);
    spec.activation = transfer_activation(mc);
    spec.leaky_slope = mc.leaky_slope;
    spec.w_tr = view[dir_name(source, target) + ".Wtr"];
    for (TransferScheme s : spec.schemes) {
        switch (s) {
            case TransferScheme::Handcraft:
                spec.handcraft = m.pair_constants(source, target).handcraft;
                break;
            case TransferScheme::SemanticSimilarity:
                spec.semantic = m.pair_constants(source, target).semantic;
                break;
            case TransferScheme::Learnable:
                spec.learnable = view[dir_name(source, target) + ".Atr"];
                break;
            case TransferScheme::Attention:
                spec.attention = {view[att_name(mc, source, target)], mc.leaky_slope};
                break;
            case TransferScheme::FeatureSimilarity:
                break;
        }
    }
    return spec;
}

std::vector<std::size_t> target_indices(const SceneSample& sample, const std::string& domain,
                                        std::size_t label_count) {
    auto it = sample.labels.find(domain);
    if (it == sample.labels.end())
        throw InputError("sample carries no labels for domain \"" + domain + "\"");
    std::vector<std::size_t> targets(it->second.size());
    for (std::size_t i = 0; i < targets.size(); ++i) {
        const int l = it->second[i];
        if (l < 0 || static_cast<std::size_t>(l) >= label_count)
            throw InputError("label " + std::to_string(l) + " out of range for domain \"" +
                             domain + "\"");
        targets[i] = static_cast<std::size_t>(l);
    }
    return targets;
}

BidirectionalMode bidirectional_mode(const ModelConfig& mc) {
    return mc.bidirectional == "sequential" ? BidirectionalMode::Sequential
                                            : BidirectionalMode::Synchronous;
}

}  // namespace

ForwardResult parsing_forward(const ModelView& view, const SceneSample& sample,
                              const std::string& active_domain, bool with_loss) {
    const GraphonomyModel& m = *view.model;
    const ModelConfig& mc = m.config().model;
    const DomainBranch& active = m.branch(active_domain);
    const Tensor& x = sample.features;
    if (x.rank() != 3 || x.dim(2) != m.channels())
        throw ShapeError("sample features " + shape_str(x.shape()) +
                         " do not match model channels " + std::to_string(m.channels()));
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);

    Tensor enhanced = x;
    if (mc.intra_enabled) {
        const bool transfer_on = !mc.transfer_scheme.empty() && m.branches().size() > 1;
        std::vector<const DomainBranch*> involved;
        for (const DomainBranch& b : m.branches())
            if (b.name == active_domain || transfer_on) involved.push_back(&b);

        std::map<std::string, SemanticGraph> graphs;
        for (const DomainBranch* b : involved) {
            ProjectionParams pp{view[b->name + ".P"], view[b->name + ".W1"],
                                view[b->name + ".Wre"]};
            graphs[b->name] = project(x, pp, b->name);
        }

        for (std::size_t t = 0; t < m.layers(); ++t) {
            // Intra-graph reasoning: one graph-convolution layer per round.
            for (const DomainBranch* b : involved) {
                GcnStack layer{{view[b->name + ".gcn." + std::to_string(t)]},
                               Activation::Relu, mc.leaky_slope};
                graphs[b->name].z = intra_reason(graphs[b->name].z, b->adjacency, layer);
            }
            // Inter-graph transfer between the active branch and each partner.
            if (transfer_on) {
                for (const DomainBranch* b : involved) {
                    if (b->name == active_domain) continue;
                    auto [za, zb] = bidirectional_step(
                        graphs[active_domain].z, graphs[b->name].z,
                        make_transfer_spec(view, b->name, active_domain),
                        make_transfer_spec(view, active_domain, b->name),
                        bidirectional_mode(mc));
                    graphs[active_domain].z = za;
                    graphs[b->name].z = zb;
                }
            }
        }

        ProjectionParams pp{view[active_domain + ".P"], view[active_domain + ".W1"],
                            view[active_domain + ".Wre"]};
        enhanced = reproject(graphs[active_domain], x, pp);
    }

    Tensor flat = reshape(enhanced, {h * w, c});
    ForwardResult result;
    result.logits = add_bias(matmul(flat, view[active_domain + ".head.W"]),
                             view[active_domain + ".head.b"]);
    if (with_loss)
        result.loss = cross_entropy(result.logits,
                                    target_indices(sample, active_domain, active.label_count));
    return result;
}

ForwardResult panoptic_forward(const ModelView& view, const SceneSample& sample,
                               bool with_loss) {
    const GraphonomyModel& m = *view.model;
    const ModelConfig& mc = m.config().model;
    const std::string& scene = m.branches().front().name;
    const DomainBranch& stuff = m.branches().front();
    const Tensor& x = sample.features;
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    const std::size_t d = m.node_dim();

    std::vector<Box> boxes;
    for (const RegionInfo& r : sample.regions) boxes.push_back(r.box);
    const std::size_t k = boxes.size();

    ProjectionParams pp{view[scene + ".P"], view[scene + ".W1"], view[scene + ".Wre"]};
    SemanticGraph gs = project(x, pp, scene);
    InstanceGraph gi = instance_project(x, boxes, view["ins.Wpool"]);

    if (mc.intra_enabled) {
        for (std::size_t t = 0; t < m.layers(); ++t) {
            GcnStack stuff_layer{{view[scene + ".gcn." + std::to_string(t)]},
                                 Activation::Relu, mc.leaky_slope};
            gs.z = intra_reason(gs.z, stuff.adjacency, stuff_layer);
            if (k > 0) {
                // instance adjacency is attention-derived and recomputed per round
                Tensor adj = attention_adjacency(gi.z, {view["ins.Watt"], mc.leaky_slope});
                GcnStack ins_layer{{view["ins.gcn." + std::to_string(t)]},
                                   Activation::Relu, mc.leaky_slope};
                gi.z = intra_reason(gi.z, adj, ins_layer);

                auto [zs, zi] = bidirectional_step(
                    gs.z, gi.z, make_transfer_spec(view, "ins", scene),
                    make_transfer_spec(view, scene, "ins"), bidirectional_mode(mc));
                gs.z = zs;
                gi.z = zi;
            }
        }
    }

    Tensor enhanced = reproject(gs, x, pp);                 // {H,W,C}
    Tensor full = instance_reproject(gi, enhanced);        // {H,W,C+D}
    Tensor flat = reshape(full, {h * w, c + d});

    ForwardResult result;
    result.logits = add_bias(matmul(flat, view["head.pixel.W"]), view["head.pixel.b"]);
    if (k > 0)
        result.instance_logits =
            add_bias(matmul(gi.z, view["head.instance.W"]), view["head.instance.b"]);

    if (with_loss) {
        Tensor loss = cross_entropy(result.logits,
                                    target_indices(sample, scene, stuff.label_count));
        if (k > 0) {
            std::vector<std::size_t> targets;
            for (const RegionInfo& r : sample.regions) {
                const auto& things = m.thing_label_indices();
                const auto it = std::find(things.begin(), things.end(), r.cls);
                if (it == things.end())
                    throw InputError("region class " + std::to_string(r.cls) +
                                     " is not a thing label");
                targets.push_back(static_cast<std::size_t>(it - things.begin()));
            }
            loss = add(loss, cross_entropy(result.instance_logits, targets));
        }
        result.loss = loss;
    }
    return result;
}

Tensor batch_loss(const ModelView& view, const std::vector<const SceneSample*>& batch,
                  const std::string& active_domain) {
    if (batch.empty()) throw InputError("empty batch");
    Tensor total;
    for (const SceneSample* s : batch) {
        Tensor loss = view.model->panoptic()
                          ? panoptic_forward(view, *s, true).loss
                          : parsing_forward(view, *s, active_domain, true).loss;
        total = total.defined() ? add(total, loss) : loss;
    }
    return scale(total, 1.0 / static_cast<double>(batch.size()));
}

std::vector<int> argmax_rows(const Tensor& logits) {
    const std::size_t r = logits.dim(0), c = logits.dim(1);
    std::vector<int> out(r, 0);
    for (std::size_t i = 0; i < r; ++i) {
        double best = logits.at(i, 0);
        for (std::size_t j = 1; j < c; ++j)
            if (logits.at(i, j) > best) {
                best = logits.at(i, j);
                out[i] = static_cast<int>(j);
            }
    }
    return out;
}

std::vector<int> predict_labels(const GraphonomyModel& model, const SceneSample& sample,
                                const std::string& domain) {
    ModelView view = bind(model, nullptr);
    ForwardResult r = model.panoptic() ? panoptic_forward(view, sample, false)
                                       : parsing_forward(view, sample, domain, false);
    return argmax_rows(r.logits);
}

PanopticPrediction predict_panoptic(const GraphonomyModel& model, const SceneSample& sample) {
    ModelView view = bind(model, nullptr);
    ForwardResult r = panoptic_forward(view, sample, false);
    const std::size_t h = sample.features.dim(0), w = sample.features.dim(1);

    PanopticPrediction pred;
    pred.label_map = argmax_rows(r.logits);

    std::vector<Box> boxes;
    for (const RegionInfo& reg : sample.regions) boxes.push_back(reg.box);
    const std::vector<int> owner = region_owners(h, w, boxes);

    // thing segments: one per region that owns at least one pixel
    std::vector<int> instance_classes;
    if (!boxes.empty())
        for (std::size_t i = 0; i < boxes.size(); ++i) {
            int best = 0;
            for (std::size_t j = 1; j < r.instance_logits.dim(1); ++j)
                if (r.instance_logits.at(i, j) > r.instance_logits.at(i, best))
                    best = static_cast<int>(j);
            instance_classes.push_back(model.thing_label_indices()[best]);
        }
    for (std::size_t i = 0; i < boxes.size(); ++i) {
        Segment seg;
        seg.mask.assign(h * w, 0);
        bool any = false;
        for (std::size_t p = 0; p < h * w; ++p)
            if (owner[p] == static_cast<int>(i)) {
                seg.mask[p] = 1;
                any = true;
            }
        if (!any) continue;
        seg.cls = instance_classes[i];
        seg.identity = sample.regions[i].identity;
        pred.segments.push_back(std::move(seg));
    }

    // stuff segments: uncovered pixels grouped by predicted class
    std::map<int, Segment> stuff;
    for (std::size_t p = 0; p < h * w; ++p) {
        if (owner[p] >= 0) continue;
        Segment& seg = stuff[pred.label_map[p]];
        if (seg.mask.empty()) {
            seg.mask.assign(h * w, 0);
            seg.cls = pred.label_map[p];
            seg.identity = -1;
        }
        seg.mask[p] = 1;
    }
    for (auto& [cls, seg] : stuff) pred.segments.push_back(std::move(seg));
    return pred;
}

std::vector<Segment> ground_truth_segments(const SceneSample& sample,
                                           const std::string& domain) {
    const std::vector<int>& labels = sample.labels.at(domain);
    const std::size_t n = labels.size();
    std::vector<Segment> segments;

    for (const RegionInfo& r : sample.regions) {
        Segment seg;
        seg.mask.assign(n, 0);
        bool any = false;
        for (std::size_t p = 0; p < n; ++p)
            if (!sample.identity_map.empty() && sample.identity_map[p] == r.identity) {
                seg.mask[p] = 1;
                any = true;
            }
        if (!any) continue;
        seg.cls = r.cls;
        seg.identity = r.identity;
        segments.push_back(std::move(seg));
    }

    std::map<int, Segment> stuff;
    for (std::size_t p = 0; p < n; ++p) {
        if (!sample.identity_map.empty() && sample.identity_map[p] >= 0) continue;
        Segment& seg = stuff[labels[p]];
        if (seg.mask.empty()) {
            seg.mask.assign(n, 0);
            seg.cls = labels[p];
            seg.identity = -1;
        }
        seg.mask[p] = 1;
    }
    for (auto& [cls, seg] : stuff) segments.push_back(std::move(seg));
    return segments;
}

}  // namespace graphonomy
