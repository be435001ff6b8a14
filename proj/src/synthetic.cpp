#include "graphonomy/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>

#include "graphonomy/rng.hpp"
#include "json.hpp"

namespace graphonomy {

using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

int background_index(const Domain& d) {
    for (std::size_t i = 0; i < d.labels.size(); ++i)
        if (d.labels[i] == "background") return static_cast<int>(i);
    return -1;
}

// BFS distances over the domain's adjacency graph.
std::vector<int> graph_distances(const Tensor& adj, std::size_t from) {
    const std::size_t n = adj.dim(0);
    std::vector<int> dist(n, -1);
    std::deque<std::size_t> queue{from};
    dist[from] = 0;
    while (!queue.empty()) {
        const std::size_t v = queue.front();
        queue.pop_front();
        for (std::size_t u = 0; u < n; ++u)
            if (adj.at(v, u) != 0.0 && dist[u] < 0) {
                dist[u] = dist[v] + 1;
                queue.push_back(u);
            }
    }
    return dist;
}

struct Blob {
    double cy, cx, ry, rx;
    int label;
};

bool inside(const Blob& b, std::size_t y, std::size_t x) {
    const double dy = (static_cast<double>(y) - b.cy) / b.ry;
    const double dx = (static_cast<double>(x) - b.cx) / b.rx;
    return dy * dy + dx * dx <= 1.0;
}

}  // namespace

std::string finest_domain(const LabelTaxonomy& taxonomy) {
    const Domain* best = nullptr;
    for (const Domain& d : taxonomy.domains())
        if (!best || d.labels.size() > best->labels.size()) best = &d;
    return best->name;
}

PrototypeTable PrototypeTable::build(const LabelTaxonomy& taxonomy, const std::string& domain,
                                     std::size_t channels, std::uint64_t seed) {
    const Domain& dom = taxonomy.domain(domain);
    const std::size_t n = dom.labels.size();
    const int bg = background_index(dom);
    Rng rng(mix_seed(seed, 0x70726f746fULL));

    PrototypeTable t;
    t.protos_.assign(n, std::vector<double>(channels, 0.0));
    for (std::size_t l = 0; l < n; ++l) {
        if (static_cast<int>(l) == bg) continue;  // background stays at the origin
        std::vector<double>& p = t.protos_[l];
        double norm = 0.0;
        for (double& v : p) {
            v = rng.gaussian();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        for (double& v : p) v *= 3.0 / norm;
    }

    // Confusable pairs: the two most graph-distant label pairs (disjoint
    // members, deterministic order) get prototypes separated by only delta.
    Tensor adj = taxonomy.intra_adjacency(domain);
    std::vector<std::tuple<int, std::string, std::string, std::size_t, std::size_t>> pairs;
    for (std::size_t a = 0; a < n; ++a) {
        if (static_cast<int>(a) == bg) continue;
        const std::vector<int> dist = graph_distances(adj, a);
        for (std::size_t b = a + 1; b < n; ++b) {
            if (static_cast<int>(b) == bg || dist[b] < 0) continue;
            pairs.emplace_back(-dist[b], dom.labels[a], dom.labels[b], a, b);
        }
    }
    std::sort(pairs.begin(), pairs.end());
    const double deltas[2] = {0.55, 0.8};
    std::vector<bool> taken(n, false);
    for (const auto& [negd, la, lb, a, b] : pairs) {
        if (t.confusable_.size() >= 2) break;
        if (-negd < 3) break;  // only genuinely remote pairs are made confusable
        if (taken[a] || taken[b]) continue;
        taken[a] = taken[b] = true;
        std::vector<double> dir(channels);
        double norm = 0.0;
        for (double& v : dir) {
            v = rng.gaussian();
            norm += v * v;
        }
        norm = std::sqrt(norm);
        const double delta = deltas[t.confusable_.size()];
        for (std::size_t c = 0; c < channels; ++c)
            t.protos_[b][c] = t.protos_[a][c] + delta * dir[c] / norm;
        t.confusable_.emplace_back(a, b);
    }
    return t;
}

namespace {

void fill_features(SceneSample& sample, const DatasetSpec& spec, const PrototypeTable& protos,
                   const std::vector<int>& fine_map, Rng& rng) {
    const std::size_t h = spec.height, w = spec.width, c = spec.channels;
    std::vector<double> feat(h * w * c);
    for (std::size_t p = 0; p < h * w; ++p) {
        const std::vector<double>& proto = protos.prototype(
            static_cast<std::size_t>(fine_map[p]));
        for (std::size_t ch = 0; ch < c; ++ch)
            feat[p * c + ch] = proto[ch] + spec.noise * rng.gaussian();
    }
    sample.features = Tensor::values({h, w, c}, std::move(feat));
}

std::vector<Blob> place_blobs(const DatasetSpec& spec, const std::vector<int>& walk,
                              Rng& rng) {
    const double h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
    const double rmin = 0.11 * std::min(h, w), rmax = 0.21 * std::min(h, w);
    std::vector<Blob> blobs;
    for (std::size_t i = 0; i < walk.size(); ++i) {
        Blob b;
        b.ry = rng.uniform(rmin, rmax);
        b.rx = rng.uniform(rmin, rmax);
        b.label = walk[i];
        if (i == 0) {
            b.cy = rng.uniform(0.3 * h, 0.7 * h);
            b.cx = rng.uniform(0.3 * w, 0.7 * w);
        } else {
            // next to the previous part, so graph adjacency shows up spatially
            const Blob& prev = blobs.back();
            const double angle = rng.uniform(0.0, 2.0 * kPi);
            const double dist = 0.8 * (prev.ry + b.ry);
            b.cy = std::clamp(prev.cy + dist * std::sin(angle), 1.0, h - 2.0);
            b.cx = std::clamp(prev.cx + dist * std::cos(angle), 1.0, w - 2.0);
        }
        blobs.push_back(b);
    }
    return blobs;
}

}  // namespace

SceneSample generate_parsing_scene(const DatasetSpec& spec, const LabelTaxonomy& taxonomy,
                                   std::size_t scene_index) {
    if (spec.height * spec.width < 100 || spec.height < 8 || spec.width < 8)
        throw GenerationError("feature map " + std::to_string(spec.height) + "x" +
                              std::to_string(spec.width) +
                              " is too small for up to 5 parts");
    const std::string fine = finest_domain(taxonomy);
    const Domain& dom = taxonomy.domain(fine);
    const int bg = background_index(dom);
    const int bg_label = bg < 0 ? 0 : bg;

    Rng rng(mix_seed(spec.seed, scene_index));
    PrototypeTable protos =
        PrototypeTable::build(taxonomy, fine, spec.channels, spec.seed);

    // pick 2-5 distinct part labels by a random walk over the adjacency graph
    std::vector<std::size_t> parts;
    for (std::size_t l = 0; l < dom.labels.size(); ++l)
        if (static_cast<int>(l) != bg_label) parts.push_back(l);
    if (parts.empty()) throw GenerationError("domain \"" + fine + "\" has only background");

    const std::size_t want = 2 + rng.below(4);  // 2..5
    Tensor adj = taxonomy.intra_adjacency(fine);
    std::vector<int> walk;
    std::size_t cur = parts[rng.below(parts.size())];
    walk.push_back(static_cast<int>(cur));
    for (int step = 0; step < 16 && walk.size() < want; ++step) {
        std::vector<std::size_t> next;
        for (std::size_t u = 0; u < dom.labels.size(); ++u)
            if (adj.at(cur, u) != 0.0 && static_cast<int>(u) != bg_label) next.push_back(u);
        if (next.empty()) break;
        cur = next[rng.below(next.size())];
        if (std::find(walk.begin(), walk.end(), static_cast<int>(cur)) == walk.end())
            walk.push_back(static_cast<int>(cur));
    }

    std::vector<Blob> blobs = place_blobs(spec, walk, rng);
    std::vector<int> fine_map(spec.height * spec.width, bg_label);
    for (const Blob& b : blobs)  // later parts overwrite earlier ones
        for (std::size_t y = 0; y < spec.height; ++y)
            for (std::size_t x = 0; x < spec.width; ++x)
                if (inside(b, y, x)) fine_map[y * spec.width + x] = b.label;

    SceneSample sample;
    sample.domain = spec.domain;
    sample.labels[fine] = fine_map;
    for (const Domain& d : taxonomy.domains())
        if (d.name != fine)
            sample.labels[d.name] = relabel_granularity(fine_map, fine, d.name, taxonomy);
    fill_features(sample, spec, protos, fine_map, rng);
    return sample;
}

std::vector<int> relabel_granularity(const std::vector<int>& map, const std::string& from,
                                     const std::string& to, const LabelTaxonomy& taxonomy) {
    if (from == to) return map;
    const Domain& src = taxonomy.domain(from);
    std::vector<int> lookup(src.labels.size(), -1);
    for (std::size_t l = 0; l < src.labels.size(); ++l) {
        int anc = taxonomy.ancestor_in(from, l, to);
        if (anc < 0) anc = taxonomy.label_index(to, src.labels[l]);  // same-name fallback
        if (anc < 0)
            throw TaxonomyError("label \"" + src.labels[l] + "\" of domain \"" + from +
                                "\" has no ancestor in domain \"" + to + "\"");
        lookup[l] = anc;
    }
    std::vector<int> out(map.size());
    for (std::size_t p = 0; p < map.size(); ++p) out[p] = lookup[static_cast<std::size_t>(map[p])];
    return out;
}

SceneSample generate_panoptic_scene(const DatasetSpec& spec, const LabelTaxonomy& taxonomy,
                                    std::size_t scene_index) {
    if (!spec.instance_mode)
        throw ContractError("generate_panoptic_scene needs instance_mode");
    if (spec.height * spec.width < 100 || spec.height < 8 || spec.width < 8)
        throw GenerationError("feature map too small for a panoptic scene");

    const std::string scene = finest_domain(taxonomy);
    const Domain& dom = taxonomy.domain(scene);

    std::vector<int> things, stuff;
    for (std::size_t l = 0; l < dom.labels.size(); ++l) {
        const bool is_thing =
            std::find(spec.thing_labels.begin(), spec.thing_labels.end(), dom.labels[l]) !=
            spec.thing_labels.end();
        (is_thing ? things : stuff).push_back(static_cast<int>(l));
    }
    if (stuff.empty()) throw GenerationError("panoptic scene needs at least one stuff label");
    if (things.empty()) throw GenerationError("panoptic scene needs at least one thing label");

    Rng rng(mix_seed(spec.seed, scene_index));
    PrototypeTable protos =
        PrototypeTable::build(taxonomy, scene, spec.channels, spec.seed);
    const std::size_t h = spec.height, w = spec.width;

    // stuff background: horizontal split between two stuff classes
    std::vector<int> label_map(h * w);
    const int stuff_top = stuff[rng.below(stuff.size())];
    const int stuff_bottom = stuff[rng.below(stuff.size())];
    const std::size_t horizon = h / 3 + rng.below(h / 3 + 1);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            label_map[y * w + x] = y < horizon ? stuff_top : stuff_bottom;

    // thing instances: possibly repeated classes, distinct identities
    const std::size_t k = rng.below(5);  // 0..4 instances
    std::vector<int> identity_map(h * w, -1);
    std::vector<Blob> blobs;
    for (std::size_t i = 0; i < k; ++i) {
        std::vector<int> walk{things[rng.below(things.size())]};
        Blob b = place_blobs(spec, walk, rng)[0];
        blobs.push_back(b);
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                if (inside(b, y, x)) {
                    label_map[y * w + x] = b.label;
                    identity_map[y * w + x] = static_cast<int>(i);
                }
    }

    SceneSample sample;
    sample.domain = spec.domain;
    sample.labels[scene] = label_map;
    sample.identity_map = identity_map;

    // tight visible boxes, jittered by at most 10% of the box size
    const double jitter = std::min(0.1, 0.2 * spec.noise);
    for (std::size_t i = 0; i < k; ++i) {
        std::size_t y0 = h, x0 = w, y1 = 0, x1 = 0;
        bool any = false;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x)
                if (identity_map[y * w + x] == static_cast<int>(i)) {
                    any = true;
                    y0 = std::min(y0, y);
                    x0 = std::min(x0, x);
                    y1 = std::max(y1, y + 1);
                    x1 = std::max(x1, x + 1);
                }
        if (!any) continue;  // fully occluded by later instances
        Box box{y0, x0, y1, x1};
        if (jitter > 0.0) {
            const double dy = jitter * static_cast<double>(box.height());
            const double dx = jitter * static_cast<double>(box.width());
            auto wiggle = [&](std::size_t v, double amp, std::size_t lo, std::size_t hi) {
                const double moved = static_cast<double>(v) + rng.uniform(-amp, amp);
                return std::min(hi, static_cast<std::size_t>(std::max(
                                        static_cast<double>(lo), std::round(moved))));
            };
            Box j{wiggle(box.y0, dy, 0, h - 1), wiggle(box.x0, dx, 0, w - 1),
                  wiggle(box.y1, dy, 1, h), wiggle(box.x1, dx, 1, w)};
            bool covers = j.y0 < j.y1 && j.x0 < j.x1;
            if (covers) {
                covers = false;
                for (std::size_t y = j.y0; y < j.y1 && !covers; ++y)
                    for (std::size_t x = j.x0; x < j.x1 && !covers; ++x)
                        covers = identity_map[y * w + x] == static_cast<int>(i);
            }
            if (covers) box = j;  // otherwise keep the tight box
        }
        sample.regions.push_back(RegionInfo{box, blobs[i].label, static_cast<int>(i)});
    }

    fill_features(sample, spec, protos, label_map, rng);
    return sample;
}

SceneSample generate_scene(const DatasetSpec& spec, const LabelTaxonomy& taxonomy,
                           std::size_t scene_index) {
    return spec.instance_mode ? generate_panoptic_scene(spec, taxonomy, scene_index)
                              : generate_parsing_scene(spec, taxonomy, scene_index);
}

void save_sample(const SceneSample& sample, const std::string& base_path) {
    const std::size_t h = sample.features.dim(0), w = sample.features.dim(1),
                      c = sample.features.dim(2);
    {
        std::ofstream bin(base_path + ".bin", std::ios::binary | std::ios::trunc);
        if (!bin) throw IoError("cannot write " + base_path + ".bin");
        const auto& d = sample.features.data();
        bin.write(reinterpret_cast<const char*>(d.data()),
                  static_cast<std::streamsize>(d.size() * sizeof(double)));
        if (!bin) throw IoError("short write to " + base_path + ".bin");
    }

    json meta;
    meta["height"] = h;
    meta["width"] = w;
    meta["channels"] = c;
    meta["domain"] = sample.domain;
    meta["labels"] = json::object();
    for (const auto& [name, map] : sample.labels) meta["labels"][name] = map;
    if (!sample.regions.empty() || !sample.identity_map.empty()) {
        meta["identity_map"] = sample.identity_map;
        json regions = json::array();
        for (const RegionInfo& r : sample.regions)
            regions.push_back({{"y0", r.box.y0},
                               {"x0", r.box.x0},
                               {"y1", r.box.y1},
                               {"x1", r.box.x1},
                               {"cls", r.cls},
                               {"identity", r.identity}});
        meta["regions"] = regions;
    }
    std::ofstream mf(base_path + ".meta.json", std::ios::trunc);
    if (!mf) throw IoError("cannot write " + base_path + ".meta.json");
    mf << meta.dump(2) << '\n';
}

SceneSample load_sample(const std::string& base_path) {
    std::ifstream mf(base_path + ".meta.json");
    if (!mf) throw IoError("cannot open " + base_path + ".meta.json");
    json meta;
    try {
        mf >> meta;
    } catch (const json::exception& e) {
        throw IntegrityError("metadata for " + base_path + " is not valid JSON: " + e.what());
    }

    SceneSample sample;
    const std::size_t h = meta.at("height").get<std::size_t>();
    const std::size_t w = meta.at("width").get<std::size_t>();
    const std::size_t c = meta.at("channels").get<std::size_t>();
    sample.domain = meta.at("domain").get<std::string>();
    for (const auto& [name, map] : meta.at("labels").items()) {
        sample.labels[name] = map.get<std::vector<int>>();
        if (sample.labels[name].size() != h * w)
            throw IntegrityError("label map \"" + name + "\" in " + base_path +
                                 " does not match the declared shape");
    }
    if (meta.contains("identity_map"))
        sample.identity_map = meta["identity_map"].get<std::vector<int>>();
    if (meta.contains("regions"))
        for (const auto& rj : meta["regions"])
            sample.regions.push_back(RegionInfo{
                Box{rj.at("y0").get<std::size_t>(), rj.at("x0").get<std::size_t>(),
                    rj.at("y1").get<std::size_t>(), rj.at("x1").get<std::size_t>()},
                rj.at("cls").get<int>(), rj.at("identity").get<int>()});

    std::ifstream bin(base_path + ".bin", std::ios::binary);
    if (!bin) throw IoError("cannot open " + base_path + ".bin");
    std::vector<double> feat(h * w * c);
    bin.read(reinterpret_cast<char*>(feat.data()),
             static_cast<std::streamsize>(feat.size() * sizeof(double)));
    if (static_cast<std::size_t>(bin.gcount()) != feat.size() * sizeof(double))
        throw IntegrityError("feature file " + base_path +
                             ".bin does not match the declared shape");
    bin.peek();
    if (!bin.eof())
        throw IntegrityError("feature file " + base_path + ".bin has trailing data");
    sample.features = Tensor::values({h, w, c}, std::move(feat));
    return sample;
}

}  // namespace graphonomy
