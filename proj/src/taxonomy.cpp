#include "graphonomy/taxonomy.hpp"

#include <cmath>
#include <deque>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace graphonomy {

using nlohmann::json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace

LabelTaxonomy LabelTaxonomy::load(const std::string& path) {
    return parse(read_file(path));
}

LabelTaxonomy LabelTaxonomy::parse(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError(std::string("taxonomy file is not valid JSON: ") + e.what());
    }

    LabelTaxonomy t;
    if (!j.contains("domains") || !j["domains"].is_array() || j["domains"].empty())
        throw TaxonomyError("taxonomy needs a non-empty \"domains\" array");

    for (const auto& dj : j["domains"]) {
        Domain d;
        d.name = dj.at("name").get<std::string>();
        if (t.domain_index_.count(d.name))
            throw TaxonomyError("duplicate domain \"" + d.name + "\"");
        for (const auto& lj : dj.at("labels")) {
            std::string label = lj.get<std::string>();
            for (const auto& existing : d.labels)
                if (existing == label)
                    throw TaxonomyError("duplicate label \"" + label + "\" in domain \"" +
                                        d.name + "\"");
            d.labels.push_back(std::move(label));
        }
        if (d.labels.empty())
            throw TaxonomyError("domain \"" + d.name + "\" has no labels");
        t.domain_index_[d.name] = t.domains_.size();
        t.domains_.push_back(std::move(d));
    }
    t.adjacency_.resize(t.domains_.size());

    if (j.contains("adjacency")) {
        for (const auto& [dname, pairs] : j["adjacency"].items()) {
            if (!t.domain_index_.count(dname))
                throw TaxonomyError("adjacency references unknown domain \"" + dname + "\"");
            const std::size_t di = t.domain_index_[dname];
            for (const auto& pj : pairs) {
                const std::string a = pj.at(0).get<std::string>();
                const std::string b = pj.at(1).get<std::string>();
                const int ia = t.label_index(dname, a);
                const int ib = t.label_index(dname, b);
                if (ia < 0)
                    throw TaxonomyError("adjacency pair references unknown label \"" + a +
                                        "\" in domain \"" + dname + "\"");
                if (ib < 0)
                    throw TaxonomyError("adjacency pair references unknown label \"" + b +
                                        "\" in domain \"" + dname + "\"");
                if (ia == ib)
                    throw TaxonomyError("self-pair (" + a + ", " + b + ") in domain \"" +
                                        dname + "\"");
                // symmetric closure: store unordered
                t.adjacency_[di].emplace(std::min(ia, ib), std::max(ia, ib));
            }
        }
    }

    if (j.contains("subordinate")) {
        for (const auto& pj : j["subordinate"]) {
            const std::string fine = pj.at(0).get<std::string>();
            const std::string coarse = pj.at(1).get<std::string>();
            bool registered = false;
            for (std::size_t fd = 0; fd < t.domains_.size(); ++fd) {
                const int fl = t.label_index(t.domains_[fd].name, fine);
                if (fl < 0) continue;
                for (std::size_t cd = 0; cd < t.domains_.size(); ++cd) {
                    if (cd == fd) continue;
                    const int cl = t.label_index(t.domains_[cd].name, coarse);
                    if (cl < 0) continue;
                    t.subordinate_.emplace(fd, static_cast<std::size_t>(fl), cd,
                                           static_cast<std::size_t>(cl));
                    registered = true;
                }
            }
            if (!registered)
                throw TaxonomyError("subordinate pair (" + fine + ", " + coarse +
                                    ") does not reference labels in two distinct domains");
        }
    }
    return t;
}

bool LabelTaxonomy::has_domain(const std::string& name) const {
    return domain_index_.count(name) != 0;
}

const Domain& LabelTaxonomy::domain(const std::string& name) const {
    auto it = domain_index_.find(name);
    if (it == domain_index_.end()) throw InputError("unknown domain \"" + name + "\"");
    return domains_[it->second];
}

std::size_t LabelTaxonomy::domain_index(const std::string& name) const {
    auto it = domain_index_.find(name);
    if (it == domain_index_.end()) throw InputError("unknown domain \"" + name + "\"");
    return it->second;
}

std::size_t LabelTaxonomy::label_count(const std::string& d) const {
    return domain(d).labels.size();
}

int LabelTaxonomy::label_index(const std::string& d, const std::string& label) const {
    const Domain& dom = domain(d);
    for (std::size_t i = 0; i < dom.labels.size(); ++i)
        if (dom.labels[i] == label) return static_cast<int>(i);
    return -1;
}

bool LabelTaxonomy::adjacent(const std::string& d, const std::string& a,
                             const std::string& b) const {
    const std::size_t di = domain_index(d);
    const int ia = label_index(d, a), ib = label_index(d, b);
    if (ia < 0 || ib < 0 || ia == ib) return false;
    return adjacency_[di].count({std::min(ia, ib), std::max(ia, ib)}) != 0;
}

bool LabelTaxonomy::subordinate(const std::string& fine_domain, const std::string& fine_label,
                                const std::string& coarse_domain,
                                const std::string& coarse_label) const {
    const std::size_t fd = domain_index(fine_domain), cd = domain_index(coarse_domain);
    const int fl = label_index(fine_domain, fine_label);
    const int cl = label_index(coarse_domain, coarse_label);
    if (fl < 0 || cl < 0) return false;
    return subordinate_.count({fd, static_cast<std::size_t>(fl), cd,
                               static_cast<std::size_t>(cl)}) != 0;
}

Tensor LabelTaxonomy::intra_adjacency(const std::string& d) const {
    const std::size_t di = domain_index(d);
    const std::size_t n = domains_[di].labels.size();
    std::vector<double> a(n * n, 0.0);
    for (const auto& [i, j] : adjacency_[di]) {
        a[i * n + j] = 1.0;
        a[j * n + i] = 1.0;
    }
    return Tensor::values({n, n}, std::move(a));
}

Tensor LabelTaxonomy::handcraft_transfer(const std::string& source,
                                         const std::string& target) const {
    const std::size_t sd = domain_index(source), td = domain_index(target);
    const std::size_t ns = domains_[sd].labels.size(), nt = domains_[td].labels.size();
    std::vector<double> a(nt * ns, 0.0);
    for (const auto& [fd, fl, cd, cl] : subordinate_) {
        if (fd == td && cd == sd) a[fl * ns + cl] = 1.0;
        if (fd == sd && cd == td) a[cl * ns + fl] = 1.0;
    }
    return Tensor::values({nt, ns}, std::move(a));
}

int LabelTaxonomy::ancestor_in(const std::string& from_domain, std::size_t label,
                               const std::string& to_domain) const {
    const std::size_t fd = domain_index(from_domain), td = domain_index(to_domain);
    if (fd == td) return static_cast<int>(label);
    // BFS up the subordination relation
    std::deque<std::pair<std::size_t, std::size_t>> queue{{fd, label}};
    std::set<std::pair<std::size_t, std::size_t>> seen{{fd, label}};
    while (!queue.empty()) {
        auto [d, l] = queue.front();
        queue.pop_front();
        for (const auto& [sfd, sfl, scd, scl] : subordinate_) {
            if (sfd != d || sfl != l) continue;
            if (scd == td) return static_cast<int>(scl);
            if (seen.emplace(scd, scl).second) queue.emplace_back(scd, scl);
        }
    }
    return -1;
}

// --- EmbeddingTable ----------------------------------------------------------

EmbeddingTable EmbeddingTable::load(const std::string& path) {
    return parse(read_file(path));
}

EmbeddingTable EmbeddingTable::parse(const std::string& text) {
    EmbeddingTable t;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        std::string label;
        ls >> label;
        std::vector<double> v;
        double x;
        while (ls >> x) v.push_back(x);
        if (label.empty() || v.empty())
            throw IoError("embedding line " + std::to_string(lineno) + " is malformed");
        t.insert(label, std::move(v));
    }
    return t;
}

void EmbeddingTable::insert(const std::string& label, std::vector<double> v) {
    if (dim_ == 0) dim_ = v.size();
    if (v.size() != dim_)
        throw TaxonomyError("embedding for \"" + label + "\" has dimension " +
                            std::to_string(v.size()) + ", expected " + std::to_string(dim_));
    double sq = 0.0;
    for (double x : v) sq += x * x;
    if (sq == 0.0)
        throw TaxonomyError("embedding for \"" + label + "\" has zero norm");
    table_[label] = std::move(v);
}

bool EmbeddingTable::contains(const std::string& label) const {
    return table_.count(label) != 0;
}

const std::vector<double>& EmbeddingTable::vector_for(const std::string& label) const {
    auto it = table_.find(label);
    if (it == table_.end())
        throw InputError("no embedding for label \"" + label + "\"");
    return it->second;
}

double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size())
        throw ShapeError("cosine_similarity dimensions disagree");
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb) + 1e-12);
}

Tensor semantic_transfer(const EmbeddingTable& table,
                         const std::vector<std::string>& target_labels,
                         const std::vector<std::string>& source_labels) {
    const std::size_t nt = target_labels.size(), ns = source_labels.size();
    std::vector<double> out(nt * ns);
    for (std::size_t i = 0; i < nt; ++i) {
        const auto& ti = table.vector_for(target_labels[i]);
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < ns; ++j) {
            out[i * ns + j] = cosine_similarity(ti, table.vector_for(source_labels[j]));
            mx = std::max(mx, out[i * ns + j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < ns; ++j) {
            out[i * ns + j] = std::exp(out[i * ns + j] - mx);
            denom += out[i * ns + j];
        }
        for (std::size_t j = 0; j < ns; ++j) out[i * ns + j] /= denom;
    }
    return Tensor::values({nt, ns}, std::move(out));
}

}  // namespace graphonomy
