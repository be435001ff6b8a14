#include "graphonomy/transfer.hpp"

#include "graphonomy/rng.hpp"

namespace graphonomy {

TransferScheme parse_transfer_scheme(const std::string& name) {
    if (name == "handcraft") return TransferScheme::Handcraft;
    if (name == "learnable") return TransferScheme::Learnable;
    if (name == "feature") return TransferScheme::FeatureSimilarity;
    if (name == "semantic") return TransferScheme::SemanticSimilarity;
    if (name == "attention") return TransferScheme::Attention;
    throw ConfigError("unknown transfer scheme \"" + name + "\"");
}

std::string transfer_scheme_name(TransferScheme s) {
    switch (s) {
        case TransferScheme::Handcraft: return "handcraft";
        case TransferScheme::Learnable: return "learnable";
        case TransferScheme::FeatureSimilarity: return "feature";
        case TransferScheme::SemanticSimilarity: return "semantic";
        case TransferScheme::Attention: return "attention";
    }
    return "?";
}

std::vector<TransferScheme> parse_transfer_schemes(const std::string& spec) {
    std::vector<TransferScheme> out;
    std::size_t start = 0;
    while (start <= spec.size()) {
        const std::size_t plus = spec.find('+', start);
        const std::string tok = spec.substr(start, plus == std::string::npos
                                                       ? std::string::npos
                                                       : plus - start);
        if (tok.empty()) throw ConfigError("empty scheme in \"" + spec + "\"");
        const TransferScheme s = parse_transfer_scheme(tok);
        for (TransferScheme seen : out)
            if (seen == s) throw ConfigError("scheme \"" + tok + "\" listed twice");
        out.push_back(s);
        if (plus == std::string::npos) break;
        start = plus + 1;
    }
    if (out.empty()) throw ConfigError("empty transfer scheme list");
    return out;
}

Tensor feature_similarity_matrix(const Tensor& z_target, const Tensor& z_source, double eps) {
    if (z_target.rank() != 2 || z_source.rank() != 2 || z_target.dim(1) != z_source.dim(1))
        throw ShapeError("feature similarity needs matching node dimensions, got " +
                         shape_str(z_target.shape()) + " and " + shape_str(z_source.shape()));
    Tensor sim = matmul(normalize_rows(z_target, eps), transpose(normalize_rows(z_source, eps)));
    return softmax_rows(sim);
}

Tensor build_transfer(const TransferSpec& spec, const Tensor& z_target,
                      const Tensor& z_source) {
    if (spec.schemes.empty()) throw ConfigError("transfer spec has no scheme");
    Tensor acc;
    for (TransferScheme s : spec.schemes) {
        Tensor m;
        switch (s) {
            case TransferScheme::Handcraft:
                if (!spec.handcraft.defined())
                    throw ConfigError("handcraft scheme needs a taxonomy indicator matrix");
                m = spec.handcraft;
                break;
            case TransferScheme::SemanticSimilarity:
                if (!spec.semantic.defined())
                    throw ConfigError("semantic scheme needs a precomputed embedding matrix");
                m = spec.semantic;
                break;
            case TransferScheme::Learnable:
                if (!spec.learnable.defined())
                    throw ConfigError("learnable scheme needs its trainable matrix");
                m = spec.learnable;
                break;
            case TransferScheme::FeatureSimilarity:
                m = feature_similarity_matrix(z_target, z_source);
                break;
            case TransferScheme::Attention:
                if (!spec.attention.w_att.defined())
                    throw ConfigError("attention scheme needs scorer weights");
                m = attention_matrix(z_target, z_source, spec.attention);
                break;
        }
        acc = acc.defined() ? add(acc, m) : m;
    }
    if (spec.schemes.size() > 1)
        acc = scale(acc, 1.0 / static_cast<double>(spec.schemes.size()));
    return acc;
}

Tensor inter_transfer(const Tensor& z_target, const Tensor& z_source, const Tensor& a_tr,
                      const Tensor& w_tr, Activation activation, double leaky_slope) {
    if (a_tr.rank() != 2 || a_tr.dim(0) != z_target.dim(0) || a_tr.dim(1) != z_source.dim(0))
        throw ShapeError("transfer matrix " + shape_str(a_tr.shape()) +
                         " does not map " + shape_str(z_source.shape()) + " onto " +
                         shape_str(z_target.shape()));
    if (w_tr.rank() != 2 || w_tr.dim(0) != z_source.dim(1) || w_tr.dim(1) != z_target.dim(1))
        throw ShapeError("transfer weight " + shape_str(w_tr.shape()) +
                         " does not map source dimension " + std::to_string(z_source.dim(1)) +
                         " to target dimension " + std::to_string(z_target.dim(1)));
    Tensor message = matmul(matmul(a_tr, z_source), w_tr);
    return add(z_target, apply_activation(message, activation, leaky_slope));
}

std::pair<Tensor, Tensor> bidirectional_step(const Tensor& z_a, const Tensor& z_b,
                                             const TransferSpec& into_a,
                                             const TransferSpec& into_b,
                                             BidirectionalMode mode) {
    if (mode == BidirectionalMode::Synchronous) {
        Tensor a_next = inter_transfer(z_a, z_b, build_transfer(into_a, z_a, z_b),
                                       into_a.w_tr, into_a.activation, into_a.leaky_slope);
        Tensor b_next = inter_transfer(z_b, z_a, build_transfer(into_b, z_b, z_a),
                                       into_b.w_tr, into_b.activation, into_b.leaky_slope);
        return {a_next, b_next};
    }
    Tensor a_next = inter_transfer(z_a, z_b, build_transfer(into_a, z_a, z_b), into_a.w_tr,
                                   into_a.activation, into_a.leaky_slope);
    Tensor b_next = inter_transfer(z_b, a_next, build_transfer(into_b, z_b, a_next),
                                   into_b.w_tr, into_b.activation, into_b.leaky_slope);
    return {a_next, b_next};
}

Tensor init_learnable_transfer(std::size_t n_target, std::size_t n_source,
                               std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n_target * n_source);
    const double hi = 2.0 / static_cast<double>(n_source);
    for (double& x : v) x = rng.uniform(0.0, hi);
    return Tensor::values({n_target, n_source}, std::move(v));
}

}  // namespace graphonomy
