#include "graphonomy/gradcheck.hpp"

#include <cmath>
#include <sstream>

#include "graphonomy/projection.hpp"
#include "graphonomy/reasoning.hpp"
#include "graphonomy/rng.hpp"
#include "graphonomy/transfer.hpp"

namespace graphonomy {

namespace {

struct Eval {
    double value;
    std::vector<double> kink_inputs;
};

Eval evaluate(const DifferentiableFn& f, const std::vector<Shape>& shapes,
              const std::vector<std::vector<double>>& values) {
    Tape tape;
    std::vector<Tensor> leaves;
    leaves.reserve(shapes.size());
    for (std::size_t i = 0; i < shapes.size(); ++i)
        leaves.push_back(tape.leaf(shapes[i], values[i], /*requires_grad=*/false));
    Tensor out = f(tape, leaves);
    if (out.size() != 1)
        throw ContractError("grad_check function must return a scalar, got " +
                            shape_str(out.shape()));
    return {out.item(), tape.kink_inputs()};
}

int sign_of(double v) { return v > 0.0 ? 1 : (v < 0.0 ? -1 : 0); }

// The two-sided difference is invalid when some activation input changes sign
// between the +h and -h evaluations: the function is not differentiable along
// that segment.
bool straddles_kink(const Eval& plus, const Eval& minus) {
    if (plus.kink_inputs.size() != minus.kink_inputs.size()) return true;
    for (std::size_t i = 0; i < plus.kink_inputs.size(); ++i)
        if (sign_of(plus.kink_inputs[i]) != sign_of(minus.kink_inputs[i])) return true;
    return false;
}

}  // namespace

GradCheckReport grad_check(const DifferentiableFn& f, const std::vector<Shape>& shapes,
                           const std::vector<std::vector<double>>& values, double step,
                           double tol) {
    if (step <= 0.0) throw InputError("grad_check step must be positive");
    if (shapes.size() != values.size())
        throw InputError("grad_check: shapes and values differ in length");

    // Analytic gradients from one taped pass.
    std::vector<std::vector<double>> analytic(shapes.size());
    {
        Tape tape;
        std::vector<Tensor> leaves;
        for (std::size_t i = 0; i < shapes.size(); ++i)
            leaves.push_back(tape.leaf(shapes[i], values[i], /*requires_grad=*/true));
        Tensor loss = f(tape, leaves);
        if (loss.size() != 1)
            throw ContractError("grad_check function must return a scalar, got " +
                                shape_str(loss.shape()));
        if (loss.requires_grad()) {
            tape.backward(loss);
            for (std::size_t i = 0; i < leaves.size(); ++i)
                analytic[i] = tape.grad(leaves[i]).data();
        } else {
            // f ignores its inputs; the gradient is identically zero.
            for (std::size_t i = 0; i < shapes.size(); ++i)
                analytic[i].assign(shape_size(shapes[i]), 0.0);
        }
    }

    GradCheckReport report;
    std::vector<std::vector<double>> probe = values;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        for (std::size_t j = 0; j < probe[i].size(); ++j) {
            const double saved = probe[i][j];
            probe[i][j] = saved + step;
            const Eval plus = evaluate(f, shapes, probe);
            probe[i][j] = saved - step;
            const Eval minus = evaluate(f, shapes, probe);
            probe[i][j] = saved;

            if (straddles_kink(plus, minus)) {
                ++report.skipped;
                continue;
            }
            const double numeric = (plus.value - minus.value) / (2.0 * step);
            const double a = analytic[i][j];
            const double err =
                std::fabs(a - numeric) / std::max({1.0, std::fabs(a), std::fabs(numeric)});
            ++report.checked;
            if (err > report.max_rel_error) {
                report.max_rel_error = err;
                std::ostringstream os;
                os << "input " << i << " coord " << j << ": analytic " << a << " vs numeric "
                   << numeric;
                report.worst = os.str();
            }
        }
    }
    report.passed = report.max_rel_error <= tol;
    return report;
}

// --- named paths -------------------------------------------------------------

namespace {

std::vector<double> random_values(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = rng.uniform(lo, hi);
    return v;
}

Tensor random_adjacency(Rng& rng, std::size_t n) {
    std::vector<double> a(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (rng.uniform() < 0.5) a[i * n + j] = a[j * n + i] = 1.0;
    return normalize_adjacency(Tensor::values({n, n}, std::move(a)));
}

struct PathCase {
    std::vector<Shape> shapes;
    std::vector<std::vector<double>> values;
    DifferentiableFn f;
};

PathCase make_path_case(const std::string& path, Rng& rng) {
    PathCase pc;
    if (path == "projection") {
        const std::size_t h = 3, w = 3, c = 4, n = 3, d = 3;
        pc.shapes = {{h, w, c}, {c, n}, {c, d}, {d, c}};
        pc.f = [](Tape&, const std::vector<Tensor>& in) {
            ProjectionParams params{in[1], in[2], in[3]};
            SemanticGraph g = project(in[0], params);
            return sum(reproject(g, in[0], params));
        };
    } else if (path == "intra") {
        const std::size_t n = 4, d = 3;
        Tensor adj = random_adjacency(rng, n);
        pc.shapes = {{n, d}, {d, d}, {d, d}, {d, d}};
        pc.f = [adj](Tape&, const std::vector<Tensor>& in) {
            GcnStack stack{{in[1], in[2], in[3]}, Activation::Relu, 0.2};
            return sum(intra_reason(in[0], adj, stack));
        };
    } else if (path == "transfer_feature") {
        const std::size_t nt = 3, ns = 4, d = 3;
        pc.shapes = {{nt, d}, {ns, d}, {d, d}};
        pc.f = [](Tape&, const std::vector<Tensor>& in) {
            Tensor a_tr = feature_similarity_matrix(in[0], in[1]);
            return sum(inter_transfer(in[0], in[1], a_tr, in[2]));
        };
    } else if (path == "transfer_learnable") {
        const std::size_t nt = 3, ns = 4, d = 3;
        pc.shapes = {{nt, d}, {ns, d}, {nt, ns}, {d, d}};
        pc.f = [](Tape&, const std::vector<Tensor>& in) {
            return sum(inter_transfer(in[0], in[1], in[2], in[3]));
        };
    } else if (path == "transfer_attention") {
        const std::size_t nt = 3, ns = 4, d = 3;
        pc.shapes = {{nt, d}, {ns, d}, {2 * d, 1}, {d, d}};
        pc.f = [](Tape&, const std::vector<Tensor>& in) {
            Tensor a_tr = attention_matrix(in[0], in[1], {in[2], 0.2});
            return sum(inter_transfer(in[0], in[1], a_tr, in[3]));
        };
    } else if (path == "attention") {
        const std::size_t n = 4, d = 3;
        Tensor weight = Tensor::values({n, 1}, random_values(rng, n));
        pc.shapes = {{n, d}, {2 * d, 1}};
        pc.f = [weight](Tape&, const std::vector<Tensor>& in) {
            Tensor adj = attention_adjacency(in[0], {in[1], 0.2});
            return sum(matmul(adj, weight));
        };
    } else if (path == "composite") {
        // full forward: two domains, 2 reasoning/transfer rounds, feature
        // transfer, re-projection, per-pixel cross-entropy
        const std::size_t h = 2, w = 3, c = 3, na = 3, nb = 2, d = 3, layers = 2;
        Tensor adj_a = random_adjacency(rng, na);
        Tensor adj_b = random_adjacency(rng, nb);
        std::vector<std::size_t> targets(h * w);
        for (auto& t : targets) t = rng.below(na);
        pc.shapes = {{h, w, c}, {c, na}, {c, d}, {d, c}, {c, nb}, {c, d},
                     {d, d},    {d, d},  {d, d}, {d, d}, {d, d},  {d, d},
                     {c, na},   {na}};
        pc.f = [adj_a, adj_b, targets, h, w, c, layers](Tape&,
                                                        const std::vector<Tensor>& in) {
            ProjectionParams pa{in[1], in[2], in[3]};
            ProjectionParams pb{in[4], in[5], Tensor::zeros({in[5].dim(1), c})};
            SemanticGraph ga = project(in[0], pa, "a");
            SemanticGraph gb = project(in[0], pb, "b");
            for (std::size_t t = 0; t < layers; ++t) {
                GcnStack la{{in[6 + t]}, Activation::Relu, 0.2};
                GcnStack lb{{in[8 + t]}, Activation::Relu, 0.2};
                ga.z = intra_reason(ga.z, adj_a, la);
                gb.z = intra_reason(gb.z, adj_b, lb);
                TransferSpec into_a, into_b;
                into_a.schemes = {TransferScheme::FeatureSimilarity};
                into_a.w_tr = in[10];
                into_b.schemes = {TransferScheme::FeatureSimilarity};
                into_b.w_tr = in[11];
                auto [za, zb] = bidirectional_step(ga.z, gb.z, into_a, into_b);
                ga.z = za;
                gb.z = zb;
            }
            Tensor enhanced = reproject(ga, in[0], pa);
            Tensor logits = add_bias(matmul(reshape(enhanced, {h * w, c}), in[12]), in[13]);
            return cross_entropy(logits, targets);
        };
    } else {
        throw InputError("unknown gradcheck path \"" + path + "\"");
    }
    for (const Shape& s : pc.shapes) pc.values.push_back(random_values(rng, shape_size(s)));
    return pc;
}

}  // namespace

std::vector<std::string> gradcheck_path_names() {
    return {"projection",         "intra",     "transfer_feature", "transfer_learnable",
            "transfer_attention", "attention", "composite"};
}

std::vector<PathReport> run_gradcheck_paths(const std::string& filter,
                                            std::size_t instances, double step, double tol,
                                            std::uint64_t seed) {
    std::vector<PathReport> reports;
    for (const std::string& name : gradcheck_path_names()) {
        if (!filter.empty() && name.find(filter) == std::string::npos) continue;
        PathReport pr;
        pr.path = name;
        pr.instances = instances;
        pr.report.passed = true;
        for (std::size_t i = 0; i < instances; ++i) {
            Rng rng(mix_seed(seed, mix_seed(fnv1a(name), i)));
            PathCase pc = make_path_case(name, rng);
            GradCheckReport r = grad_check(pc.f, pc.shapes, pc.values, step, tol);
            pr.report.checked += r.checked;
            pr.report.skipped += r.skipped;
            if (r.max_rel_error > pr.report.max_rel_error) {
                pr.report.max_rel_error = r.max_rel_error;
                pr.report.worst = "instance " + std::to_string(i) + ": " + r.worst;
            }
            pr.report.passed = pr.report.passed && r.passed;
        }
        reports.push_back(std::move(pr));
    }
    if (reports.empty())
        throw InputError("gradcheck filter \"" + filter + "\" matches no path");
    return reports;
}

}  // namespace graphonomy
