#include "graphonomy/projection.hpp"

namespace graphonomy {

namespace {

void require_map(const Tensor& x) {
    if (x.rank() != 3)
        throw ShapeError("expected a {h,w,c} feature map, got " + shape_str(x.shape()));
}

}  // namespace

SemanticGraph project(const Tensor& x, const ProjectionParams& params, std::string domain) {
    require_map(x);
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    if (params.p.rank() != 2 || params.p.dim(0) != c)
        throw ShapeError("projection P " + shape_str(params.p.shape()) +
                         " does not match feature channels " + std::to_string(c));
    if (params.w1.rank() != 2 || params.w1.dim(0) != c)
        throw ShapeError("projection W1 " + shape_str(params.w1.shape()) +
                         " does not match feature channels " + std::to_string(c));

    Tensor xr = reshape(x, {h * w, c});
    Tensor x1 = matmul(xr, params.p);             // {HW, N}
    Tensor x2 = matmul(transpose(x1), xr);        // {N, C}
    SemanticGraph g;
    g.domain = std::move(domain);
    g.z = matmul(x2, params.w1);                  // {N, D}
    g.assignment = x1;
    return g;
}

Tensor reproject(const SemanticGraph& g, const Tensor& x, const ProjectionParams& params) {
    require_map(x);
    if (!g.assignment.defined())
        throw ContractError("re-projection needs the cached assignment from project()");
    const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
    const std::size_t d = g.z.dim(1);
    if (params.w_re.rank() != 2 || params.w_re.dim(0) != d || params.w_re.dim(1) != c)
        throw ShapeError("re-projection weight must be {" + std::to_string(d) + "," +
                         std::to_string(c) + "}, got " + shape_str(params.w_re.shape()));
    if (g.assignment.dim(0) != h * w)
        throw ContractError("cached assignment " + shape_str(g.assignment.shape()) +
                            " does not match the feature map " + shape_str(x.shape()));

    Tensor xp = matmul(g.assignment, matmul(g.z, params.w_re));  // {HW, C}
    return add(x, reshape(xp, {h, w, c}));
}

InstanceGraph instance_project(const Tensor& x, const std::vector<Box>& regions,
                               const Tensor& w) {
    require_map(x);
    const std::size_t c = x.dim(2);
    if (w.rank() != 2 || w.dim(0) != c)
        throw ShapeError("instance projection weight " + shape_str(w.shape()) +
                         " does not match feature channels " + std::to_string(c));
    InstanceGraph g;
    g.z = matmul(region_mean_pool(x, regions), w);  // {K, D}
    g.regions = regions;
    return g;
}

Tensor instance_reproject(const InstanceGraph& g, const Tensor& x) {
    require_map(x);
    return region_concat(x, g.z, g.regions);
}

}  // namespace graphonomy
