#pragma once

#include <string>
#include <vector>

#include "graphonomy/tensor.hpp"

namespace graphonomy {

// Trainable maps for one domain's pixel<->graph projection.
//   p    {C,N}  soft pixel-to-node assignment
//   w1   {C,D}  node feature transform
//   w_re {D,C}  re-projection transform
struct ProjectionParams {
    Tensor p;
    Tensor w1;
    Tensor w_re;
};

struct SemanticGraph {
    std::string domain;
    Tensor z;           // {N,D} node features
    Tensor assignment;  // {HW,N} cached soft assignment X1, needed to re-project
};

struct InstanceGraph {
    Tensor z;  // {N_ins,D}
    std::vector<Box> regions;
};

// Projects a {H,W,C} feature map onto N graph nodes:
//   X1 = X_hw * P,  X2 = X1^T * X_hw,  Z = X2 * W1
// X1 is cached on the returned graph for the inverse path.
SemanticGraph project(const Tensor& x, const ProjectionParams& params,
                      std::string domain = {});

// Puts evolved node features back into pixel space and applies the residual:
//   X' = X + reshape(X1 * (Z * W_re))
Tensor reproject(const SemanticGraph& g, const Tensor& x, const ProjectionParams& params);

// One node per region: mean-pool the covered pixels and transform by w {C,D}.
InstanceGraph instance_project(const Tensor& x, const std::vector<Box>& regions,
                               const Tensor& w);

// Enhanced per-pixel features {H,W,C+D}: each covered pixel's feature is the
// concat of its original C-vector and its region's node feature; pixels in no
// region are zero-padded. On overlap the highest region index wins.
Tensor instance_reproject(const InstanceGraph& g, const Tensor& x);

}  // namespace graphonomy
