#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "graphonomy/errors.hpp"

namespace graphonomy {

// L x L counts, rows = ground truth, columns = prediction.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::size_t labels);

    std::size_t labels() const { return labels_; }
    long long at(std::size_t gt, std::size_t pred) const;
    long long total() const;

    void add(std::size_t gt, std::size_t pred, long long count = 1);
    void add_maps(const std::vector<int>& gt, const std::vector<int>& pred);
    // Shards merge additively.
    void merge(const ConfusionMatrix& other);

private:
    std::size_t labels_;
    std::vector<long long> counts_;
};

struct SegMetrics {
    double miou = 0.0;
    double accuracy = 0.0;
    double mean_f1 = 0.0;
    // per class; classes absent from gt and pred carry -1 and are excluded
    // from the means
    std::vector<double> iou;
    std::vector<double> f1;
};

// IoU_c = TP/(TP+FP+FN); means run over classes present in gt or pred.
// F1_c is 0 when precision + recall is 0.
SegMetrics segmentation_metrics(const ConfusionMatrix& cm);
SegMetrics segmentation_metrics(const std::vector<int>& gt, const std::vector<int>& pred,
                                std::size_t labels);

// One panoptic segment: a binary pixel mask with a class and an identity
// (identities distinguish same-class things).
struct Segment {
    std::vector<std::uint8_t> mask;  // H*W, nonzero = covered
    int cls = 0;
    int identity = 0;
};

// Matching counts for one class split; merge additively across samples and
// recompute pq() at the end.
struct PqCounts {
    std::size_t tp = 0, fp = 0, fn = 0;
    double iou_sum = 0.0;

    void merge(const PqCounts& other) {
        tp += other.tp;
        fp += other.fp;
        fn += other.fn;
        iou_sum += other.iou_sum;
    }
    double pq() const {
        const double denom = static_cast<double>(tp) + 0.5 * static_cast<double>(fp) +
                             0.5 * static_cast<double>(fn);
        return denom == 0.0 ? 1.0 : iou_sum / denom;
    }
};

struct PqResult {
    double pq = 1.0;
    double pq_thing = 1.0;
    double pq_stuff = 1.0;
    PqCounts all, thing, stuff;
};

// Panoptic quality with unique IoU > 0.5 matching between equal-class
// segments: PQ = sum of matched IoU / (TP + FP/2 + FN/2). Splits report the
// same statistic restricted to thing / non-thing classes. A split with no
// segments on either side is vacuously 1. Same-class masks must be disjoint
// per side (InputError).
PqResult panoptic_quality(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                          const std::set<int>& thing_classes);

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);

}  // namespace graphonomy
