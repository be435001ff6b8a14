#include "graphonomy/metrics.hpp"

#include <algorithm>

namespace graphonomy {

ConfusionMatrix::ConfusionMatrix(std::size_t labels)
    : labels_(labels), counts_(labels * labels, 0) {
    if (labels == 0) throw InputError("confusion matrix needs at least one label");
}

long long ConfusionMatrix::at(std::size_t gt, std::size_t pred) const {
    return counts_[gt * labels_ + pred];
}

long long ConfusionMatrix::total() const {
    long long t = 0;
    for (long long c : counts_) t += c;
    return t;
}

void ConfusionMatrix::add(std::size_t gt, std::size_t pred, long long count) {
    if (gt >= labels_ || pred >= labels_)
        throw InputError("label out of range for " + std::to_string(labels_) +
                         "-class confusion matrix");
    counts_[gt * labels_ + pred] += count;
}

void ConfusionMatrix::add_maps(const std::vector<int>& gt, const std::vector<int>& pred) {
    if (gt.size() != pred.size())
        throw InputError("label maps differ in size: " + std::to_string(gt.size()) + " vs " +
                         std::to_string(pred.size()));
    for (std::size_t i = 0; i < gt.size(); ++i) {
        if (gt[i] < 0 || pred[i] < 0) throw InputError("negative label in map");
        add(static_cast<std::size_t>(gt[i]), static_cast<std::size_t>(pred[i]));
    }
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
    if (other.labels_ != labels_)
        throw InputError("cannot merge confusion matrices of different sizes");
    for (std::size_t i = 0; i < counts_.size(); ++i) counts_[i] += other.counts_[i];
}

SegMetrics segmentation_metrics(const ConfusionMatrix& cm) {
    const std::size_t l = cm.labels();
    SegMetrics m;
    m.iou.assign(l, -1.0);
    m.f1.assign(l, -1.0);

    long long trace = 0;
    double iou_sum = 0.0, f1_sum = 0.0;
    std::size_t present = 0;
    for (std::size_t c = 0; c < l; ++c) {
        const long long tp = cm.at(c, c);
        long long fp = 0, fn = 0;
        for (std::size_t o = 0; o < l; ++o) {
            if (o == c) continue;
            fp += cm.at(o, c);
            fn += cm.at(c, o);
        }
        trace += tp;
        if (tp + fp + fn == 0) continue;  // class absent from gt and pred
        ++present;
        m.iou[c] = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
        const double denom = static_cast<double>(2 * tp + fp + fn);
        m.f1[c] = denom == 0.0 ? 0.0 : 2.0 * static_cast<double>(tp) / denom;
        iou_sum += m.iou[c];
        f1_sum += m.f1[c];
    }
    const long long total = cm.total();
    m.accuracy = total == 0 ? 1.0 : static_cast<double>(trace) / static_cast<double>(total);
    m.miou = present == 0 ? 1.0 : iou_sum / static_cast<double>(present);
    m.mean_f1 = present == 0 ? 1.0 : f1_sum / static_cast<double>(present);
    return m;
}

SegMetrics segmentation_metrics(const std::vector<int>& gt, const std::vector<int>& pred,
                                std::size_t labels) {
    ConfusionMatrix cm(labels);
    cm.add_maps(gt, pred);
    return segmentation_metrics(cm);
}

double mask_iou(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
    if (a.size() != b.size()) throw InputError("mask sizes disagree");
    long long inter = 0, uni = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const bool ai = a[i] != 0, bi = b[i] != 0;
        inter += ai && bi;
        uni += ai || bi;
    }
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

void validate_segments(const std::vector<Segment>& segs, const char* side) {
    for (std::size_t i = 0; i < segs.size(); ++i) {
        bool any = false;
        for (std::uint8_t v : segs[i].mask) any = any || v;
        if (!any)
            throw InputError(std::string(side) + " segment " + std::to_string(i) +
                             " has an empty mask");
        for (std::size_t j = i + 1; j < segs.size(); ++j) {
            if (segs[i].cls != segs[j].cls) continue;
            if (segs[i].mask.size() != segs[j].mask.size())
                throw InputError("segment masks differ in size");
            for (std::size_t p = 0; p < segs[i].mask.size(); ++p)
                if (segs[i].mask[p] && segs[j].mask[p])
                    throw InputError(std::string(side) + " segments " + std::to_string(i) +
                                     " and " + std::to_string(j) +
                                     " of one class overlap");
        }
    }
}

}  // namespace

PqResult panoptic_quality(const std::vector<Segment>& pred, const std::vector<Segment>& gt,
                          const std::set<int>& thing_classes) {
    validate_segments(pred, "predicted");
    validate_segments(gt, "ground-truth");

    // IoU > 0.5 forces a unique match per segment: two disjoint same-class
    // masks cannot both cover more than half of the same target.
    std::vector<bool> gt_matched(gt.size(), false);
    PqCounts all, thing, stuff;
    for (const Segment& p : pred) {
        const bool is_thing = thing_classes.count(p.cls) != 0;
        PqCounts& split = is_thing ? thing : stuff;
        double found = 0.0;
        for (std::size_t j = 0; j < gt.size(); ++j) {
            if (gt[j].cls != p.cls || gt_matched[j]) continue;
            const double iou = mask_iou(p.mask, gt[j].mask);
            if (iou > 0.5) {
                gt_matched[j] = true;
                found = iou;
                break;
            }
        }
        if (found > 0.0) {
            ++all.tp;
            ++split.tp;
            all.iou_sum += found;
            split.iou_sum += found;
        } else {
            ++all.fp;
            ++split.fp;
        }
    }
    for (std::size_t j = 0; j < gt.size(); ++j) {
        if (gt_matched[j]) continue;
        ++all.fn;
        (thing_classes.count(gt[j].cls) ? thing : stuff).fn++;
    }

    PqResult r;
    r.pq = all.pq();
    r.pq_thing = thing.pq();
    r.pq_stuff = stuff.pq();
    r.all = all;
    r.thing = thing;
    r.stuff = stuff;
    return r;
}

}  // namespace graphonomy
