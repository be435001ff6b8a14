#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "graphonomy/metrics.hpp"
#include "graphonomy/rng.hpp"

using namespace graphonomy;

namespace {

// Exhaustive-assignment PQ oracle for micro scenes: tries every injective
// matching between equal-class pairs with IoU > 0.5 and maximizes the summed
// IoU. Matched IoUs are re-summed in prediction order so the result is
// bit-identical to the sequential implementation.
double oracle_pq(const std::vector<Segment>& pred, const std::vector<Segment>& gt) {
    std::vector<int> assign(pred.size(), -1), best_assign;
    double best_sum = -1.0;
    std::vector<bool> used(gt.size(), false);

    std::function<void(std::size_t)> rec = [&](std::size_t i) {
        if (i == pred.size()) {
            double s = 0.0;
            std::size_t tp = 0;
            for (std::size_t p = 0; p < pred.size(); ++p)
                if (assign[p] >= 0) {
                    s += mask_iou(pred[p].mask, gt[static_cast<std::size_t>(assign[p])].mask);
                    ++tp;
                }
            if (s > best_sum || (s == best_sum && best_assign.empty())) {
                best_sum = s;
                best_assign = assign;
            }
            (void)tp;
            return;
        }
        rec(i + 1);  // leave pred i unmatched
        for (std::size_t j = 0; j < gt.size(); ++j) {
            if (used[j] || gt[j].cls != pred[i].cls) continue;
            if (mask_iou(pred[i].mask, gt[j].mask) <= 0.5) continue;
            used[j] = true;
            assign[i] = static_cast<int>(j);
            rec(i + 1);
            assign[i] = -1;
            used[j] = false;
        }
    };
    rec(0);

    std::size_t tp = 0;
    double iou_sum = 0.0;
    for (std::size_t p = 0; p < pred.size(); ++p)
        if (!best_assign.empty() && best_assign[p] >= 0) {
            iou_sum += mask_iou(pred[p].mask, gt[static_cast<std::size_t>(best_assign[p])].mask);
            ++tp;
        }
    const std::size_t fp = pred.size() - tp;
    const std::size_t fn = gt.size() - tp;
    const double denom = double(tp) + 0.5 * double(fp) + 0.5 * double(fn);
    return denom == 0.0 ? 1.0 : iou_sum / denom;
}

// Random micro scene: pixels partitioned into up to `max_segments` segments
// (plus void); same-class masks are disjoint by construction.
std::vector<Segment> random_segments(Rng& rng, std::size_t h, std::size_t w,
                                     std::size_t max_segments) {
    const std::size_t k = rng.below(max_segments + 1);
    std::vector<Segment> segs(k);
    for (std::size_t i = 0; i < k; ++i) {
        segs[i].mask.assign(h * w, 0);
        segs[i].cls = static_cast<int>(rng.below(3));
        segs[i].identity = static_cast<int>(i);
    }
    if (k > 0)
        for (std::size_t p = 0; p < h * w; ++p) {
            const std::size_t pick = rng.below(k + 1);  // k = void
            if (pick < k) segs[pick].mask[p] = 1;
        }
    std::vector<Segment> out;
    for (auto& s : segs) {
        bool any = false;
        for (auto v : s.mask) any = any || v;
        if (any) out.push_back(std::move(s));
    }
    return out;
}

}  // namespace

TEST_CASE("segmentation metrics on a perfect prediction") {
    SegMetrics m = segmentation_metrics({0, 1, 2, 1}, {0, 1, 2, 1}, 3);
    CHECK(m.miou == 1.0);
    CHECK(m.accuracy == 1.0);
    CHECK(m.mean_f1 == 1.0);
}

TEST_CASE("hand-counted 2-class example") {
    SegMetrics m = segmentation_metrics({0, 0, 1, 1}, {0, 1, 1, 1}, 2);
    CHECK(m.iou[0] == doctest::Approx(0.5));
    CHECK(m.iou[1] == doctest::Approx(2.0 / 3.0));
    CHECK(m.miou == doctest::Approx(7.0 / 12.0));
    CHECK(m.accuracy == doctest::Approx(0.75));
    CHECK(m.f1[0] == doctest::Approx(2.0 / 3.0));
    CHECK(m.f1[1] == doctest::Approx(0.8));
    CHECK(m.mean_f1 == doctest::Approx(11.0 / 15.0));
}

TEST_CASE("classes absent from gt and pred are excluded from the means") {
    // label 2 never appears; mIoU averages over {0, 1} only
    SegMetrics m = segmentation_metrics({0, 0, 1, 1}, {0, 0, 1, 1}, 3);
    CHECK(m.miou == 1.0);
    CHECK(m.iou[2] == -1.0);
}

TEST_CASE("metrics are invariant under a consistent class relabeling") {
    Rng rng(60);
    std::vector<int> gt(50), pred(50);
    for (auto& v : gt) v = static_cast<int>(rng.below(4));
    for (auto& v : pred) v = static_cast<int>(rng.below(4));
    SegMetrics base = segmentation_metrics(gt, pred, 4);

    const int perm[4] = {2, 3, 1, 0};
    std::vector<int> gt2(50), pred2(50);
    for (std::size_t i = 0; i < 50; ++i) {
        gt2[i] = perm[gt[i]];
        pred2[i] = perm[pred[i]];
    }
    SegMetrics remapped = segmentation_metrics(gt2, pred2, 4);
    CHECK(base.miou == doctest::Approx(remapped.miou).epsilon(1e-15));
    CHECK(base.accuracy == doctest::Approx(remapped.accuracy).epsilon(1e-15));
    CHECK(base.mean_f1 == doctest::Approx(remapped.mean_f1).epsilon(1e-15));
}

TEST_CASE("confusion matrices merge additively") {
    ConfusionMatrix a(2), b(2);
    a.add_maps({0, 0}, {0, 1});
    b.add_maps({1, 1}, {1, 1});
    a.merge(b);
    CHECK(a.at(0, 0) == 1);
    CHECK(a.at(0, 1) == 1);
    CHECK(a.at(1, 1) == 2);
    CHECK(a.total() == 4);
}

TEST_CASE("panoptic quality basic examples") {
    // identical prediction: PQ = 1
    Segment s{{1, 1, 0, 0}, 0, 1};
    CHECK(panoptic_quality({s}, {s}, {0}).pq == 1.0);

    // IoU = 0.6 match: pred covers 3 of gt's 5 pixels
    Segment gt5{{1, 1, 1, 1, 1, 0}, 0, 1};
    Segment pred3{{1, 1, 1, 0, 0, 0}, 0, 9};
    PqResult r = panoptic_quality({pred3}, {gt5}, {0});
    CHECK(r.all.tp == 1);
    CHECK(r.pq == doctest::Approx(0.6).epsilon(1e-15));

    // empty prediction: one FN, PQ = 0
    PqResult miss = panoptic_quality({}, {gt5}, {0});
    CHECK(miss.all.fn == 1);
    CHECK(miss.pq == 0.0);

    // both empty: vacuous perfection
    CHECK(panoptic_quality({}, {}, {}).pq == 1.0);
}

TEST_CASE("IoU exactly one half does not match") {
    Segment gt{{1, 1, 0, 0}, 0, 1};
    Segment pred{{1, 0, 1, 0}, 0, 2};  // intersection 1, union 3 -> 1/3
    CHECK(panoptic_quality({pred}, {gt}, {}).all.tp == 0);

    Segment half_gt{{1, 1, 0, 0}, 0, 1};
    Segment half_pred{{1, 1, 1, 1}, 0, 2};  // IoU = 2/4 = 0.5 exactly
    PqResult r = panoptic_quality({half_pred}, {half_gt}, {});
    CHECK(r.all.tp == 0);
    CHECK(r.all.fp == 1);
    CHECK(r.all.fn == 1);
}

TEST_CASE("same-class overlap within one side is rejected") {
    Segment a{{1, 1, 0, 0}, 0, 1};
    Segment b{{0, 1, 1, 0}, 0, 2};
    CHECK_THROWS_AS(panoptic_quality({a, b}, {}, {}), InputError);
    // different classes may overlap
    Segment c{{0, 1, 1, 0}, 1, 2};
    CHECK_NOTHROW(panoptic_quality({a, c}, {a, c}, {}));
}

TEST_CASE("thing/stuff split accounts classes separately") {
    Segment thing_gt{{1, 1, 0, 0}, 5, 1};
    Segment stuff_gt{{0, 0, 1, 1}, 7, 0};
    // thing matched perfectly, stuff missed
    PqResult r = panoptic_quality({thing_gt}, {thing_gt, stuff_gt}, {5});
    CHECK(r.pq_thing == 1.0);
    CHECK(r.pq_stuff == 0.0);
    CHECK(r.pq == doctest::Approx(1.0 / 1.5));
}

TEST_CASE("matching is independent of segment order") {
    Rng rng(61);
    for (int trial = 0; trial < 30; ++trial) {
        std::vector<Segment> gt = random_segments(rng, 3, 3, 3);
        std::vector<Segment> pred = random_segments(rng, 3, 3, 3);
        const double pq1 = panoptic_quality(pred, gt, {0}).pq;
        std::reverse(pred.begin(), pred.end());
        std::reverse(gt.begin(), gt.end());
        const double pq2 = panoptic_quality(pred, gt, {0}).pq;
        CHECK(pq1 == doctest::Approx(pq2).epsilon(1e-15));
    }
}

TEST_CASE("PQ equals the exhaustive-assignment oracle on random micro scenes") {
    Rng rng(62);
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t h = 1 + rng.below(3), w = 1 + rng.below(3);
        std::vector<Segment> gt = random_segments(rng, h, w, 3);
        std::vector<Segment> pred = random_segments(rng, h, w, 3);
        const double fast = panoptic_quality(pred, gt, {0}).pq;
        const double slow = oracle_pq(pred, gt);
        CHECK(fast == slow);  // exact, not approximate
    }
}
