#include <doctest.h>

#include "../support.hpp"
#include "boltpipe/metrics.hpp"

using namespace boltpipe;
using namespace testsupport;

namespace {

using Labels = std::vector<std::uint8_t>;

// Instances as id ranges [begin, end).
Instance range(PointId begin, PointId end) {
    Instance out(end - begin);
    std::iota(out.begin(), out.end(), begin);
    return out;
}

} // namespace

TEST_CASE("iou") {
    const Labels a{1, 1, 0, 0, 1};
    CHECK(iou(a, a, 1) == 1.0);
    CHECK(iou(a, a, 0) == 1.0);
    CHECK(iou(Labels{1, 1, 0, 0}, Labels{0, 0, 1, 1}, 1) == 0.0);
    CHECK(iou(Labels{0, 0}, Labels{0, 0}, 1) == 1.0);
    CHECK_THROWS_AS(iou(Labels{1}, Labels{1, 0}, 1), ContractError);

    // |P∩G| = 50, |P∪G| = 150.
    Labels p(200, 0), g(200, 0);
    for (int i = 0; i < 100; ++i) p[i] = 1;
    for (int i = 50; i < 150; ++i) g[i] = 1;
    CHECK(iou(p, g, 1) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("iou is symmetric and relabeling invariant") {
    std::mt19937_64 rng(3);
    for (int t = 0; t < 200; ++t) {
        Labels p(300), g(300);
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = rng() % 3 == 0;
            g[i] = rng() % 4 == 0;
        }
        Labels pi(p.size()), gi(g.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            pi[i] = 1 - p[i];
            gi[i] = 1 - g[i];
        }
        REQUIRE(iou(p, g, 1) == iou(g, p, 1));
        REQUIRE(iou(p, g, 1) == iou(pi, gi, 0));
        REQUIRE(iou(p, g, 0) == iou(pi, gi, 1));
    }
}

TEST_CASE("extract instances") {
    auto pts = ball(100, {0, 0, 0}, 0.04, 1);
    const auto b = ball(100, {1, 0, 0}, 0.04, 2);
    pts.insert(pts.end(), b.begin(), b.end());
    const auto bg = random_points(100, 3, 0.5);
    pts.insert(pts.end(), bg.begin(), bg.end());
    PointCloud c(pts);
    Labels l(pts.size(), 0);
    for (int i = 0; i < 200; ++i) l[i] = 1;
    const auto inst = extract_instances(c, l);
    REQUIRE(inst.size() == 2);
    CHECK(inst[0] == range(0, 100));
    CHECK(inst[1] == range(100, 200));
    CHECK(extract_instances(c, Labels(pts.size(), 0)).empty());
    Labels forty(pts.size(), 0);
    for (int i = 0; i < 40; ++i) forty[i] = 1;
    CHECK(extract_instances(c, forty).empty());
}

TEST_CASE("instance matching") {
    const std::vector<Instance> gt{range(0, 10), range(10, 20), range(20, 30), range(30, 40), range(40, 50)};
    SUBCASE("perfect prediction") {
        const auto m = match_instances(gt, gt);
        CHECK(m.tp == 5);
        CHECK(m.fp == 0);
        CHECK(m.fn == 0);
    }
    SUBCASE("40% coverage is a miss, 50% a hit") {
        CHECK(match_instances({range(0, 4)}, {range(0, 10)}).fn == 1);
        CHECK(match_instances({range(0, 5)}, {range(0, 10)}).tp == 1);
    }
    SUBCASE("four found, one missed, one spurious") {
        const std::vector<Instance> pred{range(0, 10), range(10, 20), range(20, 30), range(30, 40), range(60, 70)};
        const auto m = match_instances(pred, gt);
        CHECK(m.tp == 4);
        CHECK(m.fp == 1);
        CHECK(m.fn == 1);
    }
    SUBCASE("a prediction spanning two bolts detects both") {
        const auto m = match_instances({range(0, 20)}, {range(0, 10), range(10, 20)});
        CHECK(m.tp == 2);
        CHECK(m.fp == 0);
    }
    SUBCASE("tp + fn always equals the ground-truth count") {
        std::mt19937_64 rng(8);
        for (int t = 0; t < 200; ++t) {
            std::vector<Instance> p;
            for (int k = 0; k < int(rng() % 8); ++k) {
                const PointId s = PointId(rng() % 60);
                p.push_back(range(s, s + 1 + PointId(rng() % 15)));
            }
            const auto m = match_instances(p, gt);
            REQUIRE(m.tp + m.fn == gt.size());
            REQUIRE(m.fp <= p.size());
        }
    }
}

TEST_CASE("precision, recall and f1 reproduce reference detector counts") {
    struct Row {
        std::size_t tp, fp, fn;
        double precision_pct, recall_pct, f1;
    };
    // Ground truth 296 in every row.
    const Row rows[] = {
        {265, 31, 31, 89.53, 89.53, 0.90},  // BoltANN
        {264, 40, 32, 86.84, 89.20, 0.88},  // CanupoBolt
        {287, 17, 9, 94.41, 96.96, 0.96},   // DeepBolt
    };
    for (const Row& r : rows) {
        CHECK(r.tp + r.fn == 296);
        const auto m = precision_recall_f1(r.tp, r.fp, r.fn);
        CHECK(std::abs(100.0 * m.precision - r.precision_pct) <= 0.05);
        CHECK(std::abs(100.0 * m.recall - r.recall_pct) <= 0.05);
        CHECK(std::abs(m.f1 - r.f1) <= 0.005);
    }
    const auto deep = precision_recall_f1(287, 17, 9);
    CHECK(deep.f1 == doctest::Approx(0.9567).epsilon(1e-4));
    const auto zero = precision_recall_f1(0, 0, 0);
    CHECK(zero.precision == 0.0);
    CHECK(zero.recall == 0.0);
    CHECK(zero.f1 == 0.0);
}

TEST_CASE("f1 bounds") {
    for (std::size_t tp = 0; tp < 25; ++tp) {
        for (std::size_t fp = 0; fp < 25; ++fp) {
            for (std::size_t fn = 0; fn < 25; ++fn) {
                const auto m = precision_recall_f1(tp, fp, fn);
                REQUIRE(m.f1 >= 0.0);
                REQUIRE(m.f1 <= 1.0);
                REQUIRE(m.f1 <= std::max(m.precision, m.recall) + 1e-15);
                if (m.precision > 0 && m.recall > 0) {
                    REQUIRE(m.f1 == doctest::Approx(2 * m.precision * m.recall / (m.precision + m.recall)));
                }
            }
        }
    }
}

TEST_CASE("evaluate aligns clouds by coordinates") {
    auto pts = ball(100, {0, 0, 0}, 0.04, 1);
    const auto b = ball(100, {1, 0, 0}, 0.04, 2);
    pts.insert(pts.end(), b.begin(), b.end());
    const auto bg = random_points(300, 3, 0.5);
    for (const auto& p : bg) pts.push_back(p + Vec3{3, 3, 3});
    PointCloud gt(pts);
    Labels gl(pts.size(), 0);
    for (int i = 0; i < 200; ++i) gl[i] = 1;
    gt.set_labels(gl);

    SUBCASE("identical labels") {
        const EvalReport r = evaluate(gt, gt);
        CHECK(r.iou_bolt == 1.0);
        CHECK(r.iou_background == 1.0);
        CHECK(r.tp == 2);
        CHECK(r.f1 == 1.0);
    }
    SUBCASE("prediction on a shuffled subset") {
        // Keep the first bolt and the background, in reverse order.
        std::vector<PointId> keep;
        for (PointId i = 0; i < 100; ++i) keep.push_back(i);
        for (PointId i = 200; i < pts.size(); ++i) keep.push_back(i);
        std::reverse(keep.begin(), keep.end());
        PointCloud pred = gt.subset(keep);
        const EvalReport r = evaluate(pred, gt);
        CHECK(r.points == pts.size());
        CHECK(r.unmatched_pred_points == 0);
        CHECK(r.iou_bolt == doctest::Approx(0.5));
        CHECK(r.tp == 1);
        CHECK(r.fn == 1);
        CHECK(r.fp == 0);
        CHECK(r.gt_instances == 2);
        CHECK(r.pred_instances == 1);
    }
    SUBCASE("points absent from the ground truth are counted") {
        std::vector<Vec3> extra = pts;
        extra.push_back({9, 9, 9});
        PointCloud pred(extra);
        Labels pl = gl;
        pl.push_back(1);
        pred.set_labels(pl);
        CHECK(evaluate(pred, gt).unmatched_pred_points == 1);
    }
    SUBCASE("unlabeled inputs are rejected") {
        CHECK_THROWS_AS(evaluate(PointCloud(pts), gt), ContractError);
    }
}
