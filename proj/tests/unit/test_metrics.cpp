#include <gtest/gtest.h>

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <limits>
#include <random>
#include <set>

#include "metric_oracle.hpp"
#include "nseg/metrics/metrics.hpp"

using namespace nseg;
using namespace nseg::metrics;

namespace {

InstanceLabelMap row_map(std::vector<std::int32_t> labels) {
    const auto w = static_cast<std::int64_t>(labels.size());
    return InstanceLabelMap(1, w, std::move(labels));
}

// Prediction {1,2,3,4} against ground truth {0,1,2,3}: IoU 3/5.
std::pair<InstanceLabelMap, InstanceLabelMap> iou_point_six_pair() {
    return {row_map({0, 1, 1, 1, 1, 0}), row_map({1, 1, 1, 1, 0, 0})};
}

// Recursive 8-connected flood fill; the reference labeling.
std::vector<std::int32_t> flood_fill_labels(const std::vector<int>& fg, int h, int w) {
    std::vector<std::int32_t> lab(fg.size(), 0);
    std::function<void(int, int, std::int32_t)> fill = [&](int y, int x, std::int32_t k) {
        if (y < 0 || y >= h || x < 0 || x >= w) return;
        const auto i = static_cast<std::size_t>(y * w + x);
        if (!fg[i] || lab[i]) return;
        lab[i] = k;
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx)
                if (dy || dx) fill(y + dy, x + dx, k);
    };
    std::int32_t k = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (fg[static_cast<std::size_t>(y * w + x)] && !lab[static_cast<std::size_t>(y * w + x)]) fill(y, x, ++k);
    return lab;
}

}  // namespace

TEST(Iou, BasicCases) {
    const std::vector<std::int64_t> a{0, 1, 2, 3}, b{2, 3, 4, 5}, c{10, 11};
    EXPECT_EQ(iou(a, a), 1.0);
    EXPECT_EQ(iou(a, c), 0.0);
    EXPECT_NEAR(iou(a, b), 2.0 / 6.0, 1e-15);
    EXPECT_EQ(iou(a, b), iou(b, a));
    EXPECT_EQ(iou(a, {}), 0.0);
    EXPECT_THROW(iou({}, {}), InputError);
}

TEST(Iou, SymmetricOnRandomSets) {
    std::mt19937_64 rng(5);
    std::bernoulli_distribution coin(0.3);
    for (int r = 0; r < 50; ++r) {
        std::vector<std::int64_t> a, b;
        for (std::int64_t i = 0; i < 100; ++i) {
            if (coin(rng)) a.push_back(i);
            if (coin(rng)) b.push_back(i);
        }
        if (a.empty() && b.empty()) continue;
        EXPECT_EQ(iou(a, b), iou(b, a));
        EXPECT_DOUBLE_EQ(iou(a, b), check::oracle_iou({a.begin(), a.end()}, {b.begin(), b.end()}));
    }
}

TEST(LabelMap, Invariants) {
    EXPECT_THROW(InstanceLabelMap(1, 3, {0, 2, 2}), InputError);
    EXPECT_THROW(InstanceLabelMap(1, 3, {0, -1, 1}), InputError);
    EXPECT_THROW(InstanceLabelMap(2, 3, {0, 1, 1}), ShapeError);
    const auto m = InstanceLabelMap::compacted(1, 5, {0, 7, 3, 7, 0});
    EXPECT_EQ(m.num_instances(), 2);
    EXPECT_EQ(std::vector<std::int32_t>(m.labels().begin(), m.labels().end()), (std::vector<std::int32_t>{0, 1, 2, 1, 0}));
    EXPECT_EQ(m.areas(), (std::vector<std::int64_t>{2, 2, 1}));
}

TEST(Match, IdenticalMapsMatchEverything) {
    const auto m = row_map({1, 1, 0, 2, 2, 3});
    for (double t : {0.5, 0.75, 0.95}) {
        const auto r = match_instances(m, m, t);
        EXPECT_EQ(r.tp, 3);
        EXPECT_EQ(r.fp, 0);
        EXPECT_EQ(r.fn, 0);
    }
}

TEST(Match, EmptyPrediction) {
    const auto r = match_instances(row_map({0, 0, 0, 0, 0, 0}), row_map({1, 0, 2, 0, 3, 0}), 0.5);
    EXPECT_EQ(r.tp, 0);
    EXPECT_EQ(r.fp, 0);
    EXPECT_EQ(r.fn, 3);
}

TEST(Match, StrictThresholdAtIouPointSix) {
    const auto [pred, gt] = iou_point_six_pair();
    const auto ps = pred.pixels_of(1), gs = gt.pixels_of(1);
    ASSERT_EQ(iou(ps, gs), 0.6);
    const auto hit = match_instances(pred, gt, 0.55);
    EXPECT_EQ(hit.tp, 1);
    const auto miss = match_instances(pred, gt, 0.60);
    EXPECT_EQ(miss.tp, 0);
    EXPECT_EQ(miss.fp, 1);
    EXPECT_EQ(miss.fn, 1);
}

TEST(Match, DimensionMismatch) {
    EXPECT_THROW(match_instances(row_map({1, 0}), row_map({1, 0, 0}), 0.5), ShapeError);
}

TEST(Match, GreedyAndOptimalDivergeBelowOneHalf) {
    // IoU(p1,g1)=3/5, IoU(p1,g2)=1/4, IoU(p2,g1)=1/4. Greedy takes (p1,g1) and
    // strands the rest; optimal pairs (p1,g2) and (p2,g1).
    const auto pred = row_map({1, 1, 1, 1, 2, 0});
    const auto gt = row_map({2, 1, 1, 1, 1, 0});
    EXPECT_EQ(match_instances(pred, gt, 0.15).tp, 1);
    EXPECT_EQ(match_instances(pred, gt, 0.15, MatchMode::optimal).tp, 2);
    // Above one half each instance has at most one partner, so the modes agree.
    for (double t : ThresholdSweep::standard().thresholds)
        EXPECT_EQ(match_instances(pred, gt, t).tp, match_instances(pred, gt, t, MatchMode::optimal).tp);
}

TEST(Precision, Formula) {
    EXPECT_EQ(precision_at({1, 1, 0, {}}), 0.5);
    EXPECT_EQ(precision_at({0, 2, 1, {}}), 0.0);
    EXPECT_EQ(precision_at({2, 1, 1, {}}), 0.5);
    EXPECT_EQ(precision_at({0, 0, 0, {}}), 1.0);
}

TEST(MapImage, WorkedExampleIsExactlyPointTwo) {
    const auto [pred, gt] = iou_point_six_pair();
    const auto s = score_image(pred, gt);
    EXPECT_EQ(s.precisions[0], 1.0);
    EXPECT_EQ(s.precisions[1], 1.0);
    for (std::size_t i = 2; i < s.precisions.size(); ++i) EXPECT_EQ(s.precisions[i], 0.0) << i;
    EXPECT_EQ(s.map, 0.2);
}

TEST(MapImage, PerfectAndEmpty) {
    const auto gt = row_map({1, 1, 0, 2});
    EXPECT_EQ(map_image(gt, gt), 1.0);
    EXPECT_EQ(map_image(row_map({0, 0, 0, 0}), gt), 0.0);
    EXPECT_EQ(map_image(row_map({0, 0, 0, 0}), row_map({0, 0, 0, 0})), 1.0);
}

TEST(MapImage, MatchesBruteForceOracleOnRandomPairs) {
    std::mt19937_64 rng(2024);
    for (int r = 0; r < 100; ++r) {
        const auto lp = check::random_label_pair(rng);
        const InstanceLabelMap pred(lp.h, lp.w, lp.pred), gt(lp.h, lp.w, lp.gt);
        ASSERT_LE(pred.num_instances(), 10);
        ASSERT_LE(gt.num_instances(), 10);
        const double expect = check::oracle_map(lp.pred, lp.gt);
        EXPECT_NEAR(map_image(pred, gt), expect, 1e-12) << "pair " << r;
        EXPECT_NEAR(map_image(pred, gt, ThresholdSweep::standard(), MatchMode::optimal), expect, 1e-12);
    }
}

TEST(MapImage, InvariantsOnRandomPairs) {
    std::mt19937_64 rng(77);
    const auto sweep = ThresholdSweep::standard();
    for (int r = 0; r < 60; ++r) {
        const auto lp = check::random_label_pair(rng);
        const InstanceLabelMap pred(lp.h, lp.w, lp.pred), gt(lp.h, lp.w, lp.gt);
        const OverlapTable table(pred, gt);
        std::int64_t prev_tp = std::numeric_limits<std::int64_t>::max();
        for (double t : sweep.thresholds) {
            const auto m = table.match(t);
            EXPECT_LE(m.tp, prev_tp);
            prev_tp = m.tp;
            EXPECT_EQ(m.tp + m.fp, pred.num_instances());
            EXPECT_EQ(m.tp + m.fn, gt.num_instances());
            std::set<std::int32_t> ps, gs;
            for (const auto& p : m.pairs) {
                EXPECT_TRUE(ps.insert(p.pred).second);
                EXPECT_TRUE(gs.insert(p.gt).second);
            }
        }
        // Relabel the prediction with a random permutation of instance ids.
        std::vector<std::int32_t> perm(static_cast<std::size_t>(pred.num_instances()));
        std::iota(perm.begin(), perm.end(), 1);
        std::shuffle(perm.begin(), perm.end(), rng);
        auto relabeled = lp.pred;
        for (auto& v : relabeled)
            if (v > 0) v = perm[static_cast<std::size_t>(v - 1)];
        EXPECT_EQ(map_image(InstanceLabelMap(lp.h, lp.w, relabeled), gt), map_image(pred, gt));
    }
}

TEST(MapDataset, Mean) {
    const std::vector<double> a{1.0, 0.0};
    EXPECT_EQ(map_dataset(a), 0.5);
    const std::vector<double> b{0.37};
    EXPECT_EQ(map_dataset(b), 0.37);
    EXPECT_THROW(map_dataset(std::vector<double>{}), ConfigError);
}

TEST(MapDataset, TwentyImageRecomputation) {
    std::mt19937_64 rng(9);
    std::vector<double> lib, oracle;
    for (int i = 0; i < 20; ++i) {
        const auto lp = check::random_label_pair(rng);
        lib.push_back(map_image(InstanceLabelMap(lp.h, lp.w, lp.pred), InstanceLabelMap(lp.h, lp.w, lp.gt)));
        oracle.push_back(check::oracle_map(lp.pred, lp.gt));
    }
    long double ref = 0;
    for (double v : oracle) ref += v;
    EXPECT_NEAR(map_dataset(lib), static_cast<double>(ref / 20), 1e-12);
}

TEST(Sweep, StandardAndValidation) {
    const auto s = ThresholdSweep::standard();
    ASSERT_EQ(s.thresholds.size(), 10u);
    EXPECT_EQ(s.thresholds.front(), 0.5);
    EXPECT_EQ(s.thresholds[2], 0.6);
    EXPECT_EQ(s.thresholds.back(), 0.95);
    EXPECT_NO_THROW(s.validate());
    EXPECT_THROW((ThresholdSweep{{0.5, 0.5}}.validate()), ConfigError);
    EXPECT_THROW((ThresholdSweep{{0.0}}.validate()), ConfigError);
    EXPECT_THROW(ThresholdSweep{}.validate(), ConfigError);
}

TEST(ConnectedComponents, Basics) {
    const std::vector<float> zeros(16, 0.f);
    EXPECT_EQ(connected_components(zeros, 4, 4).num_instances(), 0);
    // Two blobs touching only at a corner.
    const std::vector<float> diag{1, 0, 0, 0, 1, 0, 0, 0, 0};
    EXPECT_EQ(connected_components(diag, 3, 3).num_instances(), 1);
    // Strict threshold: exactly 0.5 is background.
    const std::vector<float> half(9, 0.5f);
    EXPECT_EQ(connected_components(half, 3, 3).num_instances(), 0);
    // First-encounter ordering.
    const std::vector<float> two{0, 0, 1, 1, 0, 0};
    const auto m = connected_components(two, 2, 3);
    EXPECT_EQ(m.num_instances(), 2);
    EXPECT_EQ(m.at(0, 2), 1);
    EXPECT_EQ(m.at(1, 0), 2);
}

TEST(ConnectedComponents, MatchesFloodFillOracle) {
    std::mt19937_64 rng(31);
    for (double density : {0.2, 0.4, 0.55}) {
        std::bernoulli_distribution on(density);
        std::vector<int> fg(32 * 32);
        std::vector<float> prob(fg.size());
        for (std::size_t i = 0; i < fg.size(); ++i) {
            fg[i] = on(rng);
            prob[i] = fg[i] ? 0.9f : 0.1f;
        }
        const auto lib = connected_components(prob, 32, 32);
        const auto ref = flood_fill_labels(fg, 32, 32);
        // Equal up to renaming: the label correspondence must be a bijection.
        std::map<std::int32_t, std::int32_t> fwd, bwd;
        for (std::size_t i = 0; i < ref.size(); ++i) {
            const auto a = lib.labels()[i], b = ref[i];
            ASSERT_EQ(a == 0, b == 0);
            if (!a) continue;
            auto [f, fnew] = fwd.try_emplace(a, b);
            auto [g, gnew] = bwd.try_emplace(b, a);
            ASSERT_EQ(f->second, b);
            ASSERT_EQ(g->second, a);
        }
        EXPECT_EQ(static_cast<std::size_t>(lib.num_instances()), fwd.size());
    }
}
