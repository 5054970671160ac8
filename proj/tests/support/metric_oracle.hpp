#pragma once

// Brute-force reference for the instance metric: explicit pixel sets,
// set-intersection IoU and exhaustive one-to-one assignment. Shares no code
// with the library's overlap table or greedy matcher.

#include <algorithm>
#include <array>
#include <cstdint>
#include <iterator>
#include <random>
#include <set>
#include <utility>
#include <vector>

#include "nseg/metrics/metrics.hpp"

namespace nseg::check {

using PixelSet = std::set<std::int64_t>;

inline std::vector<PixelSet> instance_sets(const std::vector<std::int32_t>& labels) {
    std::int32_t k = 0;
    for (auto v : labels) k = std::max(k, v);
    std::vector<PixelSet> sets(static_cast<std::size_t>(k));
    for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] > 0) sets[static_cast<std::size_t>(labels[i] - 1)].insert(static_cast<std::int64_t>(i));
    return sets;
}

inline double oracle_iou(const PixelSet& a, const PixelSet& b) {
    std::vector<std::int64_t> inter, uni;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
    return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

// Largest number of one-to-one pairs with IoU > t, by trying every assignment.
inline int exhaustive_tp(const std::vector<std::vector<double>>& ious, double t, std::size_t p,
                         std::vector<bool>& gt_used) {
    if (p == ious.size()) return 0;
    int best = exhaustive_tp(ious, t, p + 1, gt_used);  // leave prediction p unmatched
    for (std::size_t g = 0; g < gt_used.size(); ++g) {
        if (gt_used[g] || !(ious[p][g] > t)) continue;
        gt_used[g] = true;
        best = std::max(best, 1 + exhaustive_tp(ious, t, p + 1, gt_used));
        gt_used[g] = false;
    }
    return best;
}

inline double oracle_map(const std::vector<std::int32_t>& pred, const std::vector<std::int32_t>& gt) {
    const auto ps = instance_sets(pred);
    const auto gs = instance_sets(gt);
    std::vector<std::vector<double>> ious(ps.size(), std::vector<double>(gs.size(), 0.0));
    for (std::size_t i = 0; i < ps.size(); ++i)
        for (std::size_t j = 0; j < gs.size(); ++j) ious[i][j] = oracle_iou(ps[i], gs[j]);
    double sum = 0.0;
    for (int step = 0; step < 10; ++step) {
        const double t = (50 + 5 * step) / 100.0;
        std::vector<bool> used(gs.size(), false);
        const int tp = exhaustive_tp(ious, t, 0, used);
        const int fp = static_cast<int>(ps.size()) - tp;
        const int fn = static_cast<int>(gs.size()) - tp;
        sum += (tp + fp + fn) == 0 ? 1.0 : static_cast<double>(tp) / (tp + fp + fn);
    }
    return sum / 10.0;
}

struct LabelPair {
    std::int64_t h = 0, w = 0;
    std::vector<std::int32_t> pred, gt;
};

// Paints ellipses in random order and renumbers survivors 1..K.
inline std::vector<std::int32_t> paint_ellipses(std::int64_t h, std::int64_t w,
                                                const std::vector<std::array<double, 4>>& shapes) {
    std::vector<std::int32_t> raw(static_cast<std::size_t>(h * w), 0);
    for (std::size_t s = 0; s < shapes.size(); ++s) {
        const auto [cy, cx, ry, rx] = shapes[s];
        for (std::int64_t y = 0; y < h; ++y)
            for (std::int64_t x = 0; x < w; ++x) {
                const double dy = (static_cast<double>(y) - cy) / ry, dx = (static_cast<double>(x) - cx) / rx;
                if (dy * dy + dx * dx <= 1.0) raw[static_cast<std::size_t>(y * w + x)] = static_cast<std::int32_t>(s + 1);
            }
    }
    std::vector<std::int32_t> remap(shapes.size() + 1, 0);
    std::int32_t next = 0;
    for (auto& v : raw) {
        if (v == 0) continue;
        if (remap[static_cast<std::size_t>(v)] == 0) remap[static_cast<std::size_t>(v)] = ++next;
        v = remap[static_cast<std::size_t>(v)];
    }
    return raw;
}

// Ground truth of up to 10 ellipses; the prediction jitters, rescales, drops
// and invents instances so IoUs spread across the whole threshold sweep.
inline LabelPair random_label_pair(std::mt19937_64& rng) {
    std::uniform_int_distribution<std::int64_t> side(8, 64);
    LabelPair out;
    out.h = side(rng);
    out.w = side(rng);
    std::uniform_int_distribution<int> count(0, 10);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = count(rng);
    std::vector<std::array<double, 4>> gt_shapes, pred_shapes;
    const double hh = static_cast<double>(out.h), ww = static_cast<double>(out.w);
    for (int i = 0; i < n; ++i) {
        const double ry = 1.0 + u(rng) * hh / 5.0, rx = 1.0 + u(rng) * ww / 5.0;
        gt_shapes.push_back({u(rng) * hh, u(rng) * ww, ry, rx});
    }
    for (const auto& g : gt_shapes) {
        if (pred_shapes.size() >= 10) break;
        if (u(rng) < 0.15) continue;
        const double jitter = 3.0 * u(rng);
        pred_shapes.push_back({g[0] + jitter * (u(rng) - 0.5), g[1] + jitter * (u(rng) - 0.5),
                               g[2] * (0.7 + 0.6 * u(rng)), g[3] * (0.7 + 0.6 * u(rng))});
    }
    while (pred_shapes.size() < 10 && u(rng) < 0.3)
        pred_shapes.push_back({u(rng) * hh, u(rng) * ww, 1.0 + u(rng) * hh / 6.0, 1.0 + u(rng) * ww / 6.0});
    out.gt = paint_ellipses(out.h, out.w, gt_shapes);
    out.pred = paint_ellipses(out.h, out.w, pred_shapes);
    return out;
}

}  // namespace nseg::check
