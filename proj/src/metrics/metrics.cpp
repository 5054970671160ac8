#include "nseg/metrics/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <unordered_map>

namespace nseg::metrics {

InstanceLabelMap::InstanceLabelMap(std::int64_t height, std::int64_t width, std::vector<std::int32_t> labels)
    : height_(height), width_(width), labels_(std::move(labels)) {
    if (height < 0 || width < 0 || static_cast<std::int64_t>(labels_.size()) != height * width)
        throw ShapeError("label map of " + std::to_string(labels_.size()) + " values does not fit " +
                         std::to_string(height) + "x" + std::to_string(width));
    std::int32_t max_label = 0;
    for (auto v : labels_) {
        if (v < 0) throw InputError("label map contains negative label " + std::to_string(v));
        max_label = std::max(max_label, v);
    }
    std::vector<bool> seen(static_cast<std::size_t>(max_label) + 1, false);
    for (auto v : labels_) seen[static_cast<std::size_t>(v)] = true;
    for (std::int32_t k = 1; k <= max_label; ++k)
        if (!seen[static_cast<std::size_t>(k)])
            throw InputError("label map skips instance " + std::to_string(k) + " (max label " +
                             std::to_string(max_label) + ")");
    num_instances_ = max_label;
}

InstanceLabelMap InstanceLabelMap::compacted(std::int64_t height, std::int64_t width, std::vector<std::int32_t> labels) {
    std::unordered_map<std::int32_t, std::int32_t> remap;
    for (auto& v : labels) {
        if (v <= 0) {
            if (v < 0) throw InputError("label map contains negative label " + std::to_string(v));
            continue;
        }
        auto [it, fresh] = remap.try_emplace(v, static_cast<std::int32_t>(remap.size()) + 1);
        v = it->second;
    }
    return InstanceLabelMap(height, width, std::move(labels));
}

std::vector<std::int64_t> InstanceLabelMap::areas() const {
    std::vector<std::int64_t> out(static_cast<std::size_t>(num_instances_) + 1, 0);
    for (auto v : labels_) ++out[static_cast<std::size_t>(v)];
    return out;
}

std::vector<std::int64_t> InstanceLabelMap::pixels_of(std::int32_t k) const {
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < labels_.size(); ++i)
        if (labels_[i] == k) out.push_back(static_cast<std::int64_t>(i));
    return out;
}

ThresholdSweep ThresholdSweep::standard() {
    ThresholdSweep s;
    // Built from integers so every threshold is the nearest double to its decimal.
    for (int i = 0; i < 10; ++i) s.thresholds.push_back((50 + 5 * i) / 100.0);
    return s;
}

void ThresholdSweep::validate() const {
    if (thresholds.empty()) throw ConfigError("threshold sweep is empty");
    for (std::size_t i = 0; i < thresholds.size(); ++i) {
        if (!(thresholds[i] > 0.0 && thresholds[i] < 1.0))
            throw ConfigError("threshold " + std::to_string(thresholds[i]) + " is outside (0, 1)");
        if (i > 0 && !(thresholds[i] > thresholds[i - 1])) throw ConfigError("thresholds must be strictly increasing");
    }
}

const char* to_string(MatchMode m) { return m == MatchMode::greedy ? "greedy" : "optimal"; }

MatchMode parse_match_mode(const std::string& name) {
    if (name == "greedy") return MatchMode::greedy;
    if (name == "optimal") return MatchMode::optimal;
    throw ConfigError("unknown matching mode '" + name + "' (expected one of: greedy, optimal)");
}

double iou(std::span<const std::int64_t> a, std::span<const std::int64_t> b) {
    if (a.empty() && b.empty()) throw InputError("IoU is undefined for two empty pixel sets");
    std::size_t i = 0, j = 0;
    std::int64_t inter = 0;
    while (i < a.size() && j < b.size()) {
        if (a[i] < b[j]) {
            ++i;
        } else if (b[j] < a[i]) {
            ++j;
        } else {
            ++inter;
            ++i;
            ++j;
        }
    }
    const auto uni = static_cast<std::int64_t>(a.size() + b.size()) - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

OverlapTable::OverlapTable(const InstanceLabelMap& pred, const InstanceLabelMap& gt)
    : num_pred_(pred.num_instances()), num_gt_(gt.num_instances()) {
    if (pred.height() != gt.height() || pred.width() != gt.width())
        throw ShapeError("prediction " + std::to_string(pred.height()) + "x" + std::to_string(pred.width()) +
                         " and ground truth " + std::to_string(gt.height()) + "x" + std::to_string(gt.width()) +
                         " differ in size");
    const auto pa = pred.areas();
    const auto ga = gt.areas();
    const auto pl = pred.labels();
    const auto gl = gt.labels();
    std::unordered_map<std::int64_t, std::int64_t> inter;
    const std::int64_t stride = static_cast<std::int64_t>(num_gt_) + 1;
    for (std::size_t i = 0; i < pl.size(); ++i)
        if (pl[i] > 0 && gl[i] > 0) ++inter[pl[i] * stride + gl[i]];
    overlaps_.reserve(inter.size());
    for (const auto& [key, n] : inter) {
        const auto p = static_cast<std::int32_t>(key / stride);
        const auto g = static_cast<std::int32_t>(key % stride);
        const auto uni = pa[static_cast<std::size_t>(p)] + ga[static_cast<std::size_t>(g)] - n;
        overlaps_.push_back({p, g, static_cast<double>(n) / static_cast<double>(uni)});
    }
    std::sort(overlaps_.begin(), overlaps_.end(),
              [](const MatchPair& a, const MatchPair& b) { return a.pred != b.pred ? a.pred < b.pred : a.gt < b.gt; });
}

namespace {

std::vector<MatchPair> greedy_pairs(std::vector<MatchPair> cand, std::int32_t np, std::int32_t ng) {
    std::stable_sort(cand.begin(), cand.end(), [](const MatchPair& a, const MatchPair& b) { return a.iou > b.iou; });
    std::vector<bool> pu(static_cast<std::size_t>(np) + 1, false), gu(static_cast<std::size_t>(ng) + 1, false);
    std::vector<MatchPair> out;
    for (const auto& c : cand) {
        if (pu[static_cast<std::size_t>(c.pred)] || gu[static_cast<std::size_t>(c.gt)]) continue;
        pu[static_cast<std::size_t>(c.pred)] = gu[static_cast<std::size_t>(c.gt)] = true;
        out.push_back(c);
    }
    return out;
}

// Augmenting-path bipartite matching over the candidate edges.
std::vector<MatchPair> max_cardinality_pairs(const std::vector<MatchPair>& cand, std::int32_t np, std::int32_t ng) {
    std::vector<std::vector<std::size_t>> adj(static_cast<std::size_t>(np) + 1);
    for (std::size_t e = 0; e < cand.size(); ++e) adj[static_cast<std::size_t>(cand[e].pred)].push_back(e);
    for (auto& edges : adj)
        std::stable_sort(edges.begin(), edges.end(),
                         [&](std::size_t a, std::size_t b) { return cand[a].iou > cand[b].iou; });

    std::vector<std::int64_t> gt_edge(static_cast<std::size_t>(ng) + 1, -1);
    std::vector<int> visited(static_cast<std::size_t>(ng) + 1, -1);
    std::function<bool(std::int32_t, int)> augment = [&](std::int32_t p, int stamp) {
        for (auto e : adj[static_cast<std::size_t>(p)]) {
            const auto g = static_cast<std::size_t>(cand[e].gt);
            if (visited[g] == stamp) continue;
            visited[g] = stamp;
            if (gt_edge[g] < 0 || augment(cand[static_cast<std::size_t>(gt_edge[g])].pred, stamp)) {
                gt_edge[g] = static_cast<std::int64_t>(e);
                return true;
            }
        }
        return false;
    };
    for (std::int32_t p = 1; p <= np; ++p) augment(p, p);

    std::vector<MatchPair> out;
    for (auto e : gt_edge)
        if (e >= 0) out.push_back(cand[static_cast<std::size_t>(e)]);
    std::sort(out.begin(), out.end(), [](const MatchPair& a, const MatchPair& b) { return a.pred < b.pred; });
    return out;
}

}  // namespace

MatchResult OverlapTable::match(double t, MatchMode mode) const {
    std::vector<MatchPair> cand;
    for (const auto& o : overlaps_)
        if (o.iou > t) cand.push_back(o);
    MatchResult r;
    r.pairs = mode == MatchMode::greedy ? greedy_pairs(std::move(cand), num_pred_, num_gt_)
                                        : max_cardinality_pairs(cand, num_pred_, num_gt_);
    r.tp = static_cast<std::int64_t>(r.pairs.size());
    r.fp = num_pred_ - r.tp;
    r.fn = num_gt_ - r.tp;
    return r;
}

MatchResult match_instances(const InstanceLabelMap& pred, const InstanceLabelMap& gt, double t, MatchMode mode) {
    return OverlapTable(pred, gt).match(t, mode);
}

double precision_at(const MatchResult& m) {
    const auto denom = m.tp + m.fp + m.fn;
    if (denom == 0) return 1.0;
    return static_cast<double>(m.tp) / static_cast<double>(denom);
}

ImageScore score_image(const InstanceLabelMap& pred, const InstanceLabelMap& gt, const ThresholdSweep& sweep,
                       MatchMode mode) {
    sweep.validate();
    const OverlapTable table(pred, gt);
    ImageScore s;
    s.num_pred = pred.num_instances();
    s.num_gt = gt.num_instances();
    for (double t : sweep.thresholds) s.precisions.push_back(precision_at(table.match(t, mode)));
    double sum = 0.0;
    for (double p : s.precisions) sum += p;
    s.map = sum / static_cast<double>(s.precisions.size());
    return s;
}

double map_image(const InstanceLabelMap& pred, const InstanceLabelMap& gt, const ThresholdSweep& sweep,
                 MatchMode mode) {
    return score_image(pred, gt, sweep, mode).map;
}

namespace {

double pairwise_sum(std::span<const double> v) {
    if (v.size() <= 8) {
        double s = 0.0;
        for (double x : v) s += x;
        return s;
    }
    const auto half = v.size() / 2;
    return pairwise_sum(v.first(half)) + pairwise_sum(v.subspan(half));
}

}  // namespace

double map_dataset(std::span<const double> per_image) {
    if (per_image.empty()) throw ConfigError("cannot average mAP over zero images");
    return pairwise_sum(per_image) / static_cast<double>(per_image.size());
}

InstanceLabelMap connected_components(std::span<const float> prob, std::int64_t height, std::int64_t width,
                                      double threshold) {
    if (height < 0 || width < 0 || static_cast<std::int64_t>(prob.size()) != height * width)
        throw ShapeError("probability map of " + std::to_string(prob.size()) + " values does not fit " +
                         std::to_string(height) + "x" + std::to_string(width));
    std::vector<std::int32_t> labels(prob.size(), 0);
    std::vector<std::int64_t> stack;
    std::int32_t next = 0;
    for (std::int64_t start = 0; start < height * width; ++start) {
        if (labels[static_cast<std::size_t>(start)] != 0 || !(prob[static_cast<std::size_t>(start)] > threshold))
            continue;
        ++next;
        labels[static_cast<std::size_t>(start)] = next;
        stack.push_back(start);
        while (!stack.empty()) {
            const auto idx = stack.back();
            stack.pop_back();
            const auto y = idx / width, x = idx % width;
            for (std::int64_t dy = -1; dy <= 1; ++dy)
                for (std::int64_t dx = -1; dx <= 1; ++dx) {
                    const auto ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= height || nx < 0 || nx >= width) continue;
                    const auto n = static_cast<std::size_t>(ny * width + nx);
                    if (labels[n] != 0 || !(prob[n] > threshold)) continue;
                    labels[n] = next;
                    stack.push_back(static_cast<std::int64_t>(n));
                }
        }
    }
    return InstanceLabelMap(height, width, std::move(labels));
}

}  // namespace nseg::metrics
