#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nseg/core/error.hpp"

namespace nseg::metrics {

// H x W integer labels, 0 = background, k in 1..num_instances = instance k.
// Every label in that range occurs at least once.
class InstanceLabelMap {
public:
    InstanceLabelMap() = default;
    // Validates the invariants; throws InputError if labels are negative or
    // a label in 1..max is missing.
    InstanceLabelMap(std::int64_t height, std::int64_t width, std::vector<std::int32_t> labels);

    // Renumbers arbitrary non-negative labels to 1..K in first-encounter
    // (row-major) order.
    static InstanceLabelMap compacted(std::int64_t height, std::int64_t width, std::vector<std::int32_t> labels);

    std::int64_t height() const noexcept { return height_; }
    std::int64_t width() const noexcept { return width_; }
    std::int32_t num_instances() const noexcept { return num_instances_; }
    std::span<const std::int32_t> labels() const noexcept { return labels_; }
    std::int32_t at(std::int64_t y, std::int64_t x) const { return labels_[static_cast<std::size_t>(y * width_ + x)]; }

    // Pixel areas indexed by label (index 0 = background).
    std::vector<std::int64_t> areas() const;
    // Sorted flat pixel indices of instance k.
    std::vector<std::int64_t> pixels_of(std::int32_t k) const;

private:
    std::int64_t height_ = 0, width_ = 0;
    std::int32_t num_instances_ = 0;
    std::vector<std::int32_t> labels_;
};

struct ThresholdSweep {
    std::vector<double> thresholds;

    // 0.50, 0.55, ..., 0.95
    static ThresholdSweep standard();
    // Strictly increasing, all in (0, 1); throws ConfigError otherwise.
    void validate() const;
};

struct MatchPair {
    std::int32_t pred = 0, gt = 0;
    double iou = 0.0;
};

struct MatchResult {
    std::int64_t tp = 0, fp = 0, fn = 0;
    std::vector<MatchPair> pairs;
};

enum class MatchMode {
    greedy,   // descending IoU, one-to-one
    optimal,  // maximum number of one-to-one pairs above the threshold
};

const char* to_string(MatchMode m);
MatchMode parse_match_mode(const std::string& name);

// |a ∩ b| / |a ∪ b| for sorted, duplicate-free flat pixel indices.
// Throws InputError when both sets are empty.
double iou(std::span<const std::int64_t> a, std::span<const std::int64_t> b);

// Nonzero pairwise overlaps between two label maps, computed in one pixel pass.
class OverlapTable {
public:
    OverlapTable(const InstanceLabelMap& pred, const InstanceLabelMap& gt);

    std::int32_t num_pred() const noexcept { return num_pred_; }
    std::int32_t num_gt() const noexcept { return num_gt_; }
    // Pairs with nonzero intersection, sorted by (pred, gt).
    const std::vector<MatchPair>& overlaps() const noexcept { return overlaps_; }

    // Pairs strictly above threshold `t`, one-to-one.
    MatchResult match(double t, MatchMode mode = MatchMode::greedy) const;

private:
    std::int32_t num_pred_ = 0, num_gt_ = 0;
    std::vector<MatchPair> overlaps_;
};

// Throws ShapeError if dimensions differ.
MatchResult match_instances(const InstanceLabelMap& pred, const InstanceLabelMap& gt, double t,
                            MatchMode mode = MatchMode::greedy);

// tp / (tp + fp + fn); 1.0 when all three are zero.
double precision_at(const MatchResult& m);

struct ImageScore {
    std::int32_t num_pred = 0, num_gt = 0;
    std::vector<double> precisions;  // one per threshold
    double map = 0.0;
};

ImageScore score_image(const InstanceLabelMap& pred, const InstanceLabelMap& gt,
                       const ThresholdSweep& sweep = ThresholdSweep::standard(), MatchMode mode = MatchMode::greedy);

double map_image(const InstanceLabelMap& pred, const InstanceLabelMap& gt,
                 const ThresholdSweep& sweep = ThresholdSweep::standard(), MatchMode mode = MatchMode::greedy);

// Mean of per-image values using pairwise summation. Throws ConfigError on empty input.
double map_dataset(std::span<const double> per_image);

// Pixels strictly above `threshold`, 8-connected, labeled in first-encounter order.
InstanceLabelMap connected_components(std::span<const float> prob, std::int64_t height, std::int64_t width,
                                      double threshold = 0.5);

}  // namespace nseg::metrics
