#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "nseg/data/image.hpp"
#include "nseg/metrics/metrics.hpp"

namespace nseg::data {

// H x W binary mask with values 0/1.
struct Mask {
    std::int64_t h = 0, w = 0;
    std::vector<std::uint8_t> px;

    Mask() = default;
    Mask(std::int64_t h_, std::int64_t w_) : h(h_), w(w_), px(static_cast<std::size_t>(h_ * w_), 0) {}

    std::uint8_t& at(std::int64_t y, std::int64_t x) { return px[static_cast<std::size_t>(y * w + x)]; }
    std::uint8_t at(std::int64_t y, std::int64_t x) const { return px[static_cast<std::size_t>(y * w + x)]; }
    std::int64_t count() const;

    friend bool operator==(const Mask&, const Mask&) = default;
};

struct MergedMasks {
    Mask merged;
    metrics::InstanceLabelMap labels;
};

// Union of the masks plus a label map where mask k (0-based) becomes label k+1;
// overlapping pixels go to the lower index. Instances wholly covered by
// earlier masks vanish and later labels shift down to stay contiguous.
// Throws ShapeError on dimension mismatch, InputError on an empty mask.
MergedMasks merge_masks(const std::vector<Mask>& masks, std::int64_t h, std::int64_t w);

struct Sample {
    std::string image_id;
    Image8 image;  // H x W x 3
    std::vector<Mask> instance_masks;
    Mask merged_mask;
    metrics::InstanceLabelMap instance_labels;
};

// Builds a Sample, deriving the merged mask and labels. Gray images are
// expanded to 3 channels.
Sample make_sample(std::string image_id, Image8 image, std::vector<Mask> masks);

struct LoadIssue {
    std::string image_id;
    std::string message;
};

struct LoadResult {
    std::vector<Sample> samples;  // sorted by image_id
    std::vector<LoadIssue> issues;
};

// Reads <root>/<id>/images/<id>.png and <root>/<id>/masks/*.png. Per-sample
// problems are collected in `issues`; zero loadable samples is a ConfigError.
LoadResult load_dsb(const std::filesystem::path& root);

// Writes samples in the same layout. Mask files are <id>/masks/<id>_mNNN.png
// with values 0/255, so reading them back preserves the instance order.
void write_dsb(const std::filesystem::path& root, const std::vector<Sample>& samples);
void write_sample(const std::filesystem::path& root, const Sample& sample);

struct SplitSpec {
    double eval_fraction = 0.2;
    std::uint64_t seed = 0;
};

struct Split {
    std::vector<std::size_t> train, eval;  // indices into the input, ascending
};

// Seeded random partition; |eval| = round(fraction * n) clamped to [1, n-1].
// Throws ConfigError for n < 2 or a fraction outside (0, 1).
Split split_indices(std::size_t n, const SplitSpec& spec);

void write_manifest(const std::filesystem::path& path, const std::vector<std::string>& ids);
std::vector<std::string> read_manifest(const std::filesystem::path& path);

// Network-ready tensors for one sample.
struct NetworkPair {
    std::string image_id;
    std::int64_t image_h = 0, image_w = 0;
    std::vector<float> image;  // image_h x image_w x 3 in [0, 1]
    std::int64_t mask_h = 0, mask_w = 0;
    std::vector<float> mask;   // mask_h x mask_w, 0 or 1
    metrics::InstanceLabelMap labels;  // at mask resolution
};

// Bilinear resize with half-pixel centers and edge clamping.
Image8 resize_bilinear(const Image8& img, std::int64_t h, std::int64_t w);
// Nearest neighbour: output pixel d reads source floor((d + 0.5) * src / dst).
Image8 resize_nearest(const Image8& img, std::int64_t h, std::int64_t w);
Mask resize_nearest(const Mask& m, std::int64_t h, std::int64_t w);
metrics::InstanceLabelMap resize_nearest(const metrics::InstanceLabelMap& m, std::int64_t h, std::int64_t w);

NetworkPair resize_sample(const Sample& s, std::int64_t image_size, std::int64_t mask_size);

struct SynthConfig {
    int count = 200;
    std::int64_t height = 64, width = 64;
    int min_blobs = 3, max_blobs = 8;
    double min_radius = 4.0, max_radius = 8.0;
    int min_gap = 4;             // empty pixels kept between blob bounding boxes
    double noise_level = 0.05;   // std of additive noise as a fraction of 255
    double blob_intensity = 1.0; // peak nucleus brightness as a fraction of 255
    std::uint64_t seed = 0;

    void validate() const;
};

// Dark textured background with bright elliptical nuclei; instance masks are
// exact by construction. Deterministic per seed.
std::vector<Sample> synth_generate(const SynthConfig& config);

}  // namespace nseg::data
