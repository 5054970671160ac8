#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "nseg/data/dataset.hpp"

namespace nseg::augment {

using data::Image8;

enum class ChannelOrder { gbr, bgr };
enum class Photometric { sharpen, contrast, brightness };
enum class Geometric { zoom, rotate };

const char* to_string(ChannelOrder o);

struct Range {
    double lo = 0.0, hi = 0.0;
};

struct AugmentationConfig {
    double p_motion_blur = 0.1;
    double p_median_blur = 0.3;
    double p_channel_rearrange = 0.3;
    double p_emboss = 0.1;
    double p_sharpen = 0.2;
    double p_contrast = 0.2;
    double p_brightness = 0.2;
    double p_zoom = 0.3;
    double p_rotate = 0.5;

    double zoom_ratio = 0.1;
    std::vector<int> rotations = {90, 180, 270};
    int replication_factor = 5;
    bool force_gray = true;

    Range motion_blur_length{5, 15};  // odd lengths drawn from this range
    Range median_window{3, 5};        // odd windows drawn from this range
    Range emboss_strength{0.5, 1.0};
    Range sharpen_strength{0.5, 1.5};
    Range contrast_factor{1.1, 1.5};
    Range brightness_offset{10, 40};

    // Throws ConfigError on out-of-range values.
    void validate() const;
};

nlohmann::json to_json(const AugmentationConfig& c);
// Missing keys keep their defaults; unknown keys are a ConfigError.
AugmentationConfig augmentation_config_from_json(const nlohmann::json& j);

// One applied operation with its drawn parameters.
struct AugOp {
    std::string name;  // motion_blur, median_blur, emboss, sharpen, contrast, brightness,
                       // channel_rearrange, gray, zoom, rotate
    nlohmann::json params = nlohmann::json::object();

    bool geometric() const { return name == "zoom" || name == "rotate"; }
};

// Line-kernel blur; angle 0 is horizontal. Borders replicate the edge.
Image8 motion_blur(const Image8& img, int kernel_length, double angle_degrees);
Image8 median_blur(const Image8& img, int window);
// Luminance 0.299R + 0.587G + 0.114B, rounded, replicated to `channels`.
Image8 to_gray(const Image8& img, int channels = 3);
// Diagonal difference plus 128; flat areas become mid gray.
Image8 emboss(const Image8& img, double strength);
Image8 channel_rearrange(const Image8& img, ChannelOrder order);
// sharpen: unsharp mask p + s (p - box3(p)); contrast: (p - 128) k + 128;
// brightness: p + b. Results are rounded and clamped to [0, 255].
Image8 photometric(const Image8& img, Photometric kind, double strength);

// An image with its per-instance masks (values 0/255).
struct AugmentedPair {
    Image8 image;
    std::vector<Image8> masks;
};

// Zoom by `param` (> 1 crops the center, < 1 pads with zeros) or rotate
// clockwise by `param` degrees in {90, 180, 270}. Image and masks receive the
// same transform; masks use nearest-neighbour sampling. Rotating a non-square
// pair by 90 or 270 is a ConfigError since it would change the dimensions.
AugmentedPair geometric(const AugmentedPair& pair, Geometric kind, double param);

// Draws every op independently by its probability. Color-dependent ops come
// first, then graying, then geometric ops.
std::vector<AugOp> sample_op_chain(const AugmentationConfig& config, std::mt19937_64& rng, bool square);

AugmentedPair apply_chain(const AugmentedPair& pair, const std::vector<AugOp>& chain);

struct AugmentedSample {
    data::Sample sample;  // image_id is "<source>_aug<copy>"
    std::string source_id;
    int copy = 0;         // 1-based
    std::uint64_t seed = 0;
    std::vector<AugOp> ops;
    int dropped_instances = 0;  // instances cropped away by zoom
};

nlohmann::json provenance_json(const AugmentedSample& s);

// Seed for copy `copy` of `image_id`; depends only on its arguments.
std::uint64_t sample_seed(std::uint64_t seed, const std::string& image_id, int copy);

// replication_factor copies of every input sample. Throws ConfigError on empty input.
std::vector<AugmentedSample> augment_dataset(const std::vector<data::Sample>& samples,
                                             const AugmentationConfig& config, std::uint64_t seed);

}  // namespace nseg::augment
