#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "nseg/core/ops.hpp"

namespace nseg::arch {

enum class ModelKind { unet, denseunet };
enum class LayerKind { conv, deconv, maxpool, avgpool, upsample, concat, batchnorm, activation, dropout };

const char* to_string(ModelKind m);
const char* to_string(LayerKind k);
// Throws ConfigError listing the accepted names.
ModelKind parse_model(const std::string& name);

// Spatial extent and channel count of a single image (batch dimension excluded).
struct Dims {
    std::int64_t h = 0, w = 0, c = 0;

    friend bool operator==(const Dims&, const Dims&) = default;
};

// "512×512" style rendering used by the architecture tables.
std::string spatial_string(const Dims& d);
// "512×512×3"
std::string full_string(const Dims& d);

inline constexpr int kNetworkInput = -1;

struct LayerSpec {
    std::string name;
    LayerKind kind = LayerKind::conv;
    int stage = 0;                      // index into NetworkSpec::stages
    std::vector<int> inputs;            // earlier layer indices, or kNetworkInput
    int kernel = 1;                     // conv/deconv kernel, pooling window
    int stride = 1;
    int filters = 0;                    // conv/deconv output channels
    int factor = 1;                     // upsample
    Padding padding = Padding::same;
    Activation activation = Activation::relu;
    double rate = 0.0;                  // dropout
};

// One row of the architecture table.
struct Stage {
    std::string label;
    std::string description;
};

struct NetworkSpec {
    ModelKind model = ModelKind::unet;
    int scale = 1;
    int growth_rate = 0;  // denseunet only
    Dims input;
    Dims output;
    std::vector<Stage> stages;
    std::vector<LayerSpec> layers;
};

struct ArchitectureOptions {
    int scale = 1;
    std::optional<int> input_size;   // square input; default 512 / scale
    std::optional<int> growth_rate;  // default 32 / scale
    double dropout_rate = 0.5;
    int input_channels = 3;
};

NetworkSpec build_unet(const ArchitectureOptions& opts);
NetworkSpec build_denseunet(const ArchitectureOptions& opts);
NetworkSpec build_network(ModelKind model, const ArchitectureOptions& opts);

struct TraceRow {
    std::string layer;
    LayerKind kind;
    int stage;
    Dims shape;
    std::int64_t params;
};

// Symbolic shape propagation; no tensors are allocated. The first row is the
// network input. Throws ShapeError naming the offending layer.
std::vector<TraceRow> shape_trace(const NetworkSpec& spec);

struct StageRow {
    std::string label;
    std::string description;
    Dims shape;  // feature map after the stage's last layer
};

// Collapses the layer trace to one row per table stage.
std::vector<StageRow> stage_table(const NetworkSpec& spec);

std::int64_t parameter_count(const NetworkSpec& spec);
std::int64_t layer_parameter_count(const LayerSpec& layer, const Dims& input);

// Layer counts under several conventions (per kind, weight layers, ...).
std::map<std::string, int> layer_counts(const NetworkSpec& spec);

}  // namespace nseg::arch
