#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nseg/arch/model.hpp"
#include "nseg/data/dataset.hpp"
#include "nseg/metrics/metrics.hpp"

namespace nseg::train {

struct TrainConfig {
    double learning_rate = 0.001;
    double momentum = 0.9;
    double dropout_rate = 0.5;
    int patience = 2;
    int max_epochs = 30;
    std::optional<int> batch_size;  // default: 16 at scale 8, otherwise 4
    std::uint64_t seed = 0;
    arch::ModelKind model = arch::ModelKind::unet;
    int scale = 8;
    std::optional<int> growth_rate;
    std::optional<int> input_size;
    double binarize_threshold = 0.5;
    double min_improvement = 1e-6;

    int effective_batch_size() const { return batch_size.value_or(scale == 8 ? 16 : 4); }
    arch::ArchitectureOptions architecture() const;
    // Throws ConfigError on invalid values.
    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
// Scale-8 settings that converge on the synthetic set within 30 epochs.
// The defaults (lr 0.001, batch 16) sit on an all-background plateau there.
TrainConfig desk_preset(arch::ModelKind model);

// Missing keys keep their defaults; unknown keys are a ConfigError.
TrainConfig train_config_from_json(const nlohmann::json& j);

enum class StopReason { early_stop, max_epochs };
const char* to_string(StopReason r);

struct EpochRecord {
    int epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_map = 0.0;
    double seconds = 0.0;
};

struct History {
    std::vector<EpochRecord> epochs;
    StopReason stop_reason = StopReason::max_epochs;
    int best_epoch = 0;
};

// Deterministic columns only (no wall time), so reruns are byte-identical.
// The final line is a comment carrying the stop reason and best epoch.
std::string history_csv(const History& h);
nlohmann::json history_json(const History& h);

struct TrainHooks {
    // Replaces the measured validation loss of an epoch when it returns a value.
    std::function<std::optional<double>(int epoch, double measured)> val_loss_override;
    // Called after every epoch.
    std::function<void(const EpochRecord&)> on_epoch;
    bool progress = true;  // one line per epoch on stderr
};

struct TrainResult {
    std::vector<NamedTensor> best_state;  // parameters at the best validation loss
    History history;
};

// Networks' input/output sizes for a config, used to prepare data.
struct IoSizes {
    std::int64_t input = 0, output = 0;
};
IoSizes io_sizes(const arch::NetworkSpec& spec);

std::vector<data::NetworkPair> prepare(const std::vector<data::Sample>& samples, const arch::NetworkSpec& spec);

TrainResult train(const arch::NetworkSpec& spec, const std::vector<data::NetworkPair>& train_set,
                  const std::vector<data::NetworkPair>& val_set, const TrainConfig& config,
                  const TrainHooks& hooks = {});

struct ImageReport {
    std::string image_id;
    metrics::ImageScore score;
};

struct EvalResult {
    double mean_loss = 0.0;
    double map = 0.0;
    std::vector<ImageReport> images;
};

EvalResult evaluate(arch::Model<float>& model, const std::vector<data::NetworkPair>& set,
                    const metrics::ThresholdSweep& sweep = metrics::ThresholdSweep::standard(),
                    double binarize_threshold = 0.5, int batch_size = 16,
                    metrics::MatchMode mode = metrics::MatchMode::greedy);

std::string per_image_csv(const EvalResult& r, const metrics::ThresholdSweep& sweep);

struct Prediction {
    std::int64_t h = 0, w = 0;
    std::vector<float> prob;  // h x w sigmoid output
    metrics::InstanceLabelMap labels;
};

// Resizes the image to the network input, runs an eval-mode forward and
// instances the sigmoid map.
Prediction predict(arch::Model<float>& model, const data::Image8& image, double binarize_threshold = 0.5);

// Metadata stored with every checkpoint: enough to rebuild the network.
nlohmann::json model_metadata(const arch::NetworkSpec& spec, const TrainConfig& config);

void save_model(const std::filesystem::path& path, const arch::Model<float>& model, const nlohmann::json& metadata);

struct LoadedModel {
    arch::Model<float> model;
    nlohmann::json metadata;
};

// Rebuilds the network from the stored metadata. When `expect` is given and
// differs from the stored model kind, throws CheckpointError(architecture_mismatch).
LoadedModel load_model(const std::filesystem::path& path, std::optional<arch::ModelKind> expect = std::nullopt);

}  // namespace nseg::train
