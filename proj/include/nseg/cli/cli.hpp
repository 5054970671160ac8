#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "nseg/augment/augment.hpp"
#include "nseg/data/dataset.hpp"
#include "nseg/metrics/metrics.hpp"
#include "nseg/train/train.hpp"

namespace nseg::cli {

enum ExitCode : int { kOk = 0, kDomainError = 1, kUsageError = 2 };

// Everything a run can be configured with. One top-level seed feeds every
// seeded component so a single --seed reproduces a whole pipeline.
struct RunConfig {
    std::uint64_t seed = 0;
    train::TrainConfig train;
    augment::AugmentationConfig augment;
    data::SplitSpec split;
    metrics::ThresholdSweep sweep = metrics::ThresholdSweep::standard();
    data::SynthConfig synth;

    // Copies `seed` into the component configs.
    void propagate_seed();
};

nlohmann::json to_json(const RunConfig& c);
// Sections: seed, train, augment, split, sweep, synth. Unknown keys are a ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

// "64x64" or "64×64" -> {64, 64}; throws ConfigError.
std::pair<std::int64_t, std::int64_t> parse_dims(const std::string& s);

// Summary row: model, input size, output size, mAP to three decimals.
std::string summary_row(const std::string& model, const std::string& input, const std::string& output, double map);
std::string display_name(arch::ModelKind m);

// Distinct non-black colour per instance id (a bijection on 24 bits).
std::array<std::uint8_t, 3> instance_color(std::int32_t id);
data::Image8 instance_png(const metrics::InstanceLabelMap& labels);
// Inverse of instance_png: each distinct non-black colour is one instance, numbered in scan order.
metrics::InstanceLabelMap read_instance_png(const data::Image8& img);

// Parses and runs one command line. Output goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

}  // namespace nseg::cli
