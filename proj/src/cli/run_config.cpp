#include <fmt/format.h>

#include <fstream>
#include <regex>
#include <unordered_map>

#include "nseg/cli/cli.hpp"

namespace nseg::cli {

using nlohmann::json;

void RunConfig::propagate_seed() {
    train.seed = seed;
    split.seed = seed;
    synth.seed = seed;
}

namespace {

json synth_json(const data::SynthConfig& s) {
    return {{"count", s.count},
            {"height", s.height},
            {"width", s.width},
            {"min_blobs", s.min_blobs},
            {"max_blobs", s.max_blobs},
            {"min_radius", s.min_radius},
            {"max_radius", s.max_radius},
            {"min_gap", s.min_gap},
            {"noise_level", s.noise_level},
            {"blob_intensity", s.blob_intensity}};
}

void reject_unknown(const json& j, const json& known, const std::string& section) {
    if (!j.is_object()) throw ConfigError(section + " must be a JSON object");
    for (const auto& [key, value] : j.items())
        if (!known.contains(key)) throw ConfigError("unknown " + section + " key '" + key + "'");
}

template <class T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json to_json(const RunConfig& c) {
    auto train = train::to_json(c.train);
    train.erase("seed");
    return {{"seed", c.seed},
            {"train", train},
            {"augment", augment::to_json(c.augment)},
            {"split", {{"eval_fraction", c.split.eval_fraction}}},
            {"sweep", c.sweep.thresholds},
            {"synth", synth_json(c.synth)}};
}

RunConfig run_config_from_json(const json& j) {
    RunConfig c;
    reject_unknown(j, to_json(c), "config");
    try {
        read(j, "seed", c.seed);
        if (j.contains("train")) {
            if (j.at("train").contains("seed")) throw ConfigError("set the seed at the top level, not under train");
            c.train = train::train_config_from_json(j.at("train"));
        }
        if (j.contains("augment")) c.augment = augment::augmentation_config_from_json(j.at("augment"));
        if (j.contains("split")) {
            reject_unknown(j.at("split"), {{"eval_fraction", 0}}, "split");
            read(j.at("split"), "eval_fraction", c.split.eval_fraction);
            if (!(c.split.eval_fraction > 0.0 && c.split.eval_fraction < 1.0))
                throw ConfigError("split.eval_fraction must be in (0, 1)");
        }
        if (j.contains("sweep")) {
            c.sweep.thresholds = j.at("sweep").get<std::vector<double>>();
            c.sweep.validate();
        }
        if (j.contains("synth")) {
            const auto& s = j.at("synth");
            reject_unknown(s, synth_json(c.synth), "synth");
            read(s, "count", c.synth.count);
            read(s, "height", c.synth.height);
            read(s, "width", c.synth.width);
            read(s, "min_blobs", c.synth.min_blobs);
            read(s, "max_blobs", c.synth.max_blobs);
            read(s, "min_radius", c.synth.min_radius);
            read(s, "max_radius", c.synth.max_radius);
            read(s, "min_gap", c.synth.min_gap);
            read(s, "noise_level", c.synth.noise_level);
            read(s, "blob_intensity", c.synth.blob_intensity);
            c.synth.validate();
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad config: ") + e.what());
    }
    c.propagate_seed();
    return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + " is not valid JSON: " + e.what());
    }
    return run_config_from_json(j);
}

std::pair<std::int64_t, std::int64_t> parse_dims(const std::string& s) {
    static const std::regex re(R"(^\s*(\d+)\s*(?:x|X|×)\s*(\d+)\s*$)");
    std::smatch m;
    if (!std::regex_match(s, m, re)) throw ConfigError("dimensions must look like 64x64, got '" + s + "'");
    return {std::stoll(m[1]), std::stoll(m[2])};
}

std::string display_name(arch::ModelKind m) { return m == arch::ModelKind::unet ? "U-Net" : "DenseUNet"; }

std::string summary_row(const std::string& model, const std::string& input, const std::string& output, double map) {
    return fmt::format("{}\t{}\t{}\t{:.3f}", model, input, output, map);
}

std::array<std::uint8_t, 3> instance_color(std::int32_t id) {
    if (id < 1 || id >= (1 << 24)) throw InputError("instance id out of colour range");
    // Odd multiplier, so this permutes the 24-bit values and never maps a positive id to black.
    const std::uint32_t c = (static_cast<std::uint32_t>(id) * 0x9E3779u) & 0xFFFFFFu;
    return {static_cast<std::uint8_t>(c >> 16), static_cast<std::uint8_t>(c >> 8), static_cast<std::uint8_t>(c)};
}

data::Image8 instance_png(const metrics::InstanceLabelMap& labels) {
    data::Image8 img(labels.height(), labels.width(), 3);
    for (std::int64_t y = 0; y < labels.height(); ++y)
        for (std::int64_t x = 0; x < labels.width(); ++x) {
            const auto k = labels.at(y, x);
            if (k == 0) continue;
            const auto rgb = instance_color(k);
            for (int ch = 0; ch < 3; ++ch) img.at(y, x, ch) = rgb[static_cast<std::size_t>(ch)];
        }
    return img;
}

metrics::InstanceLabelMap read_instance_png(const data::Image8& img) {
    std::unordered_map<std::uint32_t, std::int32_t> ids;
    std::vector<std::int32_t> labels(static_cast<std::size_t>(img.h * img.w), 0);
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x) {
            std::uint32_t key = 0;
            for (std::int64_t ch = 0; ch < img.c; ++ch) key = (key << 8) | img.at(y, x, ch);
            if (key == 0) continue;
            auto [it, inserted] = ids.try_emplace(key, static_cast<std::int32_t>(ids.size() + 1));
            labels[static_cast<std::size_t>(y * img.w + x)] = it->second;
        }
    return metrics::InstanceLabelMap(img.h, img.w, std::move(labels));
}

}  // namespace nseg::cli
