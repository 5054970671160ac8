#include <algorithm>
#include <cmath>
#include <set>

#include "nseg/augment/augment.hpp"
#include "nseg/core/seed.hpp"

namespace nseg::augment {

using nlohmann::json;

namespace {

void check_prob(double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must be a probability in [0, 1]");
}

void check_range(const Range& r, const char* name, double min) {
    if (!(r.lo >= min && r.hi >= r.lo))
        throw ConfigError(std::string(name) + " range must satisfy " + std::to_string(min) + " <= lo <= hi");
}

// Odd integers in [lo, hi].
std::vector<int> odd_values(const Range& r) {
    std::vector<int> v;
    for (int k = static_cast<int>(std::ceil(r.lo)); k <= static_cast<int>(std::floor(r.hi)); ++k)
        if (k % 2 == 1) v.push_back(k);
    return v;
}

}  // namespace

void AugmentationConfig::validate() const {
    check_prob(p_motion_blur, "p_motion_blur");
    check_prob(p_median_blur, "p_median_blur");
    check_prob(p_channel_rearrange, "p_channel_rearrange");
    check_prob(p_emboss, "p_emboss");
    check_prob(p_sharpen, "p_sharpen");
    check_prob(p_contrast, "p_contrast");
    check_prob(p_brightness, "p_brightness");
    check_prob(p_zoom, "p_zoom");
    check_prob(p_rotate, "p_rotate");
    if (!(zoom_ratio >= 0.0 && zoom_ratio < 0.5)) throw ConfigError("zoom_ratio must be in [0, 0.5)");
    if (replication_factor < 1) throw ConfigError("replication_factor must be >= 1");
    for (int r : rotations)
        if (r != 90 && r != 180 && r != 270) throw ConfigError("rotations may only contain 90, 180, 270");
    check_range(motion_blur_length, "motion_blur_length", 3);
    check_range(median_window, "median_window", 3);
    if (odd_values(motion_blur_length).empty()) throw ConfigError("motion_blur_length range holds no odd length");
    if (odd_values(median_window).empty()) throw ConfigError("median_window range holds no odd window");
    check_range(emboss_strength, "emboss_strength", 0);
    check_range(sharpen_strength, "sharpen_strength", 0);
    check_range(contrast_factor, "contrast_factor", 0);
    check_range(brightness_offset, "brightness_offset", -255);
}

json to_json(const AugmentationConfig& c) {
    auto range = [](const Range& r) { return json::array({r.lo, r.hi}); };
    return json{{"p_motion_blur", c.p_motion_blur},
                {"p_median_blur", c.p_median_blur},
                {"p_channel_rearrange", c.p_channel_rearrange},
                {"p_emboss", c.p_emboss},
                {"p_sharpen", c.p_sharpen},
                {"p_contrast", c.p_contrast},
                {"p_brightness", c.p_brightness},
                {"p_zoom", c.p_zoom},
                {"p_rotate", c.p_rotate},
                {"zoom_ratio", c.zoom_ratio},
                {"rotations", c.rotations},
                {"replication_factor", c.replication_factor},
                {"force_gray", c.force_gray},
                {"motion_blur_length", range(c.motion_blur_length)},
                {"median_window", range(c.median_window)},
                {"emboss_strength", range(c.emboss_strength)},
                {"sharpen_strength", range(c.sharpen_strength)},
                {"contrast_factor", range(c.contrast_factor)},
                {"brightness_offset", range(c.brightness_offset)}};
}

AugmentationConfig augmentation_config_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("augmentation config must be a JSON object");
    AugmentationConfig c;
    const json defaults = to_json(c);
    for (const auto& [key, value] : j.items())
        if (!defaults.contains(key)) throw ConfigError("unknown augmentation key '" + key + "'");
    try {
        auto num = [&](const char* k, double& out) {
            if (j.contains(k)) out = j.at(k).get<double>();
        };
        auto range = [&](const char* k, Range& out) {
            if (!j.contains(k)) return;
            const auto& a = j.at(k);
            if (!a.is_array() || a.size() != 2) throw ConfigError(std::string(k) + " must be [lo, hi]");
            out = {a[0].get<double>(), a[1].get<double>()};
        };
        num("p_motion_blur", c.p_motion_blur);
        num("p_median_blur", c.p_median_blur);
        num("p_channel_rearrange", c.p_channel_rearrange);
        num("p_emboss", c.p_emboss);
        num("p_sharpen", c.p_sharpen);
        num("p_contrast", c.p_contrast);
        num("p_brightness", c.p_brightness);
        num("p_zoom", c.p_zoom);
        num("p_rotate", c.p_rotate);
        num("zoom_ratio", c.zoom_ratio);
        if (j.contains("rotations")) c.rotations = j.at("rotations").get<std::vector<int>>();
        if (j.contains("replication_factor")) c.replication_factor = j.at("replication_factor").get<int>();
        if (j.contains("force_gray")) c.force_gray = j.at("force_gray").get<bool>();
        range("motion_blur_length", c.motion_blur_length);
        range("median_window", c.median_window);
        range("emboss_strength", c.emboss_strength);
        range("sharpen_strength", c.sharpen_strength);
        range("contrast_factor", c.contrast_factor);
        range("brightness_offset", c.brightness_offset);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("bad augmentation config: ") + e.what());
    }
    c.validate();
    return c;
}

std::vector<AugOp> sample_op_chain(const AugmentationConfig& cfg, std::mt19937_64& rng, bool square) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    auto fires = [&](double p) { return u01(rng) < p; };
    auto in = [&](const Range& r) { return r.lo + (r.hi - r.lo) * u01(rng); };
    auto pick = [&](const std::vector<int>& v) {
        return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
    };

    std::vector<AugOp> chain;
    if (fires(cfg.p_motion_blur))
        chain.push_back({"motion_blur", {{"length", pick(odd_values(cfg.motion_blur_length))}, {"angle", 180.0 * u01(rng)}}});
    if (fires(cfg.p_median_blur)) chain.push_back({"median_blur", {{"window", pick(odd_values(cfg.median_window))}}});
    if (fires(cfg.p_emboss)) chain.push_back({"emboss", {{"strength", in(cfg.emboss_strength)}}});
    if (fires(cfg.p_sharpen)) chain.push_back({"sharpen", {{"strength", in(cfg.sharpen_strength)}}});
    if (fires(cfg.p_contrast)) chain.push_back({"contrast", {{"factor", in(cfg.contrast_factor)}}});
    if (fires(cfg.p_brightness)) chain.push_back({"brightness", {{"offset", in(cfg.brightness_offset)}}});
    if (fires(cfg.p_channel_rearrange))
        chain.push_back({"channel_rearrange", {{"order", u01(rng) < 0.5 ? "GBR" : "BGR"}}});
    if (cfg.force_gray) chain.push_back({"gray", json::object()});
    if (fires(cfg.p_zoom))
        chain.push_back({"zoom", {{"factor", 1.0 - cfg.zoom_ratio + 2.0 * cfg.zoom_ratio * u01(rng)}}});
    if (fires(cfg.p_rotate)) {
        std::vector<int> allowed;
        for (int r : cfg.rotations)
            if (square || r == 180) allowed.push_back(r);
        if (!allowed.empty()) chain.push_back({"rotate", {{"degrees", pick(allowed)}}});
    }
    return chain;
}

AugmentedPair apply_chain(const AugmentedPair& pair, const std::vector<AugOp>& chain) {
    AugmentedPair cur = pair;
    for (const auto& op : chain) {
        const auto& p = op.params;
        if (op.name == "motion_blur")
            cur.image = motion_blur(cur.image, p.at("length").get<int>(), p.at("angle").get<double>());
        else if (op.name == "median_blur")
            cur.image = median_blur(cur.image, p.at("window").get<int>());
        else if (op.name == "emboss")
            cur.image = emboss(cur.image, p.at("strength").get<double>());
        else if (op.name == "sharpen")
            cur.image = photometric(cur.image, Photometric::sharpen, p.at("strength").get<double>());
        else if (op.name == "contrast")
            cur.image = photometric(cur.image, Photometric::contrast, p.at("factor").get<double>());
        else if (op.name == "brightness")
            cur.image = photometric(cur.image, Photometric::brightness, p.at("offset").get<double>());
        else if (op.name == "channel_rearrange")
            cur.image = channel_rearrange(
                cur.image, p.at("order").get<std::string>() == "GBR" ? ChannelOrder::gbr : ChannelOrder::bgr);
        else if (op.name == "gray")
            cur.image = to_gray(cur.image, static_cast<int>(cur.image.c));
        else if (op.name == "zoom")
            cur = geometric(cur, Geometric::zoom, p.at("factor").get<double>());
        else if (op.name == "rotate")
            cur = geometric(cur, Geometric::rotate, p.at("degrees").get<double>());
        else
            throw ConfigError("unknown augmentation op '" + op.name + "'");
    }
    return cur;
}

std::uint64_t sample_seed(std::uint64_t seed, const std::string& image_id, int copy) {
    return derive_seed(seed, {fnv1a(image_id), static_cast<std::uint64_t>(copy)});
}

json provenance_json(const AugmentedSample& s) {
    json ops = json::array();
    for (const auto& op : s.ops) {
        json o = {{"op", op.name}};
        for (const auto& [k, v] : op.params.items()) o[k] = v;
        ops.push_back(o);
    }
    return json{{"image_id", s.sample.image_id}, {"source_id", s.source_id}, {"copy", s.copy},
                {"seed", s.seed},                {"ops", ops},                {"dropped_instances", s.dropped_instances}};
}

std::vector<AugmentedSample> augment_dataset(const std::vector<data::Sample>& samples, const AugmentationConfig& config,
                                             std::uint64_t seed) {
    config.validate();
    if (samples.empty()) throw ConfigError("augmentation needs at least one input sample");
    std::vector<AugmentedSample> out;
    out.reserve(samples.size() * static_cast<std::size_t>(config.replication_factor));
    for (const auto& s : samples) {
        AugmentedPair src;
        src.image = s.image;
        for (const auto& m : s.instance_masks) {
            Image8 mi(m.h, m.w, 1);
            for (std::size_t i = 0; i < m.px.size(); ++i) mi.px[i] = m.px[i] ? 255 : 0;
            src.masks.push_back(std::move(mi));
        }
        for (int copy = 1; copy <= config.replication_factor; ++copy) {
            AugmentedSample a;
            a.source_id = s.image_id;
            a.copy = copy;
            a.seed = sample_seed(seed, s.image_id, copy);
            std::mt19937_64 rng(a.seed);
            a.ops = sample_op_chain(config, rng, s.image.h == s.image.w);
            const AugmentedPair res = apply_chain(src, a.ops);
            std::vector<data::Mask> masks;
            for (const auto& mi : res.masks) {
                data::Mask m(mi.h, mi.w);
                for (std::size_t i = 0; i < mi.px.size(); ++i) m.px[i] = mi.px[i] > 127;
                if (m.count() == 0) {
                    ++a.dropped_instances;
                    continue;
                }
                masks.push_back(std::move(m));
            }
            a.sample = data::make_sample(s.image_id + "_aug" + std::to_string(copy), res.image, std::move(masks));
            out.push_back(std::move(a));
        }
    }
    return out;
}

}  // namespace nseg::augment
