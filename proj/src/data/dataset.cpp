#include "nseg/data/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include "nseg/core/seed.hpp"

namespace nseg::data {

namespace fs = std::filesystem;

std::int64_t Mask::count() const {
    std::int64_t n = 0;
    for (auto v : px) n += v != 0;
    return n;
}

MergedMasks merge_masks(const std::vector<Mask>& masks, std::int64_t h, std::int64_t w) {
    Mask merged(h, w);
    std::vector<std::int32_t> labels(static_cast<std::size_t>(h * w), 0);
    for (std::size_t k = 0; k < masks.size(); ++k) {
        const Mask& m = masks[k];
        if (m.h != h || m.w != w)
            throw ShapeError("mask " + std::to_string(k) + " is " + std::to_string(m.h) + "x" + std::to_string(m.w) +
                             ", expected " + std::to_string(h) + "x" + std::to_string(w));
        if (m.count() == 0) throw InputError("mask " + std::to_string(k) + " is empty");
        for (std::size_t i = 0; i < m.px.size(); ++i) {
            if (!m.px[i]) continue;
            merged.px[i] = 1;
            if (labels[i] == 0) labels[i] = static_cast<std::int32_t>(k + 1);
        }
    }
    // Compaction is a no-op unless an instance was wholly occluded.
    std::vector<std::int32_t> present(masks.size() + 1, 0);
    for (auto v : labels) present[static_cast<std::size_t>(v)] = 1;
    std::vector<std::int32_t> remap(masks.size() + 1, 0);
    std::int32_t next = 0;
    for (std::size_t k = 1; k <= masks.size(); ++k)
        if (present[k]) remap[k] = ++next;
    for (auto& v : labels) v = remap[static_cast<std::size_t>(v)];
    return {std::move(merged), metrics::InstanceLabelMap(h, w, std::move(labels))};
}

Sample make_sample(std::string image_id, Image8 image, std::vector<Mask> masks) {
    if (image.c == 1) {
        Image8 rgb(image.h, image.w, 3);
        for (std::size_t i = 0; i < image.px.size(); ++i)
            for (int ch = 0; ch < 3; ++ch) rgb.px[i * 3 + static_cast<std::size_t>(ch)] = image.px[i];
        image = std::move(rgb);
    }
    if (image.c != 3) throw ShapeError("image " + image_id + " has " + std::to_string(image.c) + " channels");
    auto merged = merge_masks(masks, image.h, image.w);
    Sample s;
    s.image_id = std::move(image_id);
    s.image = std::move(image);
    s.instance_masks = std::move(masks);
    s.merged_mask = std::move(merged.merged);
    s.instance_labels = std::move(merged.labels);
    return s;
}

namespace {

std::vector<fs::path> sorted_pngs(const fs::path& dir) {
    std::vector<fs::path> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") out.push_back(e.path());
    std::sort(out.begin(), out.end());
    return out;
}

Mask binarize(const Image8& img) {
    Mask m(img.h, img.w);
    for (std::int64_t i = 0; i < img.h * img.w; ++i) {
        bool on = false;
        for (std::int64_t ch = 0; ch < img.c; ++ch) on = on || img.px[static_cast<std::size_t>(i * img.c + ch)] > 0;
        m.px[static_cast<std::size_t>(i)] = on;
    }
    return m;
}

}  // namespace

LoadResult load_dsb(const fs::path& root) {
    if (!fs::is_directory(root)) throw ConfigError("dataset root " + root.string() + " is not a directory");
    std::vector<std::string> ids;
    for (const auto& e : fs::directory_iterator(root))
        if (e.is_directory()) ids.push_back(e.path().filename().string());
    std::sort(ids.begin(), ids.end());

    LoadResult result;
    for (const auto& id : ids) {
        const fs::path dir = root / id;
        const fs::path image_path = dir / "images" / (id + ".png");
        try {
            if (!fs::is_directory(dir / "images")) throw InputError("missing images folder");
            if (!fs::exists(image_path)) throw InputError("missing " + image_path.filename().string());
            Image8 image = read_png(image_path);
            std::vector<Mask> masks;
            if (fs::is_directory(dir / "masks")) {
                for (const auto& mp : sorted_pngs(dir / "masks")) {
                    Mask m = binarize(read_png(mp));
                    if (m.h != image.h || m.w != image.w)
                        throw InputError("mask " + mp.filename().string() + " size differs from the image");
                    if (m.count() == 0) {
                        result.issues.push_back({id, "skipped empty mask " + mp.filename().string()});
                        continue;
                    }
                    masks.push_back(std::move(m));
                }
            }
            result.samples.push_back(make_sample(id, std::move(image), std::move(masks)));
        } catch (const Error& e) {
            result.issues.push_back({id, e.what()});
        }
    }
    if (result.samples.empty()) {
        std::string msg = "no loadable samples under " + root.string();
        if (!result.issues.empty()) msg += " (first problem: " + result.issues.front().image_id + ": " +
                                           result.issues.front().message + ")";
        throw ConfigError(msg);
    }
    return result;
}

void write_sample(const fs::path& root, const Sample& s) {
    const fs::path dir = root / s.image_id;
    fs::create_directories(dir / "images");
    fs::create_directories(dir / "masks");
    write_png(dir / "images" / (s.image_id + ".png"), s.image);
    for (std::size_t k = 0; k < s.instance_masks.size(); ++k) {
        const Mask& m = s.instance_masks[k];
        Image8 out(m.h, m.w, 1);
        for (std::size_t i = 0; i < m.px.size(); ++i) out.px[i] = m.px[i] ? 255 : 0;
        char name[32];
        std::snprintf(name, sizeof name, "_m%03zu.png", k);
        write_png(dir / "masks" / (s.image_id + name), out);
    }
}

void write_dsb(const fs::path& root, const std::vector<Sample>& samples) {
    fs::create_directories(root);
    for (const auto& s : samples) write_sample(root, s);
}

Split split_indices(std::size_t n, const SplitSpec& spec) {
    if (n < 2) throw ConfigError("splitting needs at least 2 samples, got " + std::to_string(n));
    if (!(spec.eval_fraction > 0.0 && spec.eval_fraction < 1.0))
        throw ConfigError("eval fraction must be in (0, 1)");
    const auto want = static_cast<long long>(std::llround(spec.eval_fraction * static_cast<double>(n)));
    const auto n_eval = static_cast<std::size_t>(std::clamp<long long>(want, 1, static_cast<long long>(n) - 1));
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);
    Split out;
    out.eval.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_eval));
    out.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_eval), order.end());
    std::sort(out.eval.begin(), out.eval.end());
    std::sort(out.train.begin(), out.train.end());
    return out;
}

void write_manifest(const fs::path& path, const std::vector<std::string>& ids) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write manifest " + path.string());
    for (const auto& id : ids) out << id << '\n';
}

std::vector<std::string> read_manifest(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot read manifest " + path.string());
    std::vector<std::string> ids;
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) ids.push_back(line);
    return ids;
}

namespace {

std::int64_t nearest_src(std::int64_t d, std::int64_t src, std::int64_t dst) {
    // Integer form of floor((d + 0.5) * src / dst).
    return std::min(src - 1, ((2 * d + 1) * src) / (2 * dst));
}

void check_target(std::int64_t h, std::int64_t w) {
    if (h < 1 || w < 1) throw ConfigError("resize target must be positive");
}

}  // namespace

Image8 resize_bilinear(const Image8& img, std::int64_t h, std::int64_t w) {
    check_target(h, w);
    if (img.h == h && img.w == w) return img;
    Image8 out(h, w, img.c);
    const double sy = static_cast<double>(img.h) / static_cast<double>(h);
    const double sx = static_cast<double>(img.w) / static_cast<double>(w);
    for (std::int64_t y = 0; y < h; ++y) {
        const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.h - 1));
        const auto y0 = static_cast<std::int64_t>(fy);
        const auto y1 = std::min(y0 + 1, img.h - 1);
        const double ay = fy - static_cast<double>(y0);
        for (std::int64_t x = 0; x < w; ++x) {
            const double fx =
                std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.w - 1));
            const auto x0 = static_cast<std::int64_t>(fx);
            const auto x1 = std::min(x0 + 1, img.w - 1);
            const double ax = fx - static_cast<double>(x0);
            for (std::int64_t c = 0; c < img.c; ++c) {
                const double top = img.at(y0, x0, c) * (1 - ax) + img.at(y0, x1, c) * ax;
                const double bot = img.at(y1, x0, c) * (1 - ax) + img.at(y1, x1, c) * ax;
                out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(top * (1 - ay) + bot * ay));
            }
        }
    }
    return out;
}

Image8 resize_nearest(const Image8& img, std::int64_t h, std::int64_t w) {
    check_target(h, w);
    Image8 out(h, w, img.c);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            for (std::int64_t c = 0; c < img.c; ++c)
                out.at(y, x, c) = img.at(nearest_src(y, img.h, h), nearest_src(x, img.w, w), c);
    return out;
}

Mask resize_nearest(const Mask& m, std::int64_t h, std::int64_t w) {
    check_target(h, w);
    Mask out(h, w);
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x) out.at(y, x) = m.at(nearest_src(y, m.h, h), nearest_src(x, m.w, w));
    return out;
}

metrics::InstanceLabelMap resize_nearest(const metrics::InstanceLabelMap& m, std::int64_t h, std::int64_t w) {
    check_target(h, w);
    std::vector<std::int32_t> out(static_cast<std::size_t>(h * w));
    for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
            out[static_cast<std::size_t>(y * w + x)] = m.at(nearest_src(y, m.height(), h), nearest_src(x, m.width(), w));
    // Instances smaller than the sampling grid can disappear.
    return metrics::InstanceLabelMap::compacted(h, w, std::move(out));
}

NetworkPair resize_sample(const Sample& s, std::int64_t image_size, std::int64_t mask_size) {
    NetworkPair p;
    p.image_id = s.image_id;
    const Image8 img = resize_bilinear(s.image, image_size, image_size);
    p.image_h = p.image_w = image_size;
    p.image.resize(img.px.size());
    for (std::size_t i = 0; i < img.px.size(); ++i) p.image[i] = static_cast<float>(img.px[i]) / 255.0f;
    const Mask m = resize_nearest(s.merged_mask, mask_size, mask_size);
    p.mask_h = p.mask_w = mask_size;
    p.mask.assign(m.px.begin(), m.px.end());
    p.labels = resize_nearest(s.instance_labels, mask_size, mask_size);
    return p;
}

void SynthConfig::validate() const {
    if (count < 1) throw ConfigError("synthetic sample count must be >= 1");
    if (height < 8 || width < 8) throw ConfigError("synthetic images must be at least 8x8");
    if (min_blobs < 0 || max_blobs < min_blobs) throw ConfigError("blob count range is empty");
    if (!(min_radius >= 1.0) || max_radius < min_radius) throw ConfigError("blob radius range is empty or below 1");
    if (2 * max_radius + 3 > static_cast<double>(std::min(height, width)))
        throw ConfigError("largest blob does not fit the image");
    if (min_gap < 0) throw ConfigError("blob gap must be >= 0");
    if (!(noise_level >= 0.0)) throw ConfigError("noise level must be >= 0");
    if (!(blob_intensity > 0.0 && blob_intensity <= 1.0)) throw ConfigError("blob intensity must be in (0, 1]");
}

namespace {

struct Blob {
    double cy, cx, ry, rx, angle;
    std::int64_t y0, y1, x0, x1;  // inclusive pixel bounding box
};

bool separated(const Blob& a, const Blob& b, int gap) {
    return a.y1 + gap < b.y0 || b.y1 + gap < a.y0 || a.x1 + gap < b.x0 || b.x1 + gap < a.x0;
}

// Normalized squared radius of pixel center (y, x) in the blob's frame.
double blob_r2(const Blob& b, double y, double x) {
    const double dy = y - b.cy, dx = x - b.cx;
    const double c = std::cos(b.angle), s = std::sin(b.angle);
    const double u = (dx * c + dy * s) / b.rx, v = (-dx * s + dy * c) / b.ry;
    return u * u + v * v;
}

bool place_blobs(std::mt19937_64& rng, const SynthConfig& cfg, int n, std::vector<Blob>& blobs) {
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    blobs.clear();
    for (int k = 0; k < n; ++k) {
        bool placed = false;
        for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
            Blob b{};
            b.ry = cfg.min_radius + (cfg.max_radius - cfg.min_radius) * u01(rng);
            b.rx = cfg.min_radius + (cfg.max_radius - cfg.min_radius) * u01(rng);
            b.angle = std::numbers::pi * u01(rng);
            const double c = std::cos(b.angle), s = std::sin(b.angle);
            const double ex = std::sqrt(b.rx * b.rx * c * c + b.ry * b.ry * s * s);
            const double ey = std::sqrt(b.rx * b.rx * s * s + b.ry * b.ry * c * c);
            const double hh = static_cast<double>(cfg.height), ww = static_cast<double>(cfg.width);
            b.cy = ey + 0.5 + (hh - 1.0 - 2.0 * ey) * u01(rng);
            b.cx = ex + 0.5 + (ww - 1.0 - 2.0 * ex) * u01(rng);
            b.y0 = static_cast<std::int64_t>(std::floor(b.cy - ey));
            b.y1 = static_cast<std::int64_t>(std::ceil(b.cy + ey));
            b.x0 = static_cast<std::int64_t>(std::floor(b.cx - ex));
            b.x1 = static_cast<std::int64_t>(std::ceil(b.cx + ex));
            placed = std::all_of(blobs.begin(), blobs.end(), [&](const Blob& o) { return separated(o, b, cfg.min_gap); });
            if (placed) blobs.push_back(b);
        }
        if (!placed) return false;
    }
    return true;
}

Sample synth_one(const SynthConfig& cfg, int index) {
    std::mt19937_64 rng(derive_seed(cfg.seed, {static_cast<std::uint64_t>(index)}));
    std::uniform_int_distribution<int> count(cfg.min_blobs, cfg.max_blobs);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    const int n = count(rng);
    std::vector<Blob> blobs;
    bool ok = false;
    for (int attempt = 0; attempt < 50 && !ok; ++attempt) ok = place_blobs(rng, cfg, n, blobs);
    if (!ok)
        throw ConfigError("cannot place " + std::to_string(n) + " separated blobs in " + std::to_string(cfg.height) +
                          "x" + std::to_string(cfg.width) + "; reduce the blob count, radius or gap");

    // Low-frequency background texture with a faint tint.
    const double fy = 0.05 + 0.15 * u01(rng), fx = 0.05 + 0.15 * u01(rng);
    const double py = 2 * std::numbers::pi * u01(rng), px = 2 * std::numbers::pi * u01(rng);
    const double base = 20.0 + 15.0 * u01(rng);
    const double tint[3] = {0.85 + 0.15 * u01(rng), 0.7 + 0.2 * u01(rng), 0.9 + 0.1 * u01(rng)};
    std::normal_distribution<double> noise(0.0, cfg.noise_level * 255.0);

    std::vector<Mask> masks(blobs.size(), Mask(cfg.height, cfg.width));
    std::vector<double> value(static_cast<std::size_t>(cfg.height * cfg.width));
    for (std::int64_t y = 0; y < cfg.height; ++y)
        for (std::int64_t x = 0; x < cfg.width; ++x)
            value[static_cast<std::size_t>(y * cfg.width + x)] =
                base + 10.0 * std::sin(fy * static_cast<double>(y) + py) * std::sin(fx * static_cast<double>(x) + px);
    for (std::size_t k = 0; k < blobs.size(); ++k) {
        const Blob& b = blobs[k];
        const double peak = cfg.blob_intensity * 255.0 * (0.9 + 0.1 * u01(rng));
        for (std::int64_t y = std::max<std::int64_t>(0, b.y0); y <= std::min(cfg.height - 1, b.y1); ++y)
            for (std::int64_t x = std::max<std::int64_t>(0, b.x0); x <= std::min(cfg.width - 1, b.x1); ++x) {
                const double r2 = blob_r2(b, static_cast<double>(y), static_cast<double>(x));
                if (r2 > 1.0) continue;
                masks[k].at(y, x) = 1;
                // Brighter core, dimmer rim.
                value[static_cast<std::size_t>(y * cfg.width + x)] = peak * (0.65 + 0.35 * (1.0 - r2));
            }
        if (masks[k].count() == 0) masks[k].at(static_cast<std::int64_t>(b.cy), static_cast<std::int64_t>(b.cx)) = 1;
    }

    Image8 img(cfg.height, cfg.width, 3);
    for (std::size_t i = 0; i < value.size(); ++i)
        for (int ch = 0; ch < 3; ++ch) {
            const double v = value[i] * tint[ch] + (cfg.noise_level > 0 ? noise(rng) : 0.0);
            img.px[i * 3 + static_cast<std::size_t>(ch)] = static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L));
        }
    char id[32];
    std::snprintf(id, sizeof id, "synth_%05d", index);
    return make_sample(id, std::move(img), std::move(masks));
}

}  // namespace

std::vector<Sample> synth_generate(const SynthConfig& config) {
    config.validate();
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(config.count));
    for (int i = 0; i < config.count; ++i) out.push_back(synth_one(config, i));
    return out;
}

}  // namespace nseg::data
