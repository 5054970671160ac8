#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <utility>

#include "nseg/augment/augment.hpp"

namespace nseg::augment {
namespace {

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

std::uint8_t edge_at(const Image8& img, std::int64_t y, std::int64_t x, std::int64_t c) {
    return img.at(std::clamp<std::int64_t>(y, 0, img.h - 1), std::clamp<std::int64_t>(x, 0, img.w - 1), c);
}

void require_odd(int v, int min, const char* what) {
    if (v < min || v % 2 == 0)
        throw ConfigError(std::string(what) + " must be odd and >= " + std::to_string(min) + " (got " +
                          std::to_string(v) + ")");
}

void require_rgb(const Image8& img, const char* op) {
    if (img.c != 3) throw ConfigError(std::string(op) + " needs a 3-channel image, got " + std::to_string(img.c));
}

}  // namespace

const char* to_string(ChannelOrder o) { return o == ChannelOrder::gbr ? "GBR" : "BGR"; }

Image8 motion_blur(const Image8& img, int kernel_length, double angle_degrees) {
    require_odd(kernel_length, 3, "motion blur kernel length");
    const double a = angle_degrees * std::numbers::pi / 180.0;
    std::set<std::pair<std::int64_t, std::int64_t>> cells;
    const int half = kernel_length / 2;
    for (int t = -half; t <= half; ++t)
        cells.insert({-std::lround(t * std::sin(a)), std::lround(t * std::cos(a))});
    const double weight = 1.0 / static_cast<double>(cells.size());
    Image8 out(img.h, img.w, img.c);
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x)
            for (std::int64_t c = 0; c < img.c; ++c) {
                double s = 0.0;
                for (const auto& [dy, dx] : cells) s += edge_at(img, y + dy, x + dx, c);
                out.at(y, x, c) = clamp_byte(s * weight);
            }
    return out;
}

Image8 median_blur(const Image8& img, int window) {
    require_odd(window, 3, "median window");
    const int r = window / 2;
    Image8 out(img.h, img.w, img.c);
    std::vector<std::uint8_t> buf(static_cast<std::size_t>(window * window));
    const auto mid = buf.begin() + static_cast<std::ptrdiff_t>(buf.size() / 2);
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x)
            for (std::int64_t c = 0; c < img.c; ++c) {
                std::size_t k = 0;
                for (int dy = -r; dy <= r; ++dy)
                    for (int dx = -r; dx <= r; ++dx) buf[k++] = edge_at(img, y + dy, x + dx, c);
                std::nth_element(buf.begin(), mid, buf.end());
                out.at(y, x, c) = *mid;
            }
    return out;
}

Image8 to_gray(const Image8& img, int channels) {
    if (channels < 1) throw ConfigError("gray output needs at least one channel");
    Image8 out(img.h, img.w, channels);
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x) {
            const std::uint8_t g =
                img.c == 1 ? img.at(y, x)
                           : clamp_byte(0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2));
            for (int c = 0; c < channels; ++c) out.at(y, x, c) = g;
        }
    return out;
}

Image8 emboss(const Image8& img, double strength) {
    Image8 out(img.h, img.w, img.c);
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x)
            for (std::int64_t c = 0; c < img.c; ++c) {
                const double d = 2.0 * img.at(y, x, c) - edge_at(img, y - 1, x - 1, c) - edge_at(img, y + 1, x + 1, c);
                out.at(y, x, c) = clamp_byte(128.0 + strength * d);
            }
    return out;
}

Image8 channel_rearrange(const Image8& img, ChannelOrder order) {
    require_rgb(img, "channel rearrange");
    static constexpr int gbr[3] = {1, 2, 0}, bgr[3] = {2, 1, 0};
    const int* src = order == ChannelOrder::gbr ? gbr : bgr;
    Image8 out(img.h, img.w, 3);
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, src[c]);
    return out;
}

Image8 photometric(const Image8& img, Photometric kind, double strength) {
    Image8 out(img.h, img.w, img.c);
    for (std::int64_t y = 0; y < img.h; ++y)
        for (std::int64_t x = 0; x < img.w; ++x)
            for (std::int64_t c = 0; c < img.c; ++c) {
                const double p = img.at(y, x, c);
                double v = p;
                switch (kind) {
                    case Photometric::sharpen: {
                        double box = 0.0;
                        for (int dy = -1; dy <= 1; ++dy)
                            for (int dx = -1; dx <= 1; ++dx) box += edge_at(img, y + dy, x + dx, c);
                        v = p + strength * (p - box / 9.0);
                        break;
                    }
                    case Photometric::contrast: v = (p - 128.0) * strength + 128.0; break;
                    case Photometric::brightness: v = p + strength; break;
                }
                out.at(y, x, c) = clamp_byte(v);
            }
    return out;
}

namespace {

Image8 rotate_image(const Image8& img, int degrees) {
    const bool swap = degrees != 180;
    Image8 out(swap ? img.w : img.h, swap ? img.h : img.w, img.c);
    for (std::int64_t y = 0; y < out.h; ++y)
        for (std::int64_t x = 0; x < out.w; ++x) {
            std::int64_t sy = 0, sx = 0;
            if (degrees == 90) {
                sy = img.h - 1 - x;
                sx = y;
            } else if (degrees == 180) {
                sy = img.h - 1 - y;
                sx = img.w - 1 - x;
            } else {
                sy = x;
                sx = img.w - 1 - y;
            }
            for (std::int64_t c = 0; c < img.c; ++c) out.at(y, x, c) = img.at(sy, sx, c);
        }
    return out;
}

// Inverse-maps output pixel centers about the image center.
Image8 zoom_image(const Image8& img, double factor, bool nearest) {
    Image8 out(img.h, img.w, img.c);
    const double cy = (static_cast<double>(img.h) - 1.0) / 2.0, cx = (static_cast<double>(img.w) - 1.0) / 2.0;
    for (std::int64_t y = 0; y < img.h; ++y) {
        const double sy = (static_cast<double>(y) - cy) / factor + cy;
        for (std::int64_t x = 0; x < img.w; ++x) {
            const double sx = (static_cast<double>(x) - cx) / factor + cx;
            if (sy < -0.5 || sy >= static_cast<double>(img.h) - 0.5 || sx < -0.5 ||
                sx >= static_cast<double>(img.w) - 0.5)
                continue;  // zero padding
            if (nearest) {
                const auto ny = static_cast<std::int64_t>(std::floor(sy + 0.5));
                const auto nx = static_cast<std::int64_t>(std::floor(sx + 0.5));
                for (std::int64_t c = 0; c < img.c; ++c) out.at(y, x, c) = img.at(ny, nx, c);
                continue;
            }
            const double fy = std::clamp(sy, 0.0, static_cast<double>(img.h - 1));
            const double fx = std::clamp(sx, 0.0, static_cast<double>(img.w - 1));
            const auto y0 = static_cast<std::int64_t>(fy), x0 = static_cast<std::int64_t>(fx);
            const auto y1 = std::min(y0 + 1, img.h - 1), x1 = std::min(x0 + 1, img.w - 1);
            const double ay = fy - static_cast<double>(y0), ax = fx - static_cast<double>(x0);
            for (std::int64_t c = 0; c < img.c; ++c) {
                const double top = img.at(y0, x0, c) * (1 - ax) + img.at(y0, x1, c) * ax;
                const double bot = img.at(y1, x0, c) * (1 - ax) + img.at(y1, x1, c) * ax;
                out.at(y, x, c) = clamp_byte(top * (1 - ay) + bot * ay);
            }
        }
    }
    return out;
}

}  // namespace

AugmentedPair geometric(const AugmentedPair& pair, Geometric kind, double param) {
    for (const auto& m : pair.masks)
        if (!m.same_dims(pair.image) || m.c != 1) throw ShapeError("mask dimensions differ from the image");
    AugmentedPair out;
    if (kind == Geometric::rotate) {
        const int deg = static_cast<int>(param);
        if (static_cast<double>(deg) != param || (deg != 90 && deg != 180 && deg != 270))
            throw ConfigError("rotation must be 90, 180 or 270 degrees (got " + std::to_string(param) + ")");
        if (deg != 180 && pair.image.h != pair.image.w)
            throw ConfigError("rotating a non-square image by " + std::to_string(deg) + " degrees changes its size");
        out.image = rotate_image(pair.image, deg);
        for (const auto& m : pair.masks) out.masks.push_back(rotate_image(m, deg));
    } else {
        if (!(param > 0.0)) throw ConfigError("zoom factor must be positive");
        out.image = zoom_image(pair.image, param, false);
        for (const auto& m : pair.masks) out.masks.push_back(zoom_image(m, param, true));
    }
    return out;
}

}  // namespace nseg::augment
