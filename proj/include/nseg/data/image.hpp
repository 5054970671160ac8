#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "nseg/core/error.hpp"

namespace nseg::data {

// Interleaved 8-bit pixels, row-major, `c` channels per pixel.
struct Image8 {
    std::int64_t h = 0, w = 0, c = 0;
    std::vector<std::uint8_t> px;

    Image8() = default;
    Image8(std::int64_t h_, std::int64_t w_, std::int64_t c_, std::uint8_t fill = 0)
        : h(h_), w(w_), c(c_), px(static_cast<std::size_t>(h_ * w_ * c_), fill) {}

    std::uint8_t& at(std::int64_t y, std::int64_t x, std::int64_t ch = 0) {
        return px[static_cast<std::size_t>((y * w + x) * c + ch)];
    }
    std::uint8_t at(std::int64_t y, std::int64_t x, std::int64_t ch = 0) const {
        return px[static_cast<std::size_t>((y * w + x) * c + ch)];
    }
    bool same_dims(const Image8& o) const noexcept { return h == o.h && w == o.w; }

    friend bool operator==(const Image8&, const Image8&) = default;
};

// Reads an 8- or 16-bit PNG. Gray and gray+alpha give 1 channel; RGB, RGBA
// and palette images give 3. Alpha is dropped, 16-bit samples keep the high byte.
// Throws InputError if the file is missing or not a PNG.
Image8 read_png(const std::filesystem::path& path);

// Writes a 1-channel (gray) or 3-channel (RGB) image. Output bytes depend only
// on the pixels. Throws Error on I/O failure.
void write_png(const std::filesystem::path& path, const Image8& img);

}  // namespace nseg::data
