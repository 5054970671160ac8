#include "nseg/data/image.hpp"

#include <png.h>

#include <cstdio>
#include <memory>

namespace nseg::data {
namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp png, png_const_charp msg) {
    auto* what = static_cast<std::string*>(png_get_error_ptr(png));
    if (what) *what = msg;
    png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

}  // namespace

Image8 read_png(const std::filesystem::path& path) {
    File f(std::fopen(path.c_str(), "rb"));
    if (!f) throw InputError("cannot open image " + path.string());
    png_byte sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw InputError("not a PNG file: " + path.string());

    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw Error("libpng initialization failed");
    }

    Image8 img;
    std::vector<png_bytep> rows;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("corrupt PNG " + path.string() + ": " + err);
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int color = png_get_color_type(png, info);
    if (png_get_bit_depth(png, info) == 16) png_set_strip_16(png);
    if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color == PNG_COLOR_TYPE_GRAY && png_get_bit_depth(png, info) < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    img.h = png_get_image_height(png, info);
    img.w = png_get_image_width(png, info);
    img.c = png_get_channels(png, info);
    img.px.resize(static_cast<std::size_t>(img.h * img.w * img.c));
    rows.resize(static_cast<std::size_t>(img.h));
    for (std::int64_t y = 0; y < img.h; ++y) rows[static_cast<std::size_t>(y)] = img.px.data() + y * img.w * img.c;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    if (img.c != 1 && img.c != 3) throw InputError("unsupported channel layout in " + path.string());
    return img;
}

void write_png(const std::filesystem::path& path, const Image8& img) {
    if (img.c != 1 && img.c != 3) throw ShapeError("PNG output needs 1 or 3 channels, got " + std::to_string(img.c));
    if (img.h < 1 || img.w < 1) throw ShapeError("cannot write an empty image");
    File f(std::fopen(path.c_str(), "wb"));
    if (!f) throw Error("cannot open " + path.string() + " for writing");

    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw Error("libpng initialization failed");
    }
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.h));
    for (std::int64_t y = 0; y < img.h; ++y)
        rows[static_cast<std::size_t>(y)] = const_cast<png_bytep>(img.px.data() + y * img.w * img.c);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("failed writing " + path.string() + ": " + err);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h), 8,
                 img.c == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    if (std::fflush(f.get()) != 0) throw Error("failed writing " + path.string());
}

}  // namespace nseg::data
