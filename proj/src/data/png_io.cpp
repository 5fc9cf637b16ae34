#include <cstdio>
#include <memory>

#include <png.h>

#include "msa/data/dataset.hpp"
#include "msa/error.hpp"

namespace msa {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const noexcept { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open_file(const std::filesystem::path& path, const char* mode)
{
    File f(std::fopen(path.string().c_str(), mode));
    if (!f) throw IoError("cannot open " + path.string());
    return f;
}

[[noreturn]] void png_fail(png_structp png, png_const_charp msg)
{
    *static_cast<std::string*>(png_get_error_ptr(png)) = msg;
    png_longjmp(png, 1);
}

void png_warn(png_structp, png_const_charp) {}

void write_png(const std::filesystem::path& path, int h, int w, int color_type, int channels,
               const std::vector<std::uint8_t>& data)
{
    if (data.size() != std::size_t(h) * w * channels) throw ArgumentError("png: buffer size mismatch");
    File f = open_file(path, "wb");
    std::string err;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw IoError("png: out of memory");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("png write failed for " + path.string() + ": " + err);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, w, h, 8, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < h; ++y)
        png_write_row(png, const_cast<png_bytep>(data.data() + std::size_t(y) * w * channels));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace

GrayImage read_png_gray(const std::filesystem::path& path)
{
    File f = open_file(path, "rb");
    png_byte sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0)
        throw IoError(path.string() + " is not a PNG file");

    std::string err;
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &err, png_fail, png_warn);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("png: out of memory");
    }
    GrayImage img;
    std::string bad_format;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError("png read failed for " + path.string() + ": " + err);
    }
    png_init_io(png, f.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const int color = png_get_color_type(png, info);
    const int depth = png_get_bit_depth(png, info);
    if (color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw IoError(path.string() + " is not a grayscale PNG (color type " + std::to_string(color) + ")");
    }
    if (depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (depth == 16) png_set_strip_16(png);
    png_read_update_info(png, info);
    img.w = int(png_get_image_width(png, info));
    img.h = int(png_get_image_height(png, info));
    img.data.resize(std::size_t(img.h) * img.w);
    for (int y = 0; y < img.h; ++y) png_read_row(png, img.data.data() + std::size_t(y) * img.w, nullptr);
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png_gray(const std::filesystem::path& path, const GrayImage& img)
{
    write_png(path, img.h, img.w, PNG_COLOR_TYPE_GRAY, 1, img.data);
}

void write_png_rgb(const std::filesystem::path& path, int h, int w, const std::vector<std::uint8_t>& rgb)
{
    write_png(path, h, w, PNG_COLOR_TYPE_RGB, 3, rgb);
}

}  // namespace msa
