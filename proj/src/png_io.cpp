#include "ssnas/png_io.hpp"

#include <png.h>

#include <cstring>

#include "ssnas/common.hpp"

namespace ssnas::png_io {

GrayImage read_gray8(const std::string& path) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, path.c_str()))
        throw IoError("failed to open PNG '" + path + "': " + png.message);
    png.format = PNG_FORMAT_GRAY;
    GrayImage out;
    out.height = static_cast<int>(png.height);
    out.width = static_cast<int>(png.width);
    out.pixels.resize(static_cast<std::size_t>(png.height) * png.width);
    if (!png_image_finish_read(&png, nullptr, out.pixels.data(), 0, nullptr)) {
        png_image_free(&png);
        throw IoError("failed to read PNG '" + path + "': " + png.message);
    }
    return out;
}

void write_gray8(const std::string& path, const GrayImage& image) {
    if (image.pixels.size() != static_cast<std::size_t>(image.height) * image.width)
        throw ContractError("write_gray8: pixel buffer does not match dimensions");
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.format = PNG_FORMAT_GRAY;
    png.height = static_cast<png_uint_32>(image.height);
    png.width = static_cast<png_uint_32>(image.width);
    if (!png_image_write_to_file(&png, path.c_str(), 0, image.pixels.data(), 0, nullptr))
        throw IoError("failed to write PNG '" + path + "': " + png.message);
}

} // namespace ssnas::png_io
