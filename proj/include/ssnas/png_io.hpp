#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace ssnas::png_io {

struct GrayImage {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> pixels; // row-major
};

GrayImage read_gray8(const std::string& path);
void write_gray8(const std::string& path, const GrayImage& image);

} // namespace ssnas::png_io
