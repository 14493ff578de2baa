#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace cvrl {

// Writes an 8-bit RGB PNG (uncompressed deflate blocks, no dependencies).
// `rgb` is row-major, 3 bytes per pixel, size = 3 * width * height.
void write_png_rgb(const std::string& path, int width, int height,
                   const std::vector<uint8_t>& rgb);

}  // namespace cvrl
