#pragma once

#include "refield/image.hpp"

#include <cstdint>
#include <filesystem>

namespace refield {

/// Loads .pfm, .png or .hdr by extension. Throws DataError on malformed or
/// unsupported files (including 16-bit PNG).
Image load_image(const std::filesystem::path& path);
void save_image(const std::filesystem::path& path, const Image& image);

Image load_pfm(const std::filesystem::path& path);
/// Little-endian float32, bottom-up scanlines, scale -1.
void save_pfm(const std::filesystem::path& path, const Image& image);

/// 8-bit sRGB; pixel values are linear and converted on the way in and out.
Image load_png(const std::filesystem::path& path);
void save_png(const std::filesystem::path& path, const Image& image);

/// Radiance RGBE. Reading accepts flat and run-length encoded scanlines.
/// Writing uses literal-only RLE scanlines where the format allows it
/// (widths 8..32767) and flat scanlines otherwise.
Image load_hdr(const std::filesystem::path& path);
void save_hdr(const std::filesystem::path& path, const Image& image);

struct Rgbe {
    std::uint8_t r = 0, g = 0, b = 0, e = 0;
};
Rgbe encode_rgbe(const Eigen::Vector3d& rgb);
Eigen::Vector3d decode_rgbe(const Rgbe& rgbe);

double srgb_to_linear(double v);
double linear_to_srgb(double v);

} // namespace refield
