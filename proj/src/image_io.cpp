#include "refield/image_io.hpp"

#include "refield/error.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

namespace refield {

namespace {

std::string lower_extension(const std::filesystem::path& path)
{
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

std::vector<char> read_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::ofstream open_output(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    return out;
}

// Reads one whitespace-delimited header token starting at pos.
std::string next_token(const std::vector<char>& buf, std::size_t& pos)
{
    while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) {
        ++pos;
    }
    std::string tok;
    while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) {
        tok += buf[pos++];
    }
    return tok;
}

float to_little_endian(float v)
{
    if constexpr (std::endian::native == std::endian::big) {
        auto bits = std::bit_cast<std::uint32_t>(v);
        bits = (bits >> 24) | ((bits >> 8) & 0xff00u) | ((bits << 8) & 0xff0000u) | (bits << 24);
        return std::bit_cast<float>(bits);
    }
    return v;
}

float swap_float(float v)
{
    auto bits = std::bit_cast<std::uint32_t>(v);
    bits = (bits >> 24) | ((bits >> 8) & 0xff00u) | ((bits << 8) & 0xff0000u) | (bits << 24);
    return std::bit_cast<float>(bits);
}

} // namespace

Image load_image(const std::filesystem::path& path)
{
    const std::string ext = lower_extension(path);
    if (ext == ".pfm") {
        return load_pfm(path);
    }
    if (ext == ".png") {
        return load_png(path);
    }
    if (ext == ".hdr") {
        return load_hdr(path);
    }
    throw DataError("unsupported image extension: " + path.string());
}

void save_image(const std::filesystem::path& path, const Image& image)
{
    const std::string ext = lower_extension(path);
    if (ext == ".pfm") {
        save_pfm(path, image);
    } else if (ext == ".png") {
        save_png(path, image);
    } else if (ext == ".hdr") {
        save_hdr(path, image);
    } else {
        throw DataError("unsupported image extension: " + path.string());
    }
}

Image load_pfm(const std::filesystem::path& path)
{
    const std::vector<char> buf = read_file(path);
    std::size_t pos = 0;
    const std::string magic = next_token(buf, pos);
    if (magic != "PF" && magic != "Pf") {
        throw DataError(path.string() + ": not a PFM file");
    }
    const int channels = magic == "PF" ? 3 : 1;
    int width = 0;
    int height = 0;
    double scale = 0.0;
    try {
        width = std::stoi(next_token(buf, pos));
        height = std::stoi(next_token(buf, pos));
        scale = std::stod(next_token(buf, pos));
    } catch (const std::exception&) {
        throw DataError(path.string() + ": malformed PFM header");
    }
    if (width <= 0 || height <= 0 || scale == 0.0) {
        throw DataError(path.string() + ": malformed PFM header");
    }
    ++pos; // single whitespace byte after the scale
    const std::size_t count = static_cast<std::size_t>(width) * height * channels;
    if (buf.size() < pos + count * sizeof(float)) {
        throw DataError(path.string() + ": truncated PFM data");
    }
    const bool little = scale < 0.0;
    const bool swap = little != (std::endian::native == std::endian::little);
    Image img(width, height);
    const char* data = buf.data() + pos;
    for (int row = 0; row < height; ++row) {
        const int y = height - 1 - row;
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const int src_c = channels == 3 ? c : 0;
                float v = 0.0f;
                std::memcpy(&v, data + ((static_cast<std::size_t>(row) * width + x) * channels + src_c) * sizeof(float),
                            sizeof(float));
                img.at(x, y, c) = swap ? swap_float(v) : v;
            }
        }
    }
    return img;
}

void save_pfm(const std::filesystem::path& path, const Image& image)
{
    std::ofstream out = open_output(path);
    out << "PF\n" << image.width() << ' ' << image.height() << "\n-1\n";
    std::vector<float> row(static_cast<std::size_t>(image.width()) * 3);
    for (int y = image.height() - 1; y >= 0; --y) {
        for (int x = 0; x < image.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                row[static_cast<std::size_t>(x) * 3 + c] = to_little_endian(static_cast<float>(image.at(x, y, c)));
            }
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

double srgb_to_linear(double v)
{
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double v)
{
    v = std::clamp(v, 0.0, 1.0);
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

Image load_png(const std::filesystem::path& path)
{
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    const std::string name = path.string();
    if (!png_image_begin_read_from_file(&png, name.c_str())) {
        throw DataError(name + ": " + png.message);
    }
    // The simplified API would silently reduce 16-bit data; refuse it instead.
    {
        std::FILE* fp = std::fopen(name.c_str(), "rb");
        unsigned char head[25] = {};
        const std::size_t got = fp ? std::fread(head, 1, sizeof(head), fp) : 0;
        if (fp) {
            std::fclose(fp);
        }
        if (got == sizeof(head) && head[24] == 16) {
            png_image_free(&png);
            throw DataError(name + ": unsupported PNG bit depth 16");
        }
    }
    png.format = PNG_FORMAT_RGB;
    std::vector<png_byte> pixels(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, pixels.data(), 0, nullptr)) {
        throw DataError(name + ": " + png.message);
    }
    Image img(static_cast<int>(png.width), static_cast<int>(png.height));
    auto data = img.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = srgb_to_linear(pixels[i] / 255.0);
    }
    return img;
}

void save_png(const std::filesystem::path& path, const Image& image)
{
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width());
    png.height = static_cast<png_uint_32>(image.height());
    png.format = PNG_FORMAT_RGB;
    std::vector<png_byte> pixels(image.data().size());
    const auto data = image.data();
    for (std::size_t i = 0; i < data.size(); ++i) {
        pixels[i] = static_cast<png_byte>(std::lround(linear_to_srgb(data[i]) * 255.0));
    }
    const std::string name = path.string();
    if (!png_image_write_to_file(&png, name.c_str(), 0, pixels.data(), 0, nullptr)) {
        throw DataError(name + ": " + png.message);
    }
}

Rgbe encode_rgbe(const Eigen::Vector3d& rgb)
{
    const double m = rgb.maxCoeff();
    if (!(m > 1e-32)) {
        return {};
    }
    int e = 0;
    const double f = std::frexp(m, &e) * 256.0 / m;
    return {static_cast<std::uint8_t>(std::max(0.0, rgb.x()) * f), static_cast<std::uint8_t>(std::max(0.0, rgb.y()) * f),
            static_cast<std::uint8_t>(std::max(0.0, rgb.z()) * f), static_cast<std::uint8_t>(e + 128)};
}

Eigen::Vector3d decode_rgbe(const Rgbe& rgbe)
{
    if (rgbe.e == 0) {
        return Eigen::Vector3d::Zero();
    }
    const double f = std::ldexp(1.0, static_cast<int>(rgbe.e) - (128 + 8));
    return {rgbe.r * f, rgbe.g * f, rgbe.b * f};
}

Image load_hdr(const std::filesystem::path& path)
{
    const std::vector<char> buf = read_file(path);
    const std::string name = path.string();
    std::size_t pos = 0;
    const auto read_line = [&]() {
        std::string line;
        while (pos < buf.size() && buf[pos] != '\n') {
            line += buf[pos++];
        }
        if (pos >= buf.size()) {
            throw DataError(name + ": malformed Radiance header");
        }
        ++pos;
        return line;
    };
    const std::string magic = read_line();
    if (magic.rfind("#?", 0) != 0) {
        throw DataError(name + ": not a Radiance HDR file");
    }
    for (std::string line = read_line(); !line.empty(); line = read_line()) {
        if (line.rfind("FORMAT=", 0) == 0 && line != "FORMAT=32-bit_rle_rgbe") {
            throw DataError(name + ": unsupported format " + line);
        }
    }
    const std::string res = read_line();
    char ys[3] = {}, xs[3] = {};
    int height = 0, width = 0;
    if (std::sscanf(res.c_str(), "%2s %d %2s %d", ys, &height, xs, &width) != 4 || std::string(ys) != "-Y" ||
        std::string(xs) != "+X" || width <= 0 || height <= 0) {
        throw DataError(name + ": unsupported resolution line '" + res + "'");
    }
    const auto byte = [&]() -> std::uint8_t {
        if (pos >= buf.size()) {
            throw DataError(name + ": truncated HDR data");
        }
        return static_cast<std::uint8_t>(buf[pos++]);
    };
    Image img(width, height);
    std::vector<std::uint8_t> scan(static_cast<std::size_t>(width) * 4);
    for (int y = 0; y < height; ++y) {
        const std::size_t start = pos;
        const std::uint8_t b0 = byte(), b1 = byte(), b2 = byte(), b3 = byte();
        const bool rle = width >= 8 && width < 32768 && b0 == 2 && b1 == 2 && (b2 & 0x80) == 0;
        if (rle) {
            if (((b2 << 8) | b3) != width) {
                throw DataError(name + ": scanline width mismatch");
            }
            for (int c = 0; c < 4; ++c) {
                int x = 0;
                while (x < width) {
                    std::uint8_t count = byte();
                    if (count > 128) {
                        count -= 128;
                        const std::uint8_t v = byte();
                        if (x + count > width) {
                            throw DataError(name + ": bad run length");
                        }
                        for (int k = 0; k < count; ++k) {
                            scan[static_cast<std::size_t>(x++) * 4 + c] = v;
                        }
                    } else {
                        if (count == 0 || x + count > width) {
                            throw DataError(name + ": bad run length");
                        }
                        for (int k = 0; k < count; ++k) {
                            scan[static_cast<std::size_t>(x++) * 4 + c] = byte();
                        }
                    }
                }
            }
        } else {
            pos = start;
            for (int x = 0; x < width; ++x) {
                for (int c = 0; c < 4; ++c) {
                    scan[static_cast<std::size_t>(x) * 4 + c] = byte();
                }
            }
        }
        for (int x = 0; x < width; ++x) {
            const std::uint8_t* p = &scan[static_cast<std::size_t>(x) * 4];
            img.set_pixel(x, y, decode_rgbe({p[0], p[1], p[2], p[3]}));
        }
    }
    return img;
}

void save_hdr(const std::filesystem::path& path, const Image& image)
{
    std::ofstream out = open_output(path);
    out << "#?RADIANCE\nFORMAT=32-bit_rle_rgbe\n\n-Y " << image.height() << " +X " << image.width() << "\n";
    std::vector<std::uint8_t> scan(static_cast<std::size_t>(image.width()) * 4);
    const bool adaptive = image.width() >= 8 && image.width() < 32768;
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const Rgbe e = encode_rgbe(image.pixel(x, y));
            std::uint8_t* p = &scan[static_cast<std::size_t>(x) * 4];
            p[0] = e.r;
            p[1] = e.g;
            p[2] = e.b;
            p[3] = e.e;
        }
        if (!adaptive) {
            out.write(reinterpret_cast<const char*>(scan.data()), static_cast<std::streamsize>(scan.size()));
            continue;
        }
        // Literal-only run-length scanlines: a flat scanline whose first pixel
        // happens to read 2,2,<128 would otherwise be misparsed as RLE.
        const int w = image.width();
        const std::uint8_t head[4] = {2, 2, static_cast<std::uint8_t>(w >> 8), static_cast<std::uint8_t>(w & 0xff)};
        out.write(reinterpret_cast<const char*>(head), 4);
        for (int c = 0; c < 4; ++c) {
            for (int x = 0; x < w; x += 128) {
                const int n = std::min(128, w - x);
                out.put(static_cast<char>(n));
                for (int k = 0; k < n; ++k) {
                    out.put(static_cast<char>(scan[static_cast<std::size_t>(x + k) * 4 + c]));
                }
            }
        }
    }
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

} // namespace refield
