#include "refield/image.hpp"

#include "refield/error.hpp"

#include <algorithm>
#include <cmath>

namespace refield {

Image::Image(int width, int height, double fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height * kChannels, fill)
{
    if (width < 0 || height < 0) {
        throw DimensionError("image dimensions must be non-negative");
    }
}

Eigen::Vector3d Image::pixel(int x, int y) const
{
    const double* p = &data_[index(x, y) * kChannels];
    return {p[0], p[1], p[2]};
}

void Image::set_pixel(int x, int y, const Eigen::Vector3d& value)
{
    double* p = &data_[index(x, y) * kChannels];
    p[0] = value.x();
    p[1] = value.y();
    p[2] = value.z();
}

Image& Image::operator+=(const Image& other)
{
    if (!same_shape(other)) {
        throw DimensionError("image shapes differ");
    }
    for (std::size_t i = 0; i < data_.size(); ++i) {
        data_[i] += other.data_[i];
    }
    return *this;
}

Image& Image::operator*=(double s)
{
    for (double& v : data_) {
        v *= s;
    }
    return *this;
}

TextureMap::TextureMap(int width, int height, double fill, bool all_valid)
    : image(width, height, fill), valid(static_cast<std::size_t>(width) * height, all_valid ? 1 : 0)
{
}

std::size_t TextureMap::valid_count() const
{
    return static_cast<std::size_t>(std::count(valid.begin(), valid.end(), std::uint8_t{1}));
}

int texture_taps(int width, int height, const Eigen::Vector2d& uv, Filter filter, TexelTap (&taps)[4])
{
    const double x = uv.x() * width - 0.5;
    const double y = uv.y() * height - 0.5;
    const auto texel = [&](int i, int j) {
        i = std::clamp(i, 0, width - 1);
        j = std::clamp(j, 0, height - 1);
        return static_cast<std::size_t>(j) * width + i;
    };
    if (filter == Filter::nearest) {
        taps[0] = {texel(static_cast<int>(std::floor(x + 0.5)), static_cast<int>(std::floor(y + 0.5))), 1.0};
        return 1;
    }
    const double fx0 = std::floor(x);
    const double fy0 = std::floor(y);
    const int x0 = static_cast<int>(fx0);
    const int y0 = static_cast<int>(fy0);
    const double ax = x - fx0;
    const double ay = y - fy0;
    taps[0] = {texel(x0, y0), (1.0 - ax) * (1.0 - ay)};
    taps[1] = {texel(x0 + 1, y0), ax * (1.0 - ay)};
    taps[2] = {texel(x0, y0 + 1), (1.0 - ax) * ay};
    taps[3] = {texel(x0 + 1, y0 + 1), ax * ay};
    return 4;
}

Eigen::Vector3d sample_texture(const Image& texture, const Eigen::Vector2d& uv, Filter filter)
{
    TexelTap taps[4];
    const int n = texture_taps(texture.width(), texture.height(), uv, filter, taps);
    const auto data = texture.data();
    Eigen::Vector3d out = Eigen::Vector3d::Zero();
    for (int k = 0; k < n; ++k) {
        const double* p = &data[taps[k].texel * Image::kChannels];
        out += taps[k].weight * Eigen::Vector3d(p[0], p[1], p[2]);
    }
    return out;
}

bool sample_image(const Image& image, double px, double py, Eigen::Vector3d& out)
{
    if (!(px >= 0.0 && py >= 0.0 && px <= image.width() && py <= image.height())) {
        return false;
    }
    const Eigen::Vector2d uv(px / image.width(), py / image.height());
    out = sample_texture(image, uv, Filter::bilinear);
    return true;
}

void dilate(TextureMap& texture, int iterations)
{
    const int w = texture.width();
    const int h = texture.height();
    std::vector<std::uint8_t> filled = texture.valid;
    for (int it = 0; it < iterations; ++it) {
        std::vector<std::uint8_t> next = filled;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) {
                if (filled[texture.image.index(x, y)]) {
                    continue;
                }
                Eigen::Vector3d sum = Eigen::Vector3d::Zero();
                int count = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const int nx = x + dx;
                        const int ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= w || ny >= h || !filled[texture.image.index(nx, ny)]) {
                            continue;
                        }
                        sum += texture.image.pixel(nx, ny);
                        ++count;
                    }
                }
                if (count > 0) {
                    texture.image.set_pixel(x, y, sum / count);
                    next[texture.image.index(x, y)] = 1;
                }
            }
        }
        filled = std::move(next);
    }
}

} // namespace refield
