#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace refield {

/// Three-channel linear raster, row-major with interleaved channels.
///
/// Storage is double precision so that adjoint and finite-difference checks on
/// rendered images are not dominated by rounding; file formats are float32.
class Image {
public:
    static constexpr int kChannels = 3;

    Image() = default;
    Image(int width, int height, double fill = 0.0);

    int width() const { return width_; }
    int height() const { return height_; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width_) * height_; }
    bool empty() const { return data_.empty(); }

    double& at(int x, int y, int c) { return data_[index(x, y) * kChannels + c]; }
    double at(int x, int y, int c) const { return data_[index(x, y) * kChannels + c]; }

    Eigen::Vector3d pixel(int x, int y) const;
    void set_pixel(int x, int y, const Eigen::Vector3d& value);

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width_ + x; }

    bool same_shape(const Image& other) const { return width_ == other.width_ && height_ == other.height_; }

    Image& operator+=(const Image& other);
    Image& operator*=(double s);

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<double> data_;
};

enum class TextureKind : std::uint8_t { radiance, normal };

/// A raster in the normalized UV space of the template mesh, with a per-texel
/// validity mask (texels outside the atlas or not observed are invalid).
struct TextureMap {
    Image image;
    std::vector<std::uint8_t> valid;
    TextureKind kind = TextureKind::radiance;

    TextureMap() = default;
    TextureMap(int width, int height, double fill = 0.0, bool all_valid = true);

    int width() const { return image.width(); }
    int height() const { return image.height(); }
    bool is_valid(int x, int y) const { return valid[image.index(x, y)] != 0; }
    std::size_t valid_count() const;
};

enum class Filter : std::uint8_t { bilinear, nearest };

/// One tap of a texture lookup: flat texel index and its weight.
struct TexelTap {
    std::size_t texel = 0;
    double weight = 0.0;
};

/// Texel taps for a lookup at uv in [0,1]^2 with clamp-to-edge addressing.
/// Texel (i, j) has its center at ((i + 0.5) / W, (j + 0.5) / H).
/// Returns the number of taps written (4 for bilinear, 1 for nearest).
int texture_taps(int width, int height, const Eigen::Vector2d& uv, Filter filter, TexelTap (&taps)[4]);

Eigen::Vector3d sample_texture(const Image& texture, const Eigen::Vector2d& uv, Filter filter = Filter::bilinear);

/// Bilinear lookup at continuous pixel coordinates (pixel centers at +0.5).
/// Returns false when the point lies outside the image.
bool sample_image(const Image& image, double px, double py, Eigen::Vector3d& out);

/// Fills invalid texels bordering valid ones with the mean of their valid
/// neighbours, `iterations` rings deep. The validity mask is left untouched.
void dilate(TextureMap& texture, int iterations = 2);

} // namespace refield
