#pragma once

#include "refield/geometry.hpp"
#include "refield/image.hpp"
#include "refield/parallel.hpp"
#include "refield/uv_atlas.hpp"

#include <cstdint>
#include <vector>

namespace refield {

/// Result of z-buffered rasterization, one sample per pixel center.
///
/// mask[i] == (triangle[i] >= 0) == isfinite(depth[i]). Barycentric weights are
/// perspective-correct and sum to one on covered pixels.
struct FrameBuffer {
    int width = 0;
    int height = 0;
    std::vector<double> depth;
    std::vector<int> triangle;
    std::vector<Eigen::Vector3d> barycentric;
    std::vector<Eigen::Vector2d> uv;   ///< interpolated texture coordinate
    std::vector<std::uint8_t> mask;    ///< M_t
    Image color;                       ///< filled by shade_texture / rasterize

    std::size_t pixel_count() const { return depth.size(); }
    std::size_t covered_count() const;
};

/// Visibility pass: nearest triangle per pixel center. Triangles with any
/// vertex at z <= 0 are skipped (no near-plane clipping). At equal depth the
/// lower triangle index wins, making the result independent of submission
/// order and of the band decomposition.
FrameBuffer rasterize_geometry(const Mesh& camera_mesh, const Camera& camera, Exec exec = Exec::parallel);

/// Fills fb.color by sampling `texture` at each covered pixel's UV.
void shade_texture(FrameBuffer& fb, const Image& texture, Filter filter = Filter::bilinear, Exec exec = Exec::parallel);

/// rasterize_geometry followed by shade_texture.
FrameBuffer rasterize(const Mesh& camera_mesh, const Camera& camera, const Image& texture,
                      Filter filter = Filter::bilinear, Exec exec = Exec::parallel);

/// Adjoint of shade_texture for fixed visibility: scatters each covered
/// pixel's upstream gradient into the texels it sampled, weighted by the
/// filter coefficients. Returns a texture_width x texture_height raster.
Image backprop_texture(const FrameBuffer& fb, const Image& grad_image, int texture_width, int texture_height,
                       Filter filter = Filter::bilinear, Exec exec = Exec::parallel);

/// Pulls image colors back into UV space. A texel is valid when its surface
/// point is front-facing, projects inside the image and is not occluded
/// according to the z-buffer.
TextureMap unproject_to_uv(const Image& image, const Mesh& camera_mesh, const Camera& camera, const UvRaster& raster,
                           Exec exec = Exec::parallel);
TextureMap unproject_to_uv(const Image& image, const Mesh& camera_mesh, const Camera& camera, int size);

/// Per-pixel camera-space surface point of a covered pixel.
Eigen::Vector3d surface_point(const FrameBuffer& fb, const Mesh& camera_mesh, std::size_t pixel);

} // namespace refield
