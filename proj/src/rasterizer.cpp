#include "refield/rasterizer.hpp"

#include "raster_common.hpp"
#include "refield/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace refield {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr int kBandRows = 8;

struct ProjectedTriangle {
    detail::CoverageTriangle coverage;
    double inv_z[3];
};

std::vector<ProjectedTriangle> project_triangles(const Mesh& mesh, const Camera& camera)
{
    const auto& tris = mesh.triangles();
    std::vector<ProjectedTriangle> out;
    out.reserve(tris.size());
    for (const Triangle& t : tris) {
        Eigen::Vector2d p[3] = {Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero(), Eigen::Vector2d::Zero()};
        double inv_z[3] = {0.0, 0.0, 0.0};
        bool ok = true;
        for (int k = 0; k < 3; ++k) {
            const Eigen::Vector3d v = mesh.vertices.col(t[k]);
            if (!(v.z() > 0.0)) {
                ok = false;
                break;
            }
            inv_z[k] = 1.0 / v.z();
            p[k] = camera.principal_point + camera.focal * Eigen::Vector2d(v.x(), v.y()) * inv_z[k];
        }
        ProjectedTriangle pt{detail::CoverageTriangle(p[0], p[1], p[2]), {0.0, 0.0, 0.0}};
        if (!ok) {
            pt.coverage.degenerate = true;
        } else {
            std::copy(inv_z, inv_z + 3, pt.inv_z);
        }
        out.push_back(pt);
    }
    return out;
}

void rasterize_rows(const Mesh& mesh, const std::vector<ProjectedTriangle>& tris, int row_begin, int row_end,
                    FrameBuffer& fb)
{
    const auto& topo_tris = mesh.triangles();
    const auto& uv = mesh.uv();
    for (std::size_t t = 0; t < tris.size(); ++t) {
        const auto& tri = tris[t];
        if (tri.coverage.degenerate) {
            continue;
        }
        int x0, x1, y0, y1;
        detail::CoverageTriangle::sample_range(tri.coverage.min_x, tri.coverage.max_x, fb.width, x0, x1);
        detail::CoverageTriangle::sample_range(tri.coverage.min_y, tri.coverage.max_y, fb.height, y0, y1);
        y0 = std::max(y0, row_begin);
        y1 = std::min(y1, row_end - 1);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                Eigen::Vector3d screen;
                if (!tri.coverage.cover(Eigen::Vector2d(x + 0.5, y + 0.5), screen)) {
                    continue;
                }
                const double inv_z = screen(0) * tri.inv_z[0] + screen(1) * tri.inv_z[1] + screen(2) * tri.inv_z[2];
                const double z = 1.0 / inv_z;
                const auto pixel = static_cast<std::size_t>(y) * fb.width + x;
                const int id = static_cast<int>(t);
                if (z > fb.depth[pixel] || (z == fb.depth[pixel] && id > fb.triangle[pixel])) {
                    continue;
                }
                const Eigen::Vector3d persp(screen(0) * tri.inv_z[0] * z, screen(1) * tri.inv_z[1] * z,
                                            screen(2) * tri.inv_z[2] * z);
                const Triangle& vt = topo_tris[t];
                fb.depth[pixel] = z;
                fb.triangle[pixel] = id;
                fb.barycentric[pixel] = persp;
                fb.uv[pixel] = persp(0) * uv.col(vt[0]) + persp(1) * uv.col(vt[1]) + persp(2) * uv.col(vt[2]);
                fb.mask[pixel] = 1;
            }
        }
    }
}

} // namespace

std::size_t FrameBuffer::covered_count() const
{
    return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), std::uint8_t{1}));
}

FrameBuffer rasterize_geometry(const Mesh& camera_mesh, const Camera& camera, Exec exec)
{
    camera.validate();
    if (camera_mesh.space != Space::camera) {
        throw DataError("rasterize expects a camera-space mesh");
    }
    FrameBuffer fb;
    fb.width = camera.width;
    fb.height = camera.height;
    const auto n = static_cast<std::size_t>(fb.width) * fb.height;
    fb.depth.assign(n, kInf);
    fb.triangle.assign(n, -1);
    fb.barycentric.assign(n, Eigen::Vector3d::Zero());
    fb.uv.assign(n, Eigen::Vector2d::Zero());
    fb.mask.assign(n, 0);
    fb.color = Image(fb.width, fb.height, 0.0);

    const auto tris = project_triangles(camera_mesh, camera);
    if (exec == Exec::serial) {
        rasterize_rows(camera_mesh, tris, 0, fb.height, fb);
    } else {
        // Bands own disjoint rows, so no merge step is needed.
        const int bands = (fb.height + kBandRows - 1) / kBandRows;
#pragma omp parallel for schedule(dynamic)
        for (int b = 0; b < bands; ++b) {
            rasterize_rows(camera_mesh, tris, b * kBandRows, std::min(fb.height, (b + 1) * kBandRows), fb);
        }
    }
    return fb;
}

void shade_texture(FrameBuffer& fb, const Image& texture, Filter filter, Exec exec)
{
    if (texture.empty()) {
        throw DimensionError("cannot shade with an empty texture");
    }
    const auto n = static_cast<std::ptrdiff_t>(fb.pixel_count());
    auto data = fb.color.data();
    const auto body = [&](std::ptrdiff_t i) {
        const auto p = static_cast<std::size_t>(i);
        Eigen::Vector3d c = Eigen::Vector3d::Zero();
        if (fb.mask[p]) {
            c = sample_texture(texture, fb.uv[p], filter);
        }
        data[p * 3] = c.x();
        data[p * 3 + 1] = c.y();
        data[p * 3 + 2] = c.z();
    };
    if (exec == Exec::serial) {
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            body(i);
        }
    } else {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            body(i);
        }
    }
}

FrameBuffer rasterize(const Mesh& camera_mesh, const Camera& camera, const Image& texture, Filter filter, Exec exec)
{
    FrameBuffer fb = rasterize_geometry(camera_mesh, camera, exec);
    shade_texture(fb, texture, filter, exec);
    return fb;
}

Image backprop_texture(const FrameBuffer& fb, const Image& grad_image, int texture_width, int texture_height,
                       Filter filter, Exec exec)
{
    if (grad_image.width() != fb.width || grad_image.height() != fb.height) {
        throw DimensionError("gradient image does not match the framebuffer");
    }
    if (texture_width <= 0 || texture_height <= 0) {
        throw DimensionError("texture dimensions must be positive");
    }
    Image grad(texture_width, texture_height, 0.0);
    auto out = grad.data();
    const auto in = grad_image.data();
    const std::size_t pixels = fb.pixel_count();

    if (exec == Exec::serial) {
        for (std::size_t p = 0; p < pixels; ++p) {
            if (!fb.mask[p]) {
                continue;
            }
            TexelTap taps[4];
            const int k = texture_taps(texture_width, texture_height, fb.uv[p], filter, taps);
            for (int j = 0; j < k; ++j) {
                for (int c = 0; c < 3; ++c) {
                    out[taps[j].texel * 3 + c] += taps[j].weight * in[p * 3 + c];
                }
            }
        }
        return grad;
    }

    // Gather formulation: a texel-major list of (pixel, weight) contributions
    // built in pixel order, so every texel sums in the same order as the
    // serial scatter and the result is bit-identical.
    const std::size_t texels = static_cast<std::size_t>(texture_width) * texture_height;
    std::vector<std::uint32_t> offsets(texels + 1, 0);
    std::vector<TexelTap> all_taps;
    std::vector<std::uint32_t> tap_pixel;
    all_taps.reserve(fb.covered_count() * 4);
    tap_pixel.reserve(fb.covered_count() * 4);
    for (std::size_t p = 0; p < pixels; ++p) {
        if (!fb.mask[p]) {
            continue;
        }
        TexelTap taps[4];
        const int k = texture_taps(texture_width, texture_height, fb.uv[p], filter, taps);
        for (int j = 0; j < k; ++j) {
            all_taps.push_back(taps[j]);
            tap_pixel.push_back(static_cast<std::uint32_t>(p));
            ++offsets[taps[j].texel + 1];
        }
    }
    for (std::size_t t = 0; t < texels; ++t) {
        offsets[t + 1] += offsets[t];
    }
    std::vector<std::uint32_t> order(all_taps.size());
    {
        std::vector<std::uint32_t> cursor(offsets.begin(), offsets.end() - 1);
        for (std::size_t i = 0; i < all_taps.size(); ++i) {
            order[cursor[all_taps[i].texel]++] = static_cast<std::uint32_t>(i);
        }
    }
    const auto texel_count = static_cast<std::ptrdiff_t>(texels);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t t = 0; t < texel_count; ++t) {
        double acc[3] = {0.0, 0.0, 0.0};
        for (std::uint32_t j = offsets[static_cast<std::size_t>(t)]; j < offsets[static_cast<std::size_t>(t) + 1]; ++j) {
            const std::uint32_t i = order[j];
            const std::size_t p = tap_pixel[i];
            for (int c = 0; c < 3; ++c) {
                acc[c] += all_taps[i].weight * in[p * 3 + c];
            }
        }
        for (int c = 0; c < 3; ++c) {
            out[static_cast<std::size_t>(t) * 3 + c] = acc[c];
        }
    }
    return grad;
}

Eigen::Vector3d surface_point(const FrameBuffer& fb, const Mesh& camera_mesh, std::size_t pixel)
{
    const Triangle& t = camera_mesh.triangles()[static_cast<std::size_t>(fb.triangle[pixel])];
    const Eigen::Vector3d& b = fb.barycentric[pixel];
    return b(0) * camera_mesh.vertices.col(t[0]) + b(1) * camera_mesh.vertices.col(t[1]) +
           b(2) * camera_mesh.vertices.col(t[2]);
}

TextureMap unproject_to_uv(const Image& image, const Mesh& camera_mesh, const Camera& camera, const UvRaster& raster,
                           Exec exec)
{
    if (image.width() != camera.width || image.height() != camera.height) {
        throw DimensionError("image size does not match the camera");
    }
    const FrameBuffer fb = rasterize_geometry(camera_mesh, camera, exec);
    const Eigen::Matrix3Xd face_normals = compute_face_normals(camera_mesh);
    const auto& tris = camera_mesh.triangles();

    TextureMap out(raster.width, raster.height, 0.0, false);
    const auto texels = static_cast<std::ptrdiff_t>(raster.triangle.size());
    const auto body = [&](std::ptrdiff_t i) {
        const auto texel = static_cast<std::size_t>(i);
        const int t = raster.triangle[texel];
        if (t < 0) {
            return;
        }
        const Triangle& tri = tris[static_cast<std::size_t>(t)];
        const Eigen::Vector3d& b = raster.barycentric[texel];
        const Eigen::Vector3d p = b(0) * camera_mesh.vertices.col(tri[0]) + b(1) * camera_mesh.vertices.col(tri[1]) +
                                  b(2) * camera_mesh.vertices.col(tri[2]);
        const Eigen::Vector3d n = face_normals.col(t);
        if (!(p.z() > 0.0) || !(n.dot(p) < 0.0)) {
            return; // behind the camera or back-facing
        }
        const double px = camera.principal_point.x() + camera.focal * p.x() / p.z();
        const double py = camera.principal_point.y() + camera.focal * p.y() / p.z();
        if (!(px >= 0.0 && py >= 0.0 && px < camera.width && py < camera.height)) {
            return;
        }
        const auto pixel = static_cast<std::size_t>(static_cast<int>(py)) * fb.width + static_cast<int>(px);
        const int occluder = fb.triangle[pixel];
        if (occluder >= 0 && occluder != t) {
            // Depth of the z-buffer surface along this texel's exact ray.
            const Eigen::Vector3d ray((px - camera.principal_point.x()) / camera.focal,
                                      (py - camera.principal_point.y()) / camera.focal, 1.0);
            const Eigen::Vector3d on = face_normals.col(occluder);
            const Eigen::Vector3d oa = camera_mesh.vertices.col(tris[static_cast<std::size_t>(occluder)][0]);
            const double denom = on.dot(ray);
            const double occ_depth = std::abs(denom) > 1e-12 ? on.dot(oa) / denom : fb.depth[pixel];
            if (p.z() > occ_depth + 5e-3 * p.z()) {
                return;
            }
        }
        // Bilinear pull restricted to covered pixels so the background does
        // not bleed into texels along the silhouette.
        TexelTap taps[4];
        const int tap_count = texture_taps(image.width(), image.height(),
                                   Eigen::Vector2d(px / image.width(), py / image.height()), Filter::bilinear, taps);
        Eigen::Vector3d value = Eigen::Vector3d::Zero();
        double weight = 0.0;
        for (int k = 0; k < tap_count; ++k) {
            if (taps[k].weight > 0.0 && fb.mask[taps[k].texel]) {
                const std::size_t q = taps[k].texel * Image::kChannels;
                value += taps[k].weight * Eigen::Vector3d(image.data()[q], image.data()[q + 1], image.data()[q + 2]);
                weight += taps[k].weight;
            }
        }
        if (weight < 1e-6) {
            return;
        }
        value /= weight;
        out.image.set_pixel(static_cast<int>(texel % raster.width), static_cast<int>(texel / raster.width), value);
        out.valid[texel] = 1;
    };
    if (exec == Exec::serial) {
        for (std::ptrdiff_t i = 0; i < texels; ++i) {
            body(i);
        }
    } else {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t i = 0; i < texels; ++i) {
            body(i);
        }
    }
    return out;
}

TextureMap unproject_to_uv(const Image& image, const Mesh& camera_mesh, const Camera& camera, int size)
{
    const UvRaster raster = rasterize_uv_atlas(*camera_mesh.topology, size, size);
    return unproject_to_uv(image, camera_mesh, camera, raster);
}

} // namespace refield
