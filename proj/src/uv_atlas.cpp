#include "refield/uv_atlas.hpp"

#include "raster_common.hpp"
#include "refield/error.hpp"

#include <algorithm>
#include <string>

namespace refield {

std::size_t UvRaster::covered_count() const
{
    return static_cast<std::size_t>(std::count_if(triangle.begin(), triangle.end(), [](int t) { return t >= 0; }));
}

namespace {

void rasterize_uv_rows(const std::vector<detail::CoverageTriangle>& tris, int row_begin,
                       int row_end, UvRaster& out, bool& overlap)
{
    for (std::size_t t = 0; t < tris.size(); ++t) {
        const auto& tri = tris[t];
        if (tri.degenerate) {
            continue;
        }
        int x0, x1, y0, y1;
        detail::CoverageTriangle::sample_range(tri.min_x, tri.max_x, out.width, x0, x1);
        detail::CoverageTriangle::sample_range(tri.min_y, tri.max_y, out.height, y0, y1);
        y0 = std::max(y0, row_begin);
        y1 = std::min(y1, row_end - 1);
        for (int y = y0; y <= y1; ++y) {
            for (int x = x0; x <= x1; ++x) {
                Eigen::Vector3d bary;
                if (!tri.cover(Eigen::Vector2d(x + 0.5, y + 0.5), bary)) {
                    continue;
                }
                const auto texel = static_cast<std::size_t>(y) * out.width + x;
                if (out.triangle[texel] >= 0) {
                    overlap = true;
                }
                // Later triangles in atlas order own the texel.
                out.triangle[texel] = static_cast<int>(t);
                out.barycentric[texel] = bary;
            }
        }
    }
}

} // namespace

UvRaster rasterize_uv_atlas(const MeshTopology& topology, int width, int height, Exec exec)
{
    if (width <= 0 || height <= 0) {
        throw DimensionError("UV raster size must be positive");
    }
    UvRaster out;
    out.width = width;
    out.height = height;
    const auto texels = static_cast<std::size_t>(width) * height;
    out.triangle.assign(texels, -1);
    out.barycentric.assign(texels, Eigen::Vector3d::Zero());

    std::vector<detail::CoverageTriangle> tris;
    tris.reserve(topology.triangles.size());
    for (const Triangle& t : topology.triangles) {
        const auto scaled = [&](int v) {
            return Eigen::Vector2d(topology.uv(0, v) * width, topology.uv(1, v) * height);
        };
        tris.emplace_back(scaled(t[0]), scaled(t[1]), scaled(t[2]));
    }

    bool overlap = false;
    if (exec == Exec::serial) {
        rasterize_uv_rows(tris, 0, height, out, overlap);
    } else {
        constexpr int kBandRows = 8;
        const int bands = (height + kBandRows - 1) / kBandRows;
#pragma omp parallel for schedule(dynamic) reduction(|| : overlap)
        for (int b = 0; b < bands; ++b) {
            bool local = false;
            rasterize_uv_rows(tris, b * kBandRows, std::min(height, (b + 1) * kBandRows), out, local);
            overlap = overlap || local;
        }
    }
    if (overlap) {
        throw AtlasError("UV atlas has overlapping charts at " + std::to_string(width) + "x" + std::to_string(height));
    }
    return out;
}

TextureMap render_uv_attribute(const Mesh& mesh, const Eigen::Matrix3Xd& attribute, const UvRaster& raster,
                               bool normalize, Exec exec)
{
    if (attribute.cols() != mesh.vertex_count()) {
        throw DimensionError("attribute count does not match vertex count");
    }
    TextureMap out(raster.width, raster.height, 0.0, false);
    out.kind = normalize ? TextureKind::normal : TextureKind::radiance;
    const auto& tris = mesh.triangles();
    const auto texels = static_cast<std::ptrdiff_t>(raster.triangle.size());
    const auto body = [&](std::ptrdiff_t i) {
        const int t = raster.triangle[static_cast<std::size_t>(i)];
        if (t < 0) {
            return;
        }
        const Triangle& tri = tris[static_cast<std::size_t>(t)];
        const Eigen::Vector3d& b = raster.barycentric[static_cast<std::size_t>(i)];
        Eigen::Vector3d value = b(0) * attribute.col(tri[0]) + b(1) * attribute.col(tri[1]) + b(2) * attribute.col(tri[2]);
        if (normalize) {
            const double len = value.norm();
            if (!(len > 0.0)) {
                return;
            }
            value /= len;
        }
        double* px = &out.image.data()[static_cast<std::size_t>(i) * Image::kChannels];
        px[0] = value.x();
        px[1] = value.y();
        px[2] = value.z();
        out.valid[static_cast<std::size_t>(i)] = 1;
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

TextureMap render_uv_attribute(const Mesh& mesh, const Eigen::Matrix3Xd& attribute, int size, bool normalize)
{
    const UvRaster raster = rasterize_uv_atlas(*mesh.topology, size, size);
    return render_uv_attribute(mesh, attribute, raster, normalize);
}

TextureMap render_normal_map(const Mesh& camera_mesh, const UvRaster& raster, Exec exec)
{
    return render_uv_attribute(camera_mesh, compute_vertex_normals(camera_mesh), raster, true, exec);
}

} // namespace refield
