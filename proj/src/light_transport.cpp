#include "refield/light_transport.hpp"

#include "refield/error.hpp"

#include <cmath>
#include <numbers>

namespace refield {

void LightRig::validate() const
{
    if (directions.empty()) {
        throw DataError("light rig needs at least one light");
    }
    if (intensities.size() != directions.size()) {
        throw DimensionError("light rig intensity count does not match direction count");
    }
    for (std::size_t i = 0; i < directions.size(); ++i) {
        if (std::abs(directions[i].norm() - 1.0) > 1e-9) {
            throw DataError("light direction " + std::to_string(i) + " is not unit length");
        }
        if (!(intensities[i] >= 0.0) || !std::isfinite(intensities[i])) {
            throw DataError("light intensity " + std::to_string(i) + " must be finite and non-negative");
        }
    }
}

LightRig LightRig::fibonacci(std::size_t n, double intensity)
{
    LightRig rig;
    rig.directions = fibonacci_directions(n);
    rig.intensities.assign(n, intensity);
    return rig;
}

std::vector<Eigen::Vector3d> fibonacci_directions(std::size_t n)
{
    if (n == 0) {
        throw DataError("fibonacci_directions needs n >= 1");
    }
    if (n == 1) {
        return {Eigen::Vector3d(0.0, 0.0, 1.0)};
    }
    const double golden_angle = std::numbers::pi * (3.0 - std::sqrt(5.0));
    std::vector<Eigen::Vector3d> dirs(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = 1.0 - 2.0 * (static_cast<double>(i) + 0.5) / static_cast<double>(n);
        const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
        const double phi = golden_angle * static_cast<double>(i);
        dirs[i] = Eigen::Vector3d(r * std::cos(phi), r * std::sin(phi), z).normalized();
    }
    return dirs;
}

void BRDFParams::validate() const
{
    const auto data = diffuse_albedo.image.data();
    for (double v : data) {
        if (!(v >= 0.0 && v <= 1.0)) {
            throw DataError("diffuse albedo must lie in [0,1]");
        }
    }
    if (!(specular_strength >= 0.0) || !(shininess >= 1.0) || !(ambient >= 0.0)) {
        throw DataError("invalid BRDF parameters (need k_s >= 0, shininess >= 1, ambient >= 0)");
    }
}

Eigen::Vector3d shade_point(const Eigen::Vector3d& albedo, const Eigen::Vector3d& normal, const Eigen::Vector3d& view,
                            const Eigen::Vector3d& light_dir, const BRDFParams& brdf, bool lit)
{
    Eigen::Vector3d out = brdf.ambient * albedo;
    const double ndotl = normal.dot(light_dir);
    if (!lit || !(ndotl > 0.0)) {
        return out;
    }
    out += ndotl * albedo;
    if (brdf.specular_strength > 0.0) {
        const Eigen::Vector3d h = light_dir + view;
        const double hn = h.norm();
        if (hn > 0.0) {
            const double ndoth = std::max(0.0, normal.dot(h / hn));
            out.array() += brdf.specular_strength * std::pow(ndoth, brdf.shininess);
        }
    }
    return out;
}

SurfaceSamples samples_from_framebuffer(const FrameBuffer& fb, const Mesh& camera_mesh, const Image& albedo)
{
    const Eigen::Matrix3Xd normals = compute_vertex_normals(camera_mesh);
    const auto& tris = camera_mesh.triangles();
    SurfaceSamples s;
    s.width = fb.width;
    s.height = fb.height;
    for (std::size_t p = 0; p < fb.pixel_count(); ++p) {
        if (!fb.mask[p]) {
            continue;
        }
        const Triangle& t = tris[static_cast<std::size_t>(fb.triangle[p])];
        const Eigen::Vector3d& b = fb.barycentric[p];
        Eigen::Vector3d n = b(0) * normals.col(t[0]) + b(1) * normals.col(t[1]) + b(2) * normals.col(t[2]);
        const double len = n.norm();
        s.index.push_back(p);
        s.position.push_back(surface_point(fb, camera_mesh, p));
        s.normal.push_back(len > 0.0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::Zero());
        s.albedo.push_back(sample_texture(albedo, fb.uv[p]));
        s.triangle.push_back(fb.triangle[p]);
    }
    return s;
}

SurfaceSamples samples_from_uv(const UvRaster& raster, const Mesh& camera_mesh, const Image& albedo)
{
    const Eigen::Matrix3Xd normals = compute_vertex_normals(camera_mesh);
    const auto& tris = camera_mesh.triangles();
    SurfaceSamples s;
    s.width = raster.width;
    s.height = raster.height;
    for (std::size_t i = 0; i < raster.triangle.size(); ++i) {
        if (!raster.covered(i)) {
            continue;
        }
        const Triangle& t = tris[static_cast<std::size_t>(raster.triangle[i])];
        const Eigen::Vector3d& b = raster.barycentric[i];
        const Eigen::Vector3d pos = b(0) * camera_mesh.vertices.col(t[0]) + b(1) * camera_mesh.vertices.col(t[1]) +
                                    b(2) * camera_mesh.vertices.col(t[2]);
        Eigen::Vector3d n = b(0) * normals.col(t[0]) + b(1) * normals.col(t[1]) + b(2) * normals.col(t[2]);
        const double len = n.norm();
        const Eigen::Vector2d uv((static_cast<double>(i % raster.width) + 0.5) / raster.width,
                                 (static_cast<double>(i / raster.width) + 0.5) / raster.height);
        s.index.push_back(i);
        s.position.push_back(pos);
        s.normal.push_back(len > 0.0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::Zero());
        s.albedo.push_back(sample_texture(albedo, uv));
        s.triangle.push_back(raster.triangle[i]);
    }
    return s;
}

OlatRenderer::OlatRenderer(SurfaceSamples samples, const Mesh& camera_mesh, BRDFParams brdf, bool shadows)
    : samples_(std::move(samples)), brdf_(std::move(brdf))
{
    if (shadows) {
        occluder_.emplace(camera_mesh);
    }
}

std::vector<std::uint8_t> OlatRenderer::shadow_mask(const Eigen::Vector3d& light_dir, Exec exec) const
{
    std::vector<std::uint8_t> shadowed(samples_.size(), 0);
    if (!occluder_) {
        return shadowed;
    }
    const auto n = static_cast<std::ptrdiff_t>(samples_.size());
    const auto body = [&](std::ptrdiff_t i) {
        const auto k = static_cast<std::size_t>(i);
        if (!(samples_.normal[k].dot(light_dir) > 0.0)) {
            return; // unlit anyway
        }
        shadowed[k] = shadow_test(*occluder_, samples_.position[k], light_dir, samples_.triangle[k]) ? 1 : 0;
    };
    if (exec == Exec::serial) {
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            body(i);
        }
    } else {
#pragma omp parallel for schedule(dynamic, 64)
        for (std::ptrdiff_t i = 0; i < n; ++i) {
            body(i);
        }
    }
    return shadowed;
}

Image OlatRenderer::render(const Eigen::Vector3d& light_dir, double intensity, Exec exec) const
{
    if (std::abs(light_dir.norm() - 1.0) > 1e-9) {
        throw DataError("light direction must be unit length");
    }
    const std::vector<std::uint8_t> shadowed = shadow_mask(light_dir, exec);
    Image out(samples_.width, samples_.height, 0.0);
    auto data = out.data();
    const auto n = static_cast<std::ptrdiff_t>(samples_.size());
    const auto body = [&](std::ptrdiff_t i) {
        const auto k = static_cast<std::size_t>(i);
        const Eigen::Vector3d view = (-samples_.position[k]).normalized();
        const Eigen::Vector3d c =
            intensity * shade_point(samples_.albedo[k], samples_.normal[k], view, light_dir, brdf_, shadowed[k] == 0);
        const std::size_t p = samples_.index[k];
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
    return out;
}

Image shade_olat(const Mesh& camera_mesh, const BRDFParams& brdf, const Eigen::Vector3d& light_dir,
                 const Camera& camera, bool shadows, Exec exec)
{
    const FrameBuffer fb = rasterize_geometry(camera_mesh, camera, exec);
    const OlatRenderer renderer(samples_from_framebuffer(fb, camera_mesh, brdf.diffuse_albedo.image), camera_mesh, brdf,
                                shadows);
    return renderer.render(light_dir, 1.0, exec);
}

void OLATSet::validate() const
{
    rig.validate();
    if (images.size() != rig.size()) {
        throw DimensionError("OLAT count " + std::to_string(images.size()) + " does not match rig size " +
                             std::to_string(rig.size()));
    }
    for (const Image& img : images) {
        if (!img.same_shape(images.front())) {
            throw DimensionError("OLAT images differ in size");
        }
    }
}

Image relight_sum(const OLATSet& olats, const LightWeights& weights, Exec exec)
{
    if (static_cast<std::size_t>(weights.rows()) != olats.images.size()) {
        throw DimensionError("light weight count does not match the OLAT count");
    }
    if (olats.images.empty()) {
        throw DimensionError("empty OLAT set");
    }
    const Image& first = olats.images.front();
    for (const Image& img : olats.images) {
        if (!img.same_shape(first)) {
            throw DimensionError("OLAT images differ in size");
        }
    }
    Image out(first.width(), first.height(), 0.0);
    auto data = out.data();
    const auto values = static_cast<std::ptrdiff_t>(data.size());
    const std::size_t lights = olats.images.size();
    if (exec == Exec::serial) {
        for (std::size_t l = 0; l < lights; ++l) {
            const auto src = olats.images[l].data();
            for (std::ptrdiff_t i = 0; i < values; ++i) {
                data[static_cast<std::size_t>(i)] += weights(static_cast<Eigen::Index>(l), i % 3) * src[static_cast<std::size_t>(i)];
            }
        }
        return out;
    }
    // Each value accumulates over lights in index order, matching the serial loop.
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < values; ++i) {
        double acc = 0.0;
        for (std::size_t l = 0; l < lights; ++l) {
            acc += weights(static_cast<Eigen::Index>(l), i % 3) * olats.images[l].data()[static_cast<std::size_t>(i)];
        }
        data[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

} // namespace refield
