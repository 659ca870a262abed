#pragma once

#include "refield/geometry.hpp"
#include "refield/image.hpp"
#include "refield/parallel.hpp"
#include "refield/rasterizer.hpp"
#include "refield/raycast.hpp"
#include "refield/uv_atlas.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace refield {

/// Directional point lights of the stage, in the camera frame. Each direction
/// points from the subject toward the light.
struct LightRig {
    std::vector<Eigen::Vector3d> directions;
    std::vector<double> intensities;

    std::size_t size() const { return directions.size(); }
    /// Throws DataError unless N >= 1, all directions are unit (1e-9) and
    /// intensities are finite and non-negative.
    void validate() const;

    static LightRig fibonacci(std::size_t n, double intensity = 1.0);
};

/// Fibonacci-spiral points on the unit sphere (n = 1 gives (0, 0, 1)).
std::vector<Eigen::Vector3d> fibonacci_directions(std::size_t n);

/// Equirectangular HDR radiance map. Direction d maps to
/// u = (atan2(d.x, d.z) + pi) / 2pi, v = acos(d.y) / pi.
struct EnvMap {
    Image radiance;

    int width() const { return radiance.width(); }
    int height() const { return radiance.height(); }
    void validate() const;
};

/// Bilinear lookup with horizontal wrap and vertical clamp.
Eigen::Vector3d sample_envmap(const EnvMap& env, const Eigen::Vector3d& direction);

/// Per-light RGB weights lambda_l (one row per light).
using LightWeights = Eigen::Matrix<double, Eigen::Dynamic, 3>;

enum class EnvProjection {
    point_sample,     ///< lambda_l = env(omega_l) * 4pi / N
    cell_integration, ///< integrate texel radiance over each light's nearest-direction cell
};

LightWeights project_env_to_lights(const EnvMap& env, const LightRig& rig,
                                   EnvProjection mode = EnvProjection::point_sample);

/// Sky gradient plus `area_lights` bright lobes in random directions. The
/// "up" direction of the camera frame is -y, so the sky fills the lower rows.
EnvMap make_procedural_envmap(int width, int height, std::uint64_t seed, int area_lights = 3);

struct BRDFParams {
    TextureMap diffuse_albedo;
    double specular_strength = 0.0; ///< k_s
    double shininess = 1.0;         ///< Blinn exponent
    double ambient = 0.0;           ///< per-light fill, scaled by albedo and light intensity

    void validate() const;
};

/// Lambert + Blinn radiance toward `view` for a unit light direction. The
/// specular lobe is gated by n.l > 0 like the diffuse term; `lit == false`
/// leaves only the ambient term.
Eigen::Vector3d shade_point(const Eigen::Vector3d& albedo, const Eigen::Vector3d& normal, const Eigen::Vector3d& view,
                            const Eigen::Vector3d& light_dir, const BRDFParams& brdf, bool lit);

/// Surface attributes at the samples of an output raster (image pixels or UV texels).
struct SurfaceSamples {
    int width = 0;
    int height = 0;
    std::vector<std::size_t> index; ///< flat raster index of each sample
    std::vector<Eigen::Vector3d> position;
    std::vector<Eigen::Vector3d> normal;
    std::vector<Eigen::Vector3d> albedo;
    std::vector<int> triangle;

    std::size_t size() const { return index.size(); }
};

/// Samples at covered pixels of a framebuffer; normals are interpolated vertex normals.
SurfaceSamples samples_from_framebuffer(const FrameBuffer& fb, const Mesh& camera_mesh, const Image& albedo);
/// Samples at covered texels of a UV raster (UV-space OLATs).
SurfaceSamples samples_from_uv(const UvRaster& raster, const Mesh& camera_mesh, const Image& albedo);

/// Renders one-light-at-a-time images for a fixed surface.
class OlatRenderer {
public:
    OlatRenderer(SurfaceSamples samples, const Mesh& camera_mesh, BRDFParams brdf, bool shadows);

    Image render(const Eigen::Vector3d& light_dir, double intensity = 1.0, Exec exec = Exec::parallel) const;
    /// Which samples are in shadow for the light (all false without shadows).
    std::vector<std::uint8_t> shadow_mask(const Eigen::Vector3d& light_dir, Exec exec = Exec::parallel) const;

    const SurfaceSamples& samples() const { return samples_; }

private:
    SurfaceSamples samples_;
    BRDFParams brdf_;
    std::optional<Occluder> occluder_;
};

/// One OLAT image of a camera-space mesh under a unit light direction.
Image shade_olat(const Mesh& camera_mesh, const BRDFParams& brdf, const Eigen::Vector3d& light_dir,
                 const Camera& camera, bool shadows, Exec exec = Exec::parallel);

enum class RasterSpace : std::uint8_t { image, uv };

struct OLATSet {
    LightRig rig;
    std::vector<Image> images;
    RasterSpace space = RasterSpace::image;
    std::string camera_id;
    std::string identity_id;

    /// Throws unless there is one image per light and all share a shape.
    void validate() const;
};

/// sum_l lambda_l (per channel) * image_l. Throws DimensionError on a count mismatch.
Image relight_sum(const OLATSet& olats, const LightWeights& weights, Exec exec = Exec::parallel);

} // namespace refield
