#pragma once

#include "refield/geometry.hpp"
#include "refield/image.hpp"

#include <cstdint>

namespace refield {

/// Unit icosphere after `level` loop subdivisions, outward (counter-clockwise) winding.
struct Icosphere {
    Eigen::Matrix3Xd vertices;
    std::vector<Triangle> triangles;
};
Icosphere make_icosphere(int level);

struct SyntheticModelOptions {
    int subdivision_level = 4;     ///< 2562 sphere vertices before cropping
    int identity_dims = 8;
    int expression_dims = 4;
    double crop_angle_deg = 160.0; ///< vertices further than this from the face front are removed
    std::uint64_t seed = 7;
};

/// Number of contour (jaw) landmarks; they come first in the landmark list.
inline constexpr int kContourLandmarks = 17;
inline constexpr int kLandmarkCount = 66;

/// Procedural head: an ellipsoid with nose, brow, eye-socket, lip and chin
/// features, open at the back of the skull. UVs are an azimuthal equidistant
/// projection about the face front, so the atlas is a single chart.
MorphableModel make_synthetic_model(const SyntheticModelOptions& options = {});

/// Skin-like albedo raster in the synthetic model's UV layout. Values lie in
/// [0,1]; every texel is valid (texels outside the chart are never sampled).
TextureMap make_synthetic_albedo(int size, std::uint64_t seed);

} // namespace refield
