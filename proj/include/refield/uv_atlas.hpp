#pragma once

#include "refield/geometry.hpp"
#include "refield/image.hpp"
#include "refield/parallel.hpp"

#include <cstddef>
#include <vector>

namespace refield {

/// Assignment of texels to atlas triangles at one resolution. Depends only on
/// the topology, so it is computed once and shared by every mesh instance.
struct UvRaster {
    int width = 0;
    int height = 0;
    std::vector<int> triangle;                 ///< -1 where no chart covers the texel center
    std::vector<Eigen::Vector3d> barycentric;  ///< affine weights in UV space

    bool covered(std::size_t texel) const { return triangle[texel] >= 0; }
    std::size_t covered_count() const;
};

/// Rasterizes the UV atlas at texel centers. Throws AtlasError when two
/// triangles cover the same texel (overlapping or folded charts).
UvRaster rasterize_uv_atlas(const MeshTopology& topology, int width, int height, Exec exec = Exec::parallel);

/// Interpolates a per-vertex attribute over the atlas. With `normalize`, each
/// texel is rescaled to unit length (normal maps).
TextureMap render_uv_attribute(const Mesh& mesh, const Eigen::Matrix3Xd& attribute, const UvRaster& raster,
                               bool normalize = false, Exec exec = Exec::parallel);
TextureMap render_uv_attribute(const Mesh& mesh, const Eigen::Matrix3Xd& attribute, int size, bool normalize = false);

/// Camera-space vertex normals rendered into UV space (N^c maps).
TextureMap render_normal_map(const Mesh& camera_mesh, const UvRaster& raster, Exec exec = Exec::parallel);

} // namespace refield
