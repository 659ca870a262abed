#pragma once

#include "refield/geometry.hpp"

#include <limits>
#include <vector>

namespace refield {

struct Ray {
    Eigen::Vector3d origin;
    Eigen::Vector3d direction;
};

/// Watertight ray/triangle test (Woop, Benthin and Wald). Rays lying in the
/// triangle's plane never hit. On a hit with 0 < t < t_max, writes t.
bool intersect_triangle(const Ray& ray, const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                        double t_max, double& t);

/// Any-hit occlusion queries against a fixed mesh. Uses a bounding-volume
/// hierarchy above `bvh_threshold` triangles and a linear scan below; both
/// return identical answers.
class Occluder {
public:
    explicit Occluder(const Mesh& mesh, std::size_t bvh_threshold = 1000);

    /// True when the ray hits any triangle other than `ignore_triangle` at 0 < t < t_max.
    bool occluded(const Ray& ray, int ignore_triangle = -1,
                  double t_max = std::numeric_limits<double>::infinity()) const;

    bool uses_bvh() const { return !nodes_.empty(); }
    /// Offset applied along the surface normal before casting shadow rays.
    double shadow_bias() const { return bias_; }
    const Mesh& mesh() const { return mesh_; }
    const Eigen::Matrix3Xd& face_normals() const { return face_normals_; }

private:
    struct Node {
        Eigen::Vector3d lo;
        Eigen::Vector3d hi;
        int left = -1;  // child index, or -1 for a leaf
        int right = -1;
        int begin = 0;  // leaf triangle range into order_
        int end = 0;
    };

    int build(int begin, int end, std::vector<Eigen::Vector3d>& centroids);
    bool hit_triangle(const Ray& ray, int tri, int ignore, double t_max) const;

    Mesh mesh_;
    Eigen::Matrix3Xd face_normals_;
    std::vector<Node> nodes_;
    std::vector<int> order_;
    double bias_ = 0.0;
};

/// Shadow-ray test from a point on `source_triangle` toward a directional
/// light: offsets the point by the bias along the triangle normal (flipped
/// toward the light) and reports whether any other triangle blocks the ray.
bool shadow_test(const Occluder& occluder, const Eigen::Vector3d& surface_point, const Eigen::Vector3d& light_dir,
                 int source_triangle);
bool shadow_test(const Mesh& mesh, const Eigen::Vector3d& surface_point, const Eigen::Vector3d& light_dir,
                 int source_triangle);

} // namespace refield
