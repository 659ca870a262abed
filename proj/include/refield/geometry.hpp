#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <array>
#include <filesystem>
#include <memory>
#include <optional>
#include <vector>

namespace refield {

using Triangle = std::array<int, 3>;

/// Connectivity and UV atlas shared by every mesh instance of a model.
struct MeshTopology {
    std::vector<Triangle> triangles;
    Eigen::Matrix2Xd uv; ///< per-vertex coordinates in [0,1]^2
};

enum class Space { object, camera };

/// Vertex positions (one column per vertex) over a shared topology.
struct Mesh {
    Eigen::Matrix3Xd vertices;
    std::shared_ptr<const MeshTopology> topology;
    Space space = Space::object;

    int vertex_count() const { return static_cast<int>(vertices.cols()); }
    const std::vector<Triangle>& triangles() const { return topology->triangles; }
    const Eigen::Matrix2Xd& uv() const { return topology->uv; }
};

/// Linear morphable face model: v = mean + id_basis * alpha + exp_basis * beta,
/// with basis columns pre-scaled by their standard deviations. Positions are
/// stacked as (x0, y0, z0, x1, ...), object-space millimetres.
class MorphableModel {
public:
    MorphableModel(Eigen::VectorXd mean, Eigen::MatrixXd id_basis, Eigen::MatrixXd exp_basis,
                   std::vector<Triangle> triangles, Eigen::Matrix2Xd uv, std::vector<int> landmark_indices,
                   std::vector<bool> contour_flags);

    int vertex_count() const { return static_cast<int>(mean_.size() / 3); }
    int identity_dims() const { return static_cast<int>(id_basis_.cols()); }
    int expression_dims() const { return static_cast<int>(exp_basis_.cols()); }

    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& id_basis() const { return id_basis_; }
    const Eigen::MatrixXd& exp_basis() const { return exp_basis_; }
    const std::vector<Triangle>& triangles() const { return topology_->triangles; }
    const Eigen::Matrix2Xd& uv() const { return topology_->uv; }
    const std::shared_ptr<const MeshTopology>& topology() const { return topology_; }
    const std::vector<int>& landmark_indices() const { return landmarks_; }
    const std::vector<bool>& contour_flags() const { return contour_; }

private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd id_basis_;
    Eigen::MatrixXd exp_basis_;
    std::shared_ptr<const MeshTopology> topology_;
    std::vector<int> landmarks_;
    std::vector<bool> contour_;
};

/// Identity/expression coefficients plus head pose in the fixed camera frame.
struct FaceParams {
    Eigen::VectorXd alpha;
    Eigen::VectorXd beta;
    Eigen::Quaterniond rotation = Eigen::Quaterniond::Identity();
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();

    static FaceParams zeros(const MorphableModel& model);
};

/// Pinhole camera with identity extrinsics. Camera space has x right, y down
/// and z along the optical axis, matching image coordinates.
struct Camera {
    double focal = 1.0;
    Eigen::Vector2d principal_point = Eigen::Vector2d::Zero();
    int width = 0;
    int height = 0;

    /// Throws DataError unless focal > 0 and the principal point is inside the image.
    void validate() const;

    /// Square camera used throughout the synthetic stage: focal 1.7*size,
    /// centered principal point.
    static Camera square(int size);
};

/// Distance (mm) at which synthetic faces are placed in front of the camera.
inline constexpr double kDefaultFaceDepth = 450.0;

Mesh build_mesh(const MorphableModel& model, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta);

/// v_c = R v + t for every vertex. Throws if the quaternion is not unit within 1e-9.
Mesh pose_to_camera(const Mesh& mesh, const FaceParams& params);

/// pixel = principal_point + focal * (x / z, y / z). Throws DataError on z <= 0.
Eigen::Matrix2Xd project_points(const Camera& camera, const Eigen::Matrix3Xd& points);

/// Area-weighted vertex normals from the triangle winding. Vertices without a
/// non-degenerate incident triangle get (0, 0, 0) and a logged warning.
Eigen::Matrix3Xd compute_vertex_normals(const Mesh& mesh);

/// Per-triangle unit normals (zero for degenerate triangles).
Eigen::Matrix3Xd compute_face_normals(const Mesh& mesh);

/// Vertices of a camera-space mesh whose normal faces the camera center.
std::vector<bool> front_facing_vertices(const Mesh& mesh, const Eigen::Matrix3Xd& normals);

struct Landmarks2D {
    Eigen::Matrix2Xd points;         ///< one column per landmark, pixels
    std::vector<int> vertex_indices; ///< mesh vertex each landmark is bound to
};

/// Projects the model's landmark vertices. When observations are supplied,
/// contour landmarks are re-bound to the front-facing vertex whose projection
/// is nearest the observed point.
Landmarks2D landmarks_2d(const Mesh& camera_mesh, const Camera& camera, const MorphableModel& model,
                         const std::optional<Eigen::Matrix2Xd>& observed = std::nullopt);

/// Landmarks as a detector would report them: contour points that fall on
/// hidden vertices are moved to the visible vertex projecting nearest to them.
Landmarks2D detected_landmarks(const Mesh& camera_mesh, const Camera& camera, const MorphableModel& model);

/// Unit quaternion from Tait-Bryan angles in radians: yaw about y, then pitch
/// about x, then roll about z (R = Ry * Rx * Rz).
Eigen::Quaterniond rotation_from_angles(double yaw, double pitch, double roll);

/// Geodesic distance on SO(3) in radians.
double rotation_angle_between(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b);

/// Writes v/vt/f records; vt indices equal vertex indices.
void write_obj(const std::filesystem::path& path, const Mesh& mesh);

} // namespace refield
