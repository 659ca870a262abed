#include "refield/geometry.hpp"

#include "refield/error.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

namespace refield {

MorphableModel::MorphableModel(Eigen::VectorXd mean, Eigen::MatrixXd id_basis, Eigen::MatrixXd exp_basis,
                               std::vector<Triangle> triangles, Eigen::Matrix2Xd uv,
                               std::vector<int> landmark_indices, std::vector<bool> contour_flags)
    : mean_(std::move(mean)), id_basis_(std::move(id_basis)), exp_basis_(std::move(exp_basis)),
      landmarks_(std::move(landmark_indices)), contour_(std::move(contour_flags))
{
    if (mean_.size() % 3 != 0 || mean_.size() == 0) {
        throw DimensionError("mean vertex array length must be a positive multiple of 3");
    }
    const int n = static_cast<int>(mean_.size() / 3);
    if (id_basis_.rows() != mean_.size() || exp_basis_.rows() != mean_.size()) {
        throw DimensionError("basis row count must equal 3N");
    }
    if (uv.cols() != n) {
        throw DimensionError("uv coordinate count must equal vertex count");
    }
    for (int i = 0; i < n; ++i) {
        if (!(uv(0, i) >= 0.0 && uv(0, i) <= 1.0 && uv(1, i) >= 0.0 && uv(1, i) <= 1.0)) {
            throw DataError("uv coordinates must lie in [0,1]^2");
        }
    }
    for (const Triangle& t : triangles) {
        for (int v : t) {
            if (v < 0 || v >= n) {
                throw DataError("triangle index out of range");
            }
        }
    }
    if (contour_.size() != landmarks_.size()) {
        throw DimensionError("contour flag count must equal landmark count");
    }
    std::set<int> seen;
    for (int v : landmarks_) {
        if (v < 0 || v >= n) {
            throw DataError("landmark index out of range");
        }
        if (!seen.insert(v).second) {
            throw DataError("landmark indices must be distinct");
        }
    }
    if (!mean_.allFinite() || !id_basis_.allFinite() || !exp_basis_.allFinite()) {
        throw DataError("model contains non-finite values");
    }
    auto topo = std::make_shared<MeshTopology>();
    topo->triangles = std::move(triangles);
    topo->uv = std::move(uv);
    topology_ = std::move(topo);
}

FaceParams FaceParams::zeros(const MorphableModel& model)
{
    FaceParams p;
    p.alpha = Eigen::VectorXd::Zero(model.identity_dims());
    p.beta = Eigen::VectorXd::Zero(model.expression_dims());
    p.translation = Eigen::Vector3d(0.0, 0.0, kDefaultFaceDepth);
    return p;
}

void Camera::validate() const
{
    if (!(focal > 0.0) || !std::isfinite(focal)) {
        throw DataError("camera focal length must be positive");
    }
    if (width <= 0 || height <= 0) {
        throw DataError("camera image size must be positive");
    }
    if (!(principal_point.x() >= 0.0 && principal_point.x() <= width && principal_point.y() >= 0.0 &&
          principal_point.y() <= height)) {
        throw DataError("principal point must lie inside the image");
    }
}

Camera Camera::square(int size)
{
    Camera c;
    c.focal = 1.7 * size;
    c.principal_point = Eigen::Vector2d(0.5 * size, 0.5 * size);
    c.width = size;
    c.height = size;
    return c;
}

Mesh build_mesh(const MorphableModel& model, const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta)
{
    if (alpha.size() != model.identity_dims() || beta.size() != model.expression_dims()) {
        throw DimensionError("coefficient lengths do not match the model bases");
    }
    Eigen::VectorXd v = model.mean();
    if (alpha.size() > 0) {
        v.noalias() += model.id_basis() * alpha;
    }
    if (beta.size() > 0) {
        v.noalias() += model.exp_basis() * beta;
    }
    Mesh mesh;
    mesh.vertices = Eigen::Map<const Eigen::Matrix3Xd>(v.data(), 3, model.vertex_count());
    mesh.topology = model.topology();
    mesh.space = Space::object;
    return mesh;
}

Mesh pose_to_camera(const Mesh& mesh, const FaceParams& params)
{
    if (mesh.space != Space::object) {
        throw DataError("pose_to_camera expects an object-space mesh");
    }
    if (std::abs(params.rotation.norm() - 1.0) > 1e-9) {
        throw NumericalError("head rotation quaternion is not unit norm");
    }
    Mesh out;
    out.vertices = (params.rotation.toRotationMatrix() * mesh.vertices).colwise() + params.translation;
    out.topology = mesh.topology;
    out.space = Space::camera;
    return out;
}

Eigen::Matrix2Xd project_points(const Camera& camera, const Eigen::Matrix3Xd& points)
{
    Eigen::Matrix2Xd out(2, points.cols());
    for (Eigen::Index i = 0; i < points.cols(); ++i) {
        const double z = points(2, i);
        if (!(z > 0.0)) {
            throw DataError("cannot project a point at non-positive depth");
        }
        out(0, i) = camera.principal_point.x() + camera.focal * points(0, i) / z;
        out(1, i) = camera.principal_point.y() + camera.focal * points(1, i) / z;
    }
    return out;
}

Eigen::Matrix3Xd compute_face_normals(const Mesh& mesh)
{
    const auto& tris = mesh.triangles();
    Eigen::Matrix3Xd normals(3, static_cast<Eigen::Index>(tris.size()));
    for (std::size_t t = 0; t < tris.size(); ++t) {
        const Eigen::Vector3d a = mesh.vertices.col(tris[t][0]);
        const Eigen::Vector3d b = mesh.vertices.col(tris[t][1]);
        const Eigen::Vector3d c = mesh.vertices.col(tris[t][2]);
        const Eigen::Vector3d n = (b - a).cross(c - a);
        const double len = n.norm();
        normals.col(static_cast<Eigen::Index>(t)) = len > 0.0 ? Eigen::Vector3d(n / len) : Eigen::Vector3d::Zero();
    }
    return normals;
}

Eigen::Matrix3Xd compute_vertex_normals(const Mesh& mesh)
{
    Eigen::Matrix3Xd accum = Eigen::Matrix3Xd::Zero(3, mesh.vertex_count());
    for (const Triangle& t : mesh.triangles()) {
        const Eigen::Vector3d a = mesh.vertices.col(t[0]);
        const Eigen::Vector3d b = mesh.vertices.col(t[1]);
        const Eigen::Vector3d c = mesh.vertices.col(t[2]);
        // Unnormalized cross product: its length is twice the area, which
        // gives the area weighting for free.
        const Eigen::Vector3d n = (b - a).cross(c - a);
        for (int v : t) {
            accum.col(v) += n;
        }
    }
    int isolated = 0;
    for (Eigen::Index i = 0; i < accum.cols(); ++i) {
        const double len = accum.col(i).norm();
        if (len > 0.0 && std::isfinite(len)) {
            accum.col(i) /= len;
        } else {
            accum.col(i).setZero();
            ++isolated;
        }
    }
    if (isolated > 0) {
        spdlog::warn("{} vertices have no non-degenerate incident triangle; their normals are zero", isolated);
    }
    return accum;
}

std::vector<bool> front_facing_vertices(const Mesh& mesh, const Eigen::Matrix3Xd& normals)
{
    std::vector<bool> out(static_cast<std::size_t>(mesh.vertex_count()));
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        // Camera sits at the origin, so the view ray to a vertex is its position.
        out[static_cast<std::size_t>(i)] = normals.col(i).dot(mesh.vertices.col(i)) < 0.0;
    }
    return out;
}

Landmarks2D landmarks_2d(const Mesh& camera_mesh, const Camera& camera, const MorphableModel& model,
                         const std::optional<Eigen::Matrix2Xd>& observed)
{
    const auto& indices = model.landmark_indices();
    const auto count = static_cast<Eigen::Index>(indices.size());
    if (observed && observed->cols() != count) {
        throw DimensionError("observed landmark count does not match the model");
    }
    Landmarks2D out;
    out.vertex_indices = indices;

    if (observed) {
        const auto& contour = model.contour_flags();
        const bool any_contour = std::find(contour.begin(), contour.end(), true) != contour.end();
        if (any_contour) {
            const Eigen::Matrix3Xd normals = compute_vertex_normals(camera_mesh);
            const std::vector<bool> visible = front_facing_vertices(camera_mesh, normals);
            std::vector<int> candidates;
            for (int v = 0; v < camera_mesh.vertex_count(); ++v) {
                if (visible[static_cast<std::size_t>(v)] && camera_mesh.vertices(2, v) > 0.0) {
                    candidates.push_back(v);
                }
            }
            Eigen::Matrix3Xd cand_points(3, static_cast<Eigen::Index>(candidates.size()));
            for (std::size_t k = 0; k < candidates.size(); ++k) {
                cand_points.col(static_cast<Eigen::Index>(k)) = camera_mesh.vertices.col(candidates[k]);
            }
            const Eigen::Matrix2Xd cand_proj = project_points(camera, cand_points);
            for (Eigen::Index l = 0; l < count; ++l) {
                if (!contour[static_cast<std::size_t>(l)] || candidates.empty()) {
                    continue;
                }
                Eigen::Index best = 0;
                (cand_proj.colwise() - observed->col(l)).colwise().squaredNorm().minCoeff(&best);
                out.vertex_indices[static_cast<std::size_t>(l)] = candidates[static_cast<std::size_t>(best)];
            }
        }
    }

    Eigen::Matrix3Xd points(3, count);
    for (Eigen::Index l = 0; l < count; ++l) {
        points.col(l) = camera_mesh.vertices.col(out.vertex_indices[static_cast<std::size_t>(l)]);
    }
    out.points = project_points(camera, points);
    return out;
}

Landmarks2D detected_landmarks(const Mesh& camera_mesh, const Camera& camera, const MorphableModel& model)
{
    // A visible contour vertex is its own nearest projection, so only hidden ones move.
    const Landmarks2D fixed = landmarks_2d(camera_mesh, camera, model);
    return landmarks_2d(camera_mesh, camera, model, fixed.points);
}

Eigen::Quaterniond rotation_from_angles(double yaw, double pitch, double roll)
{
    const Eigen::Quaterniond q = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()) *
                                 Eigen::AngleAxisd(pitch, Eigen::Vector3d::UnitX()) *
                                 Eigen::AngleAxisd(roll, Eigen::Vector3d::UnitZ());
    return q.normalized();
}

double rotation_angle_between(const Eigen::Quaterniond& a, const Eigen::Quaterniond& b)
{
    const double d = std::min(1.0, std::abs(a.normalized().dot(b.normalized())));
    return 2.0 * std::acos(d);
}

void write_obj(const std::filesystem::path& path, const Mesh& mesh)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot open " + path.string() + " for writing");
    }
    out.precision(9);
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        out << "v " << mesh.vertices(0, i) << ' ' << mesh.vertices(1, i) << ' ' << mesh.vertices(2, i) << '\n';
    }
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        out << "vt " << mesh.uv()(0, i) << ' ' << 1.0 - mesh.uv()(1, i) << '\n';
    }
    for (const Triangle& t : mesh.triangles()) {
        out << "f";
        for (int v : t) {
            out << ' ' << v + 1 << '/' << v + 1;
        }
        out << '\n';
    }
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

} // namespace refield
