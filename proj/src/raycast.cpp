#include "refield/raycast.hpp"

#include "refield/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace refield {

bool intersect_triangle(const Ray& ray, const Eigen::Vector3d& a, const Eigen::Vector3d& b, const Eigen::Vector3d& c,
                        double t_max, double& t)
{
    const Eigen::Vector3d& d = ray.direction;
    int kz = 0;
    d.cwiseAbs().maxCoeff(&kz);
    int kx = (kz + 1) % 3;
    int ky = (kx + 1) % 3;
    if (d(kz) < 0.0) {
        std::swap(kx, ky);
    }
    if (d(kz) == 0.0) {
        return false;
    }
    const double sx = d(kx) / d(kz);
    const double sy = d(ky) / d(kz);
    const double sz = 1.0 / d(kz);

    const Eigen::Vector3d A = a - ray.origin;
    const Eigen::Vector3d B = b - ray.origin;
    const Eigen::Vector3d C = c - ray.origin;
    const double ax = A(kx) - sx * A(kz);
    const double ay = A(ky) - sy * A(kz);
    const double bx = B(kx) - sx * B(kz);
    const double by = B(ky) - sy * B(kz);
    const double cx = C(kx) - sx * C(kz);
    const double cy = C(ky) - sy * C(kz);

    const double u = cx * by - cy * bx;
    const double v = ax * cy - ay * cx;
    const double w = bx * ay - by * ax;
    if ((u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0)) {
        return false;
    }
    const double det = u + v + w;
    if (det == 0.0) {
        return false;
    }
    const double tz = u * sz * A(kz) + v * sz * B(kz) + w * sz * C(kz);
    const double tt = tz / det;
    if (!(tt > 0.0) || !(tt < t_max)) {
        return false;
    }
    t = tt;
    return true;
}

Occluder::Occluder(const Mesh& mesh, std::size_t bvh_threshold) : mesh_(mesh), face_normals_(compute_face_normals(mesh))
{
    const auto& tris = mesh.triangles();
    if (mesh.vertex_count() > 0) {
        const Eigen::Vector3d lo = mesh.vertices.rowwise().minCoeff();
        const Eigen::Vector3d hi = mesh.vertices.rowwise().maxCoeff();
        const Eigen::Vector3d center = 0.5 * (lo + hi);
        const double radius = std::sqrt((mesh.vertices.colwise() - center).colwise().squaredNorm().maxCoeff());
        bias_ = 1e-3 * radius;
    }
    order_.resize(tris.size());
    std::iota(order_.begin(), order_.end(), 0);
    if (tris.size() > bvh_threshold) {
        std::vector<Eigen::Vector3d> centroids(tris.size());
        for (std::size_t t = 0; t < tris.size(); ++t) {
            centroids[t] = (mesh.vertices.col(tris[t][0]) + mesh.vertices.col(tris[t][1]) + mesh.vertices.col(tris[t][2])) / 3.0;
        }
        nodes_.reserve(2 * tris.size() / 2 + 1);
        build(0, static_cast<int>(tris.size()), centroids);
    }
}

int Occluder::build(int begin, int end, std::vector<Eigen::Vector3d>& centroids)
{
    const auto& tris = mesh_.triangles();
    Node node;
    node.lo = Eigen::Vector3d::Constant(std::numeric_limits<double>::infinity());
    node.hi = -node.lo;
    Eigen::Vector3d clo = node.lo;
    Eigen::Vector3d chi = node.hi;
    for (int i = begin; i < end; ++i) {
        const int t = order_[static_cast<std::size_t>(i)];
        for (int v : tris[static_cast<std::size_t>(t)]) {
            node.lo = node.lo.cwiseMin(mesh_.vertices.col(v));
            node.hi = node.hi.cwiseMax(mesh_.vertices.col(v));
        }
        clo = clo.cwiseMin(centroids[static_cast<std::size_t>(t)]);
        chi = chi.cwiseMax(centroids[static_cast<std::size_t>(t)]);
    }
    // Padding keeps every ray that the triangle test accepts inside the box.
    const double pad = 1e-7 * (node.hi - node.lo).maxCoeff() + 1e-9;
    node.lo.array() -= pad;
    node.hi.array() += pad;

    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    if (end - begin <= 4) {
        nodes_[static_cast<std::size_t>(index)].begin = begin;
        nodes_[static_cast<std::size_t>(index)].end = end;
        return index;
    }
    int axis = 0;
    (chi - clo).maxCoeff(&axis);
    const int mid = begin + (end - begin) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
        const double ca = centroids[static_cast<std::size_t>(a)](axis);
        const double cb = centroids[static_cast<std::size_t>(b)](axis);
        return ca < cb || (ca == cb && a < b);
    });
    const int left = build(begin, mid, centroids);
    const int right = build(mid, end, centroids);
    nodes_[static_cast<std::size_t>(index)].left = left;
    nodes_[static_cast<std::size_t>(index)].right = right;
    return index;
}

bool Occluder::hit_triangle(const Ray& ray, int tri, int ignore, double t_max) const
{
    if (tri == ignore) {
        return false;
    }
    const Triangle& t = mesh_.triangles()[static_cast<std::size_t>(tri)];
    double hit_t = 0.0;
    return intersect_triangle(ray, mesh_.vertices.col(t[0]), mesh_.vertices.col(t[1]), mesh_.vertices.col(t[2]),
                              t_max, hit_t);
}

namespace {

bool ray_hits_box(const Ray& ray, const Eigen::Vector3d& lo, const Eigen::Vector3d& hi, double t_max)
{
    double t0 = 0.0;
    double t1 = t_max;
    for (int k = 0; k < 3; ++k) {
        const double o = ray.origin(k);
        const double d = ray.direction(k);
        if (d == 0.0) {
            if (o < lo(k) || o > hi(k)) {
                return false;
            }
            continue;
        }
        double a = (lo(k) - o) / d;
        double b = (hi(k) - o) / d;
        if (a > b) {
            std::swap(a, b);
        }
        t0 = std::max(t0, a);
        t1 = std::min(t1, b);
        if (t0 > t1) {
            return false;
        }
    }
    return true;
}

} // namespace

bool Occluder::occluded(const Ray& ray, int ignore_triangle, double t_max) const
{
    if (nodes_.empty()) {
        for (std::size_t t = 0; t < order_.size(); ++t) {
            if (hit_triangle(ray, static_cast<int>(t), ignore_triangle, t_max)) {
                return true;
            }
        }
        return false;
    }
    int stack[128];
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[static_cast<std::size_t>(stack[--top])];
        if (!ray_hits_box(ray, node.lo, node.hi, t_max)) {
            continue;
        }
        if (node.left < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                if (hit_triangle(ray, order_[static_cast<std::size_t>(i)], ignore_triangle, t_max)) {
                    return true;
                }
            }
            continue;
        }
        stack[top++] = node.left;
        stack[top++] = node.right;
    }
    return false;
}

bool shadow_test(const Occluder& occluder, const Eigen::Vector3d& surface_point, const Eigen::Vector3d& light_dir,
                 int source_triangle)
{
    Eigen::Vector3d n = Eigen::Vector3d::Zero();
    if (source_triangle >= 0) {
        n = occluder.face_normals().col(source_triangle);
        if (n.dot(light_dir) < 0.0) {
            n = -n;
        }
    }
    const Ray ray{surface_point + occluder.shadow_bias() * n, light_dir};
    return occluder.occluded(ray, source_triangle);
}

bool shadow_test(const Mesh& mesh, const Eigen::Vector3d& surface_point, const Eigen::Vector3d& light_dir,
                 int source_triangle)
{
    const Occluder occluder(mesh);
    return shadow_test(occluder, surface_point, light_dir, source_triangle);
}

} // namespace refield
