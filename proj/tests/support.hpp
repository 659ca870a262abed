#pragma once

#include "refield/geometry.hpp"
#include "refield/image.hpp"
#include "refield/random.hpp"

#include <atomic>
#include <filesystem>
#include <memory>
#include <string>
#include <unistd.h>

namespace refield::test {

/// Scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag)
    {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("refield_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir()
    {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline Image random_image(int w, int h, Rng& rng, double lo = 0.0, double hi = 1.0)
{
    Image img(w, h);
    for (double& v : img.data()) {
        v = rng.uniform(lo, hi);
    }
    return img;
}

/// A jittered (n+1)x(n+1) vertex grid in camera space that covers an
/// image of `size` pixels, with a jittered but non-folding UV layout.
inline Mesh random_grid_scene(Rng& rng, int size, int n = 2)
{
    auto topo = std::make_shared<MeshTopology>();
    const Camera cam = Camera::square(size);
    const int side = n + 1;
    Eigen::Matrix3Xd v(3, side * side);
    topo->uv.resize(2, side * side);
    const double cell = 1.0 / n;
    for (int j = 0; j < side; ++j) {
        for (int i = 0; i < side; ++i) {
            const int k = j * side + i;
            const double px = -1.0 + (size + 2.0) * i / n + rng.uniform(-0.4, 0.4);
            const double py = -1.0 + (size + 2.0) * j / n + rng.uniform(-0.4, 0.4);
            const double z = rng.uniform(4.0, 6.0);
            v.col(k) = Eigen::Vector3d((px - cam.principal_point.x()) / cam.focal * z,
                                       (py - cam.principal_point.y()) / cam.focal * z, z);
            const double ju = (i == 0 || i == n) ? 0.0 : rng.uniform(-0.2, 0.2) * cell;
            const double jv = (j == 0 || j == n) ? 0.0 : rng.uniform(-0.2, 0.2) * cell;
            topo->uv.col(k) = Eigen::Vector2d(0.05 + 0.9 * (i * cell + ju), 0.05 + 0.9 * (j * cell + jv));
        }
    }
    for (int j = 0; j < n; ++j) {
        for (int i = 0; i < n; ++i) {
            const int a = j * side + i;
            const int b = a + 1;
            const int c = a + side;
            const int d = c + 1;
            topo->triangles.push_back({a, c, b});
            topo->triangles.push_back({b, c, d});
        }
    }
    Mesh mesh;
    mesh.vertices = v;
    mesh.topology = topo;
    mesh.space = Space::camera;
    return mesh;
}

inline double dot(const Image& a, const Image& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.data().size(); ++i) {
        s += a.data()[i] * b.data()[i];
    }
    return s;
}

} // namespace refield::test
