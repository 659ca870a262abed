#include "refield/synthetic_model.hpp"

#include "refield/error.hpp"
#include "refield/random.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <utility>

namespace refield {

namespace {

constexpr double kPi = std::numbers::pi;

/// Face-front direction in object space (camera looks along +z).
const Eigen::Vector3d kFront(0.0, 0.0, -1.0);

/// Radius of the UV disk; leaves a small gutter around the chart.
constexpr double kUvRadius = 0.49;

struct Bump {
    double a, b;       // center in the frontal plane
    double sa, sb;     // extent
    double amplitude;  // millimetres along the surface direction
};

// Frontal-plane coordinates are the (x, y) components of a unit direction on
// the front hemisphere; y grows toward the chin.
const Bump kFeatures[] = {
    {0.0, 0.02, 0.07, 0.20, 16.0},    // nose ridge
    {0.0, 0.17, 0.09, 0.07, 10.0},    // nose tip
    {-0.30, -0.12, 0.12, 0.08, -8.0}, // eye sockets
    {0.30, -0.12, 0.12, 0.08, -8.0},
    {-0.28, -0.27, 0.18, 0.06, 4.0},  // brows
    {0.28, -0.27, 0.18, 0.06, 4.0},
    {0.0, 0.42, 0.18, 0.06, 4.0},     // lips
    {0.0, 0.30, 0.06, 0.05, -2.0},    // philtrum
    {0.0, 0.70, 0.16, 0.10, 5.0},     // chin
    {-0.45, 0.15, 0.18, 0.18, 3.0},   // cheeks
    {0.45, 0.15, 0.18, 0.18, 3.0},
};

double frontal_weight(const Eigen::Vector3d& d)
{
    // Fades features out before the side of the head.
    const double f = std::clamp((-d.z() - 0.2) / 0.4, 0.0, 1.0);
    return f * f * (3.0 - 2.0 * f);
}

double feature_height(const Eigen::Vector3d& d)
{
    const double w = frontal_weight(d);
    if (w == 0.0) {
        return 0.0;
    }
    double h = 0.0;
    for (const Bump& bump : kFeatures) {
        const double da = (d.x() - bump.a) / bump.sa;
        const double db = (d.y() - bump.b) / bump.sb;
        h += bump.amplitude * std::exp(-0.5 * (da * da + db * db));
    }
    return w * h;
}

Eigen::Vector3d head_surface(const Eigen::Vector3d& d)
{
    const Eigen::Vector3d radii(72.0, 95.0, 88.0);
    const Eigen::Vector3d base = d.cwiseProduct(radii);
    return base + feature_height(d) * d;
}

Eigen::Vector2d azimuthal_uv(const Eigen::Vector3d& d, double max_angle)
{
    const double theta = std::acos(std::clamp(d.dot(kFront), -1.0, 1.0));
    const double phi = std::atan2(d.y(), d.x());
    const double r = kUvRadius * theta / max_angle;
    return {0.5 + r * std::cos(phi), 0.5 + r * std::sin(phi)};
}

Eigen::Vector3d direction_from_uv(const Eigen::Vector2d& uv, double max_angle)
{
    const Eigen::Vector2d p = uv - Eigen::Vector2d(0.5, 0.5);
    const double theta = p.norm() / kUvRadius * max_angle;
    const double phi = std::atan2(p.y(), p.x());
    return {std::sin(theta) * std::cos(phi), std::sin(theta) * std::sin(phi), -std::cos(theta)};
}

Eigen::Vector3d frontal_direction(double a, double b)
{
    const double r2 = std::min(a * a + b * b, 0.999);
    return {a, b, -std::sqrt(1.0 - r2)};
}

std::vector<Eigen::Vector2d> landmark_layout()
{
    std::vector<Eigen::Vector2d> pts;
    pts.reserve(kLandmarkCount);
    // Jaw contour, ear to ear through the chin.
    for (int i = 0; i < 17; ++i) {
        const double psi = (-70.0 + 140.0 * i / 16.0) * kPi / 180.0;
        pts.emplace_back(0.52 * std::sin(psi), 0.08 + 0.56 * std::cos(psi));
    }
    // Brows.
    for (int side : {-1, 1}) {
        for (int i = 0; i < 5; ++i) {
            const double a = 0.12 + 0.08 * i;
            pts.emplace_back(side * a, -0.30 + 0.15 * (a - 0.28) * (a - 0.28) * 4.0);
        }
    }
    // Nose bridge and base.
    for (int i = 0; i < 4; ++i) {
        pts.emplace_back(0.0, -0.16 + 0.09 * i);
    }
    for (int i = 0; i < 5; ++i) {
        pts.emplace_back(-0.12 + 0.06 * i, 0.23);
    }
    // Eyes, six points each.
    for (int side : {-1, 1}) {
        for (int i = 0; i < 6; ++i) {
            const double t = 2.0 * kPi * i / 6.0;
            pts.emplace_back(side * 0.30 + 0.10 * std::cos(t), -0.12 + 0.045 * std::sin(t));
        }
    }
    // Outer lip contour (12) and inner lip without the corners (6).
    for (int i = 0; i < 12; ++i) {
        const double t = 2.0 * kPi * i / 12.0;
        pts.emplace_back(0.20 * std::cos(t), 0.42 + 0.085 * std::sin(t));
    }
    for (int i = 0; i < 6; ++i) {
        const double t = kPi * (i < 3 ? (i + 1) / 4.0 : 1.0 + (i - 2) / 4.0);
        pts.emplace_back(0.12 * std::cos(t), 0.42 + 0.03 * std::sin(t));
    }
    return pts;
}

double gaussian_field(const Eigen::Vector3d& d, const Eigen::Vector3d& center, double sigma)
{
    return std::exp(-(d - center).squaredNorm() / (2.0 * sigma * sigma));
}

Eigen::Vector3d random_frontal_center(Rng& rng, double spread)
{
    Eigen::Vector3d c(rng.uniform(-spread, spread), rng.uniform(-spread, spread), -1.0);
    return c.normalized();
}

} // namespace

Icosphere make_icosphere(int level)
{
    if (level < 0) {
        throw DataError("icosphere level must be non-negative");
    }
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Eigen::Vector3d> verts = {
        {-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
        {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1},
    };
    for (auto& v : verts) {
        v.normalize();
    }
    std::vector<Triangle> tris = {
        {0, 11, 5}, {0, 5, 1}, {0, 1, 7}, {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
        {11, 10, 2}, {10, 7, 6}, {7, 1, 8}, {3, 9, 4}, {3, 4, 2}, {3, 2, 6}, {3, 6, 8},
        {3, 8, 9}, {4, 9, 5}, {2, 4, 11}, {6, 2, 10}, {8, 6, 7}, {9, 8, 1},
    };
    for (int l = 0; l < level; ++l) {
        std::map<std::pair<int, int>, int> midpoints;
        const auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            const auto it = midpoints.find(key);
            if (it != midpoints.end()) {
                return it->second;
            }
            verts.push_back((verts[static_cast<std::size_t>(a)] + verts[static_cast<std::size_t>(b)]).normalized());
            const int idx = static_cast<int>(verts.size()) - 1;
            midpoints.emplace(key, idx);
            return idx;
        };
        std::vector<Triangle> next;
        next.reserve(tris.size() * 4);
        for (const Triangle& tri : tris) {
            const int ab = midpoint(tri[0], tri[1]);
            const int bc = midpoint(tri[1], tri[2]);
            const int ca = midpoint(tri[2], tri[0]);
            next.push_back({tri[0], ab, ca});
            next.push_back({tri[1], bc, ab});
            next.push_back({tri[2], ca, bc});
            next.push_back({ab, bc, ca});
        }
        tris = std::move(next);
    }
    Icosphere out;
    out.vertices.resize(3, static_cast<Eigen::Index>(verts.size()));
    for (std::size_t i = 0; i < verts.size(); ++i) {
        out.vertices.col(static_cast<Eigen::Index>(i)) = verts[i];
    }
    out.triangles = std::move(tris);
    return out;
}

MorphableModel make_synthetic_model(const SyntheticModelOptions& options)
{
    const Icosphere sphere = make_icosphere(options.subdivision_level);
    const double max_angle = options.crop_angle_deg * kPi / 180.0;

    // Crop the back of the skull.
    std::vector<int> remap(static_cast<std::size_t>(sphere.vertices.cols()), -1);
    std::vector<Eigen::Vector3d> dirs;
    for (Eigen::Index i = 0; i < sphere.vertices.cols(); ++i) {
        const Eigen::Vector3d d = sphere.vertices.col(i);
        if (std::acos(std::clamp(d.dot(kFront), -1.0, 1.0)) <= max_angle) {
            remap[static_cast<std::size_t>(i)] = static_cast<int>(dirs.size());
            dirs.push_back(d);
        }
    }
    std::vector<Triangle> triangles;
    for (const Triangle& t : sphere.triangles) {
        const Triangle m = {remap[static_cast<std::size_t>(t[0])], remap[static_cast<std::size_t>(t[1])],
                            remap[static_cast<std::size_t>(t[2])]};
        if (m[0] >= 0 && m[1] >= 0 && m[2] >= 0) {
            triangles.push_back(m);
        }
    }
    const int n = static_cast<int>(dirs.size());

    Eigen::VectorXd mean(3 * n);
    Eigen::Matrix2Xd uv(2, n);
    for (int i = 0; i < n; ++i) {
        const Eigen::Vector3d& d = dirs[static_cast<std::size_t>(i)];
        mean.segment<3>(3 * i) = head_surface(d);
        uv.col(i) = azimuthal_uv(d, max_angle);
    }

    Rng rng(options.seed);

    // Identity: smooth radial displacement fields with decaying scale.
    Eigen::MatrixXd id_basis(3 * n, options.identity_dims);
    for (int k = 0; k < options.identity_dims; ++k) {
        std::vector<std::pair<Eigen::Vector3d, double>> lobes;
        std::vector<double> amps;
        for (int j = 0; j < 4; ++j) {
            lobes.emplace_back(random_frontal_center(rng, 1.2), rng.uniform(0.4, 0.7));
            amps.push_back(rng.normal());
        }
        Eigen::VectorXd col(3 * n);
        for (int i = 0; i < n; ++i) {
            const Eigen::Vector3d& d = dirs[static_cast<std::size_t>(i)];
            double f = 0.0;
            for (std::size_t j = 0; j < lobes.size(); ++j) {
                f += amps[j] * gaussian_field(d, lobes[j].first, lobes[j].second);
            }
            col.segment<3>(3 * i) = f * d;
        }
        const double rms = std::sqrt(col.squaredNorm() / n);
        const double target = 4.0 * std::pow(0.8, k);
        id_basis.col(k) = rms > 0.0 ? Eigen::VectorXd(col * (target / rms)) : col;
    }

    // Expression: localized deformations around the mouth, jaw and brows.
    Eigen::MatrixXd exp_basis(3 * n, options.expression_dims);
    const Eigen::Vector3d exp_centers[] = {
        frontal_direction(0.0, 0.45), frontal_direction(0.0, 0.68), frontal_direction(-0.28, -0.28),
        frontal_direction(0.28, -0.28)};
    for (int k = 0; k < options.expression_dims; ++k) {
        const Eigen::Vector3d center = exp_centers[k % 4];
        const Eigen::Vector3d push = Eigen::Vector3d(rng.uniform(-0.3, 0.3), rng.uniform(0.5, 1.0), rng.uniform(-0.3, 0.3)).normalized();
        const double sigma = rng.uniform(0.15, 0.25);
        Eigen::VectorXd col(3 * n);
        for (int i = 0; i < n; ++i) {
            const Eigen::Vector3d& d = dirs[static_cast<std::size_t>(i)];
            col.segment<3>(3 * i) = gaussian_field(d, center, sigma) * push;
        }
        const double rms = std::sqrt(col.squaredNorm() / n);
        exp_basis.col(k) = rms > 0.0 ? Eigen::VectorXd(col * (3.0 / rms)) : col;
    }

    // Landmarks: nearest unused vertex to each layout direction.
    std::vector<int> landmarks;
    std::vector<bool> contour;
    std::vector<bool> used(static_cast<std::size_t>(n), false);
    const auto layout = landmark_layout();
    for (std::size_t l = 0; l < layout.size(); ++l) {
        const Eigen::Vector3d target = frontal_direction(layout[l].x(), layout[l].y());
        int best = -1;
        double best_dot = -2.0;
        for (int i = 0; i < n; ++i) {
            if (used[static_cast<std::size_t>(i)]) {
                continue;
            }
            const double dot = dirs[static_cast<std::size_t>(i)].dot(target);
            if (dot > best_dot) {
                best_dot = dot;
                best = i;
            }
        }
        used[static_cast<std::size_t>(best)] = true;
        landmarks.push_back(best);
        contour.push_back(static_cast<int>(l) < kContourLandmarks);
    }

    return MorphableModel(std::move(mean), std::move(id_basis), std::move(exp_basis), std::move(triangles),
                          std::move(uv), std::move(landmarks), std::move(contour));
}

TextureMap make_synthetic_albedo(int size, std::uint64_t seed)
{
    constexpr double kMaxAngle = 160.0 * kPi / 180.0;
    Rng rng(seed);
    const Eigen::Vector3d skin(rng.uniform(0.45, 0.75), rng.uniform(0.30, 0.50), rng.uniform(0.22, 0.40));
    const Eigen::Vector3d lips = skin.cwiseProduct(Eigen::Vector3d(1.1, 0.65, 0.7));
    const Eigen::Vector3d brows = skin * rng.uniform(0.25, 0.45);

    // Low-frequency blotches.
    struct Blotch {
        Eigen::Vector3d center;
        double sigma;
        Eigen::Vector3d tint;
    };
    std::vector<Blotch> blotches;
    for (int i = 0; i < 12; ++i) {
        blotches.push_back({random_frontal_center(rng, 1.0), rng.uniform(0.05, 0.15),
                            Eigen::Vector3d(rng.uniform(-0.08, 0.08), rng.uniform(-0.06, 0.04), rng.uniform(-0.05, 0.05))});
    }

    TextureMap tex(size, size, 0.0, true);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const Eigen::Vector2d uv((x + 0.5) / size, (y + 0.5) / size);
            const Eigen::Vector3d d = direction_from_uv(uv, kMaxAngle);
            Eigen::Vector3d c = skin;
            for (const Blotch& b : blotches) {
                c += gaussian_field(d, b.center, b.sigma) * b.tint;
            }
            const double a = d.x();
            const double bb = d.y();
            const double lip = std::exp(-0.5 * (std::pow(a / 0.19, 2) + std::pow((bb - 0.42) / 0.06, 2))) * frontal_weight(d);
            c = (1.0 - lip) * c + lip * lips;
            for (double side : {-1.0, 1.0}) {
                const double brow = std::exp(-0.5 * (std::pow((a - side * 0.28) / 0.14, 8) + std::pow((bb + 0.30) / 0.025, 2))) * frontal_weight(d);
                c = (1.0 - brow) * c + brow * brows;
            }
            tex.image.set_pixel(x, y, c.cwiseMax(0.0).cwiseMin(1.0));
        }
    }
    return tex;
}

} // namespace refield
