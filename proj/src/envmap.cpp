#include "refield/error.hpp"
#include "refield/light_transport.hpp"
#include "refield/random.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace refield {

namespace {

constexpr double kPi = std::numbers::pi;

Eigen::Vector3d texel_direction(int x, int y, int width, int height)
{
    const double u = (x + 0.5) / width;
    const double v = (y + 0.5) / height;
    const double phi = 2.0 * kPi * u - kPi; // atan2(d.x, d.z)
    const double theta = kPi * v;           // acos(d.y)
    return {std::sin(theta) * std::sin(phi), std::cos(theta), std::sin(theta) * std::cos(phi)};
}

} // namespace

void EnvMap::validate() const
{
    if (radiance.empty()) {
        throw DataError("environment map is empty");
    }
    for (double v : radiance.data()) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw DataError("environment map radiance must be finite and non-negative");
        }
    }
}

Eigen::Vector3d sample_envmap(const EnvMap& env, const Eigen::Vector3d& direction)
{
    const int w = env.width();
    const int h = env.height();
    const double u = (std::atan2(direction.x(), direction.z()) + kPi) / (2.0 * kPi);
    const double v = std::acos(std::clamp(direction.y(), -1.0, 1.0)) / kPi;
    const double x = u * w - 0.5;
    const double y = v * h - 0.5;
    const double fx = std::floor(x);
    const double fy = std::floor(y);
    const double ax = x - fx;
    const double ay = y - fy;
    const auto wrap = [w](int i) { return ((i % w) + w) % w; };
    const auto clampy = [h](int j) { return std::clamp(j, 0, h - 1); };
    const int x0 = wrap(static_cast<int>(fx));
    const int x1 = wrap(static_cast<int>(fx) + 1);
    const int y0 = clampy(static_cast<int>(fy));
    const int y1 = clampy(static_cast<int>(fy) + 1);
    return (1.0 - ax) * (1.0 - ay) * env.radiance.pixel(x0, y0) + ax * (1.0 - ay) * env.radiance.pixel(x1, y0) +
           (1.0 - ax) * ay * env.radiance.pixel(x0, y1) + ax * ay * env.radiance.pixel(x1, y1);
}

LightWeights project_env_to_lights(const EnvMap& env, const LightRig& rig, EnvProjection mode)
{
    env.validate();
    rig.validate();
    const auto n = static_cast<Eigen::Index>(rig.size());
    LightWeights weights = LightWeights::Zero(n, 3);
    if (mode == EnvProjection::point_sample) {
        const double share = 4.0 * kPi / static_cast<double>(n);
        for (Eigen::Index l = 0; l < n; ++l) {
            weights.row(l) = (sample_envmap(env, rig.directions[static_cast<std::size_t>(l)]) * share).transpose();
        }
        return weights;
    }
    const int w = env.width();
    const int h = env.height();
    for (int y = 0; y < h; ++y) {
        // Exact solid angle of the texel's latitude band, so texels tile 4 pi.
        const double solid_angle =
            (2.0 * kPi / w) * (std::cos(kPi * y / h) - std::cos(kPi * (y + 1) / h));
        for (int x = 0; x < w; ++x) {
            const Eigen::Vector3d d = texel_direction(x, y, w, h);
            Eigen::Index best = 0;
            double best_dot = -2.0;
            for (Eigen::Index l = 0; l < n; ++l) {
                const double dot = d.dot(rig.directions[static_cast<std::size_t>(l)]);
                if (dot > best_dot) {
                    best_dot = dot;
                    best = l;
                }
            }
            weights.row(best) += (env.radiance.pixel(x, y) * solid_angle).transpose();
        }
    }
    return weights;
}

EnvMap make_procedural_envmap(int width, int height, std::uint64_t seed, int area_lights)
{
    Rng rng(seed);
    const Eigen::Vector3d sky(rng.uniform(0.3, 0.6), rng.uniform(0.4, 0.7), rng.uniform(0.6, 1.0));
    const Eigen::Vector3d ground(rng.uniform(0.05, 0.15), rng.uniform(0.05, 0.12), rng.uniform(0.03, 0.1));
    struct Lobe {
        Eigen::Vector3d dir;
        double sharpness;
        Eigen::Vector3d color;
    };
    std::vector<Lobe> lobes;
    for (int i = 0; i < area_lights; ++i) {
        Eigen::Vector3d d(rng.normal(), rng.normal(), rng.normal());
        d.normalize();
        const double warmth = rng.uniform();
        const Eigen::Vector3d color = rng.uniform(2.0, 8.0) * Eigen::Vector3d(1.0, 0.8 + 0.2 * warmth, 0.6 + 0.4 * warmth);
        lobes.push_back({d, rng.uniform(40.0, 200.0), color});
    }
    EnvMap env;
    env.radiance = Image(width, height, 0.0);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const Eigen::Vector3d d = texel_direction(x, y, width, height);
            // Up is -y in the camera frame.
            const double t = 0.5 * (1.0 - d.y());
            Eigen::Vector3d c = (1.0 - t) * ground + t * sky;
            for (const Lobe& lobe : lobes) {
                c += lobe.color * std::exp(lobe.sharpness * (d.dot(lobe.dir) - 1.0));
            }
            env.radiance.set_pixel(x, y, c);
        }
    }
    return env;
}

} // namespace refield
