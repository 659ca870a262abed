#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>

namespace refield::detail {

/// Edge function of p against the directed edge a -> b, evaluated with the
/// endpoints in a canonical order so that the edge shared by two triangles
/// yields exact negatives.
inline double edge_function(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& p)
{
    const bool swap = b.x() < a.x() || (b.x() == a.x() && b.y() < a.y());
    const Eigen::Vector2d& s = swap ? b : a;
    const Eigen::Vector2d& e = swap ? a : b;
    const double v = (e.x() - s.x()) * (p.y() - s.y()) - (e.y() - s.y()) * (p.x() - s.x());
    return swap ? -v : v;
}

/// Tie rule for samples exactly on an edge: exactly one of d and -d owns it.
inline bool owns_edge(const Eigen::Vector2d& d)
{
    return d.y() > 0.0 || (d.y() == 0.0 && d.x() < 0.0);
}

/// Screen-space triangle prepared for coverage tests. Vertices are reordered
/// to positive signed area; `order` maps back to the caller's corner indices.
struct CoverageTriangle {
    Eigen::Vector2d p[3];
    int order[3] = {0, 1, 2};
    double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
    bool degenerate = true;

    CoverageTriangle(const Eigen::Vector2d& a, const Eigen::Vector2d& b, const Eigen::Vector2d& c)
    {
        p[0] = a;
        p[1] = b;
        p[2] = c;
        const double area = edge_function(p[0], p[1], p[2]);
        if (!(std::abs(area) > 0.0) || !std::isfinite(area)) {
            return;
        }
        if (area < 0.0) {
            std::swap(p[1], p[2]);
            std::swap(order[1], order[2]);
        }
        degenerate = false;
        min_x = std::min({p[0].x(), p[1].x(), p[2].x()});
        max_x = std::max({p[0].x(), p[1].x(), p[2].x()});
        min_y = std::min({p[0].y(), p[1].y(), p[2].y()});
        max_y = std::max({p[0].y(), p[1].y(), p[2].y()});
    }

    /// Affine barycentric weights of sample q in the caller's corner order.
    bool cover(const Eigen::Vector2d& q, Eigen::Vector3d& bary) const
    {
        double w[3];
        for (int i = 0; i < 3; ++i) {
            const Eigen::Vector2d& s = p[(i + 1) % 3];
            const Eigen::Vector2d& e = p[(i + 2) % 3];
            w[i] = edge_function(s, e, q);
            if (w[i] < 0.0 || (w[i] == 0.0 && !owns_edge(e - s))) {
                return false;
            }
        }
        const double sum = w[0] + w[1] + w[2];
        if (!(sum > 0.0)) {
            return false;
        }
        for (int i = 0; i < 3; ++i) {
            bary(order[i]) = w[i] / sum;
        }
        return true;
    }

    /// Inclusive range of sample indices whose centers (index + 0.5) may be covered.
    static void sample_range(double lo, double hi, int limit, int& first, int& last)
    {
        first = std::max(0, static_cast<int>(std::ceil(lo - 0.5)));
        last = std::min(limit - 1, static_cast<int>(std::floor(hi - 0.5)));
    }
};

} // namespace refield::detail
