#include "support.hpp"

#include "refield/adadelta.hpp"
#include "refield/error.hpp"
#include "refield/losses.hpp"

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace refield;
using refield::test::random_image;

TEST_CASE("si_mse is invariant to a global scale of the prediction")
{
    Rng rng(1);
    const Image t = random_image(6, 5, rng);
    Image p = t;
    p *= 3.7;
    CHECK(si_mse(p, t) < 1e-28);
    CHECK(si_mse(t, t) == 0.0);

    const Image q = random_image(6, 5, rng);
    Image q2 = q;
    q2 *= 0.25;
    CHECK(si_mse(q, t) == doctest::Approx(si_mse(q2, t)).epsilon(1e-12));
    CHECK(si_mse(q, t) <= mse(q, t));

    // Oracle: closed-form optimal scale.
    double pp = 0, pt = 0, tt = 0;
    for (std::size_t i = 0; i < q.data().size(); ++i) {
        pp += q.data()[i] * q.data()[i];
        pt += q.data()[i] * t.data()[i];
        tt += t.data()[i] * t.data()[i];
    }
    const double expect = (tt - pt * pt / pp) / static_cast<double>(q.data().size());
    CHECK(si_mse(q, t) == doctest::Approx(expect).epsilon(1e-12));

    // A zero prediction uses s = 0.
    CHECK(si_mse(Image(6, 5), t) == doctest::Approx(tt / 90.0));
}

TEST_CASE("masks restrict every image loss")
{
    Rng rng(2);
    const Image a = random_image(4, 4, rng);
    Image b = a;
    PixelMask mask(16, 1);
    b.at(1, 2, 0) += 5.0;
    mask[b.index(1, 2)] = 0;
    CHECK(photometric_l1(a, b, mask) == 0.0);
    CHECK(mse(a, b, mask) == 0.0);
    CHECK(si_mse(a, b, mask) < 1e-30);
    CHECK(photometric_l1(a, b, {}) == doctest::Approx(5.0 / 16.0));
    CHECK(photometric_l1(a, b, {}) == photometric_l1(b, a, {}));
    CHECK(photometric_l1(a, b, PixelMask(16, 0)) == 0.0);
    CHECK_THROWS_AS(photometric_l1(a, Image(3, 4), {}), DimensionError);
    CHECK_THROWS_AS(photometric_l1(a, b, PixelMask(3, 1)), DimensionError);
}

TEST_CASE("photometric and pyramid gradients match central differences")
{
    Rng rng(3);
    Image r = random_image(8, 8, rng);
    const Image t = random_image(8, 8, rng);
    PixelMask mask(64, 1);
    for (int i = 0; i < 10; ++i) {
        mask[static_cast<std::size_t>(rng.index(64))] = 0;
    }
    const Image g1 = photometric_l1_gradient(r, t, mask);
    const Image g2 = pyramid_loss_gradient(r, t, mask);
    const double h = 1e-6;
    for (std::size_t k = 0; k < r.data().size(); ++k) {
        const double keep = r.data()[k];
        r.data()[k] = keep + h;
        const double l1p = photometric_l1(r, t, mask);
        const double pp = pyramid_loss(r, t, mask);
        r.data()[k] = keep - h;
        const double l1m = photometric_l1(r, t, mask);
        const double pm = pyramid_loss(r, t, mask);
        r.data()[k] = keep;
        CHECK((l1p - l1m) / (2 * h) == doctest::Approx(g1.data()[k]).epsilon(1e-6));
        CHECK((pp - pm) / (2 * h) == doctest::Approx(g2.data()[k]).epsilon(1e-5));
    }
}

TEST_CASE("landmark loss, regularizer and weighted total")
{
    Eigen::Matrix2Xd a(2, 3), b(2, 3);
    a << 0, 1, 2, 0, 1, 2;
    b << 0, 1, 5, 0, 2, 2;
    CHECK(landmark_loss(a, b) == doctest::Approx(10.0));
    b(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(landmark_loss(a, b), NumericalError);
    CHECK_THROWS_AS(landmark_loss(a, Eigen::Matrix2Xd(2, 2)), DimensionError);

    const LossWeights w;
    CHECK(w.landmark == 25.0);
    CHECK(w.photometric == 5.0);
    CHECK(w.regularizer == 1.0);
    CHECK(w.feature == 1.0);
    CHECK(w.alpha == 0.4);
    CHECK(w.beta == 0.002);
    Eigen::VectorXd alpha(2), beta(1);
    alpha << 1, 2;
    beta << 10;
    CHECK(geometry_regularizer(alpha, beta, w) == doctest::Approx(0.4 * 5 + 0.002 * 100));
    const LossComponents c{1.0, 2.0, 3.0, 4.0};
    CHECK(total_loss(c, w) == doctest::Approx(25 + 10 + 3 + 4));
    LossWeights bad;
    bad.photometric = -1;
    CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("adadelta first step from a fresh state")
{
    AdadeltaState s(1, {0.95, 1e-6, 0.05});
    std::vector<double> x{0.0};
    const std::vector<double> g{1.0};
    adadelta_step(s, x, g);
    // delta = -sqrt(eps / (0.05 + eps)), scaled by lr.
    const double delta = -std::sqrt(1e-6 / (0.05 + 1e-6));
    CHECK(delta == doctest::Approx(-4.4721e-3).epsilon(1e-4));
    CHECK(x[0] == doctest::Approx(0.05 * delta).epsilon(1e-12));
    CHECK(x[0] == doctest::Approx(-2.2361e-4).epsilon(1e-4));
    CHECK(s.mean_sq_grad[0] == doctest::Approx(0.05));
    CHECK(s.mean_sq_update[0] == doctest::Approx(0.05 * delta * delta));
}

TEST_CASE("adadelta: zero gradient decays accumulators, steps oppose the gradient")
{
    Rng rng(4);
    AdadeltaState s(5);
    std::vector<double> x(5, 1.0);
    std::vector<double> g(5);
    for (int it = 0; it < 10; ++it) {
        for (double& v : g) {
            v = rng.uniform(-1, 1);
        }
        const std::vector<double> before = x;
        adadelta_step(s, x, g);
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK((x[i] - before[i]) * g[i] < 0.0);
        }
    }
    const std::vector<double> grad_sq = s.mean_sq_grad;
    const std::vector<double> upd_sq = s.mean_sq_update;
    const std::vector<double> before = x;
    adadelta_step(s, x, std::vector<double>(5, 0.0));
    CHECK(x == before);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(s.mean_sq_grad[i] == doctest::Approx(0.95 * grad_sq[i]));
        CHECK(s.mean_sq_update[i] == doctest::Approx(0.95 * upd_sq[i]));
        CHECK(s.mean_sq_grad[i] >= 0.0);
    }
    std::vector<double> short_x(4);
    CHECK_THROWS_AS(adadelta_step(s, short_x, g), DimensionError);
}

TEST_CASE("adadelta minimizes a quadratic")
{
    AdadeltaState s(2, {0.95, 1e-6, 1.0});
    std::vector<double> x{3.0, -2.0};
    for (int it = 0; it < 3000; ++it) {
        const std::vector<double> g{2.0 * x[0], 8.0 * x[1]};
        adadelta_step(s, x, g);
    }
    // Adadelta hovers near the minimum rather than converging exactly.
    const double f = x[0] * x[0] + 4.0 * x[1] * x[1];
    CHECK(f < 1e-3 * 25.0);
}
