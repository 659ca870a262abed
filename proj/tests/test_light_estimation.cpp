#include "support.hpp"

#include "refield/error.hpp"
#include "refield/light_estimation.hpp"

#include <doctest.h>

#include <cmath>

using namespace refield;
using refield::test::random_image;

namespace {

OLATSet random_olats(int lights, int w, int h, Rng& rng)
{
    OLATSet set;
    set.rig = LightRig::fibonacci(static_cast<std::size_t>(lights));
    for (int l = 0; l < lights; ++l) {
        set.images.push_back(random_image(w, h, rng));
    }
    return set;
}

LightWeights random_weights(int lights, Rng& rng)
{
    LightWeights lambda(lights, 3);
    for (Eigen::Index i = 0; i < lambda.size(); ++i) {
        lambda.data()[i] = rng.uniform();
    }
    return lambda;
}

} // namespace

TEST_CASE("exact targets are recovered by least squares")
{
    Rng rng(1);
    const OLATSet set = random_olats(12, 20, 20, rng);
    const LightWeights truth = random_weights(12, rng);
    const Image target = relight_sum(set, truth);
    LightSolveOptions opt;
    opt.ridge = 0.0;
    const LightSolve solve = estimate_light_lsq(set, target, {}, opt);
    CHECK((solve.lambda - truth).norm() < 1e-9 * truth.norm());
    CHECK(solve.residual < 1e-18);
    CHECK(solve.condition >= 1.0);
    CHECK(light_residual(set, solve.lambda, target, {}) == doctest::Approx(solve.residual).epsilon(1e-6));

    // Default ridge is tiny relative to the data.
    const LightSolve ridged = estimate_light_lsq(set, target, {});
    CHECK(ridged.ridge > 0.0);
    CHECK((ridged.lambda - truth).norm() < 1e-4 * truth.norm());
}

TEST_CASE("normal equations match a dense oracle with ridge")
{
    Rng rng(2);
    const OLATSet set = random_olats(5, 6, 4, rng);
    const Image target = random_image(6, 4, rng);
    PixelMask mask(24, 1);
    mask[3] = mask[7] = 0;
    LightSolveOptions opt;
    opt.ridge = 0.5;
    const LightSolve solve = estimate_light_lsq(set, target, mask, opt);
    for (int c = 0; c < 3; ++c) {
        Eigen::MatrixXd g(22, 5);
        Eigen::VectorXd b(22);
        int row = 0;
        for (int p = 0; p < 24; ++p) {
            if (!mask[static_cast<std::size_t>(p)]) {
                continue;
            }
            for (int l = 0; l < 5; ++l) {
                g(row, l) = set.images[static_cast<std::size_t>(l)].data()[static_cast<std::size_t>(p) * 3 + c];
            }
            b(row) = target.data()[static_cast<std::size_t>(p) * 3 + c];
            ++row;
        }
        const Eigen::VectorXd x = (g.transpose() * g + 0.5 * Eigen::MatrixXd::Identity(5, 5)).ldlt().solve(g.transpose() * b);
        CHECK((solve.lambda.col(c) - x).norm() < 1e-10);
    }
}

TEST_CASE("rank deficiency without ridge is a numerical error")
{
    Rng rng(3);
    OLATSet set = random_olats(4, 8, 8, rng);
    set.images[3] = set.images[1];
    const Image target = random_image(8, 8, rng);
    LightSolveOptions opt;
    opt.ridge = 0.0;
    CHECK_THROWS_AS(estimate_light_lsq(set, target, {}, opt), NumericalError);
    CHECK_NOTHROW(estimate_light_lsq(set, target, {}));
    CHECK_THROWS_AS(estimate_light_lsq(set, target, PixelMask(64, 0)), DataError);
    CHECK_THROWS_AS(estimate_light_lsq(set, Image(7, 8), {}), DimensionError);
}

TEST_CASE("non-negative solve satisfies the KKT conditions")
{
    Rng rng(4);
    const OLATSet set = random_olats(10, 12, 12, rng);
    const Image target = random_image(12, 12, rng);
    LightSolveOptions opt;
    opt.nonnegative = true;
    opt.ridge = 0.0;
    const LightSolve solve = estimate_light_lsq(set, target, {}, opt);
    CHECK(solve.nonnegative);
    CHECK((solve.lambda.array() >= 0.0).all());
    const LightWeights grad = photometric_objective(set, target, {}).gradient(solve.lambda);
    const double scale = grad.cwiseAbs().maxCoeff() + 1.0;
    for (Eigen::Index i = 0; i < grad.size(); ++i) {
        if (solve.lambda.data()[i] > 0.0) {
            CHECK(std::abs(grad.data()[i]) < 1e-6 * scale);
        } else {
            CHECK(grad.data()[i] > -1e-6 * scale);
        }
    }
    // The constrained optimum can be no better than the unconstrained one.
    opt.nonnegative = false;
    CHECK(estimate_light_lsq(set, target, {}, opt).residual <= solve.residual + 1e-12);
}

TEST_CASE("objective gradient matches finite differences")
{
    Rng rng(5);
    const OLATSet set = random_olats(4, 5, 5, rng);
    const Image target = random_image(5, 5, rng);
    const LightObjective obj = photometric_objective(set, target, {});
    LightWeights x = random_weights(4, rng);
    const LightWeights g = obj.gradient(x);
    const double h = 1e-6;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double keep = x.data()[i];
        x.data()[i] = keep + h;
        const double up = obj.value(x);
        x.data()[i] = keep - h;
        const double down = obj.value(x);
        x.data()[i] = keep;
        CHECK((up - down) / (2 * h) == doctest::Approx(g.data()[i]).epsilon(1e-6));
    }
}

TEST_CASE("refinement never returns a worse solution")
{
    Rng rng(6);
    const OLATSet set = random_olats(6, 10, 10, rng);
    const LightWeights truth = random_weights(6, rng);
    const Image target = relight_sum(set, truth);
    LightSolve start;
    start.lambda = truth + 0.2 * random_weights(6, rng);
    const LightObjective obj = photometric_objective(set, target, {});
    start.residual = obj.value(start.lambda);
    RefineOptions ro;
    ro.steps = 200;
    ro.adadelta.learning_rate = 1.0;
    const LightSolve refined = refine_light(start, obj, ro);
    CHECK(refined.residual < start.residual);
    CHECK(refined.residual == doctest::Approx(obj.value(refined.lambda)));

    // Numeric-gradient path agrees in spirit: it still improves.
    LightObjective numeric{obj.value, {}};
    const LightSolve refined_fd = refine_light(start, numeric, ro);
    CHECK(refined_fd.residual < start.residual);

    // Already optimal: nothing to gain, the start comes back.
    LightSolve exact;
    exact.lambda = truth;
    exact.residual = obj.value(truth);
    CHECK(refine_light(exact, obj, ro).lambda == truth);

    ro.nonnegative = true;
    CHECK((refine_light(start, obj, ro).lambda.array() >= 0.0).all());
}

TEST_CASE("serial and parallel light solves agree exactly")
{
    Rng rng(7);
    const OLATSet set = random_olats(9, 70, 70, rng);
    const Image target = random_image(70, 70, rng);
    LightSolveOptions a, b;
    a.exec = Exec::serial;
    b.exec = Exec::parallel;
    CHECK(estimate_light_lsq(set, target, {}, a).lambda == estimate_light_lsq(set, target, {}, b).lambda);
}
