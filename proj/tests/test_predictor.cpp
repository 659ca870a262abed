#include "support.hpp"

#include "refield/error.hpp"
#include "refield/losses.hpp"
#include "refield/predictor.hpp"
#include "refield/rasterizer.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>

using namespace refield;
using refield::test::random_image;

namespace {

TextureMap random_normals(int size, Rng& rng)
{
    TextureMap m(size, size);
    m.kind = TextureKind::normal;
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const Eigen::Vector3d n = Eigen::Vector3d(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), -1).normalized();
            m.image.set_pixel(x, y, n);
        }
    }
    return m;
}

PredictorInput random_input(int size, Rng& rng)
{
    PredictorInput in;
    in.source_texture = TextureMap(size, size);
    in.source_texture.image = random_image(size, size, rng);
    in.source_normals = random_normals(size, rng);
    in.target_normals = random_normals(size, rng);
    in.light_dir = Eigen::Vector3d(0.2, -0.3, -1).normalized();
    return in;
}

double weighted_output(const TexelPerceptron& net, const PredictorInput& in, const Image& w)
{
    return test::dot(predictor_forward(net, in, nullptr, Exec::serial).image, w);
}

} // namespace

TEST_CASE("analytic predictor closed forms")
{
    Rng rng(1);
    PredictorInput in = random_input(4, rng);
    BRDFParams brdf;
    brdf.diffuse_albedo = TextureMap(4, 4, 1.0);
    in.light_dir = in.target_normals.image.pixel(1, 2);
    const TextureMap out = predict_analytic(in, brdf);
    CHECK(out.image.at(1, 2, 0) == doctest::Approx(1.0));
    in.light_dir = -in.light_dir;
    CHECK(predict_analytic(in, brdf).image.at(1, 2, 1) == 0.0);

    in.light_dir = Eigen::Vector3d(0, 0, -1);
    BRDFParams half = brdf;
    half.diffuse_albedo = TextureMap(4, 4, 0.5);
    const TextureMap a = predict_analytic(in, brdf);
    const TextureMap b = predict_analytic(in, half);
    for (std::size_t i = 0; i < a.image.data().size(); ++i) {
        CHECK(b.image.data()[i] == doctest::Approx(0.5 * a.image.data()[i]));
    }
}

TEST_CASE("zero network outputs ln 2 on valid texels and zero elsewhere")
{
    Rng rng(2);
    PredictorInput in = random_input(4, rng);
    in.target_normals.valid[5] = 0;
    TexelPerceptron net;
    net.mutable_parameters().setZero();
    const TextureMap out = predictor_forward(net, in);
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
            const double expect = out.is_valid(x, y) ? std::log(2.0) : 0.0;
            for (int c = 0; c < 3; ++c) {
                CHECK(out.image.at(x, y, c) == doctest::Approx(expect));
            }
        }
    }
    CHECK(!out.valid[5]);
}

TEST_CASE("single linear layer reproduces a dense product")
{
    Rng rng(3);
    const PredictorInput in = random_input(3, rng);
    TexelPerceptron net({kFeatureCount, 3}, {Activation::identity}, 7);
    const TexelFeatures f = build_features(in);
    const TextureMap out = predictor_forward(net, in);
    // Oracle: explicit triple loop over the raw parameter vector (column-major W, then b).
    const Eigen::VectorXd& p = net.parameters();
    for (std::size_t k = 0; k < f.texels.size(); ++k) {
        for (int o = 0; o < 3; ++o) {
            double s = p[3 * kFeatureCount + o];
            for (int i = 0; i < kFeatureCount; ++i) {
                s += p[i * 3 + o] * f.values(i, static_cast<Eigen::Index>(k));
            }
            CHECK(out.image.data()[f.texels[k] * 3 + o] == doctest::Approx(s).epsilon(1e-13));
        }
    }
    // The feature layout: rgb, source normal, target normal, light, uv in [-1, 1].
    const auto t0 = static_cast<int>(f.texels[0]);
    CHECK(f.values(0, 0) == in.source_texture.image.at(t0 % 3, t0 / 3, 0));
    CHECK(f.values(9, 0) == in.light_dir.x());
    CHECK(f.values(12, 0) == doctest::Approx(2.0 * (t0 % 3 + 0.5) / 3.0 - 1.0));
}

TEST_CASE("parameter gradients match central differences")
{
    Rng rng(4);
    const PredictorInput in = random_input(4, rng);
    TexelPerceptron net({kFeatureCount, 6, 5, 3}, 11);
    for (Eigen::Index i = 0; i < net.parameters().size(); ++i) {
        net.mutable_parameters()[i] += rng.uniform(-0.2, 0.2); // nonzero biases
    }
    const Image w = random_image(4, 4, rng, -1, 1);
    PredictorCache cache;
    predictor_forward(net, in, &cache, Exec::serial);
    const Eigen::VectorXd grad = predictor_backward(net, cache, w, Exec::serial);
    const double h = 1e-4;
    int checked = 0;
    for (Eigen::Index i = 0; i < net.parameters().size(); ++i) {
        const double keep = net.parameters()[i];
        net.mutable_parameters()[i] = keep + h;
        const double up = weighted_output(net, in, w);
        net.mutable_parameters()[i] = keep - h;
        const double down = weighted_output(net, in, w);
        net.mutable_parameters()[i] = keep;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - grad[i]) <= 1e-3 * std::max(std::abs(fd), 1e-3));
        ++checked;
    }
    CHECK(checked == static_cast<int>(net.parameter_count()));
}

TEST_CASE("backward is linear in the upstream gradient and zero for zero input")
{
    Rng rng(5);
    const PredictorInput in = random_input(5, rng);
    const TexelPerceptron net({kFeatureCount, 8, 3}, 3);
    PredictorCache cache;
    predictor_forward(net, in, &cache);
    const Image w = random_image(5, 5, rng, -1, 1);
    Image w3 = w;
    w3 *= 3.0;
    const Eigen::VectorXd g1 = predictor_backward(net, cache, w);
    const Eigen::VectorXd g3 = predictor_backward(net, cache, w3);
    CHECK((g3 - 3.0 * g1).norm() <= 1e-12 * g3.norm());
    CHECK(predictor_backward(net, cache, Image(5, 5)).norm() == 0.0);
    CHECK(predictor_backward(net, cache, w, Exec::serial) == g1);
}

TEST_CASE("stale or foreign caches are rejected")
{
    Rng rng(6);
    const PredictorInput in = random_input(4, rng);
    TexelPerceptron net({kFeatureCount, 4, 3}, 1);
    PredictorCache cache;
    predictor_forward(net, in, &cache);
    const Image w(4, 4, 1.0);
    CHECK_NOTHROW(predictor_backward(net, cache, w));
    net.mutable_parameters()[0] += 1.0;
    CHECK_THROWS_AS(predictor_backward(net, cache, w), Error);
    const TexelPerceptron other({kFeatureCount, 4, 3}, 1);
    predictor_forward(net, in, &cache);
    CHECK_THROWS_AS(predictor_backward(other, cache, w), Error);
    CHECK_THROWS_AS(predictor_backward(net, cache, Image(3, 3)), DimensionError);
}

TEST_CASE("texels are independent: permuting inputs permutes outputs")
{
    Rng rng(7);
    const PredictorInput in = random_input(4, rng);
    const TexelPerceptron net;
    TexelFeatures f = build_features(in);
    const TextureMap out = predictor_forward(net, f);
    // Reverse the column order together with the texel indices.
    TexelFeatures r = f;
    const auto n = static_cast<Eigen::Index>(f.texels.size());
    for (Eigen::Index k = 0; k < n; ++k) {
        r.values.col(k) = f.values.col(n - 1 - k);
        r.texels[static_cast<std::size_t>(k)] = f.texels[static_cast<std::size_t>(n - 1 - k)];
    }
    const TextureMap out_r = predictor_forward(net, r);
    CHECK(std::equal(out.image.data().begin(), out.image.data().end(), out_r.image.data().begin()));
    for (double v : out.image.data()) {
        CHECK(v >= 0.0);
    }
}

TEST_CASE("serial and parallel predictor paths agree on a large texture")
{
    Rng rng(8);
    const PredictorInput in = random_input(40, rng);
    const TexelPerceptron net;
    PredictorCache cs, cp;
    const TextureMap a = predictor_forward(net, in, &cs, Exec::serial);
    const TextureMap b = predictor_forward(net, in, &cp, Exec::parallel);
    CHECK(std::equal(a.image.data().begin(), a.image.data().end(), b.image.data().begin()));
    const Image w = random_image(40, 40, rng, -1, 1);
    CHECK(predictor_backward(net, cs, w, Exec::serial) == predictor_backward(net, cp, w, Exec::parallel));
}

TEST_CASE("input validation")
{
    Rng rng(9);
    PredictorInput in = random_input(4, rng);
    in.light_dir = Eigen::Vector3d(1, 1, 0);
    CHECK_THROWS_AS(in.validate(), DataError);
    in = random_input(4, rng);
    in.target_normals = TextureMap(5, 5);
    CHECK_THROWS_AS(in.validate(), DimensionError);
    in = random_input(4, rng);
    const TexelPerceptron wrong({kFeatureCount + 1, 3}, {Activation::identity}, 1);
    CHECK_THROWS_AS(predictor_forward(wrong, in), DimensionError);
}

TEST_CASE("network files round-trip and reject corruption")
{
    test::TempDir dir("rfnn");
    const TexelPerceptron net({kFeatureCount, 5, 3}, 4);
    save_network(dir / "a.rfnn", net);
    const TexelPerceptron back = load_network(dir / "a.rfnn");
    CHECK(back.layer_sizes() == net.layer_sizes());
    CHECK(back.activations() == net.activations());
    CHECK((back.parameters() - net.parameters().cast<float>().cast<double>()).norm() == 0.0);

    {
        std::ofstream bad(dir / "bad.rfnn", std::ios::binary);
        bad << "XXXX";
    }
    CHECK_THROWS_AS(load_network(dir / "bad.rfnn"), DataError);
    std::filesystem::resize_file(dir / "a.rfnn", std::filesystem::file_size(dir / "a.rfnn") - 4);
    CHECK_THROWS_AS(load_network(dir / "a.rfnn"), DataError);
    CHECK_THROWS_AS(load_network(dir / "missing.rfnn"), DataError);
}

TEST_CASE("end-to-end gradient through the rasterizer adjoint")
{
    Rng rng(10);
    const PredictorInput in = random_input(4, rng);
    TexelPerceptron net({kFeatureCount, 6, 3}, 2);
    const Mesh mesh = test::random_grid_scene(rng, 8);
    FrameBuffer fb = rasterize_geometry(mesh, Camera::square(8));

    // Target offset far enough that the L1 signs stay fixed under the probe steps.
    shade_texture(fb, predictor_forward(net, in).image);
    Image target = fb.color;
    for (double& v : target.data()) {
        v += rng.uniform() < 0.5 ? -0.3 : 0.3;
    }
    const auto loss = [&](const TexelPerceptron& n) {
        FrameBuffer f = fb;
        shade_texture(f, predictor_forward(n, in, nullptr, Exec::serial).image);
        return 5.0 * photometric_l1(f.color, target, fb.mask) + pyramid_loss(f.color, target, fb.mask);
    };

    PredictorCache cache;
    const TextureMap tex = predictor_forward(net, in, &cache);
    shade_texture(fb, tex.image);
    Image g = photometric_l1_gradient(fb.color, target, fb.mask);
    g *= 5.0;
    g += pyramid_loss_gradient(fb.color, target, fb.mask);
    const Image gt = backprop_texture(fb, g, 4, 4);
    const Eigen::VectorXd grad = predictor_backward(net, cache, gt);

    const double h = 1e-4;
    for (Eigen::Index i = 0; i < net.parameters().size(); ++i) {
        const double keep = net.parameters()[i];
        net.mutable_parameters()[i] = keep + h;
        const double up = loss(net);
        net.mutable_parameters()[i] = keep - h;
        const double down = loss(net);
        net.mutable_parameters()[i] = keep;
        const double fd = (up - down) / (2 * h);
        CHECK(std::abs(fd - grad[i]) <= 1e-3 * std::max(std::abs(fd), 1e-3));
    }
}
