#include "support.hpp"

#include "refield/error.hpp"
#include "refield/rasterizer.hpp"
#include "refield/synthetic_model.hpp"
#include "refield/uv_atlas.hpp"

#include <doctest.h>

#include <cmath>

using namespace refield;
using refield::test::random_grid_scene;
using refield::test::random_image;

TEST_CASE("texture gradient matches central differences on random scenes")
{
    Rng rng(3);
    for (int scene = 0; scene < 5; ++scene) {
        const Mesh mesh = random_grid_scene(rng, 8);
        const Camera cam = Camera::square(8);
        Image tex = random_image(4, 4, rng);
        const Image weights = random_image(8, 8, rng, -1.0, 1.0);
        FrameBuffer fb = rasterize_geometry(mesh, cam);
        REQUIRE(fb.covered_count() == 64);
        const Image grad = backprop_texture(fb, weights, 4, 4);
        const double h = 1e-3;
        for (std::size_t k = 0; k < tex.data().size(); ++k) {
            const double keep = tex.data()[k];
            tex.data()[k] = keep + h;
            shade_texture(fb, tex);
            const double up = test::dot(fb.color, weights);
            tex.data()[k] = keep - h;
            shade_texture(fb, tex);
            const double down = test::dot(fb.color, weights);
            tex.data()[k] = keep;
            CHECK(std::abs((up - down) / (2 * h) - grad.data()[k]) < 1e-4);
        }
    }
}

TEST_CASE("shade and backprop are adjoint")
{
    Rng rng(5);
    const Mesh mesh = random_grid_scene(rng, 8, 3);
    FrameBuffer fb = rasterize_geometry(mesh, Camera::square(8));
    const Image tex = random_image(4, 4, rng);
    const Image w = random_image(8, 8, rng, -1.0, 1.0);
    for (Filter f : {Filter::bilinear, Filter::nearest}) {
        shade_texture(fb, tex, f);
        const double lhs = test::dot(fb.color, w);
        const double rhs = test::dot(tex, backprop_texture(fb, w, 4, 4, f));
        CHECK(std::abs(lhs - rhs) <= 1e-12 * std::max(1.0, std::abs(lhs)));
    }
}

TEST_CASE("barycentrics sum to one and mask agrees with depth")
{
    Rng rng(9);
    const Mesh mesh = random_grid_scene(rng, 16, 3);
    const FrameBuffer fb = rasterize_geometry(mesh, Camera::square(20));
    for (std::size_t p = 0; p < fb.pixel_count(); ++p) {
        CHECK((fb.mask[p] != 0) == (fb.triangle[p] >= 0));
        CHECK((fb.mask[p] != 0) == std::isfinite(fb.depth[p]));
        if (fb.mask[p]) {
            CHECK(fb.barycentric[p].sum() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(fb.barycentric[p].minCoeff() >= -1e-12);
        }
    }
}

TEST_CASE("nearer surface wins the depth test")
{
    Rng rng(1);
    Mesh far_mesh = random_grid_scene(rng, 8, 1);
    Mesh near_mesh = far_mesh;
    near_mesh.vertices *= 0.5; // same projection, half the depth
    Mesh both;
    auto topo = std::make_shared<MeshTopology>();
    topo->uv.resize(2, 8);
    topo->uv << far_mesh.uv(), near_mesh.uv();
    both.vertices.resize(3, 8);
    both.vertices << far_mesh.vertices, near_mesh.vertices;
    for (const Triangle& t : far_mesh.triangles()) {
        topo->triangles.push_back(t);
    }
    for (const Triangle& t : near_mesh.triangles()) {
        topo->triangles.push_back({t[0] + 4, t[1] + 4, t[2] + 4});
    }
    both.topology = topo;
    both.space = Space::camera;
    const FrameBuffer fb = rasterize_geometry(both, Camera::square(8));
    for (std::size_t p = 0; p < fb.pixel_count(); ++p) {
        if (fb.mask[p]) {
            CHECK(fb.triangle[p] >= 2);
        }
    }
}

TEST_CASE("serial and parallel rasterization agree exactly")
{
    const MorphableModel model = make_synthetic_model();
    FaceParams p = FaceParams::zeros(model);
    p.translation = Eigen::Vector3d(0, 0, kDefaultFaceDepth);
    p.rotation = rotation_from_angles(0.3, 0.1, 0.0);
    const Mesh mesh = pose_to_camera(build_mesh(model, p.alpha, p.beta), p);
    const Camera cam = Camera::square(64);
    Rng rng(2);
    const Image tex = random_image(32, 32, rng);
    const FrameBuffer a = rasterize(mesh, cam, tex, Filter::bilinear, Exec::serial);
    const FrameBuffer b = rasterize(mesh, cam, tex, Filter::bilinear, Exec::parallel);
    CHECK(a.triangle == b.triangle);
    CHECK(a.depth == b.depth);
    CHECK(std::equal(a.color.data().begin(), a.color.data().end(), b.color.data().begin()));

    const Image w = random_image(64, 64, rng, -1, 1);
    const Image ga = backprop_texture(a, w, 32, 32, Filter::bilinear, Exec::serial);
    const Image gb = backprop_texture(a, w, 32, 32, Filter::bilinear, Exec::parallel);
    CHECK(std::equal(ga.data().begin(), ga.data().end(), gb.data().begin()));
}

TEST_CASE("uv atlas of the synthetic model has no overlaps")
{
    const MorphableModel model = make_synthetic_model();
    const UvRaster raster = rasterize_uv_atlas(*model.topology(), 64, 64);
    CHECK(raster.covered_count() > 64 * 64 / 2);
    const UvRaster serial = rasterize_uv_atlas(*model.topology(), 64, 64, Exec::serial);
    CHECK(serial.triangle == raster.triangle);
}

TEST_CASE("overlapping charts are rejected")
{
    MeshTopology topo;
    topo.uv.resize(2, 4);
    topo.uv << 0.1, 0.9, 0.1, 0.9, 0.1, 0.1, 0.9, 0.9;
    topo.triangles = {{0, 1, 2}, {0, 1, 3}};
    CHECK_THROWS_AS(rasterize_uv_atlas(topo, 8, 8), AtlasError);
}

TEST_CASE("unprojecting a rendered texture recovers it on observed texels")
{
    const MorphableModel model = make_synthetic_model();
    FaceParams p = FaceParams::zeros(model);
    p.translation = Eigen::Vector3d(0, 0, kDefaultFaceDepth);
    const Mesh mesh = pose_to_camera(build_mesh(model, p.alpha, p.beta), p);
    const Camera cam = Camera::square(256);
    Image tex(32, 32, 0.5);
    const FrameBuffer fb = rasterize(mesh, cam, tex);
    const TextureMap back = unproject_to_uv(fb.color, mesh, cam, 32);
    std::size_t checked = 0;
    for (int y = 0; y < 32; ++y) {
        for (int x = 0; x < 32; ++x) {
            if (back.is_valid(x, y)) {
                CHECK(back.image.at(x, y, 0) == doctest::Approx(0.5).epsilon(1e-9));
                ++checked;
            }
        }
    }
    CHECK(checked > 100);
}
