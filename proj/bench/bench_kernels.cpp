// Serial reference vs OpenMP kernels. The benchmark argument selects the
// path: 0 = Exec::serial, 1 = Exec::parallel.
#include "refield/light_estimation.hpp"
#include "refield/predictor.hpp"
#include "refield/rasterizer.hpp"
#include "refield/random.hpp"
#include "refield/synthetic_model.hpp"

#include <benchmark/benchmark.h>

using namespace refield;

namespace {

Exec exec_of(const benchmark::State& state)
{
    return state.range(0) == 0 ? Exec::serial : Exec::parallel;
}

struct Head {
    MorphableModel model = make_synthetic_model();
    Mesh mesh;
    Camera camera = Camera::square(256);
    TextureMap albedo = make_synthetic_albedo(256, 3);
    UvRaster uv;

    Head()
    {
        FaceParams p = FaceParams::zeros(model);
        p.translation = Eigen::Vector3d(0, 0, kDefaultFaceDepth);
        mesh = pose_to_camera(build_mesh(model, p.alpha, p.beta), p);
        uv = rasterize_uv_atlas(*model.topology(), 64, 64);
    }
};

const Head& head()
{
    static const Head h;
    return h;
}

Image noise(int w, int h, std::uint64_t seed)
{
    Rng rng(seed);
    Image img(w, h);
    for (double& v : img.data()) {
        v = rng.uniform();
    }
    return img;
}

void BM_Rasterize(benchmark::State& state)
{
    const Head& h = head();
    for (auto _ : state) {
        FrameBuffer fb = rasterize(h.mesh, h.camera, h.albedo.image, Filter::bilinear, exec_of(state));
        benchmark::DoNotOptimize(fb.color.data().data());
    }
}

void BM_Backprop(benchmark::State& state)
{
    const Head& h = head();
    const FrameBuffer fb = rasterize_geometry(h.mesh, h.camera);
    const Image grad = noise(h.camera.width, h.camera.height, 1);
    for (auto _ : state) {
        Image g = backprop_texture(fb, grad, 256, 256, Filter::bilinear, exec_of(state));
        benchmark::DoNotOptimize(g.data().data());
    }
}

void BM_ShadowedOlat(benchmark::State& state)
{
    const Head& h = head();
    BRDFParams brdf;
    brdf.diffuse_albedo = h.albedo;
    brdf.specular_strength = 0.25;
    brdf.shininess = 24.0;
    const Eigen::Vector3d light = Eigen::Vector3d(0.4, -0.3, -1.0).normalized();
    const Camera cam = Camera::square(128);
    for (auto _ : state) {
        Image img = shade_olat(h.mesh, brdf, light, cam, true, exec_of(state));
        benchmark::DoNotOptimize(img.data().data());
    }
}

OLATSet noise_olats(int lights, int size)
{
    OLATSet set;
    set.rig = LightRig::fibonacci(static_cast<std::size_t>(lights));
    for (int l = 0; l < lights; ++l) {
        set.images.push_back(noise(size, size, 10 + static_cast<std::uint64_t>(l)));
    }
    return set;
}

void BM_RelightSum(benchmark::State& state)
{
    static const OLATSet set = noise_olats(150, 128);
    const LightWeights w = LightWeights::Constant(150, 3, 0.01);
    for (auto _ : state) {
        Image img = relight_sum(set, w, exec_of(state));
        benchmark::DoNotOptimize(img.data().data());
    }
}

void BM_LightSolve(benchmark::State& state)
{
    static const OLATSet set = noise_olats(150, 64);
    const Image target = noise(64, 64, 99);
    LightSolveOptions opt;
    opt.exec = exec_of(state);
    for (auto _ : state) {
        LightSolve s = estimate_light_lsq(set, target, {}, opt);
        benchmark::DoNotOptimize(s.lambda.data());
    }
}

PredictorInput predictor_input()
{
    const Head& h = head();
    PredictorInput in;
    in.source_normals = render_normal_map(h.mesh, h.uv);
    in.target_normals = in.source_normals;
    in.source_texture = TextureMap(64, 64, 0.5, true);
    in.light_dir = Eigen::Vector3d(0, 0, -1);
    return in;
}

void BM_PredictorForward(benchmark::State& state)
{
    const TexelPerceptron net;
    const PredictorInput in = predictor_input();
    for (auto _ : state) {
        TextureMap out = predictor_forward(net, in, nullptr, exec_of(state));
        benchmark::DoNotOptimize(out.image.data().data());
    }
}

void BM_PredictorBackward(benchmark::State& state)
{
    const TexelPerceptron net;
    PredictorCache cache;
    predictor_forward(net, predictor_input(), &cache);
    const Image grad = noise(64, 64, 5);
    for (auto _ : state) {
        Eigen::VectorXd g = predictor_backward(net, cache, grad, exec_of(state));
        benchmark::DoNotOptimize(g.data());
    }
}

} // namespace

BENCHMARK(BM_Rasterize)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Backprop)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ShadowedOlat)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_RelightSum)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LightSolve)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictorForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_PredictorBackward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
