#include "support.hpp"

#include "refield/error.hpp"
#include "refield/fitting.hpp"
#include "refield/model_io.hpp"
#include "refield/synthetic_model.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>

using namespace refield;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

const MorphableModel& model()
{
    static const MorphableModel m = make_synthetic_model();
    return m;
}

FaceParams random_params(Rng& rng)
{
    FaceParams p = FaceParams::zeros(model());
    for (auto& a : p.alpha) {
        a = rng.normal();
    }
    for (auto& b : p.beta) {
        b = 0.5 * rng.normal();
    }
    p.rotation = rotation_from_angles(rng.uniform(-20, 20) * kDeg, rng.uniform(-10, 10) * kDeg, rng.uniform(-5, 5) * kDeg);
    p.translation = Eigen::Vector3d(rng.uniform(-10, 10), rng.uniform(-10, 10), rng.uniform(420, 480));
    return p;
}

} // namespace

TEST_CASE("synthetic model layout")
{
    const MorphableModel& m = model();
    CHECK(m.landmark_indices().size() == static_cast<std::size_t>(kLandmarkCount));
    CHECK(kLandmarkCount == 66);
    for (int i = 0; i < kLandmarkCount; ++i) {
        CHECK(m.contour_flags()[static_cast<std::size_t>(i)] == (i < kContourLandmarks));
    }
    CHECK(kContourLandmarks == 17);
    std::vector<int> sorted = m.landmark_indices();
    std::sort(sorted.begin(), sorted.end());
    CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
    CHECK((m.uv().array() >= 0.0).all());
    CHECK((m.uv().array() <= 1.0).all());

    const Icosphere ico = make_icosphere(2);
    CHECK(ico.vertices.cols() == 162);
    CHECK(ico.triangles.size() == 320u);
    CHECK_THROWS_AS(make_icosphere(-1), DataError);
}

TEST_CASE("mean mesh, normals and pose")
{
    const MorphableModel& m = model();
    FaceParams p = FaceParams::zeros(m);
    const Mesh mesh = build_mesh(m, p.alpha, p.beta);
    CHECK(mesh.vertices.reshaped() == m.mean());
    // The head is star-shaped about the origin, so outward normals agree with the position.
    const Eigen::Matrix3Xd n = compute_vertex_normals(mesh);
    int outward = 0;
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        outward += n.col(i).dot(mesh.vertices.col(i)) > 0.0;
        CHECK(n.col(i).norm() == doctest::Approx(1.0));
    }
    CHECK(outward == mesh.vertex_count());

    CHECK_THROWS_AS(build_mesh(m, Eigen::VectorXd(3), p.beta), DimensionError);
    p.rotation = Eigen::Quaterniond(2, 0, 0, 0);
    CHECK_THROWS(pose_to_camera(mesh, p));

    const Camera cam = Camera::square(100);
    Eigen::Matrix3Xd pts(3, 2);
    pts << 0, 10, 0, 20, 100, 200;
    const Eigen::Matrix2Xd px = project_points(cam, pts);
    CHECK(px(0, 0) == doctest::Approx(50.0));
    CHECK(px(0, 1) == doctest::Approx(50.0 + 170.0 * 10.0 / 200.0));
    pts(2, 1) = 0.0;
    CHECK_THROWS_AS(project_points(cam, pts), DataError);
    Camera bad = cam;
    bad.focal = 0.0;
    CHECK_THROWS_AS(bad.validate(), DataError);
}

TEST_CASE("rotation helpers")
{
    const auto q = rotation_from_angles(10 * kDeg, 0, 0);
    CHECK(rotation_angle_between(q, Eigen::Quaterniond::Identity()) == doctest::Approx(10 * kDeg));
    const auto r = rotation_from_angles(0.3, -0.2, 0.1);
    CHECK(rotation_angle_between(r, r) == doctest::Approx(0.0).epsilon(1e-7));
    const Eigen::Quaterniond neg(-r.w(), -r.x(), -r.y(), -r.z());
    CHECK(rotation_angle_between(r, neg) < 1e-7);
    // Yaw about +y maps +z toward +x.
    CHECK((q * Eigen::Vector3d::UnitZ()).x() > 0.0);
}

TEST_CASE("contour landmarks re-bind to the visible vertex under the observation")
{
    const MorphableModel& m = model();
    FaceParams p = FaceParams::zeros(m);
    p.translation = Eigen::Vector3d(0, 0, kDefaultFaceDepth);
    const Mesh mesh = pose_to_camera(build_mesh(m, p.alpha, p.beta), p);
    const Camera cam = Camera::square(256);
    const Landmarks2D fixed = landmarks_2d(mesh, cam, m);
    CHECK(fixed.vertex_indices == m.landmark_indices());

    // Pick a visible vertex and place the first contour observation on its projection.
    const auto visible = front_facing_vertices(mesh, compute_vertex_normals(mesh));
    int target = -1;
    for (int v = 0; v < mesh.vertex_count() && target < 0; ++v) {
        if (visible[static_cast<std::size_t>(v)] && v != m.landmark_indices()[0]) {
            target = v;
        }
    }
    REQUIRE(target >= 0);
    Eigen::Matrix2Xd obs = fixed.points;
    obs.col(0) = project_points(cam, mesh.vertices.col(target));
    const Landmarks2D rebound = landmarks_2d(mesh, cam, m, obs);
    CHECK(rebound.vertex_indices[0] == target);
    // Non-contour landmarks never move.
    for (int l = kContourLandmarks; l < kLandmarkCount; ++l) {
        CHECK(rebound.vertex_indices[static_cast<std::size_t>(l)] == m.landmark_indices()[static_cast<std::size_t>(l)]);
    }
    // Detected landmarks equal the fixed ones when the whole jaw is visible.
    CHECK((detected_landmarks(mesh, cam, m).points - fixed.points).norm() < 1e-12);
}

TEST_CASE("landmark objective gradient matches finite differences")
{
    Rng rng(2);
    const FaceParams truth = random_params(rng);
    const Camera cam = Camera::square(128);
    const Mesh mesh = pose_to_camera(build_mesh(model(), truth.alpha, truth.beta), truth);
    const Eigen::Matrix2Xd obs = landmarks_2d(mesh, cam, model()).points;
    FaceParams start = random_params(rng);
    Eigen::VectorXd x = pack_params(start);
    const GeometryFitConfig cfg;
    Eigen::VectorXd g;
    landmark_objective(model(), cam, obs, x, model().landmark_indices(), cfg, &g);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double h = 1e-6 * std::max(1.0, std::abs(x[i]));
        const double keep = x[i];
        x[i] = keep + h;
        const double up = landmark_objective(model(), cam, obs, x, model().landmark_indices(), cfg);
        x[i] = keep - h;
        const double down = landmark_objective(model(), cam, obs, x, model().landmark_indices(), cfg);
        x[i] = keep;
        CHECK((up - down) / (2 * h) == doctest::Approx(g[i]).epsilon(1e-5).scale(1.0));
    }
    const FaceParams back = unpack_params(x, model().identity_dims(), model().expression_dims());
    CHECK(back.translation == start.translation);
}

TEST_CASE("geometry fit recovers noiseless landmarks with both solvers")
{
    Rng rng(3);
    const Camera cam = Camera::square(128);
    for (int trial = 0; trial < 3; ++trial) {
        const FaceParams truth = random_params(rng);
        const Mesh mesh = pose_to_camera(build_mesh(model(), truth.alpha, truth.beta), truth);
        const Eigen::Matrix2Xd obs = detected_landmarks(mesh, cam, model()).points;
        const GeometryFitResult fit = fit_geometry(obs, model(), cam);
        CHECK(fit.landmark_rmse < 0.5);
        CHECK(rotation_angle_between(fit.params.rotation, truth.rotation) < 1.0 * kDeg);
    }
    const FaceParams truth = random_params(rng);
    const Mesh mesh = pose_to_camera(build_mesh(model(), truth.alpha, truth.beta), truth);
    const Eigen::Matrix2Xd obs = detected_landmarks(mesh, cam, model()).points;
    GeometryFitConfig cfg;
    cfg.solver = FitSolver::adadelta;
    cfg.max_iterations = 400;
    const GeometryFitResult fit = fit_geometry(obs, model(), cam, cfg);
    CHECK(fit.landmark_rmse < 2.0);
    CHECK(std::isfinite(fit.loss));

    Eigen::Matrix2Xd nan_obs = obs;
    nan_obs(0, 0) = std::nan("");
    CHECK_THROWS(fit_geometry(nan_obs, model(), cam));
    CHECK_THROWS_AS(fit_geometry(obs.leftCols(10), model(), cam), DimensionError);
}

TEST_CASE("model files round-trip through float32")
{
    test::TempDir dir("model");
    const MorphableModel& m = model();
    save_model(dir / "m.rfmm", m);
    const MorphableModel back = load_model(dir / "m.rfmm");
    CHECK(back.vertex_count() == m.vertex_count());
    CHECK(back.landmark_indices() == m.landmark_indices());
    CHECK(back.contour_flags() == m.contour_flags());
    CHECK(back.triangles() == m.triangles());
    CHECK((back.mean() - m.mean().cast<float>().cast<double>()).norm() == 0.0);
    CHECK((back.id_basis() - m.id_basis().cast<float>().cast<double>()).norm() == 0.0);
    {
        std::ofstream bad(dir / "bad.rfmm", std::ios::binary);
        bad << "RFMM";
    }
    CHECK_THROWS_AS(load_model(dir / "bad.rfmm"), DataError);

    const Mesh mesh = build_mesh(m, Eigen::VectorXd::Zero(m.identity_dims()), Eigen::VectorXd::Zero(m.expression_dims()));
    write_obj(dir / "m.obj", mesh);
    std::ifstream obj(dir / "m.obj");
    std::string line;
    int v = 0, f = 0;
    while (std::getline(obj, line)) {
        v += line.rfind("v ", 0) == 0;
        f += line.rfind("f ", 0) == 0;
    }
    CHECK(v == m.vertex_count());
    CHECK(f == static_cast<int>(m.triangles().size()));
}
