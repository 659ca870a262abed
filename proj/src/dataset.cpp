#include "refield/dataset.hpp"

#include "refield/error.hpp"
#include "refield/image_io.hpp"
#include "refield/model_io.hpp"
#include "refield/random.hpp"
#include "refield/synthetic_model.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <map>
#include <numbers>

namespace refield {

namespace fs = std::filesystem;

namespace {

std::string identity_name(int i)
{
    return fmt::format("id{:03d}", i);
}

std::string camera_name(int c)
{
    return fmt::format("cam{:d}", c);
}

std::string rel(const fs::path& p)
{
    return p.generic_string();
}

void ensure_directory(const fs::path& dir)
{
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec || !fs::is_directory(dir)) {
        throw DataError("cannot create directory " + dir.string());
    }
}

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream)
{
    // splitmix64 step so neighbouring streams are decorrelated.
    std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

void DatasetConfig::validate() const
{
    if (identities < 1 || cameras < 1 || lights < 1 || image_size < 8 || albedo_size < 2) {
        throw DataError("dataset needs >= 1 identity, camera and light and an image size >= 8");
    }
    if (procedural_envs < 0 || env_width < 2 || env_height < 1) {
        throw DataError("invalid environment map settings");
    }
    if (!(specular_strength >= 0.0) || !(shininess >= 1.0) || !(ambient >= 0.0) || !(light_intensity >= 0.0)) {
        throw DataError("invalid BRDF or light settings");
    }
}

Json synthesize_dataset(const MorphableModel& input_model, const DatasetConfig& config, const fs::path& root)
{
    config.validate();
    ensure_directory(root);
    // Generate from the model as it will be read back (float32 on disk).
    save_model(root / "model.rfmm", input_model);
    const MorphableModel model = load_model(root / "model.rfmm");

    const LightRig rig = LightRig::fibonacci(static_cast<std::size_t>(config.lights), config.light_intensity);
    write_json(root / "rig.json", rig_to_json(rig));

    struct Env {
        std::string id;
        LightWeights lambda;
    };
    std::vector<Env> envs;
    Json env_entries = Json::array();
    if (config.procedural_envs > 0 || !config.env_files.empty()) {
        ensure_directory(root / "envs");
    }
    for (int e = 0; e < config.procedural_envs; ++e) {
        const std::string id = fmt::format("env{:d}", e);
        const EnvMap env = make_procedural_envmap(config.env_width, config.env_height, derive_seed(config.seed, 1000 + e));
        save_pfm(root / "envs" / (id + ".pfm"), env.radiance);
        envs.push_back({id, project_env_to_lights(env, rig)});
        env_entries.push_back({{"id", id}, {"file", rel(fs::path("envs") / (id + ".pfm"))}});
    }
    for (const fs::path& file : config.env_files) {
        if (!fs::exists(file)) {
            throw DataError("environment map not found: " + file.string());
        }
        EnvMap env;
        env.radiance = load_image(file);
        const std::string id = file.stem().string();
        save_pfm(root / "envs" / (id + ".pfm"), env.radiance);
        envs.push_back({id, project_env_to_lights(env, rig)});
        env_entries.push_back({{"id", id}, {"file", rel(fs::path("envs") / (id + ".pfm"))}});
    }

    const Camera camera = Camera::square(config.image_size);
    Json cameras = Json::array();
    std::vector<double> yaws;
    for (int c = 0; c < config.cameras; ++c) {
        const double yaw =
            config.cameras == 1 ? 0.0
                                : config.camera_yaw_span_deg * (static_cast<double>(c) / (config.cameras - 1) - 0.5);
        yaws.push_back(yaw);
        cameras.push_back({{"id", camera_name(c)}, {"yaw_deg", yaw}, {"intrinsics", camera_to_json(camera)}});
    }

    BRDFParams brdf;
    brdf.specular_strength = config.specular_strength;
    brdf.shininess = config.shininess;
    brdf.ambient = config.ambient;

    Json identities = Json::array();
    std::size_t olat_count = 0;
    for (int i = 0; i < config.identities; ++i) {
        const std::string iname = identity_name(i);
        const std::uint64_t seed = derive_seed(config.seed, static_cast<std::uint64_t>(i));
        Rng rng(seed);
        FaceParams base = FaceParams::zeros(model);
        for (Eigen::Index k = 0; k < base.alpha.size(); ++k) {
            base.alpha(k) = rng.normal();
        }
        for (Eigen::Index k = 0; k < base.beta.size(); ++k) {
            base.beta(k) = 0.5 * rng.normal();
        }
        brdf.diffuse_albedo = make_synthetic_albedo(config.albedo_size, seed);
        brdf.validate();
        ensure_directory(root / iname);
        save_pfm(root / iname / "albedo.pfm", brdf.diffuse_albedo.image);
        const Mesh object_mesh = build_mesh(model, base.alpha, base.beta);

        Json views = Json::array();
        for (int c = 0; c < config.cameras; ++c) {
            const std::string cname = camera_name(c);
            const fs::path dir = root / iname / cname;
            ensure_directory(dir);
            FaceParams params = base;
            constexpr double kDeg = std::numbers::pi / 180.0;
            params.rotation = rotation_from_angles(yaws[static_cast<std::size_t>(c)] * kDeg + rng.uniform(-3.0, 3.0) * kDeg,
                                                   rng.uniform(-5.0, 5.0) * kDeg, rng.uniform(-3.0, 3.0) * kDeg);
            params.translation = Eigen::Vector3d(rng.uniform(-5.0, 5.0), rng.uniform(-5.0, 5.0),
                                                 kDefaultFaceDepth + rng.uniform(-10.0, 10.0));
            write_json(dir / "params.json", face_params_to_json(params));

            const Mesh mesh = pose_to_camera(object_mesh, params);
            const Landmarks2D lm = detected_landmarks(mesh, camera, model);
            Json pts = Json::array();
            for (Eigen::Index k = 0; k < lm.points.cols(); ++k) {
                pts.push_back({lm.points(0, k), lm.points(1, k)});
            }
            write_json(dir / "landmarks.json", Json{{"points", pts}});

            const FrameBuffer fb = rasterize_geometry(mesh, camera);
            const OlatRenderer renderer(samples_from_framebuffer(fb, mesh, brdf.diffuse_albedo.image), mesh, brdf,
                                        config.shadows);
            OLATSet set;
            set.rig = rig;
            set.identity_id = iname;
            set.camera_id = cname;
            Json olats = Json::array();
            for (std::size_t k = 0; k < rig.size(); ++k) {
                set.images.push_back(renderer.render(rig.directions[k], rig.intensities[k]));
                const std::string file = fmt::format("olat_{:d}.pfm", k);
                save_pfm(dir / file, set.images.back());
                olats.push_back(rel(fs::path(iname) / cname / file));
                ++olat_count;
            }
            Json relit = Json::array();
            for (const Env& env : envs) {
                const std::string file = "relit_" + env.id + ".pfm";
                save_pfm(dir / file, relight_sum(set, env.lambda));
                relit.push_back({{"env", env.id}, {"file", rel(fs::path(iname) / cname / file)}});
            }
            views.push_back({{"camera", cname},
                             {"params", rel(fs::path(iname) / cname / "params.json")},
                             {"landmarks", rel(fs::path(iname) / cname / "landmarks.json")},
                             {"olats", olats},
                             {"relit", relit}});
        }
        identities.push_back({{"id", iname}, {"albedo", rel(fs::path(iname) / "albedo.pfm")}, {"views", views}});
        spdlog::info("synthesized {} ({} views)", iname, config.cameras);
    }

    Json manifest{{"schema_version", kManifestSchemaVersion},
                  {"seed", config.seed},
                  {"model", "model.rfmm"},
                  {"rig", rig_to_json(rig)},
                  {"brdf",
                   {{"specular_strength", config.specular_strength},
                    {"shininess", config.shininess},
                    {"ambient", config.ambient},
                    {"shadows", config.shadows}}},
                  {"image_size", config.image_size},
                  {"cameras", cameras},
                  {"envs", env_entries},
                  {"identities", identities},
                  {"olat_count", olat_count}};
    write_json(root / "manifest.json", manifest);
    return manifest;
}

Eigen::Matrix2Xd load_landmarks(const fs::path& path)
{
    const Json j = read_json(path);
    reject_unknown_keys(j, {"points"}, path.string());
    const Json& pts = j.at("points");
    Eigen::Matrix2Xd out(2, static_cast<Eigen::Index>(pts.size()));
    for (std::size_t k = 0; k < pts.size(); ++k) {
        if (!pts[k].is_array() || pts[k].size() != 2) {
            throw DataError(path.string() + ": landmark entries must be [x, y]");
        }
        out(0, static_cast<Eigen::Index>(k)) = pts[k][0].get<double>();
        out(1, static_cast<Eigen::Index>(k)) = pts[k][1].get<double>();
    }
    return out;
}

Dataset load_dataset(const fs::path& root)
{
    const fs::path manifest_path = root / "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw DataError("no manifest.json in " + root.string());
    }
    Dataset ds;
    ds.root = root;
    ds.manifest = read_json(manifest_path);
    const Json& m = ds.manifest;
    try {
        if (m.at("schema_version").get<int>() != kManifestSchemaVersion) {
            throw DataError("unsupported manifest schema version");
        }
        ds.rig = rig_from_json(m.at("rig"));
        ds.specular_strength = m.at("brdf").at("specular_strength").get<double>();
        ds.shininess = m.at("brdf").at("shininess").get<double>();
        ds.ambient = m.at("brdf").at("ambient").get<double>();
        std::map<std::string, Camera> intrinsics;
        for (const Json& c : m.at("cameras")) {
            intrinsics[c.at("id").get<std::string>()] = camera_from_json(c.at("intrinsics"));
        }
        const auto existing = [&](const std::string& relpath) {
            const fs::path p = root / relpath;
            if (!fs::exists(p)) {
                throw DataError("manifest entry missing on disk: " + p.string());
            }
            return p;
        };
        for (const Json& id : m.at("identities")) {
            DatasetIdentity ident;
            ident.id = id.at("id").get<std::string>();
            ident.albedo = existing(id.at("albedo").get<std::string>());
            for (const Json& v : id.at("views")) {
                DatasetView view;
                view.camera = v.at("camera").get<std::string>();
                if (!intrinsics.count(view.camera)) {
                    throw DataError("manifest view refers to unknown camera " + view.camera);
                }
                view.intrinsics = intrinsics.at(view.camera);
                view.params = face_params_from_json(read_json(existing(v.at("params").get<std::string>())));
                view.landmarks = existing(v.at("landmarks").get<std::string>());
                for (const Json& o : v.at("olats")) {
                    view.olats.push_back(existing(o.get<std::string>()));
                }
                if (view.olats.size() != ds.rig.size()) {
                    throw DataError("view " + ident.id + "/" + view.camera + " lists " +
                                    std::to_string(view.olats.size()) + " OLATs for a " +
                                    std::to_string(ds.rig.size()) + "-light rig");
                }
                for (const Json& r : v.at("relit")) {
                    view.env_ids.push_back(r.at("env").get<std::string>());
                    view.relit.push_back(existing(r.at("file").get<std::string>()));
                }
                ident.views.push_back(std::move(view));
            }
            ds.identities.push_back(std::move(ident));
        }
    } catch (const Json::exception& e) {
        throw DataError(manifest_path.string() + ": " + e.what());
    }
    return ds;
}

} // namespace refield
