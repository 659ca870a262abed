#include "refield/cli.hpp"

#include "refield/dataset.hpp"
#include "refield/error.hpp"
#include "refield/fitting.hpp"
#include "refield/image_io.hpp"
#include "refield/json_io.hpp"
#include "refield/light_estimation.hpp"
#include "refield/losses.hpp"
#include "refield/model_io.hpp"
#include "refield/parallel.hpp"
#include "refield/predictor.hpp"
#include "refield/rasterizer.hpp"
#include "refield/synthetic_model.hpp"
#include "refield/training.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

namespace refield {

namespace fs = std::filesystem;

namespace {

struct Common {
    std::uint64_t seed = 1;
    int threads = 0;
    std::string out;
    std::string config;
};

Eigen::Vector3d parse_vec3(const std::string& text)
{
    std::stringstream ss(text);
    std::string item;
    std::vector<double> v;
    while (std::getline(ss, item, ',')) {
        try {
            v.push_back(std::stod(item));
        } catch (const std::exception&) {
            throw CLI::ValidationError("expected x,y,z but got '" + text + "'");
        }
    }
    if (v.size() != 3) {
        throw CLI::ValidationError("expected x,y,z but got '" + text + "'");
    }
    return {v[0], v[1], v[2]};
}

std::vector<int> parse_int_list(const std::string& text)
{
    std::vector<int> v;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        v.push_back(std::stoi(item));
    }
    return v;
}

// OLAT images olat_0 .. olat_{N-1} of a directory, checked against each other.
OLATSet load_olat_dir(const fs::path& dir, const LightRig& rig)
{
    OLATSet set;
    set.rig = rig;
    for (std::size_t k = 0; k < rig.size(); ++k) {
        const fs::path p = dir / ("olat_" + std::to_string(k) + ".pfm");
        if (!fs::exists(p)) {
            throw DataError("missing OLAT image " + p.string());
        }
        Image img = load_image(p);
        if (!set.images.empty() && !img.same_shape(set.images.front())) {
            throw DimensionError(p.string() + " is " + std::to_string(img.width()) + "x" +
                                 std::to_string(img.height()) + ", expected " +
                                 std::to_string(set.images.front().width()) + "x" +
                                 std::to_string(set.images.front().height()));
        }
        set.images.push_back(std::move(img));
    }
    return set;
}

PixelMask load_mask(const std::string& path, const Image& like)
{
    if (path.empty()) {
        return {};
    }
    const Image m = load_image(path);
    if (!m.same_shape(like)) {
        throw DimensionError("mask " + path + " does not match the target size");
    }
    PixelMask mask(m.pixel_count());
    for (std::size_t p = 0; p < mask.size(); ++p) {
        mask[p] = (m.data()[p * 3] + m.data()[p * 3 + 1] + m.data()[p * 3 + 2]) > 0.0 ? 1 : 0;
    }
    return mask;
}

double mean_of(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) {
        s += x;
    }
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v)
{
    if (v.size() < 2) {
        return 0.0;
    }
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) {
        s += (x - m) * (x - m);
    }
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

// Appends "--key value" tokens from a JSON config for options not given on
// the command line. Keys must name options of the subcommand.
std::vector<std::string> merge_config(CLI::App& sub, const std::string& path, std::vector<std::string> args)
{
    const Json cfg = read_json(path);
    if (!cfg.is_object()) {
        throw CLI::ValidationError("--config must hold a JSON object");
    }
    for (const auto& item : cfg.items()) {
        const std::string flag = "--" + item.key();
        const CLI::Option* opt = sub.get_option_no_throw(flag);
        if (opt == nullptr || item.key() == "config") {
            throw CLI::ValidationError("unknown key '" + item.key() + "' in " + path);
        }
        if (std::find(args.begin(), args.end(), flag) != args.end()) {
            continue; // command line wins
        }
        const Json& v = item.value();
        if (v.is_boolean()) {
            if (v.get<bool>()) {
                args.push_back(flag);
            }
        } else if (v.is_array()) {
            for (const Json& e : v) {
                args.push_back(flag);
                args.push_back(e.is_string() ? e.get<std::string>() : e.dump());
            }
        } else {
            args.push_back(flag);
            args.push_back(v.is_string() ? v.get<std::string>() : v.dump());
        }
    }
    return args;
}

class Runner {
public:
    Runner(std::ostream& out, std::ostream& err) : out_(out), err_(err) {}
    int run(const std::vector<std::string>& args);

private:
    void add_common(CLI::App* sub, bool out_required);
    void setup();

    Json synth_dataset();
    Json fit_geometry_cmd();
    Json render_olat();
    Json relight();
    Json estimate_light();
    Json train_cmd();
    Json eval_cmd();

    std::ostream& out_;
    std::ostream& err_;
    Common common_;

    struct {
        int identities = 4, cameras = 2, lights = 30, image_size = 128, albedo_size = 128, envs = 1;
        int env_width = 64, env_height = 32;
        double yaw_span = 40.0, ks = 0.25, shininess = 24.0, ambient = 0.02, intensity = 1.0;
        bool no_shadows = false;
        std::vector<std::string> env_files;
        std::string model;
        std::uint64_t model_seed = 7;
    } synth_;
    struct {
        std::string model, landmarks, camera, solver = "lm";
        int image_size = 128, iterations = 100;
    } fit_;
    struct {
        std::string model, params, light = "0,0,-1", albedo;
        int image_size = 128;
        double ks = 0.25, shininess = 24.0, ambient = 0.02, intensity = 1.0;
        bool no_shadows = false;
    } render_;
    struct {
        std::string rig, olat_dir, env, lambda, projection = "point";
    } relight_;
    struct {
        std::string rig, olat_dir, target, mask;
        double ridge = -1.0;
        bool nonneg = false;
        int refine_steps = 0;
    } estimate_;
    struct {
        std::string dataset, hidden = "64,64";
        int epochs = 30, uv_size = 64, val_identities = 1;
        double lr = 0.05, rho = 0.95, eps = 1e-6;
        bool no_fit = false, pyramid = false, no_predictions = false;
    } train_;
    struct {
        std::string dataset, predictions;
    } eval_;
};

void Runner::add_common(CLI::App* sub, bool out_required)
{
    sub->add_option("--seed", common_.seed, "RNG seed")->capture_default_str();
    sub->add_option("--threads", common_.threads, "worker threads (0: REFIELD_THREADS or all cores)");
    auto* o = sub->add_option("--out", common_.out, "output path");
    if (out_required) {
        o->required();
    }
    sub->add_option("--config", common_.config, "JSON file with option values (keys are long option names)");
}

int Runner::run(const std::vector<std::string>& raw_args)
{
    CLI::App app{"refield: face reflectance fields on a synthetic light stage", "refield"};
    app.require_subcommand(1);
    app.fallthrough(false);

    auto* s = app.add_subcommand("synth-dataset", "render a synthetic light-stage dataset");
    add_common(s, true);
    s->add_option("--identities", synth_.identities)->capture_default_str();
    s->add_option("--cameras", synth_.cameras)->capture_default_str();
    s->add_option("--lights", synth_.lights)->capture_default_str();
    s->add_option("--image-size", synth_.image_size)->capture_default_str();
    s->add_option("--albedo-size", synth_.albedo_size)->capture_default_str();
    s->add_option("--yaw-span", synth_.yaw_span, "head yaw spread across cameras (degrees)")->capture_default_str();
    s->add_option("--envs", synth_.envs, "procedural environment maps")->capture_default_str();
    s->add_option("--env-file", synth_.env_files, "extra environment maps (.hdr/.pfm)");
    s->add_option("--env-width", synth_.env_width)->capture_default_str();
    s->add_option("--env-height", synth_.env_height)->capture_default_str();
    s->add_option("--ks", synth_.ks, "specular strength")->capture_default_str();
    s->add_option("--shininess", synth_.shininess)->capture_default_str();
    s->add_option("--ambient", synth_.ambient)->capture_default_str();
    s->add_option("--intensity", synth_.intensity, "light intensity")->capture_default_str();
    s->add_flag("--no-shadows", synth_.no_shadows);
    s->add_option("--model", synth_.model, "morphable model (.rfmm); default: built-in synthetic head");
    s->add_option("--model-seed", synth_.model_seed, "seed of the built-in model")->capture_default_str();

    auto* f = app.add_subcommand("fit-geometry", "fit morphable-model parameters to 2D landmarks");
    add_common(f, true);
    f->add_option("--model", fit_.model)->required();
    f->add_option("--landmarks", fit_.landmarks, "JSON {\"points\": [[x, y], ...]}")->required();
    f->add_option("--camera", fit_.camera, "camera JSON; default: square camera of --image-size");
    f->add_option("--image-size", fit_.image_size)->capture_default_str();
    f->add_option("--solver", fit_.solver)->check(CLI::IsMember({"lm", "adadelta"}))->capture_default_str();
    f->add_option("--iterations", fit_.iterations)->capture_default_str();

    auto* r = app.add_subcommand("render-olat", "render one OLAT image");
    add_common(r, true);
    r->add_option("--model", render_.model)->required();
    r->add_option("--params", render_.params)->required();
    r->add_option("--light", render_.light, "direction x,y,z (normalized)")->capture_default_str();
    r->add_option("--albedo", render_.albedo, "albedo texture; default: synthetic albedo from --seed");
    r->add_option("--image-size", render_.image_size)->capture_default_str();
    r->add_option("--ks", render_.ks)->capture_default_str();
    r->add_option("--shininess", render_.shininess)->capture_default_str();
    r->add_option("--ambient", render_.ambient)->capture_default_str();
    r->add_option("--intensity", render_.intensity)->capture_default_str();
    r->add_flag("--no-shadows", render_.no_shadows);

    auto* l = app.add_subcommand("relight", "weighted sum of OLAT images");
    add_common(l, true);
    l->add_option("--rig", relight_.rig)->required();
    l->add_option("--olat-dir", relight_.olat_dir, "directory with olat_<k>.pfm")->required();
    auto* env_opt = l->add_option("--env", relight_.env, "environment map (.hdr/.pfm)");
    auto* lambda_opt = l->add_option("--lambda", relight_.lambda, "light weights JSON");
    env_opt->excludes(lambda_opt);
    l->add_option("--projection", relight_.projection)->check(CLI::IsMember({"point", "cell"}))->capture_default_str();

    auto* e = app.add_subcommand("estimate-light", "least-squares light weights for a target image");
    add_common(e, true);
    e->add_option("--rig", estimate_.rig)->required();
    e->add_option("--olat-dir", estimate_.olat_dir)->required();
    e->add_option("--target", estimate_.target)->required();
    e->add_option("--mask", estimate_.mask, "image whose non-zero pixels are used");
    e->add_option("--ridge", estimate_.ridge, "ridge tau; negative selects 1e-6 trace/N")->capture_default_str();
    e->add_flag("--nonneg", estimate_.nonneg);
    e->add_option("--refine-steps", estimate_.refine_steps)->capture_default_str();

    auto* t = app.add_subcommand("train", "train the texel perceptron on a dataset");
    add_common(t, true);
    t->add_option("--dataset", train_.dataset)->required();
    t->add_option("--epochs", train_.epochs)->capture_default_str();
    t->add_option("--uv-size", train_.uv_size)->capture_default_str();
    t->add_option("--hidden", train_.hidden, "hidden layer sizes, comma separated")->capture_default_str();
    t->add_option("--val-identities", train_.val_identities)->capture_default_str();
    t->add_option("--lr", train_.lr)->capture_default_str();
    t->add_option("--rho", train_.rho)->capture_default_str();
    t->add_option("--eps", train_.eps)->capture_default_str();
    t->add_flag("--no-fit-geometry", train_.no_fit, "use params.json instead of landmark fits");
    t->add_flag("--pyramid-loss", train_.pyramid, "add the image-pyramid feature-loss stand-in");
    t->add_flag("--no-predictions", train_.no_predictions);

    auto* v = app.add_subcommand("eval", "Si-MSE report of predictions against ground truth");
    add_common(v, true);
    v->add_option("--dataset", eval_.dataset)->required();
    v->add_option("--predictions", eval_.predictions, "<identity>/<source>/<target>/olat_<k>.pfm tree")->required();

    std::vector<std::string> args = raw_args;
    std::string command = args.empty() ? "" : args.front();
    Json summary{{"command", command}};
    try {
        // Config values become extra arguments; reverse order for CLI11's parse(vector).
        CLI::App* sub = app.get_subcommand_no_throw(command);
        auto cfg = std::find(args.begin(), args.end(), std::string("--config"));
        if (sub != nullptr && cfg != args.end() && cfg + 1 != args.end()) {
            std::vector<std::string> rest(args.begin() + 1, args.end());
            rest = merge_config(*sub, *(cfg + 1), rest);
            rest.insert(rest.begin(), command);
            args = rest;
        }
        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(reversed);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out_, err_);
    } catch (const CLI::ParseError& e) {
        app.exit(e, err_, err_);
        CLI::App* sub = app.get_subcommand_no_throw(command);
        err_ << (sub != nullptr ? sub->help() : app.help());
        summary["status"] = "error";
        summary["exit_code"] = kExitUsage;
        summary["message"] = e.what();
        out_ << summary.dump() << '\n';
        return kExitUsage;
    } catch (const Error& e) {
        err_ << e.what() << '\n';
        summary["status"] = "error";
        summary["exit_code"] = kExitData;
        summary["message"] = e.what();
        out_ << summary.dump() << '\n';
        return kExitData;
    }

    int code = kExitOk;
    const auto previous_logger = spdlog::default_logger();
    struct Restore {
        std::shared_ptr<spdlog::logger> logger;
        ~Restore() { spdlog::set_default_logger(logger); }
    } restore{previous_logger};
    try {
        setup();
        Json result;
        if (s->parsed()) {
            result = synth_dataset();
        } else if (f->parsed()) {
            result = fit_geometry_cmd();
        } else if (r->parsed()) {
            result = render_olat();
        } else if (l->parsed()) {
            result = relight();
        } else if (e->parsed()) {
            result = estimate_light();
        } else if (t->parsed()) {
            result = train_cmd();
        } else {
            result = eval_cmd();
        }
        summary.update(result);
        summary["status"] = "ok";
    } catch (const NumericalError& ex) {
        code = kExitNumerical;
        summary["message"] = ex.what();
    } catch (const Error& ex) {
        code = kExitData;
        summary["message"] = ex.what();
    } catch (const Json::exception& ex) {
        code = kExitData;
        summary["message"] = ex.what();
    } catch (const fs::filesystem_error& ex) {
        code = kExitData;
        summary["message"] = ex.what();
    }
    if (code != kExitOk) {
        err_ << "error: " << summary["message"].get<std::string>() << '\n';
        summary["status"] = "error";
    }
    summary["exit_code"] = code;
    out_ << summary.dump() << '\n';
    return code;
}

void Runner::setup()
{
    set_thread_count(common_.threads);
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err_);
    spdlog::set_default_logger(std::make_shared<spdlog::logger>("refield", sink));
    spdlog::set_pattern("[%l] %v");
}

Json Runner::synth_dataset()
{
    DatasetConfig cfg;
    cfg.identities = synth_.identities;
    cfg.cameras = synth_.cameras;
    cfg.lights = synth_.lights;
    cfg.image_size = synth_.image_size;
    cfg.albedo_size = synth_.albedo_size;
    cfg.camera_yaw_span_deg = synth_.yaw_span;
    cfg.procedural_envs = synth_.envs;
    cfg.env_width = synth_.env_width;
    cfg.env_height = synth_.env_height;
    for (const std::string& p : synth_.env_files) {
        cfg.env_files.emplace_back(p);
    }
    cfg.specular_strength = synth_.ks;
    cfg.shininess = synth_.shininess;
    cfg.ambient = synth_.ambient;
    cfg.light_intensity = synth_.intensity;
    cfg.shadows = !synth_.no_shadows;
    cfg.seed = common_.seed;
    SyntheticModelOptions mo;
    mo.seed = synth_.model_seed;
    const MorphableModel model = synth_.model.empty() ? make_synthetic_model(mo) : load_model(synth_.model);
    const Json manifest = synthesize_dataset(model, cfg, common_.out);
    return {{"outputs", {{"dataset", common_.out}, {"manifest", (fs::path(common_.out) / "manifest.json").string()}}},
            {"metrics",
             {{"olat_count", manifest.at("olat_count")},
              {"identities", cfg.identities},
              {"cameras", cfg.cameras},
              {"lights", cfg.lights}}}};
}

Json Runner::fit_geometry_cmd()
{
    const MorphableModel model = load_model(fit_.model);
    const Camera camera = fit_.camera.empty() ? Camera::square(fit_.image_size) : camera_from_json(read_json(fit_.camera));
    const Eigen::Matrix2Xd observed = load_landmarks(fit_.landmarks);
    if (observed.cols() != static_cast<Eigen::Index>(model.landmark_indices().size())) {
        throw DimensionError(fit_.landmarks + " has " + std::to_string(observed.cols()) + " landmarks, the model " +
                             std::to_string(model.landmark_indices().size()));
    }
    GeometryFitConfig cfg;
    cfg.max_iterations = fit_.iterations;
    cfg.solver = fit_.solver == "lm" ? FitSolver::levenberg_marquardt : FitSolver::adadelta;
    const GeometryFitResult fit = fit_geometry(observed, model, camera, cfg);
    write_json(common_.out, face_params_to_json(fit.params));
    return {{"outputs", {{"params", common_.out}}},
            {"metrics", {{"loss", fit.loss}, {"landmark_rmse", fit.landmark_rmse}, {"iterations", fit.iterations}}}};
}

Json Runner::render_olat()
{
    const MorphableModel model = load_model(render_.model);
    const FaceParams params = face_params_from_json(read_json(render_.params), &model);
    Eigen::Vector3d light = parse_vec3(render_.light);
    if (!(light.norm() > 0.0)) {
        throw DataError("light direction must be non-zero");
    }
    light.normalize();
    const Camera camera = Camera::square(render_.image_size);
    BRDFParams brdf;
    if (render_.albedo.empty()) {
        brdf.diffuse_albedo = make_synthetic_albedo(128, common_.seed);
    } else {
        brdf.diffuse_albedo = TextureMap(1, 1);
        brdf.diffuse_albedo.image = load_image(render_.albedo);
        brdf.diffuse_albedo.valid.assign(brdf.diffuse_albedo.image.pixel_count(), 1);
    }
    brdf.specular_strength = render_.ks;
    brdf.shininess = render_.shininess;
    brdf.ambient = render_.ambient;
    brdf.validate();
    const Mesh mesh = pose_to_camera(build_mesh(model, params.alpha, params.beta), params);
    Image img = shade_olat(mesh, brdf, light, camera, !render_.no_shadows);
    img *= render_.intensity;
    save_image(common_.out, img);
    std::size_t covered = 0;
    for (std::size_t p = 0; p < img.pixel_count(); ++p) {
        covered += (img.data()[p * 3] + img.data()[p * 3 + 1] + img.data()[p * 3 + 2]) > 0.0 ? 1 : 0;
    }
    return {{"outputs", {{"image", common_.out}}}, {"metrics", {{"nonzero_pixels", covered}}}};
}

Json Runner::relight()
{
    const LightRig rig = rig_from_json(read_json(relight_.rig));
    const OLATSet olats = load_olat_dir(relight_.olat_dir, rig);
    LightWeights lambda;
    if (!relight_.env.empty()) {
        EnvMap env;
        env.radiance = load_image(relight_.env);
        lambda = project_env_to_lights(env, rig,
                                       relight_.projection == "cell" ? EnvProjection::cell_integration
                                                                     : EnvProjection::point_sample);
    } else if (!relight_.lambda.empty()) {
        lambda = light_weights_from_json(read_json(relight_.lambda));
    } else {
        throw DataError("relight needs --env or --lambda");
    }
    save_image(common_.out, relight_sum(olats, lambda));
    return {{"outputs", {{"image", common_.out}}}, {"metrics", {{"lights", rig.size()}}}};
}

Json Runner::estimate_light()
{
    const LightRig rig = rig_from_json(read_json(estimate_.rig));
    const OLATSet olats = load_olat_dir(estimate_.olat_dir, rig);
    const Image target = load_image(estimate_.target);
    if (!target.same_shape(olats.images.front())) {
        throw DimensionError("target " + estimate_.target + " does not match the OLAT size");
    }
    const PixelMask mask = load_mask(estimate_.mask, target);
    LightSolveOptions opt;
    if (estimate_.ridge >= 0.0) {
        opt.ridge = estimate_.ridge;
    }
    opt.nonnegative = estimate_.nonneg;
    LightSolve solve = estimate_light_lsq(olats, target, mask, opt);
    if (estimate_.refine_steps > 0) {
        RefineOptions ro;
        ro.steps = estimate_.refine_steps;
        ro.nonnegative = estimate_.nonneg;
        solve = refine_light(solve, photometric_objective(olats, target, mask), ro);
    }
    write_json(common_.out, light_weights_to_json(solve.lambda, rig));
    return {{"outputs", {{"lambda", common_.out}}},
            {"metrics", {{"residual", solve.residual}, {"condition", solve.condition}, {"ridge", solve.ridge}}}};
}

Json Runner::train_cmd()
{
    TrainConfig cfg;
    cfg.epochs = train_.epochs;
    cfg.uv_size = train_.uv_size;
    cfg.hidden_layers = parse_int_list(train_.hidden);
    cfg.validation_identities = train_.val_identities;
    cfg.seed = common_.seed;
    cfg.adadelta = {train_.rho, train_.eps, train_.lr};
    cfg.fit_geometry = !train_.no_fit;
    cfg.pyramid_feature_loss = train_.pyramid;
    const fs::path out(common_.out);
    fs::create_directories(out);
    if (!train_.no_predictions) {
        cfg.prediction_dir = out / "predictions";
    }
    const TrainResult result = train(train_.dataset, cfg);
    save_network(out / "network.rfnn", result.net);
    write_training_log(out / "train_log.csv", result.log);
    const EpochLog& last = result.log.back();
    Json outputs{{"network", (out / "network.rfnn").string()}, {"log", (out / "train_log.csv").string()}};
    if (cfg.prediction_dir) {
        outputs["predictions"] = cfg.prediction_dir->string();
    }
    return {{"outputs", outputs},
            {"metrics",
             {{"epochs", cfg.epochs},
              {"train_samples", result.train_samples},
              {"val_samples", result.val_samples},
              {"final_train_loss", last.train_loss},
              {"final_val_loss", last.val_loss},
              {"val_si_mse", last.val_si_mse},
              {"baseline_val_si_mse", result.baseline_val_si_mse}}}};
}

Json Runner::eval_cmd()
{
    const Dataset ds = load_dataset(eval_.dataset);
    const MorphableModel model = load_model(fs::path(eval_.dataset) / ds.manifest.at("model").get<std::string>());
    std::map<std::string, const DatasetIdentity*> ids;
    for (const DatasetIdentity& id : ds.identities) {
        ids[id.id] = &id;
    }
    struct Row {
        std::string identity, source, target;
        std::size_t light;
        bool same;
        double value;
    };
    std::vector<Row> rows;
    const fs::path root(eval_.predictions);
    if (!fs::is_directory(root)) {
        throw DataError("prediction directory not found: " + root.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(root)) {
        if (entry.is_regular_file() && entry.path().extension() == ".pfm") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    std::map<std::string, PixelMask> masks;
    for (const fs::path& file : files) {
        const fs::path relp = fs::relative(file, root);
        std::vector<std::string> parts;
        for (const auto& p : relp) {
            parts.push_back(p.string());
        }
        const std::string stem = file.stem().string();
        if (parts.size() != 4 || stem.rfind("olat_", 0) != 0 || !ids.count(parts[0])) {
            throw DataError("unpaired prediction " + file.string());
        }
        const DatasetIdentity& ident = *ids.at(parts[0]);
        const auto view = std::find_if(ident.views.begin(), ident.views.end(),
                                       [&](const DatasetView& v) { return v.camera == parts[2]; });
        const bool source_known = std::any_of(ident.views.begin(), ident.views.end(),
                                              [&](const DatasetView& v) { return v.camera == parts[1]; });
        std::size_t k = 0;
        try {
            k = std::stoul(stem.substr(5));
        } catch (const std::exception&) {
            throw DataError("unpaired prediction " + file.string());
        }
        if (view == ident.views.end() || !source_known || k >= view->olats.size()) {
            throw DataError("unpaired prediction " + file.string());
        }
        const std::string key = parts[0] + "/" + parts[2];
        if (!masks.count(key)) {
            const Mesh mesh = pose_to_camera(build_mesh(model, view->params.alpha, view->params.beta), view->params);
            masks[key] = rasterize_geometry(mesh, view->intrinsics).mask;
        }
        const Image pred = load_image(file);
        const Image truth = load_image(view->olats[k]);
        rows.push_back({parts[0], parts[1], parts[2], k, parts[1] == parts[2], si_mse(pred, truth, masks.at(key))});
    }
    if (rows.empty()) {
        throw DataError("no predictions found under " + root.string());
    }
    std::vector<double> same, diff, all;
    std::ofstream csv(common_.out);
    if (!csv) {
        throw DataError("cannot write " + common_.out);
    }
    csv << "kind,identity,source_camera,target_camera,light,split,count,si_mse,std\n";
    for (const Row& r : rows) {
        (r.same ? same : diff).push_back(r.value);
        all.push_back(r.value);
        csv << fmt::format("sample,{},{},{},{},{},1,{:.9g},0\n", r.identity, r.source, r.target, r.light,
                           r.same ? "same_pose" : "different_pose", r.value);
    }
    const auto aggregate = [&](const char* name, const std::vector<double>& v) {
        csv << fmt::format("aggregate,,,,,{},{},{:.9g},{:.9g}\n", name, v.size(), mean_of(v), std_of(v));
    };
    aggregate("same_pose", same);
    aggregate("different_pose", diff);
    aggregate("all", all);
    return {{"outputs", {{"report", common_.out}}},
            {"metrics",
             {{"samples", rows.size()},
              {"same_pose_mean", mean_of(same)},
              {"same_pose_std", std_of(same)},
              {"different_pose_mean", mean_of(diff)},
              {"different_pose_std", std_of(diff)}}}};
}

} // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    Runner runner(out, err);
    return runner.run(args);
}

int run_command(int argc, char** argv)
{
    std::vector<std::string> args(argv + 1, argv + argc);
    return run_command(args, std::cout, std::cerr);
}

} // namespace refield
