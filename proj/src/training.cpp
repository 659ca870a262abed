#include "refield/training.hpp"

#include "refield/error.hpp"
#include "refield/image_io.hpp"
#include "refield/model_io.hpp"
#include "refield/random.hpp"
#include "refield/rasterizer.hpp"
#include "refield/uv_atlas.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace refield {

namespace fs = std::filesystem;

namespace {

struct View {
    int identity = 0;
    std::string identity_id;
    std::string camera;
    FrameBuffer fb;
    TextureMap normals;
    std::vector<TextureMap> sources; ///< one per relit environment
    std::vector<Image> olats;
    TextureMap albedo;               ///< ground truth, resampled to the UV size
};

struct Sample {
    std::size_t source = 0;
    std::size_t env = 0;
    std::size_t target = 0;
    std::size_t light = 0;
};

TextureMap resample_albedo(const Image& albedo, int size)
{
    TextureMap out(size, size, 0.0, true);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            out.image.set_pixel(x, y, sample_texture(albedo, Eigen::Vector2d((x + 0.5) / size, (y + 0.5) / size)));
        }
    }
    return out;
}

struct Evaluation {
    double loss = 0.0;
    double si_mse = 0.0;
};

} // namespace

void TrainConfig::validate() const
{
    weights.validate();
    if (epochs < 0 || validation_identities < 0 || uv_size < 2) {
        throw DataError("invalid training configuration");
    }
    for (int h : hidden_layers) {
        if (h <= 0) {
            throw DataError("hidden layer sizes must be positive");
        }
    }
}

TrainResult train(const fs::path& dataset_root, const TrainConfig& config)
{
    config.validate();
    const Dataset ds = load_dataset(dataset_root);
    const MorphableModel model = load_model(dataset_root / ds.manifest.at("model").get<std::string>());
    const int ids = static_cast<int>(ds.identities.size());
    if (config.validation_identities >= ids) {
        throw DataError("need at least one training identity besides the " +
                        std::to_string(config.validation_identities) + " held out");
    }
    const UvRaster uv = rasterize_uv_atlas(*model.topology(), config.uv_size, config.uv_size, config.exec);

    TrainResult result{TexelPerceptron(), {}, 0.0, 0, 0, 0.0};
    std::vector<View> views;
    std::vector<std::vector<std::size_t>> views_of(static_cast<std::size_t>(ids));
    for (int i = 0; i < ids; ++i) {
        const DatasetIdentity& ident = ds.identities[static_cast<std::size_t>(i)];
        const TextureMap albedo = resample_albedo(load_pfm(ident.albedo), config.uv_size);
        for (const DatasetView& dv : ident.views) {
            FaceParams params = dv.params;
            if (config.fit_geometry) {
                const GeometryFitResult fit =
                    fit_geometry(load_landmarks(dv.landmarks), model, dv.intrinsics, config.geometry);
                params = fit.params;
                result.max_fit_rmse = std::max(result.max_fit_rmse, fit.landmark_rmse);
            }
            View v;
            v.identity = i;
            v.identity_id = ident.id;
            v.camera = dv.camera;
            const Mesh mesh = pose_to_camera(build_mesh(model, params.alpha, params.beta), params);
            v.fb = rasterize_geometry(mesh, dv.intrinsics, config.exec);
            v.normals = render_normal_map(mesh, uv, config.exec);
            for (const fs::path& p : dv.relit) {
                v.sources.push_back(unproject_to_uv(load_pfm(p), mesh, dv.intrinsics, uv, config.exec));
            }
            if (v.sources.empty()) {
                throw DataError("view " + ident.id + "/" + dv.camera + " has no relit source images");
            }
            for (const fs::path& p : dv.olats) {
                Image img = load_pfm(p);
                if (img.width() != dv.intrinsics.width || img.height() != dv.intrinsics.height) {
                    throw DimensionError(p.string() + " does not match the camera size");
                }
                v.olats.push_back(std::move(img));
            }
            v.albedo = albedo;
            views_of[static_cast<std::size_t>(i)].push_back(views.size());
            views.push_back(std::move(v));
        }
    }

    std::vector<Sample> train_set;
    std::vector<Sample> val_set;
    const int first_val = ids - config.validation_identities;
    for (int i = 0; i < ids; ++i) {
        auto& bucket = i < first_val ? train_set : val_set;
        for (std::size_t s : views_of[static_cast<std::size_t>(i)]) {
            for (std::size_t e = 0; e < views[s].sources.size(); ++e) {
                for (std::size_t t : views_of[static_cast<std::size_t>(i)]) {
                    for (std::size_t k = 0; k < ds.rig.size(); ++k) {
                        bucket.push_back({s, e, t, k});
                    }
                }
            }
        }
    }
    result.train_samples = train_set.size();
    result.val_samples = val_set.size();

    std::vector<int> sizes{kFeatureCount};
    sizes.insert(sizes.end(), config.hidden_layers.begin(), config.hidden_layers.end());
    sizes.push_back(3);
    TexelPerceptron net(sizes, config.seed);
    AdadeltaState state(net.parameter_count(), config.adadelta);
    const LossWeights& w = config.weights;

    const auto input_for = [&](const Sample& s) {
        PredictorInput in;
        in.source_texture = views[s.source].sources[s.env];
        in.source_normals = views[s.source].normals;
        in.target_normals = views[s.target].normals;
        in.light_dir = ds.rig.directions[s.light];
        return in;
    };

    // Forward pass for one sample; fills the target framebuffer color.
    const auto run = [&](const Sample& s, PredictorCache* cache, FrameBuffer& fb, double& loss) {
        const TextureMap predicted = predictor_forward(net, input_for(s), cache, config.exec);
        shade_texture(fb, predicted.image, config.filter, config.exec);
        const Image& target = views[s.target].olats[s.light];
        loss = w.photometric * photometric_l1(fb.color, target, fb.mask);
        if (config.pyramid_feature_loss) {
            loss += w.feature * pyramid_loss(fb.color, target, fb.mask);
        }
    };

    const auto evaluate = [&](const std::vector<Sample>& set) {
        Evaluation ev;
        if (set.empty()) {
            return ev;
        }
        for (const Sample& s : set) {
            FrameBuffer fb = views[s.target].fb;
            double loss = 0.0;
            run(s, nullptr, fb, loss);
            ev.loss += loss;
            ev.si_mse += si_mse(fb.color, views[s.target].olats[s.light], fb.mask);
        }
        ev.loss /= static_cast<double>(set.size());
        ev.si_mse /= static_cast<double>(set.size());
        return ev;
    };

    // Lambertian baseline with the true albedo (no specular, shadows or ambient).
    if (!val_set.empty()) {
        double total = 0.0;
        for (const Sample& s : val_set) {
            BRDFParams lambert;
            lambert.diffuse_albedo = views[s.target].albedo;
            const TextureMap pred = predict_analytic(input_for(s), lambert);
            FrameBuffer fb = views[s.target].fb;
            shade_texture(fb, pred.image, config.filter, config.exec);
            total += si_mse(fb.color, views[s.target].olats[s.light], fb.mask);
        }
        result.baseline_val_si_mse = total / static_cast<double>(val_set.size());
    }

    {
        const Evaluation tr = evaluate(train_set);
        const Evaluation va = evaluate(val_set);
        result.log.push_back({0, tr.loss, va.loss, va.si_mse});
        spdlog::info("epoch 0: train {:.6f} val {:.6f} val_si_mse {:.6e} (baseline {:.6e})", tr.loss, va.loss,
                     va.si_mse, result.baseline_val_si_mse);
    }

    Rng rng(config.seed ^ 0x5eedULL);
    std::vector<std::size_t> order(train_set.size());
    std::iota(order.begin(), order.end(), 0);
    PredictorCache cache;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        // Fisher-Yates with the portable generator.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::swap(order[i - 1], order[static_cast<std::size_t>(rng.index(i))]);
        }
        double sum = 0.0;
        for (std::size_t idx : order) {
            const Sample& s = train_set[idx];
            View& target_view = views[s.target];
            double loss = 0.0;
            run(s, &cache, target_view.fb, loss);
            if (!std::isfinite(loss)) {
                throw NumericalError(fmt::format("non-finite training loss at epoch {} (identity {}, source {}, "
                                                 "target {}, light {})",
                                                 epoch, target_view.identity_id, views[s.source].camera,
                                                 target_view.camera, s.light));
            }
            sum += loss;
            const Image& target = target_view.olats[s.light];
            Image grad = photometric_l1_gradient(target_view.fb.color, target, target_view.fb.mask);
            grad *= w.photometric;
            if (config.pyramid_feature_loss) {
                Image g2 = pyramid_loss_gradient(target_view.fb.color, target, target_view.fb.mask);
                g2 *= w.feature;
                grad += g2;
            }
            const Image tex_grad =
                backprop_texture(target_view.fb, grad, config.uv_size, config.uv_size, config.filter, config.exec);
            const Eigen::VectorXd g = predictor_backward(net, cache, tex_grad, config.exec);
            Eigen::VectorXd& params = net.mutable_parameters();
            adadelta_step(state, std::span<double>(params.data(), static_cast<std::size_t>(params.size())),
                          std::span<const double>(g.data(), static_cast<std::size_t>(g.size())));
        }
        const double train_loss = train_set.empty() ? 0.0 : sum / static_cast<double>(train_set.size());
        const Evaluation va = evaluate(val_set);
        result.log.push_back({epoch, train_loss, va.loss, va.si_mse});
        spdlog::info("epoch {}: train {:.6f} val {:.6f} val_si_mse {:.6e}", epoch, train_loss, va.loss, va.si_mse);
    }

    if (config.prediction_dir) {
        for (const Sample& s : val_set) {
            if (s.env != 0) {
                continue;
            }
            FrameBuffer fb = views[s.target].fb;
            double loss = 0.0;
            run(s, nullptr, fb, loss);
            const fs::path dir =
                *config.prediction_dir / views[s.target].identity_id / views[s.source].camera / views[s.target].camera;
            fs::create_directories(dir);
            save_pfm(dir / fmt::format("olat_{:d}.pfm", s.light), fb.color);
        }
    }
    result.net = std::move(net);
    return result;
}

void write_training_log(const fs::path& path, const std::vector<EpochLog>& log)
{
    std::ofstream out(path);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    out << "epoch,train_loss,val_loss,val_si_mse\n";
    for (const EpochLog& e : log) {
        out << fmt::format("{},{:.9g},{:.9g},{:.9g}\n", e.epoch, e.train_loss, e.val_loss, e.val_si_mse);
    }
}

} // namespace refield
