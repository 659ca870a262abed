#pragma once

#include "refield/adadelta.hpp"
#include "refield/dataset.hpp"
#include "refield/fitting.hpp"
#include "refield/losses.hpp"
#include "refield/parallel.hpp"
#include "refield/predictor.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace refield {

struct TrainConfig {
    LossWeights weights;
    int epochs = 30;
    /// Number of identities (taken from the end of the manifest) held out for validation.
    int validation_identities = 1;
    int uv_size = 64;
    std::vector<int> hidden_layers = {64, 64};
    std::uint64_t seed = 1;
    AdadeltaConfig adadelta{};
    /// Fit FaceParams to each view's landmarks instead of reading params.json.
    bool fit_geometry = true;
    GeometryFitConfig geometry{};
    /// Adds the image-pyramid stand-in for the feature loss, weighted by lambda_f.
    bool pyramid_feature_loss = false;
    Filter filter = Filter::bilinear;
    Exec exec = Exec::parallel;
    /// Directory for validation predictions (<identity>/<source>/<target>/olat_<k>.pfm).
    std::optional<std::filesystem::path> prediction_dir;

    void validate() const;
};

struct EpochLog {
    int epoch = 0;              ///< 0 is the untrained network
    double train_loss = 0.0;    ///< mean weighted loss over the epoch's updates (evaluation only at epoch 0)
    double val_loss = 0.0;
    double val_si_mse = 0.0;
};

struct TrainResult {
    TexelPerceptron net;
    std::vector<EpochLog> log;
    double baseline_val_si_mse = 0.0; ///< Lambertian predict_analytic with the true albedo
    std::size_t train_samples = 0;
    std::size_t val_samples = 0;
    double max_fit_rmse = 0.0;        ///< worst landmark RMSE of the per-view geometry fits (pixels)
};

/// Trains the texel perceptron on (relit source, OLAT target) pairs of the
/// same identity. Geometry is fixed per view before training. Throws
/// NumericalError if the loss becomes non-finite.
TrainResult train(const std::filesystem::path& dataset_root, const TrainConfig& config);

/// CSV with header epoch,train_loss,val_loss,val_si_mse.
void write_training_log(const std::filesystem::path& path, const std::vector<EpochLog>& log);

} // namespace refield
