#pragma once

#include "refield/image.hpp"
#include "refield/light_transport.hpp"
#include "refield/parallel.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <vector>

namespace refield {

/// Everything the reflectance function sees for one (source, target, light) query.
struct PredictorInput {
    TextureMap source_texture;  ///< T_s
    TextureMap source_normals;  ///< N_s^c
    TextureMap target_normals;  ///< N_t^c, its validity defines the output support
    Eigen::Vector3d light_dir = Eigen::Vector3d::UnitZ();

    /// Throws DimensionError on mismatched sizes and DataError on a non-unit light.
    void validate() const;
};

/// Analytic baseline: albedo * max(0, n_t . l) per texel, plus a Blinn lobe
/// (viewer along -z) when brdf.specular_strength > 0. No shadows, no ambient.
TextureMap predict_analytic(const PredictorInput& input, const BRDFParams& brdf);

/// Feature layout: T_s rgb (3), N_s (3), N_t (3), light (3), uv in [-1, 1] (2).
inline constexpr int kFeatureCount = 14;
inline constexpr std::uint32_t kFeatureLayoutVersion = 1;

enum class Activation : std::uint8_t { identity = 0, leaky_relu = 1, softplus = 2 };

/// Per-texel multilayer perceptron. All weights and biases live in one
/// contiguous vector: for each layer, the out x in weight matrix (column
/// major) followed by the bias.
class TexelPerceptron {
public:
    static constexpr double kLeakySlope = 0.01;

    /// Glorot-uniform weights, zero biases. Hidden layers use the leaky
    /// rectifier, the output layer softplus.
    explicit TexelPerceptron(std::vector<int> layer_sizes = {kFeatureCount, 64, 64, 3}, std::uint64_t seed = 1);
    TexelPerceptron(std::vector<int> layer_sizes, std::vector<Activation> activations, std::uint64_t seed);

    const std::vector<int>& layer_sizes() const { return sizes_; }
    const std::vector<Activation>& activations() const { return activations_; }
    int layer_count() const { return static_cast<int>(activations_.size()); }

    const Eigen::VectorXd& parameters() const { return params_; }
    /// Mutable access; invalidates forward caches taken before the call.
    Eigen::VectorXd& mutable_parameters();
    std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

    Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
    Eigen::Map<const Eigen::VectorXd> bias(int layer) const;
    Eigen::Map<Eigen::MatrixXd> weight(int layer);
    Eigen::Map<Eigen::VectorXd> bias(int layer);
    std::size_t weight_offset(int layer) const { return offsets_[static_cast<std::size_t>(layer)]; }

    std::uint64_t version() const { return version_; }

private:
    void layout();

    std::vector<int> sizes_;
    std::vector<Activation> activations_;
    std::vector<std::size_t> offsets_;
    Eigen::VectorXd params_;
    std::uint64_t version_ = 0;
};

/// Per-texel features (columns) and the flat texel index of each column.
struct TexelFeatures {
    int width = 0;
    int height = 0;
    std::vector<std::size_t> texels;
    Eigen::MatrixXd values; ///< kFeatureCount x texels.size()
};
TexelFeatures build_features(const PredictorInput& input);

/// Layer inputs and pre-activations kept for the backward pass.
struct PredictorCache {
    const TexelPerceptron* net = nullptr;
    std::uint64_t version = 0;
    int width = 0;
    int height = 0;
    std::vector<std::size_t> texels;
    std::vector<Eigen::MatrixXd> inputs;          ///< per layer
    std::vector<Eigen::MatrixXd> preactivations;  ///< per layer
};

TextureMap predictor_forward(const TexelPerceptron& net, const PredictorInput& input, PredictorCache* cache = nullptr,
                             Exec exec = Exec::parallel);
TextureMap predictor_forward(const TexelPerceptron& net, const TexelFeatures& features,
                             PredictorCache* cache = nullptr, Exec exec = Exec::parallel);

/// Gradient of sum(grad_output . output) with respect to every parameter.
/// Texel contributions are summed per fixed-size chunk and the chunk sums are
/// added in order, so the result does not depend on the thread count. Throws
/// Error when the cache belongs to another network or predates a parameter
/// change.
Eigen::VectorXd predictor_backward(const TexelPerceptron& net, const PredictorCache& cache, const Image& grad_output,
                                   Exec exec = Exec::parallel);

void save_network(const std::filesystem::path& path, const TexelPerceptron& net);
TexelPerceptron load_network(const std::filesystem::path& path);

} // namespace refield
