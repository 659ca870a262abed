#include "refield/predictor.hpp"

#include "refield/error.hpp"
#include "refield/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <string>

namespace refield {

namespace {

constexpr char kMagic[4] = {'R', 'F', 'N', 'N'};
constexpr std::uint32_t kFileVersion = 1;

double softplus(double x)
{
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x)
{
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void activate(Activation a, const Eigen::MatrixXd& z, Eigen::Ref<Eigen::MatrixXd> out)
{
    switch (a) {
    case Activation::identity:
        out = z;
        break;
    case Activation::leaky_relu:
        out = z.unaryExpr([](double v) { return v > 0.0 ? v : TexelPerceptron::kLeakySlope * v; });
        break;
    case Activation::softplus:
        out = z.unaryExpr([](double v) { return softplus(v); });
        break;
    }
}

double derivative(Activation a, double z)
{
    switch (a) {
    case Activation::identity:
        return 1.0;
    case Activation::leaky_relu:
        return z > 0.0 ? 1.0 : TexelPerceptron::kLeakySlope;
    case Activation::softplus:
        return sigmoid(z);
    }
    return 1.0;
}

std::vector<Activation> default_activations(std::size_t layers)
{
    std::vector<Activation> acts(layers, Activation::leaky_relu);
    if (!acts.empty()) {
        acts.back() = Activation::softplus;
    }
    return acts;
}

template <typename Body>
void for_chunks(std::size_t count, Exec exec, Body&& body)
{
    const auto chunks = static_cast<std::ptrdiff_t>((count + kReductionChunk - 1) / kReductionChunk);
    if (exec == Exec::serial) {
        for (std::ptrdiff_t c = 0; c < chunks; ++c) {
            body(static_cast<std::size_t>(c));
        }
    } else {
#pragma omp parallel for schedule(static)
        for (std::ptrdiff_t c = 0; c < chunks; ++c) {
            body(static_cast<std::size_t>(c));
        }
    }
}

void check_texture(const TextureMap& t, const TextureMap& ref, const char* what)
{
    if (t.width() != ref.width() || t.height() != ref.height() || t.valid.size() != t.image.pixel_count()) {
        throw DimensionError(std::string(what) + " does not match the target normal map size");
    }
}

} // namespace

void PredictorInput::validate() const
{
    check_texture(source_texture, target_normals, "source texture");
    check_texture(source_normals, target_normals, "source normal map");
    if (target_normals.valid.size() != target_normals.image.pixel_count()) {
        throw DimensionError("target normal map validity mask has the wrong size");
    }
    if (std::abs(light_dir.norm() - 1.0) > 1e-9) {
        throw DataError("light direction must be unit length");
    }
}

TextureMap predict_analytic(const PredictorInput& input, const BRDFParams& brdf)
{
    input.validate();
    const TextureMap& normals = input.target_normals;
    const Image& albedo = brdf.diffuse_albedo.image;
    if (!albedo.same_shape(normals.image)) {
        throw DimensionError("albedo texture does not match the normal map size");
    }
    TextureMap out(normals.width(), normals.height(), 0.0, false);
    const Eigen::Vector3d view(0.0, 0.0, -1.0);
    const Eigen::Vector3d half = (input.light_dir + view).normalized();
    for (int y = 0; y < normals.height(); ++y) {
        for (int x = 0; x < normals.width(); ++x) {
            if (!normals.is_valid(x, y)) {
                continue;
            }
            const Eigen::Vector3d n = normals.image.pixel(x, y);
            const double ndotl = n.dot(input.light_dir);
            Eigen::Vector3d c = albedo.pixel(x, y) * std::max(0.0, ndotl);
            if (brdf.specular_strength > 0.0 && ndotl > 0.0 && half.allFinite()) {
                c.array() += brdf.specular_strength * std::pow(std::max(0.0, n.dot(half)), brdf.shininess);
            }
            out.image.set_pixel(x, y, c);
            out.valid[out.image.index(x, y)] = 1;
        }
    }
    return out;
}

TexelPerceptron::TexelPerceptron(std::vector<int> layer_sizes, std::uint64_t seed)
    : TexelPerceptron(layer_sizes, default_activations(layer_sizes.empty() ? 0 : layer_sizes.size() - 1), seed)
{
}

TexelPerceptron::TexelPerceptron(std::vector<int> layer_sizes, std::vector<Activation> activations, std::uint64_t seed)
    : sizes_(std::move(layer_sizes)), activations_(std::move(activations))
{
    layout();
    Rng rng(seed);
    for (int l = 0; l < layer_count(); ++l) {
        const double limit = std::sqrt(6.0 / (sizes_[l] + sizes_[l + 1]));
        auto w = weight(l);
        for (Eigen::Index j = 0; j < w.cols(); ++j) {
            for (Eigen::Index i = 0; i < w.rows(); ++i) {
                w(i, j) = rng.uniform(-limit, limit);
            }
        }
        bias(l).setZero();
    }
}

void TexelPerceptron::layout()
{
    if (sizes_.size() < 2) {
        throw DimensionError("a perceptron needs at least an input and an output layer");
    }
    if (activations_.size() != sizes_.size() - 1) {
        throw DimensionError("one activation per layer is required");
    }
    for (int s : sizes_) {
        if (s <= 0) {
            throw DimensionError("layer sizes must be positive");
        }
    }
    offsets_.clear();
    std::size_t total = 0;
    for (int l = 0; l < layer_count(); ++l) {
        offsets_.push_back(total);
        total += static_cast<std::size_t>(sizes_[l + 1]) * (sizes_[l] + 1);
    }
    params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
}

Eigen::VectorXd& TexelPerceptron::mutable_parameters()
{
    ++version_;
    return params_;
}

Eigen::Map<const Eigen::MatrixXd> TexelPerceptron::weight(int layer) const
{
    return {params_.data() + offsets_[static_cast<std::size_t>(layer)], sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<const Eigen::VectorXd> TexelPerceptron::bias(int layer) const
{
    const auto off = offsets_[static_cast<std::size_t>(layer)] + static_cast<std::size_t>(sizes_[layer + 1]) * sizes_[layer];
    return {params_.data() + off, sizes_[layer + 1]};
}

Eigen::Map<Eigen::MatrixXd> TexelPerceptron::weight(int layer)
{
    ++version_;
    return {params_.data() + offsets_[static_cast<std::size_t>(layer)], sizes_[layer + 1], sizes_[layer]};
}

Eigen::Map<Eigen::VectorXd> TexelPerceptron::bias(int layer)
{
    ++version_;
    const auto off = offsets_[static_cast<std::size_t>(layer)] + static_cast<std::size_t>(sizes_[layer + 1]) * sizes_[layer];
    return {params_.data() + off, sizes_[layer + 1]};
}

TexelFeatures build_features(const PredictorInput& input)
{
    input.validate();
    const TextureMap& nt = input.target_normals;
    TexelFeatures f;
    f.width = nt.width();
    f.height = nt.height();
    for (std::size_t i = 0; i < nt.valid.size(); ++i) {
        if (nt.valid[i]) {
            f.texels.push_back(i);
        }
    }
    f.values.resize(kFeatureCount, static_cast<Eigen::Index>(f.texels.size()));
    const auto ts = input.source_texture.image.data();
    const auto ns = input.source_normals.image.data();
    const auto tn = nt.image.data();
    for (std::size_t k = 0; k < f.texels.size(); ++k) {
        const std::size_t i = f.texels[k];
        auto col = f.values.col(static_cast<Eigen::Index>(k));
        const bool seen = input.source_texture.valid[i] != 0;
        const bool has_ns = input.source_normals.valid[i] != 0;
        for (int c = 0; c < 3; ++c) {
            col(c) = seen ? ts[i * 3 + c] : 0.0;
            col(3 + c) = has_ns ? ns[i * 3 + c] : 0.0;
            col(6 + c) = tn[i * 3 + c];
            col(9 + c) = input.light_dir(c);
        }
        col(12) = 2.0 * (static_cast<double>(i % f.width) + 0.5) / f.width - 1.0;
        col(13) = 2.0 * (static_cast<double>(i / f.width) + 0.5) / f.height - 1.0;
    }
    return f;
}

TextureMap predictor_forward(const TexelPerceptron& net, const PredictorInput& input, PredictorCache* cache, Exec exec)
{
    return predictor_forward(net, build_features(input), cache, exec);
}

TextureMap predictor_forward(const TexelPerceptron& net, const TexelFeatures& features, PredictorCache* cache,
                             Exec exec)
{
    const auto& sizes = net.layer_sizes();
    if (features.values.rows() != sizes.front()) {
        throw DimensionError("network expects " + std::to_string(sizes.front()) + " features, got " +
                             std::to_string(features.values.rows()));
    }
    if (sizes.back() != 3) {
        throw DimensionError("network output must have 3 channels");
    }
    const auto n = static_cast<Eigen::Index>(features.texels.size());
    const int layers = net.layer_count();
    PredictorCache local;
    PredictorCache& c = cache ? *cache : local;
    c.net = &net;
    c.version = net.version();
    c.width = features.width;
    c.height = features.height;
    c.texels = features.texels;
    c.inputs.assign(static_cast<std::size_t>(layers), Eigen::MatrixXd());
    c.preactivations.assign(static_cast<std::size_t>(layers), Eigen::MatrixXd());
    c.inputs[0] = features.values;
    for (int l = 0; l < layers; ++l) {
        c.preactivations[static_cast<std::size_t>(l)].resize(sizes[l + 1], n);
        if (l + 1 < layers) {
            c.inputs[static_cast<std::size_t>(l + 1)].resize(sizes[l + 1], n);
        }
    }
    Eigen::MatrixXd output(3, n);

    for_chunks(static_cast<std::size_t>(n), exec, [&](std::size_t chunk) {
        const auto begin = static_cast<Eigen::Index>(chunk * kReductionChunk);
        const auto len = std::min<Eigen::Index>(static_cast<Eigen::Index>(kReductionChunk), n - begin);
        for (int l = 0; l < layers; ++l) {
            const auto ls = static_cast<std::size_t>(l);
            Eigen::MatrixXd z = net.weight(l) * c.inputs[ls].middleCols(begin, len);
            z.colwise() += net.bias(l);
            c.preactivations[ls].middleCols(begin, len) = z;
            if (l + 1 < layers) {
                activate(net.activations()[ls], z, c.inputs[ls + 1].middleCols(begin, len));
            } else {
                activate(net.activations()[ls], z, output.middleCols(begin, len));
            }
        }
    });

    TextureMap out(features.width, features.height, 0.0, false);
    auto data = out.image.data();
    for (Eigen::Index k = 0; k < n; ++k) {
        const std::size_t i = features.texels[static_cast<std::size_t>(k)];
        out.valid[i] = 1;
        for (int ch = 0; ch < 3; ++ch) {
            data[i * 3 + ch] = output(ch, k);
        }
    }
    return out;
}

Eigen::VectorXd predictor_backward(const TexelPerceptron& net, const PredictorCache& cache, const Image& grad_output,
                                   Exec exec)
{
    if (cache.net != &net || cache.version != net.version()) {
        throw Error("predictor cache is stale: run predictor_forward with the current parameters first");
    }
    if (grad_output.width() != cache.width || grad_output.height() != cache.height) {
        throw DimensionError("output gradient does not match the predicted texture size");
    }
    const int layers = net.layer_count();
    const auto& sizes = net.layer_sizes();
    const auto n = static_cast<Eigen::Index>(cache.texels.size());
    Eigen::MatrixXd upstream(3, n);
    const auto g = grad_output.data();
    for (Eigen::Index k = 0; k < n; ++k) {
        const std::size_t i = cache.texels[static_cast<std::size_t>(k)];
        upstream.col(k) << g[i * 3], g[i * 3 + 1], g[i * 3 + 2];
    }

    const std::size_t chunks = (static_cast<std::size_t>(n) + kReductionChunk - 1) / kReductionChunk;
    std::vector<Eigen::VectorXd> partial(chunks);
    for_chunks(static_cast<std::size_t>(n), exec, [&](std::size_t chunk) {
        const auto begin = static_cast<Eigen::Index>(chunk * kReductionChunk);
        const auto len = std::min<Eigen::Index>(static_cast<Eigen::Index>(kReductionChunk), n - begin);
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
        Eigen::MatrixXd delta = upstream.middleCols(begin, len);
        for (int l = layers - 1; l >= 0; --l) {
            const auto ls = static_cast<std::size_t>(l);
            const auto z = cache.preactivations[ls].middleCols(begin, len);
            const Activation act = net.activations()[ls];
            for (Eigen::Index j = 0; j < delta.cols(); ++j) {
                for (Eigen::Index r = 0; r < delta.rows(); ++r) {
                    delta(r, j) *= derivative(act, z(r, j));
                }
            }
            const auto out_dim = sizes[l + 1];
            const auto in_dim = sizes[l];
            Eigen::Map<Eigen::MatrixXd> gw(grad.data() + net.weight_offset(l), out_dim, in_dim);
            Eigen::Map<Eigen::VectorXd> gb(grad.data() + net.weight_offset(l) + static_cast<std::size_t>(out_dim) * in_dim,
                                           out_dim);
            gw.noalias() += delta * cache.inputs[ls].middleCols(begin, len).transpose();
            gb += delta.rowwise().sum();
            if (l > 0) {
                delta = net.weight(l).transpose() * delta;
            }
        }
        partial[chunk] = std::move(grad);
    });

    Eigen::VectorXd total = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(net.parameter_count()));
    for (const Eigen::VectorXd& p : partial) {
        total += p;
    }
    return total;
}

void save_network(const std::filesystem::path& path, const TexelPerceptron& net)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw DataError("cannot write " + path.string());
    }
    const auto put_u32 = [&](std::uint32_t v) {
        const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                    static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    out.write(kMagic, 4);
    put_u32(kFileVersion);
    put_u32(kFeatureLayoutVersion);
    put_u32(static_cast<std::uint32_t>(net.layer_sizes().size()));
    for (int s : net.layer_sizes()) {
        put_u32(static_cast<std::uint32_t>(s));
    }
    for (Activation a : net.activations()) {
        out.put(static_cast<char>(a));
    }
    for (double p : net.parameters()) {
        const auto f = static_cast<float>(p);
        std::uint32_t bits = 0;
        std::memcpy(&bits, &f, 4);
        put_u32(bits);
    }
    if (!out) {
        throw DataError("failed writing " + path.string());
    }
}

TexelPerceptron load_network(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path.string());
    }
    const auto fail = [&](const std::string& why) { return DataError(path.string() + ": " + why); };
    const auto get_u32 = [&]() {
        unsigned char b[4];
        if (!in.read(reinterpret_cast<char*>(b), 4)) {
            throw fail("truncated network file");
        }
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };
    char magic[4];
    if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
        throw fail("not an RFNN network file");
    }
    if (get_u32() != kFileVersion) {
        throw fail("unsupported network file version");
    }
    if (get_u32() != kFeatureLayoutVersion) {
        throw fail("network was trained with a different feature layout");
    }
    const std::uint32_t count = get_u32();
    if (count < 2 || count > 64) {
        throw fail("implausible layer count");
    }
    std::vector<int> sizes;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t s = get_u32();
        if (s == 0 || s > 1u << 16) {
            throw fail("implausible layer size");
        }
        sizes.push_back(static_cast<int>(s));
    }
    std::vector<Activation> acts;
    for (std::uint32_t i = 0; i + 1 < count; ++i) {
        const int a = in.get();
        if (a < 0 || a > static_cast<int>(Activation::softplus)) {
            throw fail("unknown activation id");
        }
        acts.push_back(static_cast<Activation>(a));
    }
    TexelPerceptron net(sizes, acts, 0);
    Eigen::VectorXd& params = net.mutable_parameters();
    for (Eigen::Index i = 0; i < params.size(); ++i) {
        const std::uint32_t bits = get_u32();
        float f = 0.0f;
        std::memcpy(&f, &bits, 4);
        if (!std::isfinite(f)) {
            throw fail("non-finite weight");
        }
        params(i) = f;
    }
    return net;
}

} // namespace refield
