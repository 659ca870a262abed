#include "refield/model_io.hpp"

#include "refield/error.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

namespace refield {

namespace {

static_assert(std::endian::native == std::endian::little, "model IO assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'R', 'F', 'M', 'M'};

class Writer {
public:
    explicit Writer(const std::filesystem::path& path) : out_(path, std::ios::binary), path_(path)
    {
        if (!out_) {
            throw DataError("cannot open " + path.string() + " for writing");
        }
    }
    void u32(std::uint32_t v) { out_.write(reinterpret_cast<const char*>(&v), sizeof v); }
    void f32(double v)
    {
        const float f = static_cast<float>(v);
        out_.write(reinterpret_cast<const char*>(&f), sizeof f);
    }
    void bytes(const char* p, std::size_t n) { out_.write(p, static_cast<std::streamsize>(n)); }
    void finish()
    {
        out_.flush();
        if (!out_) {
            throw DataError("failed writing " + path_.string());
        }
    }

private:
    std::ofstream out_;
    std::filesystem::path path_;
};

class Reader {
public:
    explicit Reader(const std::filesystem::path& path) : in_(path, std::ios::binary), path_(path)
    {
        if (!in_) {
            throw DataError("cannot open " + path.string());
        }
    }
    void bytes(char* p, std::size_t n)
    {
        in_.read(p, static_cast<std::streamsize>(n));
        if (!in_) {
            throw DataError("truncated model file " + path_.string());
        }
    }
    std::uint32_t u32()
    {
        std::uint32_t v = 0;
        bytes(reinterpret_cast<char*>(&v), sizeof v);
        return v;
    }
    std::vector<float> f32(std::size_t n)
    {
        std::vector<float> v(n);
        bytes(reinterpret_cast<char*>(v.data()), n * sizeof(float));
        return v;
    }

private:
    std::ifstream in_;
    std::filesystem::path path_;
};

int as_index(float f, const std::filesystem::path& path)
{
    if (!(f >= 0.0f) || f != std::floor(f) || f > 16777216.0f) {
        throw DataError("invalid index value in " + path.string());
    }
    return static_cast<int>(f);
}

} // namespace

void save_model(const std::filesystem::path& path, const MorphableModel& model)
{
    Writer w(path);
    w.bytes(kMagic.data(), kMagic.size());
    w.u32(static_cast<std::uint32_t>(model.vertex_count()));
    w.u32(static_cast<std::uint32_t>(model.identity_dims()));
    w.u32(static_cast<std::uint32_t>(model.expression_dims()));
    w.u32(static_cast<std::uint32_t>(model.triangles().size()));
    w.u32(static_cast<std::uint32_t>(model.landmark_indices().size()));
    for (Eigen::Index i = 0; i < model.mean().size(); ++i) {
        w.f32(model.mean()(i));
    }
    for (const Eigen::MatrixXd* basis : {&model.id_basis(), &model.exp_basis()}) {
        for (Eigen::Index c = 0; c < basis->cols(); ++c) {
            for (Eigen::Index r = 0; r < basis->rows(); ++r) {
                w.f32((*basis)(r, c));
            }
        }
    }
    for (const Triangle& t : model.triangles()) {
        for (int v : t) {
            w.f32(v);
        }
    }
    for (Eigen::Index i = 0; i < model.uv().cols(); ++i) {
        w.f32(model.uv()(0, i));
        w.f32(model.uv()(1, i));
    }
    for (int l : model.landmark_indices()) {
        w.f32(l);
    }
    for (bool c : model.contour_flags()) {
        w.f32(c ? 1.0 : 0.0);
    }
    w.finish();
}

MorphableModel load_model(const std::filesystem::path& path)
{
    Reader r(path);
    std::array<char, 4> magic{};
    r.bytes(magic.data(), magic.size());
    if (magic != kMagic) {
        throw DataError("not a morphable model file (bad magic): " + path.string());
    }
    const std::size_t n = r.u32();
    const std::size_t mi = r.u32();
    const std::size_t me = r.u32();
    const std::size_t nt = r.u32();
    const std::size_t nl = r.u32();
    constexpr std::size_t kLimit = std::size_t{1} << 26;
    if (n == 0 || n > kLimit || mi > 4096 || me > 4096 || nt > kLimit || nl > kLimit) {
        throw DataError("implausible model header in " + path.string());
    }

    const auto mean_f = r.f32(3 * n);
    const auto id_f = r.f32(3 * n * mi);
    const auto exp_f = r.f32(3 * n * me);
    const auto tri_f = r.f32(3 * nt);
    const auto uv_f = r.f32(2 * n);
    const auto lm_f = r.f32(nl);
    const auto contour_f = r.f32(nl);

    const auto rows = static_cast<Eigen::Index>(3 * n);
    Eigen::VectorXd mean = Eigen::Map<const Eigen::VectorXf>(mean_f.data(), rows).cast<double>();
    Eigen::MatrixXd id_basis = Eigen::Map<const Eigen::MatrixXf>(id_f.data(), rows, static_cast<Eigen::Index>(mi)).cast<double>();
    Eigen::MatrixXd exp_basis = Eigen::Map<const Eigen::MatrixXf>(exp_f.data(), rows, static_cast<Eigen::Index>(me)).cast<double>();
    std::vector<Triangle> triangles(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        for (std::size_t k = 0; k < 3; ++k) {
            triangles[t][k] = as_index(tri_f[3 * t + k], path);
        }
    }
    Eigen::Matrix2Xd uv = Eigen::Map<const Eigen::Matrix2Xf>(uv_f.data(), 2, static_cast<Eigen::Index>(n)).cast<double>();
    std::vector<int> landmarks(nl);
    std::vector<bool> contour(nl);
    for (std::size_t l = 0; l < nl; ++l) {
        landmarks[l] = as_index(lm_f[l], path);
        contour[l] = contour_f[l] != 0.0f;
    }
    return MorphableModel(std::move(mean), std::move(id_basis), std::move(exp_basis), std::move(triangles),
                          std::move(uv), std::move(landmarks), std::move(contour));
}

} // namespace refield
