#include "refield/losses.hpp"

#include "refield/error.hpp"

#include <spdlog/spdlog.h>

#include <cmath>

namespace refield {

namespace {

void check_pair(const Image& a, const Image& b, const PixelMask& mask)
{
    if (!a.same_shape(b)) {
        throw DimensionError("image sizes differ: " + std::to_string(a.width()) + "x" + std::to_string(a.height()) +
                             " vs " + std::to_string(b.width()) + "x" + std::to_string(b.height()));
    }
    if (!mask.empty() && mask.size() != a.pixel_count()) {
        throw DimensionError("mask size does not match the image");
    }
}

bool selected(const PixelMask& mask, std::size_t p)
{
    return mask.empty() || mask[p] != 0;
}

Image masked(const Image& img, const PixelMask& mask)
{
    Image out = img;
    if (mask.empty()) {
        return out;
    }
    auto d = out.data();
    for (std::size_t p = 0; p < mask.size(); ++p) {
        if (!mask[p]) {
            d[p * 3] = d[p * 3 + 1] = d[p * 3 + 2] = 0.0;
        }
    }
    return out;
}

// 2x box downsample; odd trailing rows/columns are dropped.
Image downsample(const Image& img)
{
    Image out(img.width() / 2, img.height() / 2);
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            for (int c = 0; c < 3; ++c) {
                out.at(x, y, c) = 0.25 * (img.at(2 * x, 2 * y, c) + img.at(2 * x + 1, 2 * y, c) +
                                          img.at(2 * x, 2 * y + 1, c) + img.at(2 * x + 1, 2 * y + 1, c));
            }
        }
    }
    return out;
}

} // namespace

void LossWeights::validate() const
{
    for (double w : {landmark, photometric, regularizer, feature, alpha, beta}) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw DataError("loss weights must be finite and non-negative");
        }
    }
}

double landmark_loss(const Eigen::Matrix2Xd& predicted, const Eigen::Matrix2Xd& observed)
{
    if (predicted.cols() != observed.cols()) {
        throw DimensionError("landmark counts differ");
    }
    if (predicted.hasNaN() || observed.hasNaN()) {
        throw NumericalError("landmark_loss received NaN coordinates");
    }
    return (predicted - observed).squaredNorm();
}

double geometry_regularizer(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, const LossWeights& weights)
{
    return weights.alpha * alpha.squaredNorm() + weights.beta * beta.squaredNorm();
}

double photometric_l1(const Image& rendered, const Image& target, const PixelMask& mask)
{
    check_pair(rendered, target, mask);
    const auto r = rendered.data();
    const auto t = target.data();
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
        if (!selected(mask, p)) {
            continue;
        }
        ++count;
        for (int c = 0; c < 3; ++c) {
            sum += std::abs(r[p * 3 + c] - t[p * 3 + c]);
        }
    }
    if (count == 0) {
        spdlog::warn("photometric_l1: empty mask");
        return 0.0;
    }
    return sum / static_cast<double>(count);
}

Image photometric_l1_gradient(const Image& rendered, const Image& target, const PixelMask& mask)
{
    check_pair(rendered, target, mask);
    Image grad(rendered.width(), rendered.height());
    std::size_t count = 0;
    for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
        count += selected(mask, p) ? 1 : 0;
    }
    if (count == 0) {
        return grad;
    }
    const double inv = 1.0 / static_cast<double>(count);
    const auto r = rendered.data();
    const auto t = target.data();
    auto g = grad.data();
    for (std::size_t p = 0; p < rendered.pixel_count(); ++p) {
        if (!selected(mask, p)) {
            continue;
        }
        for (int c = 0; c < 3; ++c) {
            const double d = r[p * 3 + c] - t[p * 3 + c];
            g[p * 3 + c] = d > 0.0 ? inv : (d < 0.0 ? -inv : 0.0);
        }
    }
    return grad;
}

double total_loss(const LossComponents& c, const LossWeights& w)
{
    return w.landmark * c.landmark + w.photometric * c.photometric + w.regularizer * c.regularizer +
           w.feature * c.feature;
}

double si_mse(const Image& predicted, const Image& target, const PixelMask& mask)
{
    check_pair(predicted, target, mask);
    const auto p = predicted.data();
    const auto t = target.data();
    double pp = 0.0;
    double pt = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < predicted.pixel_count(); ++i) {
        if (!selected(mask, i)) {
            continue;
        }
        n += 3;
        for (int c = 0; c < 3; ++c) {
            pp += p[i * 3 + c] * p[i * 3 + c];
            pt += p[i * 3 + c] * t[i * 3 + c];
        }
    }
    if (n == 0) {
        return 0.0;
    }
    const double s = pp > 0.0 ? pt / pp : 0.0;
    double err = 0.0;
    for (std::size_t i = 0; i < predicted.pixel_count(); ++i) {
        if (!selected(mask, i)) {
            continue;
        }
        for (int c = 0; c < 3; ++c) {
            const double d = s * p[i * 3 + c] - t[i * 3 + c];
            err += d * d;
        }
    }
    return err / static_cast<double>(n);
}

double mse(const Image& predicted, const Image& target, const PixelMask& mask)
{
    check_pair(predicted, target, mask);
    const auto p = predicted.data();
    const auto t = target.data();
    double err = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < predicted.pixel_count(); ++i) {
        if (!selected(mask, i)) {
            continue;
        }
        n += 3;
        for (int c = 0; c < 3; ++c) {
            const double d = p[i * 3 + c] - t[i * 3 + c];
            err += d * d;
        }
    }
    return n == 0 ? 0.0 : err / static_cast<double>(n);
}

double pyramid_loss(const Image& rendered, const Image& target, const PixelMask& mask, int levels)
{
    check_pair(rendered, target, mask);
    Image r = masked(rendered, mask);
    Image t = masked(target, mask);
    double loss = 0.0;
    for (int level = 0; level < levels && !r.empty(); ++level) {
        loss += mse(r, t);
        r = downsample(r);
        t = downsample(t);
    }
    return loss;
}

Image pyramid_loss_gradient(const Image& rendered, const Image& target, const PixelMask& mask, int levels)
{
    check_pair(rendered, target, mask);
    std::vector<Image> diffs;
    Image r = masked(rendered, mask);
    Image t = masked(target, mask);
    for (int level = 0; level < levels && !r.empty(); ++level) {
        Image d = r;
        auto dd = d.data();
        const auto td = t.data();
        const double scale = 2.0 / static_cast<double>(dd.size());
        for (std::size_t i = 0; i < dd.size(); ++i) {
            dd[i] = scale * (dd[i] - td[i]);
        }
        diffs.push_back(std::move(d));
        r = downsample(r);
        t = downsample(t);
    }
    // Pull coarse gradients back up through the transposed box filter.
    Image grad = diffs.back();
    for (int level = static_cast<int>(diffs.size()) - 2; level >= 0; --level) {
        Image up = diffs[static_cast<std::size_t>(level)];
        for (int y = 0; y < grad.height(); ++y) {
            for (int x = 0; x < grad.width(); ++x) {
                for (int c = 0; c < 3; ++c) {
                    const double g = 0.25 * grad.at(x, y, c);
                    up.at(2 * x, 2 * y, c) += g;
                    up.at(2 * x + 1, 2 * y, c) += g;
                    up.at(2 * x, 2 * y + 1, c) += g;
                    up.at(2 * x + 1, 2 * y + 1, c) += g;
                }
            }
        }
        grad = std::move(up);
    }
    if (!mask.empty()) {
        auto g = grad.data();
        for (std::size_t p = 0; p < mask.size(); ++p) {
            if (!mask[p]) {
                g[p * 3] = g[p * 3 + 1] = g[p * 3 + 2] = 0.0;
            }
        }
    }
    return grad;
}

} // namespace refield
