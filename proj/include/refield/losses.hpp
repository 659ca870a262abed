#pragma once

#include "refield/image.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace refield {

/// Per-pixel mask; an empty vector means every pixel counts.
using PixelMask = std::vector<std::uint8_t>;

struct LossWeights {
    double landmark = 25.0;    ///< lambda_l
    double photometric = 5.0;  ///< lambda_p
    double regularizer = 1.0;  ///< lambda_r
    double feature = 1.0;      ///< lambda_f
    double alpha = 0.4;        ///< lambda_alpha
    double beta = 0.002;       ///< lambda_beta
    void validate() const;
};

struct LossComponents {
    double landmark = 0.0;
    double photometric = 0.0;
    double regularizer = 0.0;
    double feature = 0.0; ///< zero unless the pyramid surrogate is enabled
};

/// Sum of squared pixel distances. Throws NumericalError on NaN input.
double landmark_loss(const Eigen::Matrix2Xd& predicted, const Eigen::Matrix2Xd& observed);

double geometry_regularizer(const Eigen::VectorXd& alpha, const Eigen::VectorXd& beta, const LossWeights& weights);

/// Masked L1 over channels divided by the number of masked pixels. An empty
/// mask selection returns 0 and logs a warning.
double photometric_l1(const Image& rendered, const Image& target, const PixelMask& mask);

/// d photometric_l1 / d rendered (sign(r - t) / count on masked pixels, 0 at ties).
Image photometric_l1_gradient(const Image& rendered, const Image& target, const PixelMask& mask);

double total_loss(const LossComponents& components, const LossWeights& weights);

/// Scale-invariant MSE: min over one global scalar s of mean((sP - T)^2)
/// over masked pixel-channels. If <P,P> = 0 the scale is 0.
double si_mse(const Image& predicted, const Image& target, const PixelMask& mask = {});
double mse(const Image& predicted, const Image& target, const PixelMask& mask = {});

/// Optional feature-loss stand-in: mean squared error summed over a
/// `levels`-deep 2x box-filtered pyramid of the masked images.
double pyramid_loss(const Image& rendered, const Image& target, const PixelMask& mask, int levels = 3);
Image pyramid_loss_gradient(const Image& rendered, const Image& target, const PixelMask& mask, int levels = 3);

} // namespace refield
