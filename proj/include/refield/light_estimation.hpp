#pragma once

#include "refield/adadelta.hpp"
#include "refield/light_transport.hpp"
#include "refield/losses.hpp"
#include "refield/parallel.hpp"

#include <functional>
#include <optional>

namespace refield {

struct LightSolveOptions {
    /// Ridge tau; unset means 1e-6 * trace(G^T G) / N per channel.
    std::optional<double> ridge;
    bool nonnegative = false;
    /// Stationarity tolerance of the non-negative solve, relative to max |G^T I|.
    double kkt_tolerance = 1e-8;
    Exec exec = Exec::parallel;
};

struct LightSolve {
    LightWeights lambda;
    double residual = 0.0;  ///< sum over channels of ||M (sum_l lambda_l O_l - I)||^2
    double condition = 0.0; ///< largest eigenvalue ratio of the regularized normal matrix
    double ridge = 0.0;     ///< largest tau used over the channels
    bool nonnegative = false;
};

/// Least-squares light weights per channel: (G^T G + tau I) lambda = G^T I over
/// masked pixels. Throws NumericalError for a rank-deficient system when
/// tau = 0, DimensionError on size mismatches and DataError on an empty mask.
LightSolve estimate_light_lsq(const OLATSet& olats, const Image& target, const PixelMask& mask,
                              const LightSolveOptions& options = {});

double light_residual(const OLATSet& olats, const LightWeights& lambda, const Image& target, const PixelMask& mask);

/// Objective for refine_light. Without a gradient callback the gradient is
/// taken by central differences.
struct LightObjective {
    std::function<double(const LightWeights&)> value;
    std::function<LightWeights(const LightWeights&)> gradient;
};

/// The least-squares residual with its analytic gradient.
LightObjective photometric_objective(const OLATSet& olats, const Image& target, const PixelMask& mask);

struct RefineOptions {
    int steps = 100;
    AdadeltaConfig adadelta{};
    double fd_step = 1e-6;
    bool nonnegative = false; ///< clamp after each step
};

/// Adadelta descent from `initial`; returns the best lambda seen (by objective
/// value), which is `initial` when no step improves on it.
LightSolve refine_light(const LightSolve& initial, const LightObjective& objective, const RefineOptions& options = {});

} // namespace refield
