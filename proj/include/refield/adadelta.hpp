#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace refield {

struct AdadeltaConfig {
    double rho = 0.95;
    double epsilon = 1e-6;
    double learning_rate = 0.05;
};

/// Running averages of squared gradients and squared updates, one pair per parameter.
struct AdadeltaState {
    AdadeltaConfig config;
    std::vector<double> mean_sq_grad;
    std::vector<double> mean_sq_update;

    AdadeltaState() = default;
    AdadeltaState(std::size_t size, AdadeltaConfig cfg = {})
        : config(cfg), mean_sq_grad(size, 0.0), mean_sq_update(size, 0.0)
    {
    }
    std::size_t size() const { return mean_sq_grad.size(); }
};

/// One Adadelta update, in place:
///   E[g^2]  <- rho E[g^2] + (1 - rho) g^2
///   d       = -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
///   E[dx^2] <- rho E[dx^2] + (1 - rho) d^2
///   x       <- x + lr * d
/// Throws DimensionError when the spans and the state disagree in length.
void adadelta_step(AdadeltaState& state, std::span<double> params, std::span<const double> grads);

} // namespace refield
