#include "refield/adadelta.hpp"

#include "refield/error.hpp"

#include <cmath>

namespace refield {

void adadelta_step(AdadeltaState& state, std::span<double> params, std::span<const double> grads)
{
    if (params.size() != grads.size() || params.size() != state.size()) {
        throw DimensionError("adadelta: parameter, gradient and state sizes differ");
    }
    const double rho = state.config.rho;
    const double eps = state.config.epsilon;
    const double lr = state.config.learning_rate;
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        double& eg2 = state.mean_sq_grad[i];
        double& edx2 = state.mean_sq_update[i];
        eg2 = rho * eg2 + (1.0 - rho) * g * g;
        const double delta = -std::sqrt((edx2 + eps) / (eg2 + eps)) * g;
        edx2 = rho * edx2 + (1.0 - rho) * delta * delta;
        params[i] += lr * delta;
    }
}

} // namespace refield
