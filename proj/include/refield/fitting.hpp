#pragma once

#include "refield/adadelta.hpp"
#include "refield/geometry.hpp"

#include <optional>
#include <vector>

namespace refield {

enum class FitSolver { levenberg_marquardt, adadelta };

struct GeometryFitConfig {
    double landmark_weight = 25.0; ///< lambda_l
    double alpha_weight = 0.4;     ///< lambda_alpha
    double beta_weight = 0.002;    ///< lambda_beta
    int max_iterations = 100;
    FitSolver solver = FitSolver::levenberg_marquardt;
    /// Used when solver == adadelta.
    AdadeltaConfig adadelta{0.95, 1e-6, 1.0};
    /// Stop once the relative loss decrease of an accepted step falls below this.
    double tolerance = 1e-14;
    /// Re-bind contour landmarks to the nearest visible vertex every iteration.
    bool rebind_contour = true;
};

struct GeometryFitResult {
    FaceParams params;
    double loss = 0.0;          ///< lambda_l * L_l + lambda_a |a|^2 + lambda_b |b|^2
    double landmark_rmse = 0.0; ///< pixels
    int iterations = 0;
};

/// Packed parameter layout used by the objective: [alpha, beta, q.w, q.x, q.y, q.z, t].
Eigen::VectorXd pack_params(const FaceParams& params);
FaceParams unpack_params(const Eigen::VectorXd& packed, int identity_dims, int expression_dims);

/// Landmark + regularizer objective for a fixed landmark-to-vertex binding.
/// The quaternion entries need not be unit; the rotation of q / |q| is used.
/// When `gradient` is non-null it receives d(objective)/d(packed params).
double landmark_objective(const MorphableModel& model, const Camera& camera, const Eigen::Matrix2Xd& observed,
                          const Eigen::VectorXd& packed, const std::vector<int>& binding,
                          const GeometryFitConfig& config, Eigen::VectorXd* gradient = nullptr);

/// Rough pose from landmark centroid and spread, mean shape, no rotation.
FaceParams initial_pose_guess(const MorphableModel& model, const Camera& camera, const Eigen::Matrix2Xd& observed);

/// Analysis-by-synthesis fit of identity, expression and pose to 2D landmarks.
/// Contour landmarks are re-bound once per iteration before the gradient is
/// evaluated. Throws NumericalError (naming the iteration) if the loss diverges.
GeometryFitResult fit_geometry(const Eigen::Matrix2Xd& observed, const MorphableModel& model, const Camera& camera,
                               const GeometryFitConfig& config = {},
                               const std::optional<FaceParams>& init = std::nullopt);

} // namespace refield
