#include "refield/fitting.hpp"

#include "refield/error.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <string>

namespace refield {

namespace {

struct Layout {
    int mi;
    int me;
    int q() const { return mi + me; }
    int t() const { return mi + me + 4; }
    int size() const { return mi + me + 7; }
};

/// Rotated point g(q) = q x q* (scaled by |q|^2) and its partials.
struct QuaternionRotation {
    Eigen::Vector3d value;
    Eigen::Matrix<double, 3, 4> jacobian; // d(value)/d(w, x, y, z)
};

QuaternionRotation rotate_unnormalized(const Eigen::Vector4d& q, const Eigen::Vector3d& x)
{
    const double w = q(0);
    const Eigen::Vector3d u = q.tail<3>();
    const double s = q.squaredNorm();
    const double ux = u.dot(x);
    const Eigen::Vector3d uxx = u.cross(x);
    const Eigen::Vector3d g = (w * w - u.squaredNorm()) * x + 2.0 * ux * u + 2.0 * w * uxx;

    Eigen::Matrix<double, 3, 4> dg;
    dg.col(0) = 2.0 * w * x + 2.0 * uxx;
    for (int k = 0; k < 3; ++k) {
        const Eigen::Vector3d e = Eigen::Vector3d::Unit(k);
        dg.col(k + 1) = -2.0 * u(k) * x + 2.0 * x(k) * u + 2.0 * ux * e + 2.0 * w * e.cross(x);
    }
    QuaternionRotation out;
    out.value = g / s;
    for (int i = 0; i < 4; ++i) {
        out.jacobian.col(i) = dg.col(i) / s - g * (2.0 * q(i) / (s * s));
    }
    return out;
}

/// Residuals r (sum of squares == objective) and optionally their Jacobian.
void residuals(const MorphableModel& model, const Camera& camera, const Eigen::Matrix2Xd& observed,
               const Eigen::VectorXd& packed, const std::vector<int>& binding, const GeometryFitConfig& config,
               Eigen::VectorXd& r, Eigen::MatrixXd* jac)
{
    const Layout lay{model.identity_dims(), model.expression_dims()};
    const auto nl = static_cast<Eigen::Index>(binding.size());
    const Eigen::VectorXd alpha = packed.head(lay.mi);
    const Eigen::VectorXd beta = packed.segment(lay.mi, lay.me);
    const Eigen::Vector4d q = packed.segment<4>(lay.q());
    const Eigen::Vector3d t = packed.segment<3>(lay.t());
    const double sl = std::sqrt(config.landmark_weight);
    const double sa = std::sqrt(config.alpha_weight);
    const double sb = std::sqrt(config.beta_weight);

    r.resize(2 * nl + lay.mi + lay.me);
    if (jac) {
        jac->setZero(r.size(), lay.size());
    }
    for (Eigen::Index l = 0; l < nl; ++l) {
        const auto row = 3 * binding[static_cast<std::size_t>(l)];
        Eigen::Vector3d x = model.mean().segment<3>(row);
        if (lay.mi > 0) {
            x += model.id_basis().middleRows<3>(row) * alpha;
        }
        if (lay.me > 0) {
            x += model.exp_basis().middleRows<3>(row) * beta;
        }
        const QuaternionRotation rot = rotate_unnormalized(q, x);
        const Eigen::Vector3d p = rot.value + t;
        if (!(p.z() > 0.0)) {
            throw NumericalError("landmark vertex moved behind the camera during fitting");
        }
        const double iz = 1.0 / p.z();
        r(2 * l) = sl * (camera.principal_point.x() + camera.focal * p.x() * iz - observed(0, l));
        r(2 * l + 1) = sl * (camera.principal_point.y() + camera.focal * p.y() * iz - observed(1, l));
        if (!jac) {
            continue;
        }
        Eigen::Matrix<double, 2, 3> dproj;
        dproj << iz, 0.0, -p.x() * iz * iz, 0.0, iz, -p.y() * iz * iz;
        dproj *= sl * camera.focal;
        // d(rotated x)/d(x) for a normalized rotation equals the rotation matrix.
        const Eigen::Matrix3d rmat = Eigen::Quaterniond(q(0), q(1), q(2), q(3)).normalized().toRotationMatrix();
        const Eigen::Matrix<double, 2, 3> dx = dproj * rmat;
        if (lay.mi > 0) {
            jac->block(2 * l, 0, 2, lay.mi) = dx * model.id_basis().middleRows<3>(row);
        }
        if (lay.me > 0) {
            jac->block(2 * l, lay.mi, 2, lay.me) = dx * model.exp_basis().middleRows<3>(row);
        }
        jac->block<2, 4>(2 * l, lay.q()) = dproj * rot.jacobian;
        jac->block<2, 3>(2 * l, lay.t()) = dproj;
    }
    r.segment(2 * nl, lay.mi) = sa * alpha;
    r.segment(2 * nl + lay.mi, lay.me) = sb * beta;
    if (jac) {
        for (int i = 0; i < lay.mi; ++i) {
            (*jac)(2 * nl + i, i) = sa;
        }
        for (int i = 0; i < lay.me; ++i) {
            (*jac)(2 * nl + lay.mi + i, lay.mi + i) = sb;
        }
    }
}

std::vector<int> current_binding(const MorphableModel& model, const Camera& camera, const Eigen::Matrix2Xd& observed,
                                 const Eigen::VectorXd& packed, bool rebind = true)
{
    if (!rebind) {
        return model.landmark_indices();
    }
    const FaceParams p = unpack_params(packed, model.identity_dims(), model.expression_dims());
    const Mesh mesh = pose_to_camera(build_mesh(model, p.alpha, p.beta), p);
    return landmarks_2d(mesh, camera, model, observed).vertex_indices;
}

double landmark_rmse(const MorphableModel& model, const Camera& camera, const Eigen::Matrix2Xd& observed,
                     const Eigen::VectorXd& packed, const std::vector<int>& binding)
{
    GeometryFitConfig unit;
    unit.landmark_weight = 1.0;
    unit.alpha_weight = 0.0;
    unit.beta_weight = 0.0;
    Eigen::VectorXd r;
    residuals(model, camera, observed, packed, binding, unit, r, nullptr);
    return std::sqrt(r.head(2 * observed.cols()).squaredNorm() / static_cast<double>(observed.cols()));
}

void normalize_quaternion(Eigen::VectorXd& packed, int offset)
{
    packed.segment<4>(offset).normalize();
}

void check_finite(double loss, int iteration)
{
    if (!std::isfinite(loss)) {
        throw NumericalError("geometry fit diverged (non-finite loss) at iteration " + std::to_string(iteration));
    }
}

} // namespace

Eigen::VectorXd pack_params(const FaceParams& params)
{
    const Layout lay{static_cast<int>(params.alpha.size()), static_cast<int>(params.beta.size())};
    Eigen::VectorXd packed(lay.size());
    packed.head(lay.mi) = params.alpha;
    packed.segment(lay.mi, lay.me) = params.beta;
    packed.segment<4>(lay.q()) << params.rotation.w(), params.rotation.x(), params.rotation.y(), params.rotation.z();
    packed.segment<3>(lay.t()) = params.translation;
    return packed;
}

FaceParams unpack_params(const Eigen::VectorXd& packed, int identity_dims, int expression_dims)
{
    const Layout lay{identity_dims, expression_dims};
    if (packed.size() != lay.size()) {
        throw DimensionError("packed parameter vector has the wrong length");
    }
    FaceParams p;
    p.alpha = packed.head(lay.mi);
    p.beta = packed.segment(lay.mi, lay.me);
    p.rotation = Eigen::Quaterniond(packed(lay.q()), packed(lay.q() + 1), packed(lay.q() + 2), packed(lay.q() + 3)).normalized();
    p.translation = packed.segment<3>(lay.t());
    return p;
}

double landmark_objective(const MorphableModel& model, const Camera& camera, const Eigen::Matrix2Xd& observed,
                          const Eigen::VectorXd& packed, const std::vector<int>& binding,
                          const GeometryFitConfig& config, Eigen::VectorXd* gradient)
{
    if (observed.cols() != static_cast<Eigen::Index>(binding.size())) {
        throw DimensionError("observation count does not match the landmark binding");
    }
    Eigen::VectorXd r;
    if (gradient) {
        Eigen::MatrixXd jac;
        residuals(model, camera, observed, packed, binding, config, r, &jac);
        *gradient = 2.0 * jac.transpose() * r;
    } else {
        residuals(model, camera, observed, packed, binding, config, r, nullptr);
    }
    return r.squaredNorm();
}

FaceParams initial_pose_guess(const MorphableModel& model, const Camera& camera, const Eigen::Matrix2Xd& observed)
{
    FaceParams p = FaceParams::zeros(model);
    const Mesh canonical = pose_to_camera(build_mesh(model, p.alpha, p.beta), p);
    const Eigen::Matrix2Xd ref = landmarks_2d(canonical, camera, model).points;
    const Eigen::Vector2d ref_c = ref.rowwise().mean();
    const Eigen::Vector2d obs_c = observed.rowwise().mean();
    const double ref_spread = std::sqrt((ref.colwise() - ref_c).squaredNorm());
    const double obs_spread = std::sqrt((observed.colwise() - obs_c).squaredNorm());
    if (obs_spread > 0.0 && std::isfinite(obs_spread)) {
        p.translation.z() = kDefaultFaceDepth * ref_spread / obs_spread;
    }
    // Shift so the landmark centroid lands on the observed centroid.
    const Eigen::Vector2d shift = (obs_c - camera.principal_point) * p.translation.z() / camera.focal -
                                  (ref_c - camera.principal_point) * kDefaultFaceDepth / camera.focal;
    p.translation.x() = shift.x();
    p.translation.y() = shift.y();
    return p;
}

GeometryFitResult fit_geometry(const Eigen::Matrix2Xd& observed, const MorphableModel& model, const Camera& camera,
                               const GeometryFitConfig& config, const std::optional<FaceParams>& init)
{
    camera.validate();
    if (observed.cols() != static_cast<Eigen::Index>(model.landmark_indices().size())) {
        throw DimensionError("observed landmark count does not match the model");
    }
    if (!observed.allFinite()) {
        throw DataError("observed landmarks contain non-finite values");
    }
    const Layout lay{model.identity_dims(), model.expression_dims()};
    Eigen::VectorXd x = pack_params(init ? *init : initial_pose_guess(model, camera, observed));
    normalize_quaternion(x, lay.q());

    std::vector<int> binding = current_binding(model, camera, observed, x, false);
    double loss = landmark_objective(model, camera, observed, x, binding, config);
    check_finite(loss, 0);

    // Contour re-binding starts once a fit with the model's own landmark
    // vertices has settled; re-binding from a poor initial pose locks the
    // contour onto wrong vertices.
    bool rebinding = false;
    int iter = 0;
    if (config.solver == FitSolver::levenberg_marquardt) {
        double damping = 1e-3;
        for (; iter < config.max_iterations; ++iter) {
            binding = current_binding(model, camera, observed, x, rebinding);
            Eigen::VectorXd r;
            Eigen::MatrixXd jac;
            residuals(model, camera, observed, x, binding, config, r, &jac);
            loss = r.squaredNorm();
            check_finite(loss, iter);
            const Eigen::MatrixXd jtj = jac.transpose() * jac;
            const Eigen::VectorXd jtr = jac.transpose() * r;
            bool accepted = false;
            double new_loss = loss;
            for (int attempt = 0; attempt < 30 && !accepted; ++attempt) {
                Eigen::MatrixXd a = jtj;
                a.diagonal() += damping * (jtj.diagonal().array() + 1e-9).matrix();
                const Eigen::VectorXd step = a.ldlt().solve(-jtr);
                Eigen::VectorXd candidate = x + step;
                normalize_quaternion(candidate, lay.q());
                try {
                    new_loss = landmark_objective(model, camera, observed, candidate, binding, config);
                } catch (const NumericalError&) {
                    new_loss = std::numeric_limits<double>::infinity();
                }
                if (std::isfinite(new_loss) && new_loss <= loss) {
                    x = candidate;
                    damping = std::max(damping / 3.0, 1e-12);
                    accepted = true;
                } else {
                    damping *= 4.0;
                }
            }
            if (!accepted) {
                new_loss = loss;
            }
            const bool converged = !accepted || loss - new_loss <= config.tolerance * std::max(loss, 1e-300);
            loss = new_loss;
            if (converged) {
                if (config.rebind_contour && !rebinding) {
                    rebinding = true;
                    damping = 1e-3;
                    continue;
                }
                ++iter;
                break;
            }
        }
    } else {
        AdadeltaState state(static_cast<std::size_t>(x.size()), config.adadelta);
        Eigen::VectorXd best = x;
        double best_loss = loss;
        for (; iter < config.max_iterations; ++iter) {
            rebinding = config.rebind_contour && iter >= config.max_iterations / 2;
            binding = current_binding(model, camera, observed, x, rebinding);
            Eigen::VectorXd grad;
            const double value = landmark_objective(model, camera, observed, x, binding, config, &grad);
            check_finite(value, iter);
            if (value < best_loss) {
                best_loss = value;
                best = x;
            }
            adadelta_step(state, std::span<double>(x.data(), static_cast<std::size_t>(x.size())),
                          std::span<const double>(grad.data(), static_cast<std::size_t>(grad.size())));
            normalize_quaternion(x, lay.q());
        }
        binding = current_binding(model, camera, observed, x, config.rebind_contour);
        const double final_loss = landmark_objective(model, camera, observed, x, binding, config);
        check_finite(final_loss, iter);
        if (final_loss > best_loss) {
            x = best;
        }
    }

    binding = current_binding(model, camera, observed, x, config.rebind_contour);
    GeometryFitResult result;
    result.params = unpack_params(x, lay.mi, lay.me);
    result.loss = landmark_objective(model, camera, observed, x, binding, config);
    result.landmark_rmse = landmark_rmse(model, camera, observed, x, binding);
    result.iterations = iter;
    return result;
}

} // namespace refield
