#include "refield/light_estimation.hpp"

#include "refield/error.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace refield {

namespace {

constexpr Eigen::Index kAssemblyBlock = 2048;

void check_inputs(const OLATSet& olats, const Image& target, const PixelMask& mask)
{
    if (olats.images.empty()) {
        throw DimensionError("OLAT set is empty");
    }
    for (std::size_t l = 0; l < olats.images.size(); ++l) {
        if (!olats.images[l].same_shape(target)) {
            throw DimensionError("OLAT " + std::to_string(l) + " is " + std::to_string(olats.images[l].width()) + "x" +
                                 std::to_string(olats.images[l].height()) + " but the target is " +
                                 std::to_string(target.width()) + "x" + std::to_string(target.height()));
        }
    }
    if (!mask.empty() && mask.size() != target.pixel_count()) {
        throw DimensionError("mask size does not match the target");
    }
}

std::vector<std::size_t> masked_pixels(const Image& target, const PixelMask& mask)
{
    std::vector<std::size_t> pixels;
    for (std::size_t p = 0; p < target.pixel_count(); ++p) {
        if (mask.empty() || mask[p]) {
            pixels.push_back(p);
        }
    }
    return pixels;
}

// Normal matrix and right-hand side of one channel, summed over fixed pixel
// blocks in block order.
void assemble(const OLATSet& olats, const Image& target, const std::vector<std::size_t>& pixels, int channel,
              Exec exec, Eigen::MatrixXd& ata, Eigen::VectorXd& atb)
{
    const auto n = static_cast<Eigen::Index>(olats.images.size());
    const auto rows = static_cast<Eigen::Index>(pixels.size());
    const Eigen::Index blocks = (rows + kAssemblyBlock - 1) / kAssemblyBlock;
    std::vector<Eigen::MatrixXd> part_a(static_cast<std::size_t>(blocks));
    std::vector<Eigen::VectorXd> part_b(static_cast<std::size_t>(blocks));
    const auto t = target.data();
    const auto body = [&](Eigen::Index b) {
        const Eigen::Index begin = b * kAssemblyBlock;
        const Eigen::Index len = std::min(kAssemblyBlock, rows - begin);
        Eigen::MatrixXd g(len, n);
        Eigen::VectorXd y(len);
        for (Eigen::Index r = 0; r < len; ++r) {
            const std::size_t p = pixels[static_cast<std::size_t>(begin + r)] * 3 + static_cast<std::size_t>(channel);
            y(r) = t[p];
            for (Eigen::Index l = 0; l < n; ++l) {
                g(r, l) = olats.images[static_cast<std::size_t>(l)].data()[p];
            }
        }
        Eigen::MatrixXd a = Eigen::MatrixXd::Zero(n, n);
        a.selfadjointView<Eigen::Lower>().rankUpdate(g.transpose());
        part_a[static_cast<std::size_t>(b)] = a.selfadjointView<Eigen::Lower>();
        part_b[static_cast<std::size_t>(b)] = g.transpose() * y;
    };
    if (exec == Exec::serial) {
        for (Eigen::Index b = 0; b < blocks; ++b) {
            body(b);
        }
    } else {
#pragma omp parallel for schedule(dynamic)
        for (Eigen::Index b = 0; b < blocks; ++b) {
            body(b);
        }
    }
    ata = Eigen::MatrixXd::Zero(n, n);
    atb = Eigen::VectorXd::Zero(n);
    for (Eigen::Index b = 0; b < blocks; ++b) {
        ata += part_a[static_cast<std::size_t>(b)];
        atb += part_b[static_cast<std::size_t>(b)];
    }
}

// Lawson-Hanson active set on min 1/2 x'Ax - b'x subject to x >= 0, A SPD.
Eigen::VectorXd nonnegative_solve(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double tolerance)
{
    const Eigen::Index n = b.size();
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    std::vector<bool> passive(static_cast<std::size_t>(n), false);
    const double tol = tolerance * std::max(1e-300, b.cwiseAbs().maxCoeff());

    const auto solve_passive = [&](Eigen::VectorXd& s) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (passive[static_cast<std::size_t>(i)]) {
                idx.push_back(i);
            }
        }
        const auto k = static_cast<Eigen::Index>(idx.size());
        Eigen::MatrixXd ap(k, k);
        Eigen::VectorXd bp(k);
        for (Eigen::Index i = 0; i < k; ++i) {
            bp(i) = b(idx[static_cast<std::size_t>(i)]);
            for (Eigen::Index j = 0; j < k; ++j) {
                ap(i, j) = a(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
            }
        }
        const Eigen::VectorXd sp = ap.ldlt().solve(bp);
        s = Eigen::VectorXd::Zero(n);
        for (Eigen::Index i = 0; i < k; ++i) {
            s(idx[static_cast<std::size_t>(i)]) = sp(i);
        }
    };

    const int max_outer = static_cast<int>(3 * n + 10);
    for (int outer = 0; outer < max_outer; ++outer) {
        const Eigen::VectorXd w = b - a * x;
        Eigen::Index best = -1;
        double best_w = tol;
        for (Eigen::Index i = 0; i < n; ++i) {
            if (!passive[static_cast<std::size_t>(i)] && w(i) > best_w) {
                best_w = w(i);
                best = i;
            }
        }
        if (best < 0) {
            break;
        }
        passive[static_cast<std::size_t>(best)] = true;
        for (int inner = 0; inner <= n; ++inner) {
            Eigen::VectorXd s;
            solve_passive(s);
            double step = 1.0;
            bool feasible = true;
            for (Eigen::Index i = 0; i < n; ++i) {
                if (passive[static_cast<std::size_t>(i)] && s(i) <= 0.0) {
                    feasible = false;
                    const double denom = x(i) - s(i);
                    if (denom > 0.0) {
                        step = std::min(step, x(i) / denom);
                    }
                }
            }
            if (feasible) {
                x = s;
                break;
            }
            x += step * (s - x);
            for (Eigen::Index i = 0; i < n; ++i) {
                if (passive[static_cast<std::size_t>(i)] && x(i) <= 1e-300) {
                    passive[static_cast<std::size_t>(i)] = false;
                    x(i) = 0.0;
                }
            }
        }
    }
    // KKT: zero gradient on the passive set, non-positive gradient elsewhere.
    const Eigen::VectorXd w = b - a * x;
    double kkt = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        kkt = std::max(kkt, x(i) > 0.0 ? std::abs(w(i)) : std::max(0.0, w(i)));
    }
    if (kkt > tol * 10.0) {
        throw NumericalError("non-negative light solve did not reach the KKT tolerance (residual " +
                             std::to_string(kkt) + ")");
    }
    return x;
}

LightWeights numeric_gradient(const LightObjective& objective, const LightWeights& lambda, double h)
{
    LightWeights grad(lambda.rows(), 3);
    LightWeights probe = lambda;
    for (Eigen::Index i = 0; i < lambda.rows(); ++i) {
        for (int c = 0; c < 3; ++c) {
            const double orig = probe(i, c);
            probe(i, c) = orig + h;
            const double up = objective.value(probe);
            probe(i, c) = orig - h;
            const double down = objective.value(probe);
            probe(i, c) = orig;
            grad(i, c) = (up - down) / (2.0 * h);
        }
    }
    return grad;
}

} // namespace

double light_residual(const OLATSet& olats, const LightWeights& lambda, const Image& target, const PixelMask& mask)
{
    check_inputs(olats, target, mask);
    const Image sum = relight_sum(olats, lambda);
    const auto s = sum.data();
    const auto t = target.data();
    double r = 0.0;
    for (std::size_t p = 0; p < target.pixel_count(); ++p) {
        if (!mask.empty() && !mask[p]) {
            continue;
        }
        for (int c = 0; c < 3; ++c) {
            const double d = s[p * 3 + c] - t[p * 3 + c];
            r += d * d;
        }
    }
    return r;
}

LightSolve estimate_light_lsq(const OLATSet& olats, const Image& target, const PixelMask& mask,
                              const LightSolveOptions& options)
{
    check_inputs(olats, target, mask);
    if (options.ridge && !(*options.ridge >= 0.0)) {
        throw DataError("ridge must be non-negative");
    }
    const std::vector<std::size_t> pixels = masked_pixels(target, mask);
    if (pixels.empty()) {
        throw DataError("light estimation mask is empty");
    }
    const auto n = static_cast<Eigen::Index>(olats.images.size());
    LightSolve out;
    out.lambda = LightWeights::Zero(n, 3);
    out.nonnegative = options.nonnegative;
    for (int c = 0; c < 3; ++c) {
        Eigen::MatrixXd ata;
        Eigen::VectorXd atb;
        assemble(olats, target, pixels, c, options.exec, ata, atb);
        const double tau = options.ridge ? *options.ridge : 1e-6 * ata.trace() / static_cast<double>(n);
        ata.diagonal().array() += tau;
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(ata, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        if (tau == 0.0 && !(lo > hi * 1e-13)) {
            throw NumericalError("OLAT normal matrix is rank deficient in channel " + std::to_string(c) +
                                 "; use a positive ridge");
        }
        out.condition = std::max(out.condition, lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity());
        out.ridge = std::max(out.ridge, tau);
        Eigen::VectorXd x;
        if (options.nonnegative) {
            x = nonnegative_solve(ata, atb, options.kkt_tolerance);
        } else {
            const Eigen::LLT<Eigen::MatrixXd> llt(ata);
            if (llt.info() != Eigen::Success) {
                throw NumericalError("OLAT normal matrix is not positive definite; increase the ridge");
            }
            x = llt.solve(atb);
        }
        if (!x.allFinite()) {
            throw NumericalError("light solve produced non-finite weights");
        }
        out.lambda.col(c) = x;
    }
    out.residual = light_residual(olats, out.lambda, target, mask);
    return out;
}

LightObjective photometric_objective(const OLATSet& olats, const Image& target, const PixelMask& mask)
{
    check_inputs(olats, target, mask);
    LightObjective obj;
    obj.value = [&olats, &target, mask](const LightWeights& lambda) {
        return light_residual(olats, lambda, target, mask);
    };
    obj.gradient = [&olats, &target, mask](const LightWeights& lambda) {
        const Image sum = relight_sum(olats, lambda);
        const auto s = sum.data();
        const auto t = target.data();
        LightWeights grad = LightWeights::Zero(lambda.rows(), 3);
        for (std::size_t l = 0; l < olats.images.size(); ++l) {
            const auto o = olats.images[l].data();
            for (std::size_t p = 0; p < target.pixel_count(); ++p) {
                if (!mask.empty() && !mask[p]) {
                    continue;
                }
                for (int c = 0; c < 3; ++c) {
                    grad(static_cast<Eigen::Index>(l), c) += 2.0 * (s[p * 3 + c] - t[p * 3 + c]) * o[p * 3 + c];
                }
            }
        }
        return grad;
    };
    return obj;
}

LightSolve refine_light(const LightSolve& initial, const LightObjective& objective, const RefineOptions& options)
{
    if (!objective.value) {
        throw Error("refine_light needs an objective");
    }
    LightSolve best = initial;
    best.residual = objective.value(initial.lambda);
    if (!std::isfinite(best.residual)) {
        throw NumericalError("light objective is not finite at the initial weights");
    }
    LightWeights lambda = initial.lambda;
    AdadeltaState state(static_cast<std::size_t>(lambda.size()), options.adadelta);
    for (int step = 0; step < options.steps; ++step) {
        const LightWeights grad =
            objective.gradient ? objective.gradient(lambda) : numeric_gradient(objective, lambda, options.fd_step);
        adadelta_step(state, std::span<double>(lambda.data(), static_cast<std::size_t>(lambda.size())),
                      std::span<const double>(grad.data(), static_cast<std::size_t>(grad.size())));
        if (options.nonnegative) {
            lambda = lambda.cwiseMax(0.0);
        }
        const double value = objective.value(lambda);
        if (std::isfinite(value) && value < best.residual) {
            best.residual = value;
            best.lambda = lambda;
        }
    }
    return best;
}

} // namespace refield
