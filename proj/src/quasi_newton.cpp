#include "rsdcm/quasi_newton.hpp"

#include <cmath>

#include "rsdcm/errors.hpp"

namespace rsdcm {

namespace {

void apply_mask(Vec& v, const std::vector<char>& mask) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!mask[static_cast<std::size_t>(i)]) v(i) = 0.0;
}

}  // namespace

QuasiNewtonResult minimize_bfgs(const std::function<double(const Vec&, Vec*)>& objective,
                                const std::function<bool(const Vec&)>& feasible, Vec x0,
                                const std::vector<char>& free_mask,
                                const QuasiNewtonOptions& opts) {
    const Eigen::Index dim = x0.size();
    if (static_cast<Eigen::Index>(free_mask.size()) != dim)
        throw InvalidArgumentError("mask length must match the variable count");
    if (!feasible(x0)) throw NumericalError("optimizer start point is infeasible");

    Vec x = x0;
    Vec g(dim);
    double f = objective(x, &g);
    apply_mask(g, free_mask);

    Mat H = Mat::Identity(dim, dim);  // inverse-Hessian approximation
    QuasiNewtonResult best{x, f, 0, false};

    for (int it = 0; it < opts.max_iters; ++it) {
        best.iterations = it;
        if (g.lpNorm<Eigen::Infinity>() <= opts.grad_tol * std::max(1.0, std::abs(f))) {
            best.converged = true;
            break;
        }

        Vec p = -(H * g);
        apply_mask(p, free_mask);
        double slope = g.dot(p);
        if (!(slope < 0.0)) {  // lost descent; restart from steepest descent
            H.setIdentity();
            p = -g;
            slope = g.dot(p);
            if (!(slope < 0.0)) {
                best.converged = true;  // gradient numerically zero
                break;
            }
        }

        // Backtracking: the trial must both satisfy Armijo decrease and stay
        // inside the feasible (stable) set.
        double t = 1.0;
        Vec x_new;
        double f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < opts.max_line_steps; ++ls) {
            x_new = x + t * p;
            if (feasible(x_new)) {
                f_new = objective(x_new, nullptr);
                if (std::isfinite(f_new) && f_new <= f + opts.armijo_c * t * slope) {
                    accepted = true;
                    break;
                }
            }
            t *= opts.backtrack;
        }
        if (!accepted) break;  // no acceptable step in the feasible cone

        Vec g_new(dim);
        objective(x_new, &g_new);
        apply_mask(g_new, free_mask);

        const Vec s = x_new - x;
        const Vec y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-10 * s.norm() * y.norm()) {
            const Vec Hy = H * y;
            const double yHy = y.dot(Hy);
            // BFGS inverse update (Sherman-Morrison form).
            H += ((sy + yHy) / (sy * sy)) * (s * s.transpose()) -
                 (Hy * s.transpose() + s * Hy.transpose()) / sy;
        }

        const double step_rel = s.norm() / std::max(1.0, x.norm());
        x = x_new;
        f = f_new;
        g = g_new;
        if (f < best.value) {
            best.x = x;
            best.value = f;
        }
        if (step_rel < opts.step_tol) {
            best.converged = true;
            break;
        }
    }

    if (f <= best.value) {
        best.x = x;
        best.value = f;
    }
    return best;
}

}  // namespace rsdcm
