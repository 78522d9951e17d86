#pragma once

#include <functional>
#include <vector>

#include "rsdcm/statespace.hpp"

namespace rsdcm {

struct QuasiNewtonOptions {
    int max_iters = 200;
    double grad_tol = 1e-8;    // on the inf-norm of the free gradient, relative to |f|
    double step_tol = 1e-12;   // on the relative step length
    double armijo_c = 1e-4;
    double backtrack = 0.5;
    int max_line_steps = 60;
};

struct QuasiNewtonResult {
    Vec x;
    double value = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// BFGS minimization restricted to a feasible set. Steps that leave the set
/// are shortened by backtracking, so every accepted iterate is feasible; the
/// start point must be. Coordinates with free_mask[i] == 0 are frozen at
/// their initial value (used for pruned connections).
QuasiNewtonResult minimize_bfgs(const std::function<double(const Vec&, Vec*)>& objective,
                                const std::function<bool(const Vec&)>& feasible, Vec x0,
                                const std::vector<char>& free_mask,
                                const QuasiNewtonOptions& opts = {});

}  // namespace rsdcm
