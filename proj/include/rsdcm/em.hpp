#pragma once

#include <vector>

#include "rsdcm/hemo_basis.hpp"
#include "rsdcm/rts_smoother.hpp"

namespace rsdcm {

struct EmOptions {
    double tol = 1e-3;       // relative Frobenius change of A
    int max_iters = 60;
    double gamma_init = 0.25;
    double gamma_floor = 1e-12;
    double stability_eps = kDefaultStabilityEps;
    double mean_weight_var = 1.0;  // prior variance on the leading FIR weight
    double var_floor = 1e-12;      // lower bound for sigma^2 and lambda^2
    double sigma_init = 0.1;       // initial process-noise scale; <= 0 means
                                   // use the data-adaptive fallback (grand
                                   // standard deviation of the observations)
    double trust_radius = 2.0;     // max Frobenius step of one connectivity
                                   // update; <= 0 disables the cap.  Loose
                                   // enough never to bind on a healthy
                                   // trajectory, tight enough to block the
                                   // first-iteration jump onto a distant
                                   // near-equivalent branch of the matrix
                                   // exponential
    bool ridge_rescale = false;    // renormalize the leading FIR weight to 1
                                   // between iterations, folding the factor
                                   // into sigma (likelihood-invariant)
    bool simple_variant = false;   // ablation: plug smoothed means into the
                                   // measured-data updates, ignoring Ps
};

struct EmIteration {
    int iter = 0;
    double sigma = 0.0;
    double lambda = 0.0;
    double surrogate_before = 0.0;  // penalized expected log-joint at the
    double surrogate_after = 0.0;   // old/new parameters, same posterior
    double a_change = 0.0;
    bool a_block_accepted = false;  // exact-model update beat the fallback
};

struct EmResult {
    EMParameters eta;
    int iterations = 0;
    bool converged = false;
    bool jittered = false;
    std::vector<EmIteration> trace;
    Mat x_smoothed;  // (N+1) x n neuronal posterior means at the final eta
};

/// Trace-compressed observation moments: because C = h' (x) I_n, the
/// observation terms of the expected log-likelihood only involve the blockwise
/// traces of Lambda and Xi.
struct ObsMoments {
    Mat T_Lambda;     // s x s, (u,v) entry = tr of the (u,v) block of Lambda
    Vec t_Xi;         // s, u entry = tr of block u of Xi
    double tr_Delta = 0.0;
};

ObsMoments observation_moments(const SufficientStats& stats, int n, int s);

// Expected complete-data log-likelihood under the posterior that produced
// `stats`. The deterministic shift rows of the lag-stacked state carry no
// noise, so the state term reduces to the leading n-dimensional block.
double q_function(const SufficientStats& stats, const EMParameters& eta, const FirBasis& basis);

// q_function plus the log-priors on vec(A') (current Gamma) and alpha.
double penalized_surrogate(const SufficientStats& stats, const EMParameters& eta,
                           const FirBasis& basis, double mean_weight_var,
                           double gamma_floor);

// One maximization pass: quasi-Newton on (A, sigma) against the frozen
// previous noise shape with an exact-objective acceptance guard, then closed
// forms for (alpha, lambda). Never decreases the penalized surrogate.
EMParameters m_step(const SufficientStats& stats, const EMParameters& eta_prev,
                    const FirBasis& basis, const EmOptions& opts,
                    bool* a_block_accepted = nullptr);

// Full joint estimation from BOLD data alone: smoother, moment collection,
// maximization, noise rebuild and sparsity reweighting per iteration.
EmResult em_run(const Mat& y, const FirBasis& basis, const EmOptions& opts = {});

}  // namespace rsdcm
