#pragma once

#include <vector>

#include "rsdcm/hemo_basis.hpp"
#include "rsdcm/regression.hpp"
#include "rsdcm/statespace.hpp"

namespace rsdcm {

struct ReweightedOptions {
    double T_R = 2.0;
    double tol = 1e-3;          // relative Frobenius change of A
    int max_iters = 100;
    double gamma_init = 0.25;
    double gamma_floor = 1e-12;  // below this a connection counts as pruned
    double stability_eps = kDefaultStabilityEps;
    bool linear_update = false;  // use the linearized closed form instead of
                                 // the exact-model solve (comparison arm)
};

struct ReweightedIteration {
    int iter = 0;
    double sigma2 = 0.0;
    double a_change = 0.0;        // relative Frobenius step
    double objective_start = 0.0; // penalized objective at the warm start
    double objective_end = 0.0;   // and at the accepted update (same Q, Gamma)
};

struct ReweightedResult {
    ConnectivityMatrix A_hat;
    double sigma_hat = 0.0;
    Vec gamma;
    int iterations = 0;
    bool converged = false;
    std::vector<ReweightedIteration> trace;
};

// Noise-variance update: sigma^2 = tr[R Qshape^{-1} R'] / (N n) with
// R = Xplus - X e^{A' T_R} and Qshape the unit-variance noise integral of A.
// N counts the full series length (rows of Xplus plus one).
double sigma_step(const Mat& Xplus, const Mat& X, const ConnectivityMatrix& A,
                  const ProcessNoiseCov& Qshape, double T_R);

// Exact-model update: minimize ||Xplus - X e^{A' T_R}||^2_{Q^{-1}} +
// a' Gamma^{-1} a over stable A, warm-started at A_init. Connections whose
// gamma sits at the floor are pruned (fixed at zero) unless that starting
// point is itself unstable, in which case they stay free under a very stiff
// penalty instead.
ConnectivityMatrix a_step(const RegressionData& data, const Vec& gamma,
                          const ProcessNoiseCov& Q, const ConnectivityMatrix& A_init,
                          const ReweightedOptions& opts);

// Evidence-based weight update
//   gamma_i' = a_i^2 + gamma_i - gamma_i^2 phi_i' (Phi Gamma Phi' + Q (x) I)^{-1} phi_i,
// computed through the Woodbury identity on the n^2 x n^2 compressed Gram
// matrix. Guarantees gamma_i' >= a_i^2 up to roundoff.
Vec gamma_step(const Vec& a, const Vec& gamma, const RegressionData& data,
               const ProcessNoiseCov& Q);

// Same update from a precomputed regressor Gram matrix Sum_k x(k) x(k)'.
// The joint estimator passes the posterior second moment here, so the state
// uncertainty enters the evidence term; the series overload above is the
// plain plug-in Gram.
Vec gamma_step_gram(const Vec& a, const Vec& gamma, const Mat& gram, double T_R,
                    const ProcessNoiseCov& Q);

// Closed-form update of the linearized model (first-order expansion of the
// exponential): solve (Phi' D^{-1} Phi + Gamma^{-1}) a = Phi' D^{-1} vec(DeltaX)
// with D = Q (x) I. No stability restriction; comparison arm only.
ConnectivityMatrix linear_a_step(const RegressionData& data, const Vec& gamma,
                                 const ProcessNoiseCov& Q, double gamma_floor = 1e-12);

// Full reweighted loop on a measured neuronal series.
ReweightedResult run_reweighted(const Mat& x_series, const ReweightedOptions& opts = {});

// Elementwise sparsification: entries with |a_ij| < thresh become zero.
Mat threshold_matrix(const Mat& A, double thresh = 0.1);

// Row k of the result is [x(k)', x(k-1)', ..., x(k-s+1)'] with zeros before
// the series start: the lag-stacked state used by the FIR output model.
Mat lagged_design(const Mat& x_series, int taps);

struct AlphaEstimate {
    Vec alpha;
    double lambda2 = 0.0;
    bool ridge_regularized = false;  // set when H'H needed a ridge to invert
};

// MAP estimate of the FIR weights and the observation-noise variance from a
// measured neuronal series and its BOLD output: least squares for the noise
// level, then a Gaussian-prior posterior mean for the weights.
AlphaEstimate estimate_alpha(const Mat& x_series, const Mat& y_series, const FirBasis& basis,
                             double mean_weight_var = 1.0);

}  // namespace rsdcm
