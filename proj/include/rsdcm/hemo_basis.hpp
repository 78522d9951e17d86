#pragma once

#include <cstdint>
#include <vector>

#include "rsdcm/balloon.hpp"
#include "rsdcm/statespace.hpp"

namespace rsdcm {

/// Independent Gaussian prior over the Balloon parameters, truncated to the
/// physically valid region (positive rates, alpha and rho in (0,1)).
struct HemoPrior {
    struct Marginal {
        double mean;
        double var;
    };
    Marginal kappa{0.65, 0.015};
    Marginal gamma{0.41, 0.002};
    Marginal tau{0.98, 0.0568};
    Marginal alpha{0.32, 0.0015};
    Marginal rho{0.34, 0.0024};

    void validate() const;
};

/// Low-rank FIR representation of the hemodynamic response: mean response
/// plus the leading principal components of its variability.
struct FirBasis {
    int taps = 0;             // FIR length s
    double T_R = 0.0;         // tap spacing in seconds
    Vec hbar;                 // mean impulse response, length taps
    Mat components;           // taps x p, orthonormal columns
    Vec component_variances;  // length p, nonincreasing

    int num_components() const { return static_cast<int>(components.cols()); }

    // Design matrix H = [hbar u_1 ... u_p], taps x (p+1). A response is
    // modeled as H * alpha with alpha close to the first unit vector.
    Mat design_matrix() const;

    // Prior over the basis weights: mean picks out hbar exactly.
    Vec weight_prior_mean() const;
    // Diagonal of the weight prior covariance: mean_weight_var for the
    // leading weight, then the component variances.
    Vec weight_prior_cov_diag(double mean_weight_var) const;

    void validate() const;
};

/// Settings for building the basis from Monte-Carlo draws of the prior.
struct BasisBuildConfig {
    int samples = 1000;
    int taps = 16;
    int components = 4;
    double T_R = 2.0;
    double dt = 0.01;
    double pulse_height = 1.0;
};

// Draw `count` parameter sets from the truncated prior. Rejection sampling
// per parameter; deterministic for a fixed seed regardless of job count.
std::vector<BalloonParams> sample_hemo_params(const HemoPrior& prior, int count,
                                              std::uint64_t seed);

// Integrate one impulse response per parameter draw (parallel across draws),
// then extract the mean and the top principal components of the ensemble.
// Covariance uses the 1/N normalization over the draws themselves.
FirBasis build_fir_basis(const std::vector<BalloonParams>& draws,
                         const OutputConstants& base_consts, const BasisBuildConfig& cfg,
                         int jobs = 1);

}  // namespace rsdcm
