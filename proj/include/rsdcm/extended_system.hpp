#pragma once

#include "rsdcm/hemo_basis.hpp"
#include "rsdcm/statespace.hpp"

namespace rsdcm {

/// Full parameter set of the latent-state model: neuronal dynamics (A, sigma),
/// hemodynamic response weights (alpha), observation noise (lambda), and the
/// sparsity weights over the entries of A.
struct EMParameters {
    ConnectivityMatrix A;
    Vec alpha;
    double sigma = 0.0;
    double lambda = 0.0;
    Vec gamma;

    void validate() const;
};

/// Lag-stacked linear state-space: the state holds the last s neuronal
/// vectors, the output is their FIR-weighted sum.
struct ExtendedStateSystem {
    Mat Abold;   // ns x ns block companion [[e^{A T_R}, 0], [I, 0]]
    Mat Cbold;   // n x ns, block u equals h_u I_n with h = H alpha
    Mat Qbold;   // ns x ns, process noise in the leading n x n block only
    double lambda = 0.0;  // observation noise sd; R = lambda^2 I_n
    int n = 0;
    int s = 0;
    double T_R = 0.0;

    int ns() const { return n * s; }
    Mat R() const { return lambda * lambda * Mat::Identity(n, n); }
};

ExtendedStateSystem build_extended_system(const EMParameters& eta, const FirBasis& basis,
                                          double stability_eps = kDefaultStabilityEps);

// Structured products with the block-companion transition: the lower rows of
// Abold only shift coordinates, so multiplying by Abold never needs the full
// ns x ns matrix. M is the leading n x n transition block.
Mat companion_left_product(const Mat& M, const Mat& P, int n, int s);   // Abold * P
Mat companion_right_product(const Mat& P, const Mat& M, int n, int s);  // P * Abold'
Vec companion_state_product(const Mat& M, const Vec& x, int n, int s);  // Abold * x

}  // namespace rsdcm
