#pragma once

#include <cstdint>

#include "rsdcm/balloon.hpp"
#include "rsdcm/statespace.hpp"

namespace rsdcm {

/// Ground-truth generative model for synthetic resting-state data.
struct GroundTruth {
    ConnectivityMatrix A_true;
    double sigma2 = 0.01;  // process-noise variance
    double T_R = 2.0;      // sampling interval, s
    int N = 600;           // number of samples

    void validate() const;
};

/// One synthetic dataset: latent neuronal series and the BOLD it produced.
struct SimOutput {
    Mat x;  // N x n neuronal activity at T_R
    Mat y;  // N x n BOLD at T_R
    std::uint64_t seed = 0;
};

// The default 7-node sparse network used throughout the benchmarks
// (self-connections fixed at -0.5; 14 nonzero off-diagonal couplings).
GroundTruth default_ground_truth();

// Simulate x(k+1) = Phi x(k) + w(k) from x(0) = 0 with w ~ N(0, Q), where
// Phi and Q come from the exact discretization of dx = Ax dt + dw.
// Deterministic for a fixed seed.
Mat simulate_neuronal(const GroundTruth& truth, std::uint64_t seed);

// Push each region's neuronal series through the Balloon model (zero-order
// hold from T_R down to dt) and sample the BOLD output back at T_R.
// Regions are independent and integrate in parallel.
Mat simulate_bold(const Mat& x, const BalloonParams& params, const OutputConstants& consts,
                  double T_R, double dt = 0.01, int jobs = 1);

// Optional additive measurement noise N(0, lambda^2) per entry.
Mat add_observation_noise(const Mat& y, double lambda, std::uint64_t seed);

}  // namespace rsdcm
