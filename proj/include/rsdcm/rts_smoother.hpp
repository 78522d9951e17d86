#pragma once

#include <vector>

#include "rsdcm/extended_system.hpp"
#include "rsdcm/statespace.hpp"

namespace rsdcm {

/// Smoothing posterior over the lag-stacked states, indexed k = 0..N.
struct SmootherOutput {
    std::vector<Vec> xs;  // smoothed means
    std::vector<Mat> Ps;  // smoothed covariances
    std::vector<Mat> G;   // backward gains, defined for k = 0..N-1
    bool jittered = false;  // a solve needed a diagonal jitter somewhere

    // Leading n entries of each smoothed state: the neuronal posterior means,
    // one row per k = 0..N.
    Mat neuronal_series(int n) const;
};

// Forward Kalman pass from x(0) = 0, P(0) = I, then the backward
// Rauch-Tung-Striebel pass. The innovation covariance uses C P C' + R.
SmootherOutput rts_smooth(const Mat& y, const ExtendedStateSystem& sys);

/// Posterior second moments averaged over k = 1..N (1/N normalization).
struct SufficientStats {
    Mat Lambda;   // ns x ns, states at k
    Mat Upsilon;  // ns x ns, states at k-1
    Mat Psi;      // ns x ns, cross moment E[x(k) x(k-1)'], via Ps(k) G(k-1)'
    Mat Xi;       // n x ns, observation-state cross moment
    Mat Delta;    // n x n, observation second moment
    int N = 0;
};

SufficientStats sufficient_stats(const SmootherOutput& out, const Mat& y);

}  // namespace rsdcm
