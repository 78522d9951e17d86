#include "rsdcm/simulate.hpp"

#include <Eigen/Cholesky>
#include <random>

#include "rsdcm/errors.hpp"
#include "rsdcm/parallel.hpp"

namespace rsdcm {

void GroundTruth::validate() const {
    if (!(sigma2 >= 0.0)) throw ConfigError("process-noise variance must be nonnegative");
    if (!(T_R > 0.0)) throw ConfigError("sampling interval must be positive");
    if (N < 2) throw ConfigError("need at least two samples");
    if (!is_stable(A_true.entries))
        throw NumericalError("ground-truth connectivity must be stable");
}

GroundTruth default_ground_truth() {
    Mat A(7, 7);
    A << -0.5, 0.0, 0.0, 0.0, -0.2, 0.0, 0.0,  //
        0.0, -0.5, 0.0, -0.45, -0.3, 0.0, 0.0,  //
        0.0, 0.0, -0.5, 0.8, 0.0, 0.0, 0.0,     //
        0.0, 0.6, 0.0, -0.5, -0.1, 0.6, 0.0,    //
        0.3, 0.0, -0.55, 0.0, -0.5, 0.2, 0.0,   //
        0.0, 0.0, 0.0, 0.0, 0.3, -0.5, 0.45,    //
        0.15, 0.0, 0.2, 0.0, 0.0, 0.0, -0.5;
    GroundTruth truth{ConnectivityMatrix(A), 0.01, 2.0, 600};
    truth.validate();
    return truth;
}

Mat simulate_neuronal(const GroundTruth& truth, std::uint64_t seed) {
    truth.validate();
    const int n = truth.A_true.n();
    const Mat Phi = mat_exp(truth.A_true.entries, truth.T_R);

    Mat L = Mat::Zero(n, n);
    if (truth.sigma2 > 0.0) {
        const ProcessNoiseCov Q =
            process_noise_integral(truth.A_true, std::sqrt(truth.sigma2), truth.T_R);
        Eigen::LLT<Mat> llt(Q.Q);
        if (llt.info() != Eigen::Success)
            throw NumericalError("process-noise covariance is not positive definite");
        L = llt.matrixL();
    }

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat x(truth.N, n);
    Vec state = Vec::Zero(n);
    Vec z(n);
    for (int k = 0; k < truth.N; ++k) {
        x.row(k) = state.transpose();
        for (int i = 0; i < n; ++i) z(i) = gauss(rng);
        state = Phi * state + L * z;
    }
    return x;
}

Mat simulate_bold(const Mat& x, const BalloonParams& params, const OutputConstants& consts,
                  double T_R, double dt, int jobs) {
    if (!x.allFinite()) throw InvalidArgumentError("neuronal input must be finite");
    const double ratio = T_R / dt;
    const int steps_per_sample = static_cast<int>(std::lround(ratio));
    if (steps_per_sample < 1 || std::abs(ratio - steps_per_sample) > 1e-9 * ratio)
        throw InvalidArgumentError("T_R must be an integer multiple of dt");

    const int N = static_cast<int>(x.rows());
    const int n = static_cast<int>(x.cols());
    Mat y(N, n);
    par::for_index(n, jobs, [&](int region) {
        // Hold each T_R sample constant over the fine grid; we only need the
        // input up to the last sampling instant.
        std::vector<double> fine(static_cast<std::size_t>(steps_per_sample) * (N - 1));
        for (int k = 0; k + 1 < N; ++k)
            for (int j = 0; j < steps_per_sample; ++j)
                fine[static_cast<std::size_t>(k) * steps_per_sample + j] = x(k, region);
        const std::vector<double> bold = integrate_balloon(fine, params, consts, dt);
        for (int k = 0; k < N; ++k)
            y(k, region) = bold[static_cast<std::size_t>(k) * steps_per_sample];
    });
    return y;
}

Mat add_observation_noise(const Mat& y, double lambda, std::uint64_t seed) {
    if (!(lambda >= 0.0)) throw InvalidArgumentError("noise level must be nonnegative");
    if (lambda == 0.0) return y;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, lambda);
    Mat out = y;
    for (int k = 0; k < out.rows(); ++k)
        for (int i = 0; i < out.cols(); ++i) out(k, i) += gauss(rng);
    return out;
}

}  // namespace rsdcm
