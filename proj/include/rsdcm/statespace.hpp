#pragma once

#include <Eigen/Dense>

namespace rsdcm {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

constexpr double kDefaultStabilityEps = 1e-6;

/// Continuous-time coupling matrix between regions, entries in 1/s.
struct ConnectivityMatrix {
    Mat entries;

    ConnectivityMatrix() = default;
    explicit ConnectivityMatrix(Mat a);

    int n() const { return static_cast<int>(entries.rows()); }
};

/// Phi = exp(A * T_R).
struct DiscreteTransition {
    Mat Phi;
    double T_R = 0.0;
};

/// Discrete process-noise covariance Q = sigma^2 * int_0^{T_R} e^{At} e^{A't} dt.
struct ProcessNoiseCov {
    Mat Q;
    double sigma = 0.0;
};

// exp(A*t) via scaling-and-squaring (Pade). Throws InvalidArgumentError on
// non-square or non-finite input, or t < 0.
Mat mat_exp(const Mat& A, double t);

// Frechet derivative of the matrix exponential: direction E at point A,
// L(A, E) = d/deps exp(A + eps*E) |_{eps=0}, read off the augmented
// exponential exp([[A, E], [0, A]]).
Mat mat_exp_frechet(const Mat& A, const Mat& E);

// Q of the exact discretization, computed from the augmented block
// exponential exp(T_R * [[-A, sigma^2 I], [0, A']]): Q = B22' * B12.
// Result is symmetrized; exact up to the accuracy of the exponential.
ProcessNoiseCov process_noise_integral(const ConnectivityMatrix& A, double sigma, double T_R);

// Largest real part over the eigenvalues of A.
double spectral_abscissa(const Mat& A);

// True iff every eigenvalue of A has real part < -eps (strict).
bool is_stable(const Mat& A, double eps = kDefaultStabilityEps);

// || Xplus - X e^{A' T_R} ||^2_{Q^{-1}} = tr[R Q^{-1} R'] with rows weighted.
double weighted_residual_norm(const Mat& Xplus, const Mat& X, const ConnectivityMatrix& A,
                              const ProcessNoiseCov& Q, double T_R);

// LDLT solve with the shared conditioning rule: if cond(Q) > 1e12, solve
// against Q + 1e-12*I instead. Q must be symmetric.
class RegularizedSpd {
public:
    explicit RegularizedSpd(const Mat& Q);

    template <typename Derived>
    auto solve(const Eigen::MatrixBase<Derived>& rhs) const {
        return ldlt_.solve(rhs.derived()).eval();
    }
    Mat inverse() const;
    double log_det() const;
    bool regularized() const { return regularized_; }

private:
    Eigen::LDLT<Mat> ldlt_;
    bool regularized_ = false;
};

}  // namespace rsdcm
