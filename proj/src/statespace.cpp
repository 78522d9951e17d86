#include "rsdcm/statespace.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

#include "rsdcm/errors.hpp"

namespace rsdcm {

namespace {

void require_square_finite(const Mat& A, const char* who) {
    if (A.rows() != A.cols())
        throw InvalidArgumentError(std::string(who) + ": matrix must be square");
    if (!A.allFinite())
        throw InvalidArgumentError(std::string(who) + ": matrix has non-finite entries");
}

}  // namespace

ConnectivityMatrix::ConnectivityMatrix(Mat a) : entries(std::move(a)) {
    require_square_finite(entries, "ConnectivityMatrix");
}

Mat mat_exp(const Mat& A, double t) {
    require_square_finite(A, "mat_exp");
    if (!(t >= 0.0)) throw InvalidArgumentError("mat_exp: t must be >= 0");
    return (A * t).exp();
}

Mat mat_exp_frechet(const Mat& A, const Mat& E) {
    require_square_finite(A, "mat_exp_frechet");
    if (E.rows() != A.rows() || E.cols() != A.cols())
        throw InvalidArgumentError("mat_exp_frechet: direction shape mismatch");
    const auto n = A.rows();
    Mat aug = Mat::Zero(2 * n, 2 * n);
    aug.topLeftCorner(n, n) = A;
    aug.topRightCorner(n, n) = E;
    aug.bottomRightCorner(n, n) = A;
    return aug.exp().topRightCorner(n, n);
}

ProcessNoiseCov process_noise_integral(const ConnectivityMatrix& A, double sigma, double T_R) {
    if (sigma < 0.0) throw InvalidArgumentError("process_noise_integral: sigma must be >= 0");
    if (!(T_R > 0.0)) throw InvalidArgumentError("process_noise_integral: T_R must be > 0");
    const int n = A.n();
    Mat block = Mat::Zero(2 * n, 2 * n);
    block.topLeftCorner(n, n) = -A.entries;
    block.topRightCorner(n, n) = sigma * sigma * Mat::Identity(n, n);
    block.bottomRightCorner(n, n) = A.entries.transpose();
    const Mat e = (block * T_R).exp();
    const Mat q = e.bottomRightCorner(n, n).transpose() * e.topRightCorner(n, n);
    return ProcessNoiseCov{0.5 * (q + q.transpose()), sigma};
}

double spectral_abscissa(const Mat& A) {
    require_square_finite(A, "spectral_abscissa");
    Eigen::EigenSolver<Mat> es(A, /*computeEigenvectors=*/false);
    return es.eigenvalues().real().maxCoeff();
}

bool is_stable(const Mat& A, double eps) {
    return spectral_abscissa(A) < -eps;
}

double weighted_residual_norm(const Mat& Xplus, const Mat& X, const ConnectivityMatrix& A,
                              const ProcessNoiseCov& Q, double T_R) {
    if (Xplus.rows() != X.rows() || Xplus.cols() != X.cols())
        throw InvalidArgumentError("weighted_residual_norm: X+/X shape mismatch");
    if (Xplus.cols() != A.n() || Q.Q.rows() != A.n())
        throw InvalidArgumentError("weighted_residual_norm: dimension mismatch with A or Q");
    const Mat resid = Xplus - X * mat_exp(A.entries.transpose(), T_R);
    RegularizedSpd qinv(Q.Q);
    return (resid * qinv.solve(resid.transpose())).trace();
}

RegularizedSpd::RegularizedSpd(const Mat& Q) {
    require_square_finite(Q, "RegularizedSpd");
    Eigen::SelfAdjointEigenSolver<Mat> es(Q, Eigen::EigenvaluesOnly);
    const double lmax = es.eigenvalues().maxCoeff();
    const double lmin = es.eigenvalues().minCoeff();
    if (!(lmin > lmax * 1e-12) || lmax <= 0.0) {
        regularized_ = true;
        ldlt_.compute(Q + 1e-12 * Mat::Identity(Q.rows(), Q.cols()));
    } else {
        ldlt_.compute(Q);
    }
    if (ldlt_.info() != Eigen::Success)
        throw NumericalError("RegularizedSpd: LDLT factorization failed");
}

Mat RegularizedSpd::inverse() const {
    const auto n = ldlt_.rows();
    return ldlt_.solve(Mat::Identity(n, n));
}

double RegularizedSpd::log_det() const {
    return ldlt_.vectorD().array().max(1e-300).log().sum();
}

}  // namespace rsdcm
