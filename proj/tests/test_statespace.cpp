#include <doctest.h>

#include <cmath>
#include <random>

#include "rsdcm/errors.hpp"
#include "rsdcm/statespace.hpp"

using namespace rsdcm;

namespace {

// Independent oracle: adaptive Simpson quadrature of sigma^2 * e^{At} e^{A't}
// with matrix-valued recursion on the max-abs error.
Mat quad_integrand(const Mat& A, double sigma, double t) {
    const Mat e = mat_exp(A, t);
    return sigma * sigma * e * e.transpose();
}

Mat adaptive_simpson(const Mat& A, double sigma, double a, double b, const Mat& fa, const Mat& fm,
                     const Mat& fb, const Mat& whole, double tol, int depth) {
    const double m = 0.5 * (a + b);
    const Mat fl = quad_integrand(A, sigma, 0.5 * (a + m));
    const Mat fr = quad_integrand(A, sigma, 0.5 * (m + b));
    const Mat left = (m - a) / 6.0 * (fa + 4.0 * fl + fm);
    const Mat right = (b - m) / 6.0 * (fm + 4.0 * fr + fb);
    const Mat sum = left + right;
    if (depth <= 0 || (sum - whole).cwiseAbs().maxCoeff() < 15.0 * tol)
        return sum + (sum - whole) / 15.0;
    return adaptive_simpson(A, sigma, a, m, fa, fl, fm, left, 0.5 * tol, depth - 1) +
           adaptive_simpson(A, sigma, m, b, fm, fr, fb, right, 0.5 * tol, depth - 1);
}

Mat quadrature_noise_cov(const Mat& A, double sigma, double T_R, double tol = 1e-13) {
    const Mat fa = quad_integrand(A, sigma, 0.0);
    const Mat fm = quad_integrand(A, sigma, 0.5 * T_R);
    const Mat fb = quad_integrand(A, sigma, T_R);
    const Mat whole = T_R / 6.0 * (fa + 4.0 * fm + fb);
    return adaptive_simpson(A, sigma, 0.0, T_R, fa, fm, fb, whole, tol, 30);
}

Mat random_stable(std::mt19937_64& rng, int n, double shift = 0.3) {
    std::normal_distribution<double> gauss(0.0, 0.6);
    Mat A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = gauss(rng);
    // Shift the spectrum left until strictly stable.
    double rho = spectral_abscissa(A);
    A.diagonal().array() -= (rho > -shift ? rho + shift : 0.0);
    return A;
}

}  // namespace

TEST_SUITE("statespace") {

TEST_CASE("matrix exponential at t=0 is the identity") {
    std::mt19937_64 rng(11);
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (int n : {1, 3, 5}) {
        Mat A(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) A(i, j) = gauss(rng);
        CHECK((mat_exp(A, 0.0) - Mat::Identity(n, n)).cwiseAbs().maxCoeff() <= 1e-14);
    }
}

TEST_CASE("matrix exponential matches the scalar exponential for n=1") {
    Mat A(1, 1);
    A(0, 0) = -0.5;
    CHECK(mat_exp(A, 2.0)(0, 0) == doctest::Approx(std::exp(-1.0)).epsilon(1e-14));
}

TEST_CASE("matrix exponential semigroup property") {
    std::mt19937_64 rng(21);
    std::uniform_real_distribution<double> unif(0.0, 2.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat A = random_stable(rng, 2 + trial % 3);
        const double s = unif(rng);
        const double t = unif(rng);
        const Mat prod = mat_exp(A, s) * mat_exp(A, t);
        CHECK((prod - mat_exp(A, s + t)).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("matrix exponential rejects bad input") {
    CHECK_THROWS_AS(mat_exp(Mat::Zero(2, 3), 1.0), InvalidArgumentError);
    CHECK_THROWS_AS(mat_exp(Mat::Identity(2, 2), -1.0), InvalidArgumentError);
    Mat bad = Mat::Zero(2, 2);
    bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(mat_exp(bad, 1.0), InvalidArgumentError);
}

TEST_CASE("Frechet derivative matches central finite differences") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss(0.0, 0.5);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + trial % 3;
        Mat A(n, n), E(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) {
                A(i, j) = gauss(rng);
                E(i, j) = gauss(rng);
            }
        const double h = 1e-6;
        const Mat fd = (mat_exp(A + h * E, 1.0) - mat_exp(A - h * E, 1.0)) / (2.0 * h);
        const Mat an = mat_exp_frechet(A, E);
        CHECK((an - fd).cwiseAbs().maxCoeff() <= 1e-7 * std::max(1.0, fd.cwiseAbs().maxCoeff()));
    }
}

TEST_CASE("process noise integral matches adaptive quadrature") {
    std::mt19937_64 rng(41);
    for (int trial = 0; trial < 12; ++trial) {
        const int n = 1 + trial % 6;
        const Mat A = random_stable(rng, n);
        const ConnectivityMatrix Ac(A);
        const double sigma = 0.05 + 0.1 * (trial % 4);
        const Mat Q = process_noise_integral(Ac, sigma, 2.0).Q;
        const Mat Qref = quadrature_noise_cov(A, sigma, 2.0);
        CHECK((Q - Qref).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("scalar process noise matches the closed form") {
    Mat A(1, 1);
    A(0, 0) = -0.5;
    const double sigma2 = 0.01;
    const double q = process_noise_integral(ConnectivityMatrix(A), std::sqrt(sigma2), 2.0).Q(0, 0);
    // int_0^2 e^{-t} dt = 1 - e^{-2}
    CHECK(std::abs(q - (1.0 - std::exp(-2.0)) * sigma2) <= 1e-12);
}

TEST_CASE("process noise covariance is symmetric positive semidefinite") {
    std::mt19937_64 rng(51);
    for (int trial = 0; trial < 10; ++trial) {
        const Mat A = random_stable(rng, 2 + trial % 4);
        const Mat Q = process_noise_integral(ConnectivityMatrix(A), 0.1, 2.0).Q;
        CHECK((Q - Q.transpose()).cwiseAbs().maxCoeff() == 0.0);  // symmetrized on return
        Eigen::SelfAdjointEigenSolver<Mat> es(Q, Eigen::EigenvaluesOnly);
        CHECK(es.eigenvalues().minCoeff() >= -1e-10 * Q.norm());
    }
}

TEST_CASE("process noise scales quadratically in sigma") {
    std::mt19937_64 rng(61);
    const Mat A = random_stable(rng, 3);
    const Mat Q1 = process_noise_integral(ConnectivityMatrix(A), 0.1, 2.0).Q;
    const Mat Q2 = process_noise_integral(ConnectivityMatrix(A), 0.2, 2.0).Q;
    CHECK((Q2 - 4.0 * Q1).cwiseAbs().maxCoeff() <= 1e-12 * Q2.cwiseAbs().maxCoeff());
}

TEST_CASE("spectral abscissa of a triangular matrix reads off the diagonal") {
    Mat A = Mat::Zero(3, 3);
    A(0, 0) = -2.0;
    A(1, 1) = -0.25;
    A(2, 2) = -1.0;
    A(0, 1) = 5.0;
    A(1, 2) = -3.0;
    CHECK(spectral_abscissa(A) == doctest::Approx(-0.25).epsilon(1e-12));
}

TEST_CASE("stability agrees with the discrete spectral radius") {
    std::mt19937_64 rng(71);
    std::normal_distribution<double> gauss(0.0, 0.7);
    int stable_seen = 0;
    int unstable_seen = 0;
    for (int trial = 0; trial < 100; ++trial) {
        const int n = 1 + trial % 5;
        Mat A(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) A(i, j) = gauss(rng);
        A.diagonal().array() -= 0.3;  // mixed population of stable and unstable draws
        if (std::abs(spectral_abscissa(A)) < 1e-6) continue;  // skip knife-edge draws
        const double radius =
            Eigen::EigenSolver<Mat>(mat_exp(A, 2.0), false).eigenvalues().cwiseAbs().maxCoeff();
        const bool stable = is_stable(A, 0.0);
        CHECK(stable == (radius < 1.0));
        (stable ? stable_seen : unstable_seen)++;
    }
    CHECK(stable_seen > 10);
    CHECK(unstable_seen > 10);
}

TEST_CASE("weighted residual norm equals the trace formula") {
    std::mt19937_64 rng(81);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 3, rows = 5;
    const Mat A = random_stable(rng, n);
    Mat X(rows, n), Xplus(rows, n);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < n; ++j) {
            X(i, j) = gauss(rng);
            Xplus(i, j) = gauss(rng);
        }
    const ConnectivityMatrix Ac(A);
    const ProcessNoiseCov Q = process_noise_integral(Ac, 0.3, 2.0);
    const Mat R = Xplus - X * mat_exp(A.transpose(), 2.0);
    const double expected = (R * Q.Q.inverse() * R.transpose()).trace();
    CHECK(weighted_residual_norm(Xplus, X, Ac, Q, 2.0) ==
          doctest::Approx(expected).epsilon(1e-10));
}

TEST_CASE("weighted residual norm is zero on exact data") {
    std::mt19937_64 rng(91);
    const Mat A = random_stable(rng, 2);
    Mat X(4, 2);
    X << 1.0, -0.5, 0.25, 2.0, -1.0, 0.75, 0.5, 0.5;
    const Mat Xplus = X * mat_exp(A.transpose(), 2.0);
    const ConnectivityMatrix Ac(A);
    const ProcessNoiseCov Q = process_noise_integral(Ac, 0.2, 2.0);
    CHECK(weighted_residual_norm(Xplus, X, Ac, Q, 2.0) <= 1e-12);
}

TEST_CASE("regularized solver matches a plain inverse when well conditioned") {
    Mat Q(2, 2);
    Q << 2.0, 0.3, 0.3, 1.5;
    RegularizedSpd solver(Q);
    CHECK_FALSE(solver.regularized());
    CHECK((solver.inverse() - Q.inverse()).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK(solver.log_det() == doctest::Approx(std::log(Q.determinant())).epsilon(1e-12));
    Vec b(2);
    b << 1.0, -2.0;
    CHECK((solver.solve(b) - Q.inverse() * b).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("regularized solver flags a singular input") {
    Mat Q = Mat::Zero(2, 2);
    Q(0, 0) = 1.0;  // rank one
    RegularizedSpd solver(Q);
    CHECK(solver.regularized());
    Vec b(2);
    b << 1.0, 0.0;
    CHECK(solver.solve(b).allFinite());
}

}  // TEST_SUITE
