#include <doctest.h>

#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>
#include <random>

#include "rsdcm/errors.hpp"
#include "rsdcm/hemo_basis.hpp"
#include "rsdcm/simulate.hpp"
#include "rsdcm/sparse_id.hpp"

using namespace rsdcm;

namespace {

Mat noiseless_series(const Mat& A, int N, double T_R, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = static_cast<int>(A.rows());
    const Mat Phi = mat_exp(A, T_R);
    Mat x(N, n);
    for (int j = 0; j < n; ++j) x(0, j) = gauss(rng);
    for (int k = 0; k + 1 < N; ++k) x.row(k + 1) = x.row(k) * Phi.transpose();
    return x;
}

FirBasis tiny_basis(int taps = 4, std::uint64_t seed = 7) {
    const HemoPrior prior;
    BasisBuildConfig cfg;
    cfg.samples = 80;
    cfg.taps = taps;
    cfg.components = 2;
    const auto draws = sample_hemo_params(prior, cfg.samples, seed);
    return build_fir_basis(draws, OutputConstants{}, cfg, 1);
}

}  // namespace

TEST_SUITE("sparse-id") {

TEST_CASE("noise update: zero residual, homogeneity, scalar formula") {
    Mat A(1, 1);
    A(0, 0) = -0.5;
    const ConnectivityMatrix Ac(A);
    const ProcessNoiseCov Qshape = process_noise_integral(Ac, 1.0, 2.0);
    const int rows = 9;  // N = 10
    Mat X(rows, 1);
    for (int i = 0; i < rows; ++i) X(i, 0) = 0.5 + 0.1 * i;

    // Zero residual.
    const Mat Xp_exact = X * mat_exp(A.transpose(), 2.0);
    CHECK(sigma_step(Xp_exact, X, Ac, Qshape, 2.0) <= 1e-15);

    // Chosen residual: sigma^2 = sum r^2 / (N * (1 - e^{-2})).
    Vec r(rows);
    for (int i = 0; i < rows; ++i) r(i) = 0.05 * (i % 3) - 0.02;
    const Mat Xp = Xp_exact + r;
    const double expected = r.squaredNorm() / (10.0 * (1.0 - std::exp(-2.0)));
    CHECK(sigma_step(Xp, X, Ac, Qshape, 2.0) == doctest::Approx(expected).epsilon(1e-12));

    // Scaling the residual by c scales the estimate by c^2.
    const Mat Xp3 = Xp_exact + 3.0 * r;
    CHECK(sigma_step(Xp3, X, Ac, Qshape, 2.0) ==
          doctest::Approx(9.0 * expected).epsilon(1e-12));
}

TEST_CASE("connectivity update recovers noiseless dynamics") {
    Mat A(2, 2);
    A << -0.4, 0.3, -0.2, -0.7;
    const Mat x = noiseless_series(A, 200, 2.0, 11);
    const RegressionData data = build_regression(x, 2.0);
    const ProcessNoiseCov Q = process_noise_integral(ConnectivityMatrix(A), 0.1, 2.0);
    const Vec gamma = Vec::Constant(4, 1e6);  // effectively unpenalized
    ReweightedOptions opts;
    const ConnectivityMatrix A_hat =
        a_step(data, gamma, Q, ConnectivityMatrix(-Mat::Identity(2, 2)), opts);
    CHECK((A_hat.entries - A).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK(is_stable(A_hat.entries));
}

TEST_CASE("vanishing weights shrink the connectivity toward zero") {
    Mat A(2, 2);
    A << -0.5, 0.25, 0.1, -0.6;
    const Mat x = noiseless_series(A, 100, 2.0, 13);
    const RegressionData data = build_regression(x, 2.0);
    const ProcessNoiseCov Q = process_noise_integral(ConnectivityMatrix(A), 0.1, 2.0);
    ReweightedOptions opts;
    const Vec gamma = Vec::Constant(4, opts.gamma_floor);  // all pruned
    const ConnectivityMatrix A_hat =
        a_step(data, gamma, Q, ConnectivityMatrix(-Mat::Identity(2, 2)), opts);
    // All-zero is not stable, so the result is the stable near-zero compromise.
    CHECK(is_stable(A_hat.entries, opts.stability_eps));
    CHECK(A_hat.entries.cwiseAbs().maxCoeff() <= 1.2);
}

TEST_CASE("scalar connectivity update agrees with a grid search") {
    Mat A(1, 1);
    A(0, 0) = -0.8;
    Mat x = noiseless_series(A, 60, 2.0, 17);
    // Perturb so the optimum is interior and nontrivial.
    for (int k = 0; k < x.rows(); ++k) x(k, 0) += 0.01 * std::sin(0.7 * k);
    const RegressionData data = build_regression(x, 2.0);
    const ProcessNoiseCov Q = process_noise_integral(ConnectivityMatrix(A), 0.15, 2.0);
    const Vec gamma = Vec::Constant(1, 0.25);
    ReweightedOptions opts;
    const ConnectivityMatrix A_hat =
        a_step(data, gamma, Q, ConnectivityMatrix(A), opts);

    const ExactFitObjective obj(moments_from_series(data.Xplus, data.X), Q,
                                Vec::Constant(1, 1.0 / 0.25), 1.0, 1.0, 2.0);
    double best_a = 0.0, best_val = std::numeric_limits<double>::infinity();
    for (double a = -3.0; a <= -0.01; a += 1e-4) {
        const double v = obj.value(Vec::Constant(1, a));
        if (v < best_val) {
            best_val = v;
            best_a = a;
        }
    }
    CHECK(std::abs(A_hat.entries(0, 0) - best_a) <= 1e-3);
}

TEST_CASE("weight update limits follow the closed forms") {
    // gamma = 0 -> a^2; zero regressors -> a^2 + gamma.
    Mat x0 = Mat::Zero(5, 2);
    const RegressionData zero_data = build_regression(x0, 2.0);
    const ProcessNoiseCov Q =
        process_noise_integral(ConnectivityMatrix(-0.5 * Mat::Identity(2, 2)), 0.2, 2.0);
    Vec a(4);
    a << 0.3, -0.2, 0.0, 1.0;
    const Vec g0 = gamma_step(a, Vec::Zero(4), zero_data, Q);
    CHECK((g0 - a.cwiseAbs2()).cwiseAbs().maxCoeff() <= 1e-14);
    Vec g(4);
    g << 0.25, 0.5, 0.1, 2.0;
    const Vec g1 = gamma_step(a, g, zero_data, Q);
    CHECK((g1 - (a.cwiseAbs2() + g)).cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("weight update matches the dense covariance formula") {
    // Direct evaluation of
    //   gamma' = a^2 + gamma - gamma^2 phi_i' (Phi Gamma Phi' + Q kron I)^{-1} phi_i
    // on a small instance, with the big (N-1)n x (N-1)n covariance built
    // explicitly.
    std::mt19937_64 rng(23);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 2, N = 4;
    Mat x(N, n);
    for (int k = 0; k < N; ++k)
        for (int j = 0; j < n; ++j) x(k, j) = gauss(rng);
    const RegressionData data = build_regression(x, 2.0);
    const ProcessNoiseCov Q =
        process_noise_integral(ConnectivityMatrix((Mat(2, 2) << -0.6, 0.2, -0.1, -0.4).finished()),
                               0.3, 2.0);
    Vec a(4), gamma(4);
    a << 0.4, -0.1, 0.2, -0.5;
    gamma << 0.25, 0.3, 0.05, 0.8;

    // The design here keeps the (I kron X) layout: phi_i is column i of Phi.
    const Mat big = data.Phi * gamma.asDiagonal() * data.Phi.transpose() +
                    Eigen::kroneckerProduct(Q.Q, Mat::Identity(N - 1, N - 1)).eval();
    const Mat big_inv = big.inverse();
    Vec expected(4);
    for (int i = 0; i < 4; ++i) {
        const Vec phi_i = data.Phi.col(i);
        expected(i) =
            a(i) * a(i) + gamma(i) - gamma(i) * gamma(i) * phi_i.dot(big_inv * phi_i);
    }
    const Vec got = gamma_step(a, gamma, data, Q);
    CHECK((got - expected).cwiseAbs().maxCoeff() <= 1e-9);
}

TEST_CASE("weight update from a precomputed Gram matches the series form") {
    std::mt19937_64 rng(29);
    std::normal_distribution<double> gauss(0.0, 1.0);
    Mat x(12, 2);
    for (int k = 0; k < 12; ++k)
        for (int j = 0; j < 2; ++j) x(k, j) = gauss(rng);
    const RegressionData data = build_regression(x, 2.0);
    const ProcessNoiseCov Q =
        process_noise_integral(ConnectivityMatrix(-0.7 * Mat::Identity(2, 2)), 0.2, 2.0);
    Vec a(4), gamma(4);
    a << 0.1, 0.2, -0.3, 0.4;
    gamma << 0.2, 0.4, 0.6, 0.8;
    const Vec via_series = gamma_step(a, gamma, data, Q);
    const Vec via_gram =
        gamma_step_gram(a, gamma, data.X.transpose() * data.X, 2.0, Q);
    CHECK((via_series - via_gram).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("updated weights never fall below the squared coefficient") {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + trial % 2;
        Mat x(15, n);
        for (int k = 0; k < 15; ++k)
            for (int j = 0; j < n; ++j) x(k, j) = gauss(rng);
        const RegressionData data = build_regression(x, 2.0);
        const ProcessNoiseCov Q = process_noise_integral(
            ConnectivityMatrix(-0.5 * Mat::Identity(n, n)), 0.1 + 0.2 * unif(rng), 2.0);
        Vec a(n * n), gamma(n * n);
        for (int i = 0; i < n * n; ++i) {
            a(i) = gauss(rng);
            gamma(i) = unif(rng);
        }
        const Vec g2 = gamma_step(a, gamma, data, Q);
        CHECK((g2 - a.cwiseAbs2()).minCoeff() >= -1e-12);
        CHECK(g2.minCoeff() >= 0.0);
    }
}

TEST_CASE("linearized update reduces to generalized least squares") {
    std::mt19937_64 rng(37);
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = 2, N = 30;
    Mat x(N, n);
    for (int k = 0; k < N; ++k)
        for (int j = 0; j < n; ++j) x(k, j) = gauss(rng);
    const RegressionData data = build_regression(x, 2.0);
    const ProcessNoiseCov Q = process_noise_integral(
        ConnectivityMatrix((Mat(2, 2) << -0.5, 0.1, 0.0, -0.8).finished()), 0.25, 2.0);

    const ConnectivityMatrix A_pen = linear_a_step(data, Vec::Constant(4, 1e12), Q);
    // Oracle: unpenalized GLS on the vectorized linear model with weight
    // Q^{-1} kron I.
    const Mat W = Eigen::kroneckerProduct(Q.Q.inverse(), Mat::Identity(N - 1, N - 1)).eval();
    const Mat normal = data.Phi.transpose() * W * data.Phi;
    const Vec rhs = data.Phi.transpose() * W * data.xvec;
    const Mat A_gls = unflatten_rowmajor(normal.ldlt().solve(rhs), n);
    CHECK((A_pen.entries - A_gls).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("linearized update scalar case by hand") {
    Mat x(4, 1);
    x << 1.0, 1.5, 0.75, 1.25;
    const RegressionData data = build_regression(x, 2.0);
    const double q = 0.37;
    ProcessNoiseCov Q;
    Q.Q = q * Mat::Identity(1, 1);
    Q.sigma = std::sqrt(q);
    const double gamma = 0.6;
    // (Phi' Phi / q + 1/gamma)^{-1} (Phi' dx / q)
    const double phi2 = data.Phi.col(0).squaredNorm();
    const double rhs = data.Phi.col(0).dot(data.xvec);
    const double expected = (rhs / q) / (phi2 / q + 1.0 / gamma);
    const ConnectivityMatrix A_hat = linear_a_step(data, Vec::Constant(1, gamma), Q);
    CHECK(A_hat.entries(0, 0) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("exact and linearized updates agree for a fast sampling rate") {
    // At T_R = 0.01 the exponential is nearly linear, so both estimators see
    // almost the same model.
    Mat A(2, 2);
    A << -0.5, 0.3, -0.2, -0.9;
    GroundTruth t;
    t.A_true = ConnectivityMatrix(A);
    t.T_R = 0.01;
    t.N = 400;
    t.sigma2 = 0.01;
    const Mat x = simulate_neuronal(t, 41);
    const RegressionData data = build_regression(x, t.T_R);
    const ProcessNoiseCov Q = process_noise_integral(t.A_true, std::sqrt(t.sigma2), t.T_R);
    const Vec gamma = Vec::Constant(4, 10.0);
    ReweightedOptions opts;
    opts.T_R = t.T_R;
    const ConnectivityMatrix exact =
        a_step(data, gamma, Q, ConnectivityMatrix(-Mat::Identity(2, 2)), opts);
    const ConnectivityMatrix linear = linear_a_step(data, gamma, Q);
    CHECK((exact.entries - linear.entries).norm() <= 0.05 * linear.entries.norm());
}

TEST_CASE("full reweighted loop recovers a noiseless diagonal system") {
    Mat A = Mat::Zero(2, 2);
    A(0, 0) = -0.3;
    A(1, 1) = -0.7;
    GroundTruth t;
    t.A_true = ConnectivityMatrix(A);
    t.N = 300;
    t.sigma2 = 0.01;
    const Mat x = simulate_neuronal(t, 43);
    ReweightedOptions opts;
    const ReweightedResult res = run_reweighted(x, opts);
    CHECK(res.converged);
    CHECK(is_stable(res.A_hat.entries));
    const Mat thresholded = threshold_matrix(res.A_hat.entries, 0.1);
    CHECK(thresholded(0, 1) == 0.0);
    CHECK(thresholded(1, 0) == 0.0);
    CHECK(std::abs(thresholded(0, 0) - A(0, 0)) <= 0.1);
    CHECK(std::abs(thresholded(1, 1) - A(1, 1)) <= 0.1);
}

TEST_CASE("reweighted iterations do not increase the frozen objective") {
    const GroundTruth t = default_ground_truth();
    GroundTruth small = t;
    small.N = 150;
    const Mat x = simulate_neuronal(small, 47);
    const ReweightedResult res = run_reweighted(x);
    REQUIRE(!res.trace.empty());
    for (const auto& it : res.trace) {
        CHECK(it.objective_end <=
              it.objective_start + 1e-8 * (std::abs(it.objective_start) + 1.0));
    }
}

TEST_CASE("reweighted estimation is deterministic") {
    GroundTruth t = default_ground_truth();
    t.N = 120;
    const Mat x = simulate_neuronal(t, 53);
    const ReweightedResult a = run_reweighted(x);
    const ReweightedResult b = run_reweighted(x);
    CHECK((a.A_hat.entries - b.A_hat.entries).cwiseAbs().maxCoeff() == 0.0);
    CHECK(a.sigma_hat == b.sigma_hat);
    CHECK((a.gamma - b.gamma).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("permuting regions permutes the estimate") {
    Mat A(3, 3);
    A << -0.5, 0.4, 0.0, 0.0, -0.5, 0.3, 0.2, 0.0, -0.5;
    GroundTruth t;
    t.A_true = ConnectivityMatrix(A);
    t.N = 250;
    const Mat x = simulate_neuronal(t, 59);
    Eigen::PermutationMatrix<Eigen::Dynamic> P(3);
    P.indices() << 2, 0, 1;  // column j of x moves to position P.indices()(j)
    const Mat x_perm = x * P;
    const ReweightedResult plain = run_reweighted(x);
    const ReweightedResult perm = run_reweighted(x_perm);
    const Mat expected = P.transpose() * plain.A_hat.entries * P;
    CHECK((perm.A_hat.entries - expected).cwiseAbs().maxCoeff() <= 1e-6);
}

TEST_CASE("thresholding only zeroes entries strictly below the cut") {
    Mat A(1, 3);
    A << 0.09, -0.1, 0.11;
    const Mat out = threshold_matrix(A, 0.1);
    CHECK(out(0, 0) == 0.0);
    CHECK(out(0, 1) == -0.1);
    CHECK(out(0, 2) == 0.11);
    CHECK((threshold_matrix(A, 0.0) - A).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS(threshold_matrix(A, -0.1), InvalidArgumentError);
    // The default network is invariant: its smallest magnitude is exactly 0.1.
    const Mat truth = default_ground_truth().A_true.entries;
    CHECK((threshold_matrix(truth, 0.1) - truth).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lag stacking pads the missing history with zeros") {
    Mat x(3, 2);
    x << 1.0, 2.0, 3.0, 4.0, 5.0, 6.0;
    const Mat lag = lagged_design(x, 2);
    REQUIRE(lag.rows() == 3);
    REQUIRE(lag.cols() == 4);
    // Row k = [x(k), x(k-1)].
    CHECK(lag(0, 0) == 1.0);
    CHECK(lag(0, 2) == 0.0);  // no history before the start
    CHECK(lag(1, 0) == 3.0);
    CHECK(lag(1, 2) == 1.0);
    CHECK(lag(2, 2) == 3.0);
    CHECK_THROWS_AS(lagged_design(x, 0), InvalidArgumentError);
}

TEST_CASE("response-weight estimate is exact on noiseless data") {
    const FirBasis basis = tiny_basis();
    Mat A(2, 2);
    A << -0.4, 0.2, 0.0, -0.6;
    GroundTruth t;
    t.A_true = ConnectivityMatrix(A);
    t.N = 150;
    const Mat x = simulate_neuronal(t, 61);
    // Build y exactly as the FIR model with the prior-mean weights.
    const Vec h = basis.design_matrix() * basis.weight_prior_mean();
    Mat y = Mat::Zero(t.N, 2);
    for (int k = 0; k < t.N; ++k)
        for (int l = 0; l < basis.taps && l <= k; ++l) y.row(k) += h(l) * x.row(k - l);
    const AlphaEstimate est = estimate_alpha(x, y, basis);
    CHECK((est.alpha - basis.weight_prior_mean()).cwiseAbs().maxCoeff() <= 1e-8);
    CHECK(est.lambda2 <= 1e-12);
}

TEST_CASE("response-weight estimate tracks a perturbed truth under noise") {
    const FirBasis basis = tiny_basis();
    Mat A(2, 2);
    A << -0.5, 0.25, -0.1, -0.7;
    GroundTruth t;
    t.A_true = ConnectivityMatrix(A);
    t.N = 400;
    const Mat x = simulate_neuronal(t, 67);
    Vec alpha_true = basis.weight_prior_mean();
    alpha_true(1) += 0.5 * std::sqrt(basis.component_variances(0));
    const Vec h = basis.design_matrix() * alpha_true;
    Mat y = Mat::Zero(t.N, 2);
    for (int k = 0; k < t.N; ++k)
        for (int l = 0; l < basis.taps && l <= k; ++l) y.row(k) += h(l) * x.row(k - l);
    std::mt19937_64 rng(71);
    std::normal_distribution<double> gauss(0.0, 0.002);
    for (int k = 0; k < t.N; ++k)
        for (int j = 0; j < 2; ++j) y(k, j) += gauss(rng);
    const AlphaEstimate est = estimate_alpha(x, y, basis);
    CHECK(est.lambda2 == doctest::Approx(4e-6).epsilon(0.25));
    // Implied responses agree closely.
    const Vec h_hat = basis.design_matrix() * est.alpha;
    CHECK((h_hat - h).norm() <= 0.05 * h.norm());
}

TEST_CASE("response-weight posterior reduces to ridge regression") {
    // With a flat prior mean and an isotropic prior covariance the posterior
    // mean is the classical ridge solution.
    const int taps = 3;
    FirBasis basis;
    basis.taps = taps;
    basis.T_R = 2.0;
    basis.hbar = Vec::Zero(taps);
    basis.hbar << 0.2, 1.0, 0.4;
    basis.components = Mat::Identity(taps, 2);
    basis.component_variances = Vec::Constant(2, 1.0);

    Mat x(40, 1);
    for (int k = 0; k < 40; ++k) x(k, 0) = std::sin(0.3 * k) + 0.2 * std::cos(1.1 * k);
    Mat y(40, 1);
    for (int k = 0; k < 40; ++k) {
        y(k, 0) = 0.05 * std::sin(0.9 * k + 0.3);
        for (int l = 0; l < taps && l <= k; ++l) y(k, 0) += basis.hbar(l) * x(k - l, 0);
    }
    const AlphaEstimate est = estimate_alpha(x, y, basis, 1.0);

    // Oracle: rebuild the stacked regressor and apply the posterior formula.
    const Mat H = basis.design_matrix();
    const Mat lag = lagged_design(x, taps);
    Mat bigH(40, 3);
    for (int k = 0; k < 40; ++k) bigH.row(k) = lag.row(k) * H;  // n = 1
    const Vec Y = y.col(0);
    const Vec a_ls = (bigH.transpose() * bigH).ldlt().solve(bigH.transpose() * Y);
    const double l2 = (Y - bigH * a_ls).squaredNorm() / (40.0 - 3.0);
    const Vec mu = basis.weight_prior_mean();
    Mat post = bigH.transpose() * bigH + l2 * Mat::Identity(3, 3);
    const Vec expected = mu + post.ldlt().solve(bigH.transpose() * (Y - bigH * mu));
    CHECK(est.lambda2 == doctest::Approx(l2).epsilon(1e-10));
    CHECK((est.alpha - expected).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("lag-state reshaping matches the output model") {
    // For n=2, s=2 and stacked state (1,2,3,4), the region-by-tap matrix is
    // [[1,3],[2,4]] and the output is phi * h.
    const Mat xk = (Mat(1, 4) << 1.0, 2.0, 3.0, 4.0).finished();
    Mat phi(2, 2);
    phi << 1.0, 3.0, 2.0, 4.0;
    Vec h(2);
    h << 0.7, -0.2;
    // Output through the lag row left-multiplied into blocks.
    Vec y_direct = Vec::Zero(2);
    for (int u = 0; u < 2; ++u) y_direct += h(u) * xk.block(0, 2 * u, 1, 2).transpose();
    CHECK((y_direct - phi * h).cwiseAbs().maxCoeff() == 0.0);
}

}  // TEST_SUITE
