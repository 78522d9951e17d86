#include "rsdcm/sparse_id.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>

#include "rsdcm/errors.hpp"
#include "rsdcm/quasi_newton.hpp"

namespace rsdcm {

namespace {

// Compressed Gram matrix B = Phi' (Q (x) I)^{-1} Phi = T_R^2 kron(Q^{-1}, X'X),
// the only piece of the big covariance the weight update actually needs.
Mat compressed_gram(const Mat& G, double T_R, const Mat& Qinv) {
    const int n = static_cast<int>(G.rows());
    Mat B(static_cast<Eigen::Index>(n) * n, static_cast<Eigen::Index>(n) * n);
    for (int bi = 0; bi < n; ++bi)
        for (int bj = 0; bj < n; ++bj)
            B.block(static_cast<Eigen::Index>(bi) * n, static_cast<Eigen::Index>(bj) * n, n, n) =
                (T_R * T_R * Qinv(bi, bj)) * G;
    return B;
}

Mat compressed_gram(const RegressionData& data, const Mat& Qinv) {
    return compressed_gram(data.X.transpose() * data.X, data.T_R, Qinv);
}

Vec floored_precision(const Vec& gamma, double floor) {
    Vec prec(gamma.size());
    for (Eigen::Index i = 0; i < gamma.size(); ++i) prec(i) = 1.0 / std::max(gamma(i), floor);
    return prec;
}

}  // namespace

double sigma_step(const Mat& Xplus, const Mat& X, const ConnectivityMatrix& A,
                  const ProcessNoiseCov& Qshape, double T_R) {
    const int n = A.n();
    const int N = static_cast<int>(Xplus.rows()) + 1;  // full series length
    const double norm2 = weighted_residual_norm(Xplus, X, A, Qshape, T_R);
    return norm2 / (static_cast<double>(N) * n);
}

ConnectivityMatrix a_step(const RegressionData& data, const Vec& gamma,
                          const ProcessNoiseCov& Q, const ConnectivityMatrix& A_init,
                          const ReweightedOptions& opts) {
    const int n = data.n();
    const Eigen::Index dim = static_cast<Eigen::Index>(n) * n;
    if (gamma.size() != dim) throw InvalidArgumentError("gamma must have n^2 entries");

    std::vector<char> mask(static_cast<std::size_t>(dim), 1);
    Vec prec = Vec::Zero(dim);
    bool any_pruned = false;
    for (Eigen::Index i = 0; i < dim; ++i) {
        if (gamma(i) <= opts.gamma_floor) {
            mask[static_cast<std::size_t>(i)] = 0;  // pruned: frozen at zero
            any_pruned = true;
        } else {
            prec(i) = 1.0 / gamma(i);
        }
    }

    const auto feasible = [&](const Vec& a) {
        return is_stable(unflatten_rowmajor(a, n), opts.stability_eps);
    };

    Vec a0 = flatten_rowmajor(A_init.entries);
    if (any_pruned) {
        Vec a_masked = a0;
        for (Eigen::Index i = 0; i < dim; ++i)
            if (!mask[static_cast<std::size_t>(i)]) a_masked(i) = 0.0;
        if (feasible(a_masked)) {
            a0 = a_masked;
        } else {
            // Zeroing the pruned entries broke stability: keep them free but
            // under the stiffest penalty the floor allows.
            mask.assign(static_cast<std::size_t>(dim), 1);
            prec = floored_precision(gamma, opts.gamma_floor);
        }
    }
    if (!feasible(a0))
        throw NumericalError("connectivity update has no stable starting point");

    const ExactFitObjective obj(moments_from_series(data.Xplus, data.X), Q, prec, 1.0, 1.0,
                                data.T_R);
    const auto fn = [&](const Vec& a, Vec* g) { return obj.value(a, g); };
    const QuasiNewtonResult res = minimize_bfgs(fn, feasible, a0, mask);

    ConnectivityMatrix A(unflatten_rowmajor(res.x, n));
    if (!is_stable(A.entries, opts.stability_eps))
        throw NumericalError("connectivity update returned an unstable matrix");
    return A;
}

Vec gamma_step_gram(const Vec& a, const Vec& gamma, const Mat& gram, double T_R,
                    const ProcessNoiseCov& Q) {
    const int n = static_cast<int>(gram.rows());
    const Eigen::Index dim = static_cast<Eigen::Index>(n) * n;
    if (a.size() != dim || gamma.size() != dim)
        throw InvalidArgumentError("weight update needs n^2 coefficients and weights");

    const Mat Qinv = RegularizedSpd(Q.Q).inverse();
    const Mat B = compressed_gram(gram, T_R, Qinv);

    // phi_i' Sigma^{-1} phi_i with Sigma = Phi Gamma Phi' + Q (x) I, via
    // Woodbury: diag(B) - diag(B S (I + S B S)^{-1} S B), S = Gamma^{1/2}.
    const Vec sq = gamma.cwiseMax(0.0).cwiseSqrt();
    Mat C = Mat::Identity(dim, dim);
    C.noalias() += sq.asDiagonal() * B * sq.asDiagonal();
    Eigen::LLT<Mat> llt(C);
    if (llt.info() != Eigen::Success)
        throw NumericalError("weight update: inner system not positive definite");
    const Mat Bs = B * sq.asDiagonal();
    const Mat correction = Bs * llt.solve(Bs.transpose());

    Vec out(dim);
    for (Eigen::Index i = 0; i < dim; ++i) {
        const double quad = B(i, i) - correction(i, i);
        out(i) = std::max(a(i) * a(i) + gamma(i) - gamma(i) * gamma(i) * quad, 0.0);
    }
    return out;
}

Vec gamma_step(const Vec& a, const Vec& gamma, const RegressionData& data,
               const ProcessNoiseCov& Q) {
    return gamma_step_gram(a, gamma, data.X.transpose() * data.X, data.T_R, Q);
}

ConnectivityMatrix linear_a_step(const RegressionData& data, const Vec& gamma,
                                 const ProcessNoiseCov& Q, double gamma_floor) {
    const int n = data.n();
    const Eigen::Index dim = static_cast<Eigen::Index>(n) * n;
    if (gamma.size() != dim) throw InvalidArgumentError("gamma must have n^2 entries");

    const Mat Qinv = RegularizedSpd(Q.Q).inverse();
    Mat normal = compressed_gram(data, Qinv);
    normal.diagonal() += floored_precision(gamma, gamma_floor);

    const Mat delta = data.Xplus - data.X;
    const Vec rhs = flatten_rowmajor(data.T_R * Qinv * (delta.transpose() * data.X));

    Eigen::LDLT<Mat> ldlt(normal);
    if (ldlt.info() != Eigen::Success) {
        normal.diagonal().array() += 1e-10 * normal.diagonal().maxCoeff();
        ldlt.compute(normal);
        if (ldlt.info() != Eigen::Success)
            throw NumericalError("linearized update: normal equations not solvable");
    }
    return ConnectivityMatrix(unflatten_rowmajor(ldlt.solve(rhs), n));
}

ReweightedResult run_reweighted(const Mat& x_series, const ReweightedOptions& opts) {
    const RegressionData data = build_regression(x_series, opts.T_R);
    const int n = data.n();
    const Eigen::Index dim = static_cast<Eigen::Index>(n) * n;

    Mat A = -Mat::Identity(n, n);
    Vec gamma = Vec::Constant(dim, opts.gamma_init);

    ReweightedResult result;
    bool converged = false;
    int iters = 0;
    for (int j = 0; j < opts.max_iters; ++j) {
        const ConnectivityMatrix A_cur(A);
        const ProcessNoiseCov Qshape = process_noise_integral(A_cur, 1.0, opts.T_R);
        const double sigma2 = sigma_step(data.Xplus, data.X, A_cur, Qshape, opts.T_R);
        ProcessNoiseCov Qj;
        Qj.sigma = std::sqrt(sigma2);
        Qj.Q = sigma2 * Qshape.Q;

        const ExactFitObjective trace_obj(moments_from_series(data.Xplus, data.X), Qj,
                                          floored_precision(gamma, opts.gamma_floor), 1.0, 1.0,
                                          opts.T_R);

        const ConnectivityMatrix A_new = opts.linear_update
                                             ? linear_a_step(data, gamma, Qj, opts.gamma_floor)
                                             : a_step(data, gamma, Qj, A_cur, opts);

        ReweightedIteration rec;
        rec.iter = j;
        rec.sigma2 = sigma2;
        rec.objective_start = trace_obj.value(flatten_rowmajor(A));
        rec.objective_end = trace_obj.value(flatten_rowmajor(A_new.entries));
        rec.a_change =
            (A_new.entries - A).norm() / std::max(A_new.entries.norm(), 1e-300);
        result.trace.push_back(rec);

        gamma = gamma_step(flatten_rowmajor(A_new.entries), gamma, data, Qj);
        A = A_new.entries;
        iters = j + 1;
        if (rec.a_change < opts.tol) {
            converged = true;
            break;
        }
    }

    // Pair the reported noise level with the final connectivity iterate.
    const ConnectivityMatrix A_fin(A);
    const ProcessNoiseCov Qshape = process_noise_integral(A_fin, 1.0, opts.T_R);
    const double sigma2 = sigma_step(data.Xplus, data.X, A_fin, Qshape, opts.T_R);

    result.A_hat = A_fin;
    result.sigma_hat = std::sqrt(sigma2);
    result.gamma = gamma;
    result.iterations = iters;
    result.converged = converged;
    return result;
}

Mat threshold_matrix(const Mat& A, double thresh) {
    if (!(thresh >= 0.0)) throw InvalidArgumentError("threshold must be nonnegative");
    Mat out = A;
    for (Eigen::Index i = 0; i < out.rows(); ++i)
        for (Eigen::Index j = 0; j < out.cols(); ++j)
            if (std::abs(out(i, j)) < thresh) out(i, j) = 0.0;
    return out;
}

Mat lagged_design(const Mat& x_series, int taps) {
    if (taps < 1) throw InvalidArgumentError("need at least one lag");
    const int N = static_cast<int>(x_series.rows());
    const int n = static_cast<int>(x_series.cols());
    Mat lag = Mat::Zero(N, static_cast<Eigen::Index>(n) * taps);
    for (int k = 0; k < N; ++k)
        for (int j = 0; j < taps && j <= k; ++j)
            lag.block(k, static_cast<Eigen::Index>(j) * n, 1, n) = x_series.row(k - j);
    return lag;
}

AlphaEstimate estimate_alpha(const Mat& x_series, const Mat& y_series, const FirBasis& basis,
                             double mean_weight_var) {
    basis.validate();
    const int N = static_cast<int>(x_series.rows());
    const int n = static_cast<int>(x_series.cols());
    const int s = basis.taps;
    const int p = basis.num_components();
    if (y_series.rows() != N || y_series.cols() != n)
        throw InvalidArgumentError("neuronal and BOLD series must have matching shapes");
    if (static_cast<long>(N) * n <= p + 1)
        throw InvalidArgumentError("not enough samples to estimate the response weights");

    const Mat H = basis.design_matrix();
    const Mat lag = lagged_design(x_series, s);

    // Row block k of the stacked regressor is phi(k) H, where phi(k) is the
    // n x s lag matrix of region activities feeding the FIR model.
    Mat bigH(static_cast<Eigen::Index>(N) * n, p + 1);
    Vec Y(static_cast<Eigen::Index>(N) * n);
    for (int k = 0; k < N; ++k) {
        const Vec lrow = lag.row(k).transpose();  // contiguous copy of the lag row
        const Eigen::Map<const Mat> phi(lrow.data(), n, s);
        bigH.middleRows(static_cast<Eigen::Index>(k) * n, n).noalias() = phi * H;
        Y.segment(static_cast<Eigen::Index>(k) * n, n) = y_series.row(k).transpose();
    }

    Mat HtH = bigH.transpose() * bigH;
    const Vec HtY = bigH.transpose() * Y;

    AlphaEstimate est;
    Eigen::SelfAdjointEigenSolver<Mat> eig(HtH);
    const double lmax = eig.eigenvalues().maxCoeff();
    if (!(eig.eigenvalues().minCoeff() > 1e-12 * std::max(lmax, 1e-300))) {
        HtH.diagonal().array() += 1e-10 * std::max(lmax, 1.0);
        est.ridge_regularized = true;
    }

    const Vec alpha_ls = HtH.ldlt().solve(HtY);
    est.lambda2 =
        (Y - bigH * alpha_ls).squaredNorm() / (static_cast<double>(N) * n - (p + 1));

    const Vec mu = basis.weight_prior_mean();
    const Vec cov_diag = basis.weight_prior_cov_diag(mean_weight_var).cwiseMax(1e-12);
    Mat posterior = bigH.transpose() * bigH;
    posterior.diagonal() += est.lambda2 * cov_diag.cwiseInverse();
    if (est.ridge_regularized)
        posterior.diagonal().array() += 1e-10 * std::max(lmax, 1.0);
    est.alpha = mu + posterior.ldlt().solve(bigH.transpose() * (Y - bigH * mu));
    return est;
}

}  // namespace rsdcm
