#include "rsdcm/regression.hpp"

#include "rsdcm/errors.hpp"

namespace rsdcm {

RegressionData build_regression(const Mat& x_series, double T_R) {
    const int N = static_cast<int>(x_series.rows());
    const int n = static_cast<int>(x_series.cols());
    if (N < 3) throw InvalidArgumentError("regression needs at least three samples");
    if (!(T_R > 0.0)) throw InvalidArgumentError("sampling interval must be positive");
    if (!x_series.allFinite()) throw InvalidArgumentError("series must be finite");

    RegressionData d;
    d.T_R = T_R;
    d.Xplus = x_series.bottomRows(N - 1);
    d.X = x_series.topRows(N - 1);

    // Phi = (I_n (x) X) * T_R: block-diagonal with X repeated n times, so
    // vec(X A' T_R) = Phi vec(A').
    d.Phi = Mat::Zero(static_cast<Eigen::Index>(n) * (N - 1), static_cast<Eigen::Index>(n) * n);
    for (int b = 0; b < n; ++b)
        d.Phi.block(static_cast<Eigen::Index>(b) * (N - 1), static_cast<Eigen::Index>(b) * n,
                    N - 1, n) = T_R * d.X;

    const Mat delta = d.Xplus - d.X;
    d.xvec = Eigen::Map<const Vec>(delta.data(), delta.size());
    return d;
}

MomentStats moments_from_series(const Mat& Xplus, const Mat& X) {
    if (Xplus.rows() != X.rows() || Xplus.cols() != X.cols())
        throw InvalidArgumentError("moment inputs must have matching shapes");
    MomentStats s;
    s.Lambda = Xplus.transpose() * Xplus;
    s.Psi = Xplus.transpose() * X;
    s.Upsilon = X.transpose() * X;
    return s;
}

Mat residual_moment(const MomentStats& stats, const Mat& M) {
    Mat S = stats.Lambda - stats.Psi * M.transpose() - M * stats.Psi.transpose() +
            M * stats.Upsilon * M.transpose();
    return 0.5 * (S + S.transpose());
}

Vec flatten_rowmajor(const Mat& A) {
    const int n = static_cast<int>(A.rows());
    Vec a(static_cast<Eigen::Index>(n) * A.cols());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < A.cols(); ++j) a(static_cast<Eigen::Index>(i) * A.cols() + j) = A(i, j);
    return a;
}

Mat unflatten_rowmajor(const Vec& a, int n) {
    if (a.size() != static_cast<Eigen::Index>(n) * n)
        throw InvalidArgumentError("flattened vector has wrong length");
    Mat A(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A(i, j) = a(static_cast<Eigen::Index>(i) * n + j);
    return A;
}

ExactFitObjective::ExactFitObjective(MomentStats stats, const ProcessNoiseCov& Q,
                                     Vec prior_precision, double data_weight,
                                     double prior_weight, double T_R)
    : stats_(std::move(stats)),
      Qsolver_(Q.Q),
      prior_precision_(std::move(prior_precision)),
      data_weight_(data_weight),
      prior_weight_(prior_weight),
      T_R_(T_R) {
    n_ = static_cast<int>(stats_.Lambda.rows());
    if (prior_precision_.size() != static_cast<Eigen::Index>(n_) * n_)
        throw InvalidArgumentError("prior precision must have n^2 entries");
}

double ExactFitObjective::data_term(const Mat& A) const {
    const Mat M = mat_exp(A, T_R_);
    const Mat S = residual_moment(stats_, M);
    return data_weight_ * Qsolver_.solve(S).trace();
}

double ExactFitObjective::value(const Vec& a, Vec* grad) const {
    const Mat A = unflatten_rowmajor(a, n_);
    const Mat M = mat_exp(A, T_R_);
    const Mat S = residual_moment(stats_, M);
    double f = data_weight_ * Qsolver_.solve(S).trace();
    f += prior_weight_ * a.dot(prior_precision_.cwiseProduct(a));

    if (grad) {
        // d/dM of tr[Q^{-1} S(M)] = 2 Q^{-1} (M Upsilon - Psi); pull back
        // through M = e^{A T_R} via the adjoint of the exponential's
        // Frechet derivative (evaluate it at the transposed argument).
        const Mat G_M =
            2.0 * data_weight_ * Qsolver_.solve(M * stats_.Upsilon - stats_.Psi);
        const Mat G_A = T_R_ * mat_exp_frechet(T_R_ * A.transpose(), G_M);
        *grad = flatten_rowmajor(G_A) + 2.0 * prior_weight_ * prior_precision_.cwiseProduct(a);
    }
    return f;
}

}  // namespace rsdcm
