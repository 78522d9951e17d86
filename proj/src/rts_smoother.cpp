#include "rsdcm/rts_smoother.hpp"

#include <Eigen/Cholesky>

#include "rsdcm/errors.hpp"

namespace rsdcm {

namespace {

Mat symmetrized(const Mat& P) { return 0.5 * (P + P.transpose()); }

// LDLT that falls back to a relative diagonal jitter when the factorization
// reports trouble or produces a nonpositive pivot.
class JitteredSolver {
  public:
    JitteredSolver(const Mat& S, double rel_jitter, bool* flag) : ldlt_(S) {
        if (!usable()) {
            Mat Sj = S;
            Sj.diagonal().array() += rel_jitter * S.trace() / static_cast<double>(S.rows());
            ldlt_.compute(Sj);
            if (flag) *flag = true;
            if (!usable()) throw NumericalError("smoother covariance solve failed");
        }
    }
    Mat solve(const Mat& B) const { return ldlt_.solve(B); }

  private:
    bool usable() const {
        return ldlt_.info() == Eigen::Success && ldlt_.vectorD().minCoeff() > 0.0;
    }
    Eigen::LDLT<Mat> ldlt_;
};

}  // namespace

Mat SmootherOutput::neuronal_series(int n) const {
    Mat out(static_cast<Eigen::Index>(xs.size()), n);
    for (std::size_t k = 0; k < xs.size(); ++k) out.row(static_cast<Eigen::Index>(k)) =
        xs[k].head(n).transpose();
    return out;
}

SmootherOutput rts_smooth(const Mat& y, const ExtendedStateSystem& sys) {
    const int n = sys.n;
    const int s = sys.s;
    const int ns = sys.ns();
    const int N = static_cast<int>(y.rows());
    if (y.cols() != n) throw InvalidArgumentError("observation width must match the system");
    if (!y.allFinite()) throw InvalidArgumentError("observations must be finite");
    if (!(sys.lambda > 0.0)) throw InvalidArgumentError("observation noise must be positive");

    const Mat M = sys.Abold.topLeftCorner(n, n);
    const Mat Qtop = sys.Qbold.topLeftCorner(n, n);
    const Mat& C = sys.Cbold;
    const Mat R = sys.R();

    SmootherOutput out;
    std::vector<Vec> xf(static_cast<std::size_t>(N) + 1);
    std::vector<Mat> Pf(static_cast<std::size_t>(N) + 1);
    xf[0] = Vec::Zero(ns);
    Pf[0] = Mat::Identity(ns, ns);

    const auto predict_cov = [&](const Mat& P) {
        Mat Pp = companion_right_product(companion_left_product(M, P, n, s), M, n, s);
        Pp.topLeftCorner(n, n) += Qtop;
        return symmetrized(Pp);
    };

    for (int k = 1; k <= N; ++k) {
        const Vec x_pred = companion_state_product(M, xf[k - 1], n, s);
        const Mat P_pred = predict_cov(Pf[k - 1]);

        const Mat CP = C * P_pred;  // n x ns
        const Mat S = symmetrized(CP * C.transpose() + R);
        const JitteredSolver solver(S, 1e-12, &out.jittered);
        const Mat K = solver.solve(CP).transpose();  // ns x n

        xf[k] = x_pred + K * (y.row(k - 1).transpose() - C * x_pred);
        Pf[k] = symmetrized(P_pred - K * S * K.transpose());
    }

    out.xs.resize(static_cast<std::size_t>(N) + 1);
    out.Ps.resize(static_cast<std::size_t>(N) + 1);
    out.G.resize(static_cast<std::size_t>(N));
    out.xs[static_cast<std::size_t>(N)] = xf[static_cast<std::size_t>(N)];
    out.Ps[static_cast<std::size_t>(N)] = Pf[static_cast<std::size_t>(N)];

    for (int k = N - 1; k >= 0; --k) {
        const Vec x_pred = companion_state_product(M, xf[k], n, s);
        const Mat P_pred = predict_cov(Pf[k]);
        const Mat J = companion_right_product(Pf[k], M, n, s);  // P(k) Abold'

        const JitteredSolver solver(P_pred, 1e-12, &out.jittered);
        const Mat G = solver.solve(J.transpose()).transpose();

        out.xs[k] = xf[k] + G * (out.xs[k + 1] - x_pred);
        out.Ps[k] = symmetrized(Pf[k] + G * (out.Ps[k + 1] - P_pred) * G.transpose());
        out.G[k] = G;
    }
    return out;
}

SufficientStats sufficient_stats(const SmootherOutput& out, const Mat& y) {
    const int N = static_cast<int>(y.rows());
    if (static_cast<int>(out.xs.size()) != N + 1 || static_cast<int>(out.G.size()) != N)
        throw InvalidArgumentError("smoother output does not cover the observations");
    const Eigen::Index ns = out.xs[0].size();
    const Eigen::Index n = y.cols();

    SufficientStats st;
    st.N = N;
    st.Lambda = Mat::Zero(ns, ns);
    st.Upsilon = Mat::Zero(ns, ns);
    st.Psi = Mat::Zero(ns, ns);
    st.Xi = Mat::Zero(n, ns);
    st.Delta = Mat::Zero(n, n);

    for (int k = 1; k <= N; ++k) {
        const Vec& xk = out.xs[static_cast<std::size_t>(k)];
        const Vec& xk1 = out.xs[static_cast<std::size_t>(k) - 1];
        const Mat& Pk = out.Ps[static_cast<std::size_t>(k)];
        const Mat& Pk1 = out.Ps[static_cast<std::size_t>(k) - 1];
        const Vec yk = y.row(k - 1).transpose();

        st.Lambda.noalias() += Pk;
        st.Lambda.noalias() += xk * xk.transpose();
        st.Upsilon.noalias() += Pk1;
        st.Upsilon.noalias() += xk1 * xk1.transpose();
        // Cross moment from the pairwise smoothing covariance Ps(k) G(k-1)'.
        st.Psi.noalias() += Pk * out.G[static_cast<std::size_t>(k) - 1].transpose();
        st.Psi.noalias() += xk * xk1.transpose();
        st.Xi.noalias() += yk * xk.transpose();
        st.Delta.noalias() += yk * yk.transpose();
    }
    const double inv = 1.0 / static_cast<double>(N);
    st.Lambda = symmetrized(st.Lambda * inv);
    st.Upsilon = symmetrized(st.Upsilon * inv);
    st.Psi *= inv;
    st.Xi *= inv;
    st.Delta = symmetrized(st.Delta * inv);
    return st;
}

}  // namespace rsdcm
