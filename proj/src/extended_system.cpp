#include "rsdcm/extended_system.hpp"

#include "rsdcm/errors.hpp"

namespace rsdcm {

void EMParameters::validate() const {
    if (!(sigma > 0.0)) throw ConfigError("process-noise level sigma must be positive");
    if (!(lambda > 0.0)) throw ConfigError("observation-noise level lambda must be positive");
    if (!alpha.allFinite()) throw ConfigError("response weights must be finite");
    const Eigen::Index dim = static_cast<Eigen::Index>(A.n()) * A.n();
    if (gamma.size() != dim) throw ConfigError("need one sparsity weight per entry of A");
}

ExtendedStateSystem build_extended_system(const EMParameters& eta, const FirBasis& basis,
                                          double stability_eps) {
    eta.validate();
    basis.validate();
    if (eta.alpha.size() != basis.num_components() + 1)
        throw ConfigError("weight vector length must match the basis");
    if (!is_stable(eta.A.entries, stability_eps))
        throw NumericalError("extended system requires a stable connectivity matrix");

    ExtendedStateSystem sys;
    sys.n = eta.A.n();
    sys.s = basis.taps;
    sys.T_R = basis.T_R;
    sys.lambda = eta.lambda;
    const int n = sys.n;
    const int s = sys.s;
    const int ns = sys.ns();

    sys.Abold = Mat::Zero(ns, ns);
    sys.Abold.topLeftCorner(n, n) = mat_exp(eta.A.entries, sys.T_R);
    if (s > 1)
        sys.Abold.bottomLeftCorner(static_cast<Eigen::Index>(n) * (s - 1),
                                   static_cast<Eigen::Index>(n) * (s - 1))
            .setIdentity();

    const Vec h = basis.design_matrix() * eta.alpha;  // FIR taps under alpha
    sys.Cbold.resize(n, ns);
    for (int u = 0; u < s; ++u)
        sys.Cbold.middleCols(static_cast<Eigen::Index>(u) * n, n) =
            h(u) * Mat::Identity(n, n);

    sys.Qbold = Mat::Zero(ns, ns);
    sys.Qbold.topLeftCorner(n, n) =
        process_noise_integral(eta.A, eta.sigma, sys.T_R).Q;
    return sys;
}

Mat companion_left_product(const Mat& M, const Mat& P, int n, int s) {
    const Eigen::Index ns = static_cast<Eigen::Index>(n) * s;
    if (P.rows() != ns) throw InvalidArgumentError("companion product: row mismatch");
    Mat out(ns, P.cols());
    out.topRows(n).noalias() = M * P.topRows(n);
    if (s > 1) out.bottomRows(ns - n) = P.topRows(ns - n);
    return out;
}

Mat companion_right_product(const Mat& P, const Mat& M, int n, int s) {
    const Eigen::Index ns = static_cast<Eigen::Index>(n) * s;
    if (P.cols() != ns) throw InvalidArgumentError("companion product: column mismatch");
    Mat out(P.rows(), ns);
    out.leftCols(n).noalias() = P.leftCols(n) * M.transpose();
    if (s > 1) out.rightCols(ns - n) = P.leftCols(ns - n);
    return out;
}

Vec companion_state_product(const Mat& M, const Vec& x, int n, int s) {
    const Eigen::Index ns = static_cast<Eigen::Index>(n) * s;
    if (x.size() != ns) throw InvalidArgumentError("companion product: length mismatch");
    Vec out(ns);
    out.head(n).noalias() = M * x.head(n);
    if (s > 1) out.tail(ns - n) = x.head(ns - n);
    return out;
}

}  // namespace rsdcm
