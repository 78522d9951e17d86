#include "rsdcm/hemo_basis.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <random>

#include "rsdcm/errors.hpp"
#include "rsdcm/parallel.hpp"

namespace rsdcm {

namespace {

// Draw from N(mean, var) restricted to (lo, hi) by rejection.
double draw_truncated(std::mt19937_64& rng, double mean, double var, double lo, double hi) {
    std::normal_distribution<double> dist(mean, std::sqrt(var));
    for (int attempt = 0; attempt < 100000; ++attempt) {
        const double x = dist(rng);
        if (x > lo && x < hi) return x;
    }
    throw NumericalError("truncated prior rejection sampling failed to accept");
}

void check_marginal(const HemoPrior::Marginal& m, const char* name) {
    if (!(m.var > 0.0) || !std::isfinite(m.mean))
        throw ConfigError(std::string("invalid prior for ") + name);
}

}  // namespace

void HemoPrior::validate() const {
    check_marginal(kappa, "kappa");
    check_marginal(gamma, "gamma");
    check_marginal(tau, "tau");
    check_marginal(alpha, "alpha");
    check_marginal(rho, "rho");
}

Mat FirBasis::design_matrix() const {
    Mat H(taps, num_components() + 1);
    H.col(0) = hbar;
    H.rightCols(num_components()) = components;
    return H;
}

Vec FirBasis::weight_prior_mean() const {
    Vec mu = Vec::Zero(num_components() + 1);
    mu(0) = 1.0;
    return mu;
}

Vec FirBasis::weight_prior_cov_diag(double mean_weight_var) const {
    if (!(mean_weight_var > 0.0))
        throw ConfigError("weight prior variance for the mean response must be positive");
    Vec d(num_components() + 1);
    d(0) = mean_weight_var;
    d.tail(num_components()) = component_variances;
    return d;
}

void FirBasis::validate() const {
    if (taps < 1 || !(T_R > 0.0)) throw ConfigError("basis has invalid tap layout");
    if (hbar.size() != taps || components.rows() != taps)
        throw ConfigError("basis dimensions are inconsistent");
    if (component_variances.size() != components.cols())
        throw ConfigError("basis needs one variance per component");
    if (!hbar.allFinite() || !components.allFinite() || !component_variances.allFinite())
        throw ConfigError("basis contains non-finite values");
    for (int i = 0; i < component_variances.size(); ++i)
        if (component_variances(i) < 0.0) throw ConfigError("negative component variance");
}

std::vector<BalloonParams> sample_hemo_params(const HemoPrior& prior, int count,
                                              std::uint64_t seed) {
    prior.validate();
    if (count < 1) throw InvalidArgumentError("need at least one prior draw");
    std::mt19937_64 rng(seed);
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<BalloonParams> draws(static_cast<std::size_t>(count));
    for (auto& p : draws) {
        p.kappa = draw_truncated(rng, prior.kappa.mean, prior.kappa.var, 0.0, inf);
        p.gamma = draw_truncated(rng, prior.gamma.mean, prior.gamma.var, 0.0, inf);
        p.tau = draw_truncated(rng, prior.tau.mean, prior.tau.var, 0.0, inf);
        p.alpha = draw_truncated(rng, prior.alpha.mean, prior.alpha.var, 0.0, 1.0);
        p.rho = draw_truncated(rng, prior.rho.mean, prior.rho.var, 0.0, 1.0);
    }
    return draws;
}

FirBasis build_fir_basis(const std::vector<BalloonParams>& draws,
                         const OutputConstants& base_consts, const BasisBuildConfig& cfg,
                         int jobs) {
    const int N_s = static_cast<int>(draws.size());
    if (N_s < 2) throw InvalidArgumentError("basis construction needs at least two draws");
    if (cfg.components < 1 || cfg.components >= cfg.taps)
        throw ConfigError("component count must lie in [1, taps)");

    // One impulse response per draw; rows are draws, columns are taps.
    Mat responses(N_s, cfg.taps);
    par::for_index(N_s, jobs, [&](int i) {
        const BalloonParams& p = draws[static_cast<std::size_t>(i)];
        const OutputConstants consts = derive_bold_constants(p.rho, base_consts);
        const std::vector<double> h =
            impulse_response(p, consts, cfg.taps, cfg.T_R, cfg.dt, cfg.pulse_height);
        for (int k = 0; k < cfg.taps; ++k) responses(i, k) = h[static_cast<std::size_t>(k)];
    });

    FirBasis basis;
    basis.taps = cfg.taps;
    basis.T_R = cfg.T_R;
    basis.hbar = responses.colwise().mean().transpose();

    const Mat centered = responses.rowwise() - basis.hbar.transpose();
    const Mat cov = centered.transpose() * centered / static_cast<double>(N_s);

    Eigen::SelfAdjointEigenSolver<Mat> eig(cov);
    if (eig.info() != Eigen::Success)
        throw NumericalError("eigendecomposition of the response covariance failed");

    basis.components.resize(cfg.taps, cfg.components);
    basis.component_variances.resize(cfg.components);
    for (int j = 0; j < cfg.components; ++j) {
        // Eigen sorts ascending; take from the top for nonincreasing variance.
        const int src = cfg.taps - 1 - j;
        Vec u = eig.eigenvectors().col(src);
        // Fix the sign so the largest-magnitude entry is positive.
        int imax = 0;
        u.cwiseAbs().maxCoeff(&imax);
        if (u(imax) < 0.0) u = -u;
        basis.components.col(j) = u;
        basis.component_variances(j) = std::max(eig.eigenvalues()(src), 0.0);
    }
    basis.validate();
    return basis;
}

}  // namespace rsdcm
