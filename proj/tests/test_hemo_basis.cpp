#include <doctest.h>

#include <cmath>
#include <vector>

#include "rsdcm/balloon.hpp"
#include "rsdcm/errors.hpp"
#include "rsdcm/hemo_basis.hpp"

using namespace rsdcm;

namespace {

FirBasis small_basis(int samples = 200, int jobs = 1, std::uint64_t seed = 7) {
    const HemoPrior prior;
    BasisBuildConfig cfg;
    cfg.samples = samples;
    const auto draws = sample_hemo_params(prior, samples, seed);
    return build_fir_basis(draws, OutputConstants{}, cfg, jobs);
}

}  // namespace

TEST_SUITE("hemo-basis") {

TEST_CASE("prior sampling is deterministic and respects the valid region") {
    const HemoPrior prior;
    const auto a = sample_hemo_params(prior, 300, 99);
    const auto b = sample_hemo_params(prior, 300, 99);
    REQUIRE(a.size() == 300);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].kappa == b[i].kappa);
        CHECK(a[i].tau == b[i].tau);
        CHECK_NOTHROW(a[i].validate());
    }
    const auto c = sample_hemo_params(prior, 300, 100);
    CHECK(c[0].kappa != a[0].kappa);
}

TEST_CASE("component columns are orthonormal") {
    const FirBasis basis = small_basis();
    const Mat gram = basis.components.transpose() * basis.components;
    CHECK((gram - Mat::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("component variances are positive and nonincreasing") {
    const FirBasis basis = small_basis();
    REQUIRE(basis.component_variances.size() == basis.components.cols());
    for (Eigen::Index i = 0; i < basis.component_variances.size(); ++i) {
        CHECK(basis.component_variances(i) > 0.0);
        if (i > 0) CHECK(basis.component_variances(i) <= basis.component_variances(i - 1));
    }
}

TEST_CASE("mean and components reproduce the ensemble principal axes") {
    // Independent oracle: rebuild the response ensemble for the same draws,
    // form the 1/N covariance directly, and eigendecompose it.
    const int samples = 150;
    const HemoPrior prior;
    BasisBuildConfig cfg;
    cfg.samples = samples;
    const auto draws = sample_hemo_params(prior, samples, 7);
    const FirBasis basis = build_fir_basis(draws, OutputConstants{}, cfg, 1);

    Mat ensemble(samples, cfg.taps);
    for (int i = 0; i < samples; ++i) {
        const OutputConstants c = derive_bold_constants(draws[static_cast<std::size_t>(i)].rho);
        const auto h = impulse_response(draws[static_cast<std::size_t>(i)], c, cfg.taps, cfg.T_R,
                                        cfg.dt, cfg.pulse_height);
        for (int t = 0; t < cfg.taps; ++t) ensemble(i, t) = h[static_cast<std::size_t>(t)];
    }
    const Vec mean = ensemble.colwise().mean().transpose();
    CHECK((mean - basis.hbar).cwiseAbs().maxCoeff() <= 1e-10);

    const Mat centered = ensemble.rowwise() - mean.transpose();
    const Mat cov = centered.transpose() * centered / static_cast<double>(samples);
    Eigen::SelfAdjointEigenSolver<Mat> es(cov);
    const Vec evals = es.eigenvalues().reverse();
    for (int kcomp = 0; kcomp < basis.num_components(); ++kcomp) {
        CHECK(basis.component_variances(kcomp) ==
              doctest::Approx(evals(kcomp)).epsilon(1e-8));
        const Vec u_ref = es.eigenvectors().col(cov.rows() - 1 - kcomp);
        CHECK(std::abs(u_ref.dot(basis.components.col(kcomp))) ==
              doctest::Approx(1.0).epsilon(1e-6));
    }
    // Eigenvalues of the full covariance account for its trace.
    CHECK(es.eigenvalues().sum() == doctest::Approx(cov.trace()).epsilon(1e-10));
    CHECK(es.eigenvalues().minCoeff() >= -1e-12 * cov.trace());
}

TEST_CASE("basis construction is identical across worker counts") {
    const FirBasis serial = small_basis(120, 1);
    const FirBasis parallel = small_basis(120, 4);
    CHECK((serial.hbar - parallel.hbar).cwiseAbs().maxCoeff() == 0.0);
    CHECK((serial.components - parallel.components).cwiseAbs().maxCoeff() == 0.0);
    CHECK((serial.component_variances - parallel.component_variances).cwiseAbs().maxCoeff() ==
          0.0);
}

TEST_CASE("design matrix leads with the mean response") {
    const FirBasis basis = small_basis();
    const Mat H = basis.design_matrix();
    REQUIRE(H.rows() == basis.taps);
    REQUIRE(H.cols() == basis.num_components() + 1);
    CHECK((H.col(0) - basis.hbar).cwiseAbs().maxCoeff() == 0.0);
    CHECK((H.rightCols(basis.num_components()) - basis.components).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("weight prior selects the mean response") {
    const FirBasis basis = small_basis();
    const Vec mu = basis.weight_prior_mean();
    CHECK(mu(0) == 1.0);
    CHECK(mu.tail(mu.size() - 1).cwiseAbs().maxCoeff() == 0.0);
    const Vec d = basis.weight_prior_cov_diag(0.5);
    CHECK(d(0) == 0.5);
    CHECK((d.tail(d.size() - 1) - basis.component_variances).cwiseAbs().maxCoeff() == 0.0);
    // The response implied by the prior mean is the mean response itself.
    CHECK((basis.design_matrix() * mu - basis.hbar).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("mean response peaks inside the physiological window") {
    const FirBasis basis = small_basis();
    Eigen::Index arg = 0;
    basis.hbar.maxCoeff(&arg);
    const double t_peak = basis.T_R * static_cast<double>(arg);
    CHECK(t_peak >= 2.0);
    CHECK(t_peak <= 10.0);
}

TEST_CASE("validation catches inconsistent shapes") {
    FirBasis b = small_basis();
    CHECK_NOTHROW(b.validate());
    FirBasis broken = b;
    broken.component_variances = Vec::Ones(2);
    CHECK_THROWS_AS(broken.validate(), ConfigError);
    broken = b;
    broken.taps = 0;
    CHECK_THROWS_AS(broken.validate(), ConfigError);
    broken = b;
    broken.hbar(0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(broken.validate(), ConfigError);
}

TEST_CASE("construction rejects degenerate inputs") {
    const HemoPrior prior;
    CHECK_THROWS_AS(sample_hemo_params(prior, 0, 1), InvalidArgumentError);
    BasisBuildConfig cfg;
    const auto one = sample_hemo_params(prior, 1, 1);
    CHECK_THROWS_AS(build_fir_basis(one, OutputConstants{}, cfg, 1), InvalidArgumentError);
}

}  // TEST_SUITE
