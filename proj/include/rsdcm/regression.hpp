#pragma once

#include "rsdcm/statespace.hpp"

namespace rsdcm {

/// One-step regression form of the discrete dynamics: rows of Xplus are
/// x(2..N), rows of X are x(1..N-1), so Xplus = X e^{A' T_R} + noise.
struct RegressionData {
    Mat Xplus;   // (N-1) x n
    Mat X;       // (N-1) x n
    Mat Phi;     // n(N-1) x n^2 design matrix (I_n (x) X) * T_R
    Vec xvec;    // vec(Xplus - X), length n(N-1)
    double T_R = 0.0;

    int n() const { return static_cast<int>(X.cols()); }
    int rows() const { return static_cast<int>(X.rows()); }
};

RegressionData build_regression(const Mat& x_series, double T_R);

/// Second-moment statistics sufficient for the one-step fit. From measured
/// series these are plain Gram matrices; the smoother supplies posterior
/// versions including state covariances.
struct MomentStats {
    Mat Lambda;   // sum/avg of x+ x+'
    Mat Psi;      // sum/avg of x+ x'
    Mat Upsilon;  // sum/avg of x x'
};

MomentStats moments_from_series(const Mat& Xplus, const Mat& X);

// S(M) = Lambda - Psi M' - M Psi' + M Upsilon M', the residual second moment
// of x+ - M x under the transition matrix M. Symmetrized.
Mat residual_moment(const MomentStats& stats, const Mat& M);

// Flattening convention used throughout: a holds A row by row, i.e. the
// column-stacked vector of A'. a(i*n + j) = A(i, j).
Vec flatten_rowmajor(const Mat& A);
Mat unflatten_rowmajor(const Vec& a, int n);

/// Penalized exact-model objective
///   f(A) = data_weight * tr[Q^{-1} S(e^{A T_R})] + prior_weight * a' diag(prior_precision) a
/// with analytic gradient through the matrix exponential.
class ExactFitObjective {
  public:
    ExactFitObjective(MomentStats stats, const ProcessNoiseCov& Q, Vec prior_precision,
                      double data_weight, double prior_weight, double T_R);

    double value(const Vec& a, Vec* grad = nullptr) const;
    double data_term(const Mat& A) const;
    int n() const { return n_; }

  private:
    MomentStats stats_;
    RegularizedSpd Qsolver_;
    Vec prior_precision_;  // per-coordinate, zero means unpenalized
    double data_weight_;
    double prior_weight_;
    double T_R_;
    int n_;
};

}  // namespace rsdcm
