#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rsdcm/config.hpp"
#include "rsdcm/hemo_basis.hpp"
#include "rsdcm/statespace.hpp"

namespace rsdcm {

// 0/1 indicator of the nonzero entries.
Mat sparsity_pattern(const Mat& A);

// Frobenius distance of the off-diagonal parts, scaled by sqrt(n(n-1)).
double rmse(const Mat& A_true, const Mat& A_hat);

// Number of entries whose zero/nonzero status differs (all n^2 entries).
int err_count(const Mat& A_true, const Mat& A_hat);

// Same restricted to off-diagonal entries (reported as an extra column; not
// part of the standard definition above).
int err_count_offdiag(const Mat& A_true, const Mat& A_hat);

double median(std::vector<double> values);
double sample_sd(const std::vector<double>& values);

struct RunMetrics {
    int replicate = 0;
    std::uint64_t seed = 0;
    double err = 0.0;
    double err_offdiag = 0.0;
    double rmse = 0.0;
    double seconds = 0.0;
    int iterations = 0;
    bool converged = false;
    bool failed = false;
    std::string error;
};

struct ArmSummary {
    std::string name;
    std::vector<RunMetrics> runs;
    double median_err = 0.0;
    double sd_err = 0.0;
    double median_rmse = 0.0;
    double sd_rmse = 0.0;
    double mean_seconds = 0.0;
    int failures = 0;
};

struct BenchmarkReport {
    std::string table;
    std::uint64_t base_seed = 0;
    double threshold = 0.0;
    int runs_requested = 0;
    std::vector<ArmSummary> arms;
    // Published reference point: spectral DCM given the true pattern reaches
    // RMSE 0.12 on this setup; printed alongside the latent-state results.
    double sdcm_reference_rmse = 0.12;
};

// Measured-activity benchmark: simulate neuronal series, run the exact-model
// and linearized reweighting arms, threshold, score. Replicates run in
// parallel; seed_i = base_seed + i.
BenchmarkReport run_table1(const AppConfig& cfg, std::uint64_t base_seed, int jobs);

// Latent-activity benchmark: simulate BOLD through the Balloon model, run
// the EM estimator, threshold, score.
BenchmarkReport run_table3(const AppConfig& cfg, const FirBasis& basis,
                           std::uint64_t base_seed, int jobs);

// Aligned text rendering of a report (the human-readable mirror of the JSON).
std::string format_report(const BenchmarkReport& report);

}  // namespace rsdcm
