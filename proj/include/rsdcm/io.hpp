#pragma once

#include <cstdint>
#include <string>

#include "rsdcm/benchmark.hpp"
#include "rsdcm/em.hpp"
#include "rsdcm/hemo_basis.hpp"
#include "rsdcm/simulate.hpp"
#include "rsdcm/sparse_id.hpp"

namespace rsdcm {

/// Dataset file contents: the simulated series plus enough metadata to feed
/// the estimators.
struct Dataset {
    Mat x;
    Mat y;
    std::uint64_t seed = 0;
    double T_R = 2.0;
};

void save_dataset(const std::string& path, const Dataset& data);
Dataset load_dataset(const std::string& path);

void save_basis(const std::string& path, const FirBasis& basis);
FirBasis load_basis(const std::string& path);

/// Measured-activity estimation result: connectivity plus the hemodynamic
/// weight fit.
struct MeasuredResult {
    ReweightedResult reweighted;
    AlphaEstimate alpha;
    double threshold = 0.1;
};

void save_measured_result(const std::string& path, const MeasuredResult& result);
void save_em_result(const std::string& path, const EmResult& result, double wall_seconds);

void save_report(const std::string& path, const BenchmarkReport& report);

// Plotting export: FIR tap times with the mean response, and the component
// index with its variance, side by side in one CSV.
void export_figure_data(const FirBasis& basis, const std::string& path);

}  // namespace rsdcm
