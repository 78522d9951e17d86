// Timing harness for the parallel kernels against their serial reference
// path (jobs = 1). Also verifies that both paths produce bit-identical
// results, which the test suite relies on.

#include <chrono>
#include <cstdio>

#include "rsdcm/hemo_basis.hpp"
#include "rsdcm/parallel.hpp"
#include "rsdcm/simulate.hpp"

using namespace rsdcm;

namespace {

template <typename F>
double time_seconds(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const char* name, double serial_s, double parallel_s, bool identical) {
    std::printf("%-24s serial %8.3f s   parallel %8.3f s   speedup %5.2fx   %s\n", name,
                serial_s, parallel_s, serial_s / parallel_s,
                identical ? "outputs identical" : "OUTPUT MISMATCH");
}

}  // namespace

int main() {
    const int jobs = par::max_jobs();
    std::printf("worker threads available: %d\n\n", jobs);

    {
        const HemoPrior prior;
        const auto draws = sample_hemo_params(prior, 200, 7);
        BasisBuildConfig cfg;
        cfg.samples = 200;
        FirBasis serial, parallel;
        const double ts = time_seconds([&] { serial = build_fir_basis(draws, {}, cfg, 1); });
        const double tp =
            time_seconds([&] { parallel = build_fir_basis(draws, {}, cfg, jobs); });
        const bool same = serial.hbar == parallel.hbar &&
                          serial.components == parallel.components &&
                          serial.component_variances == parallel.component_variances;
        report("basis construction", ts, tp, same);
    }

    {
        const GroundTruth truth = default_ground_truth();
        const Mat x = simulate_neuronal(truth, 11);
        const BalloonParams params;
        const OutputConstants consts = derive_bold_constants(params.rho);
        Mat ys, yp;
        const double ts =
            time_seconds([&] { ys = simulate_bold(x, params, consts, truth.T_R, 0.01, 1); });
        const double tp =
            time_seconds([&] { yp = simulate_bold(x, params, consts, truth.T_R, 0.01, jobs); });
        report("BOLD integration", ts, tp, ys == yp);
    }

    return 0;
}
