#include "rsdcm/cli.hpp"

#include <chrono>
#include <cstdio>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "rsdcm/benchmark.hpp"
#include "rsdcm/config.hpp"
#include "rsdcm/em.hpp"
#include "rsdcm/errors.hpp"
#include "rsdcm/io.hpp"
#include "rsdcm/parallel.hpp"
#include "rsdcm/simulate.hpp"
#include "rsdcm/sparse_id.hpp"

namespace rsdcm {

namespace {

struct GlobalArgs {
    std::uint64_t seed = 12345;
    std::string config_path;
    std::string out_path;
    int jobs = 0;  // 0 = all available
    bool verbose = false;

    int effective_jobs() const { return jobs > 0 ? jobs : par::max_jobs(); }
    AppConfig config() const {
        return config_path.empty() ? AppConfig{} : load_config(config_path);
    }
    void require_out(const char* cmd) const {
        if (out_path.empty())
            throw ConfigError(std::string(cmd) + " needs --out <path>");
    }
    void note(const std::string& msg) const {
        if (verbose) std::cerr << "[rsdcm] " << msg << '\n';
    }
};

BalloonParams prior_mean_params(const AppConfig& cfg) {
    BalloonParams p;
    p.kappa = cfg.hemodynamics.prior.kappa.mean;
    p.gamma = cfg.hemodynamics.prior.gamma.mean;
    p.tau = cfg.hemodynamics.prior.tau.mean;
    p.alpha = cfg.hemodynamics.prior.alpha.mean;
    p.rho = cfg.hemodynamics.prior.rho.mean;
    return p;
}

FirBasis basis_from_config(const AppConfig& cfg, const GlobalArgs& g) {
    g.note("building hemodynamic basis from " +
           std::to_string(cfg.hemodynamics.build.samples) + " prior draws");
    const auto draws =
        sample_hemo_params(cfg.hemodynamics.prior, cfg.hemodynamics.build.samples, g.seed);
    return build_fir_basis(draws, cfg.hemodynamics.base, cfg.hemodynamics.build,
                           g.effective_jobs());
}

void cmd_simulate(const GlobalArgs& g) {
    g.require_out("simulate");
    const AppConfig cfg = g.config();
    const GroundTruth truth = ground_truth_from(cfg);
    g.note("simulating neuronal series");
    Dataset data;
    data.seed = g.seed;
    data.T_R = truth.T_R;
    data.x = simulate_neuronal(truth, g.seed);
    g.note("integrating BOLD responses");
    const BalloonParams gen = prior_mean_params(cfg);
    data.y = simulate_bold(data.x, gen, derive_bold_constants(gen.rho, cfg.hemodynamics.base),
                           truth.T_R, cfg.simulation.dt, g.effective_jobs());
    if (cfg.simulation.obs_noise > 0.0)
        data.y = add_observation_noise(data.y, cfg.simulation.obs_noise, g.seed + 0x9e3779b9u);
    save_dataset(g.out_path, data);
    g.note("dataset written to " + g.out_path);
}

void cmd_build_basis(const GlobalArgs& g) {
    g.require_out("build-basis");
    const AppConfig cfg = g.config();
    const FirBasis basis = basis_from_config(cfg, g);
    save_basis(g.out_path, basis);
    g.note("basis written to " + g.out_path);
}

void cmd_estimate_measured(const GlobalArgs& g, const std::string& data_path,
                           const std::string& basis_path) {
    g.require_out("estimate-measured");
    const AppConfig cfg = g.config();
    const Dataset data = load_dataset(data_path);
    const FirBasis basis = load_basis(basis_path);

    ReweightedOptions opts = cfg.algorithm1;
    opts.T_R = data.T_R;
    g.note("running sparse reweighted estimation on the measured series");
    MeasuredResult result;
    result.reweighted = run_reweighted(data.x, opts);
    result.alpha = estimate_alpha(data.x, data.y, basis, cfg.hemodynamics.mean_weight_var);
    result.threshold = cfg.benchmark.threshold;
    save_measured_result(g.out_path, result);
    g.note("result written to " + g.out_path);
}

void cmd_estimate_bold(const GlobalArgs& g, const std::string& data_path,
                       const std::string& basis_path, int max_iter_override,
                       double tol_override) {
    g.require_out("estimate-bold");
    const AppConfig cfg = g.config();
    const Dataset data = load_dataset(data_path);
    const FirBasis basis = load_basis(basis_path);

    EmOptions opts = cfg.em;
    if (max_iter_override > 0) opts.max_iters = max_iter_override;
    if (tol_override > 0.0) opts.tol = tol_override;
    g.note("running joint estimation from BOLD only");
    const auto t0 = std::chrono::steady_clock::now();
    const EmResult result = em_run(data.y, basis, opts);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    save_em_result(g.out_path, result, secs);
    g.note("result written to " + g.out_path);
}

void cmd_bench_table1(const GlobalArgs& g) {
    const AppConfig cfg = g.config();
    g.note("measured-activity benchmark, " + std::to_string(cfg.benchmark.table1_runs) +
           " replicates");
    const BenchmarkReport report = run_table1(cfg, g.seed, g.effective_jobs());
    std::cout << format_report(report);
    if (!g.out_path.empty()) {
        save_report(g.out_path, report);
        g.note("report written to " + g.out_path);
    }
}

void cmd_bench_table3(const GlobalArgs& g, const std::string& basis_path) {
    const AppConfig cfg = g.config();
    const FirBasis basis =
        basis_path.empty() ? basis_from_config(cfg, g) : load_basis(basis_path);
    g.note("latent-activity benchmark, " + std::to_string(cfg.benchmark.table3_runs) +
           " replicates");
    const BenchmarkReport report = run_table3(cfg, basis, g.seed, g.effective_jobs());
    std::cout << format_report(report);
    if (!g.out_path.empty()) {
        save_report(g.out_path, report);
        g.note("report written to " + g.out_path);
    }
}

void cmd_export_fig(const GlobalArgs& g, const std::string& basis_path) {
    g.require_out("export-fig");
    export_figure_data(load_basis(basis_path), g.out_path);
    g.note("figure data written to " + g.out_path);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"Sparse effective-connectivity estimation from resting-state BOLD"};
    app.fallthrough();

    GlobalArgs g;
    app.add_option("--seed", g.seed, "Base RNG seed");
    app.add_option("--config", g.config_path, "JSON config file");
    app.add_option("--out", g.out_path, "Output path");
    app.add_option("--jobs", g.jobs, "Worker threads (0 = all available)");
    app.add_flag("--verbose", g.verbose, "Progress notes on stderr");

    auto* sim = app.add_subcommand("simulate", "Generate a synthetic dataset");
    auto* basis_cmd = app.add_subcommand("build-basis", "Build the hemodynamic FIR basis");

    std::string data_path, basis_path;
    auto* est_x = app.add_subcommand("estimate-measured",
                                     "Estimate connectivity from measured neuronal series");
    est_x->add_option("--data", data_path, "Dataset file")->required();
    est_x->add_option("--basis", basis_path, "Basis file")->required();

    std::string bold_data, bold_basis;
    int max_iter_override = 0;
    double tol_override = 0.0;
    auto* est_y =
        app.add_subcommand("estimate-bold", "Estimate connectivity from BOLD only");
    est_y->add_option("--data", bold_data, "Dataset file")->required();
    est_y->add_option("--basis", bold_basis, "Basis file")->required();
    est_y->add_option("--max-iter", max_iter_override, "Override EM iteration cap");
    est_y->add_option("--tol", tol_override, "Override EM convergence tolerance");

    auto* bench = app.add_subcommand("bench", "Monte-Carlo benchmarks");
    bench->require_subcommand(1);
    auto* t1 = bench->add_subcommand("table1", "Measured-activity benchmark");
    std::string bench_basis;
    auto* t3 = bench->add_subcommand("table3", "Latent-activity benchmark");
    t3->add_option("--basis", bench_basis, "Basis file (built from config when absent)");

    std::string fig_basis;
    auto* fig = app.add_subcommand("export-fig", "Export basis data for plotting");
    fig->add_option("--basis", fig_basis, "Basis file")->required();

    app.require_subcommand(1);

    try {
        app.parse(argc, argv);
        if (sim->parsed()) cmd_simulate(g);
        if (basis_cmd->parsed()) cmd_build_basis(g);
        if (est_x->parsed()) cmd_estimate_measured(g, data_path, basis_path);
        if (est_y->parsed())
            cmd_estimate_bold(g, bold_data, bold_basis, max_iter_override, tol_override);
        if (bench->parsed()) {
            if (t1->parsed()) cmd_bench_table1(g);
            if (t3->parsed()) cmd_bench_table3(g, bench_basis);
        }
        if (fig->parsed()) cmd_export_fig(g, fig_basis);
        return 0;
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const InvalidArgumentError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 2;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return 4;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace rsdcm
