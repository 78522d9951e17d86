#pragma once

#include <optional>
#include <string>

#include "rsdcm/balloon.hpp"
#include "rsdcm/em.hpp"
#include "rsdcm/hemo_basis.hpp"
#include "rsdcm/simulate.hpp"
#include "rsdcm/sparse_id.hpp"

namespace rsdcm {

/// All tunables of the pipeline, grouped the way the config file is. Every
/// field has the built-in default; a config file only overrides what it
/// names.
struct AppConfig {
    struct Simulation {
        int N = 600;
        double T_R = 2.0;
        double sigma2 = 0.01;
        double dt = 0.01;
        double obs_noise = 0.0;          // observation noise sd added to BOLD
        std::optional<Mat> A_true;       // defaults to the built-in 7-node net
    } simulation;

    struct Hemodynamics {
        HemoPrior prior;
        OutputConstants base;            // scanner constants before k1..k3
        BasisBuildConfig build;
        double mean_weight_var = 1.0;    // prior variance of the leading weight
    } hemodynamics;

    ReweightedOptions algorithm1;
    EmOptions em;

    struct Benchmark {
        int table1_runs = 50;
        int table3_runs = 20;
        double threshold = 0.1;
    } benchmark;
};

// Parse a JSON config file; unknown keys are ignored, present keys override
// the defaults above. Throws ConfigError on unreadable or malformed input.
AppConfig load_config(const std::string& path);

// Same, from an already-parsed JSON string (used by tests).
AppConfig config_from_json_text(const std::string& text);

GroundTruth ground_truth_from(const AppConfig& cfg);

}  // namespace rsdcm
