#include "rsdcm/config.hpp"

#include <fstream>

#include <json.hpp>

#include "rsdcm/errors.hpp"

namespace rsdcm {

namespace {

using nlohmann::json;

template <typename T>
void read_into(const json& j, const char* key, T& dst) {
    if (j.contains(key)) {
        try {
            dst = j.at(key).get<T>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config key '") + key + "': " + e.what());
        }
    }
}

Mat read_matrix(const json& j, const char* key) {
    const auto& rows = j.at(key);
    if (!rows.is_array() || rows.empty())
        throw ConfigError(std::string("config key '") + key + "' must be a matrix");
    const auto nrows = rows.size();
    const auto ncols = rows.at(0).size();
    Mat m(static_cast<Eigen::Index>(nrows), static_cast<Eigen::Index>(ncols));
    for (std::size_t i = 0; i < nrows; ++i) {
        if (rows.at(i).size() != ncols)
            throw ConfigError(std::string("config key '") + key + "' has ragged rows");
        for (std::size_t k = 0; k < ncols; ++k)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) =
                rows.at(i).at(k).get<double>();
    }
    return m;
}

void read_marginal(const json& j, const char* key, HemoPrior::Marginal& m) {
    if (!j.contains(key)) return;
    const auto& node = j.at(key);
    if (node.contains("mean")) m.mean = node.at("mean").get<double>();
    if (node.contains("var")) m.var = node.at("var").get<double>();
}

void apply_simulation(const json& j, AppConfig::Simulation& s) {
    read_into(j, "N", s.N);
    read_into(j, "T_R", s.T_R);
    read_into(j, "sigma2", s.sigma2);
    read_into(j, "dt", s.dt);
    read_into(j, "obs_noise", s.obs_noise);
    if (j.contains("A_true")) s.A_true = read_matrix(j, "A_true");
}

void apply_hemodynamics(const json& j, AppConfig::Hemodynamics& h) {
    if (j.contains("prior")) {
        const auto& p = j.at("prior");
        read_marginal(p, "kappa", h.prior.kappa);
        read_marginal(p, "gamma", h.prior.gamma);
        read_marginal(p, "tau", h.prior.tau);
        read_marginal(p, "alpha", h.prior.alpha);
        read_marginal(p, "rho", h.prior.rho);
    }
    read_into(j, "V0", h.base.V0);
    read_into(j, "T_E", h.base.T_E);
    read_into(j, "theta0", h.base.theta0);
    read_into(j, "epsilon", h.base.epsilon);
    read_into(j, "r0", h.base.r0);
    read_into(j, "samples", h.build.samples);
    read_into(j, "taps", h.build.taps);
    read_into(j, "components", h.build.components);
    read_into(j, "T_R", h.build.T_R);
    read_into(j, "dt", h.build.dt);
    read_into(j, "pulse_height", h.build.pulse_height);
    read_into(j, "mean_weight_var", h.mean_weight_var);
}

void apply_algorithm1(const json& j, ReweightedOptions& o) {
    read_into(j, "T_R", o.T_R);
    read_into(j, "tol", o.tol);
    read_into(j, "max_iters", o.max_iters);
    read_into(j, "gamma_init", o.gamma_init);
    read_into(j, "gamma_floor", o.gamma_floor);
    read_into(j, "stability_eps", o.stability_eps);
}

void apply_em(const json& j, EmOptions& o) {
    read_into(j, "tol", o.tol);
    read_into(j, "max_iters", o.max_iters);
    read_into(j, "gamma_init", o.gamma_init);
    read_into(j, "gamma_floor", o.gamma_floor);
    read_into(j, "stability_eps", o.stability_eps);
    read_into(j, "mean_weight_var", o.mean_weight_var);
    read_into(j, "var_floor", o.var_floor);
    read_into(j, "simple_variant", o.simple_variant);
}

void apply_benchmark(const json& j, AppConfig::Benchmark& b) {
    read_into(j, "table1_runs", b.table1_runs);
    read_into(j, "table3_runs", b.table3_runs);
    read_into(j, "threshold", b.threshold);
}

AppConfig apply(const json& j) {
    AppConfig cfg;
    if (j.contains("simulation")) apply_simulation(j.at("simulation"), cfg.simulation);
    if (j.contains("hemodynamics")) apply_hemodynamics(j.at("hemodynamics"), cfg.hemodynamics);
    if (j.contains("algorithm1")) apply_algorithm1(j.at("algorithm1"), cfg.algorithm1);
    if (j.contains("em")) apply_em(j.at("em"), cfg.em);
    if (j.contains("benchmark")) apply_benchmark(j.at("benchmark"), cfg.benchmark);
    // Keep the sampling interval consistent across sections unless the file
    // overrides them individually.
    if (j.contains("simulation") && j.at("simulation").contains("T_R")) {
        if (!(j.contains("algorithm1") && j.at("algorithm1").contains("T_R")))
            cfg.algorithm1.T_R = cfg.simulation.T_R;
        if (!(j.contains("hemodynamics") && j.at("hemodynamics").contains("T_R")))
            cfg.hemodynamics.build.T_R = cfg.simulation.T_R;
    }
    return cfg;
}

}  // namespace

AppConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw ConfigError("malformed config " + path + ": " + e.what());
    }
    return apply(j);
}

AppConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed config text: ") + e.what());
    }
    return apply(j);
}

GroundTruth ground_truth_from(const AppConfig& cfg) {
    GroundTruth truth = default_ground_truth();
    if (cfg.simulation.A_true) truth.A_true = ConnectivityMatrix(*cfg.simulation.A_true);
    truth.sigma2 = cfg.simulation.sigma2;
    truth.T_R = cfg.simulation.T_R;
    truth.N = cfg.simulation.N;
    truth.validate();
    return truth;
}

}  // namespace rsdcm
