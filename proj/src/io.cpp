#include "rsdcm/io.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "rsdcm/errors.hpp"

namespace rsdcm {

namespace {

using nlohmann::json;

json mat_to_json(const Mat& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        rows.push_back(std::move(row));
    }
    return rows;
}

Mat mat_from_json(const json& rows, const char* what) {
    if (!rows.is_array() || rows.empty())
        throw IoError(std::string(what) + ": expected a nonempty matrix");
    const std::size_t ncols = rows.at(0).size();
    Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(ncols));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows.at(i).size() != ncols)
            throw IoError(std::string(what) + ": ragged matrix rows");
        for (std::size_t j = 0; j < ncols; ++j)
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                rows.at(i).at(j).get<double>();
    }
    return m;
}

json vec_to_json(const Vec& v) {
    json arr = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

Vec vec_from_json(const json& arr, const char* what) {
    if (!arr.is_array()) throw IoError(std::string(what) + ": expected an array");
    Vec v(static_cast<Eigen::Index>(arr.size()));
    for (std::size_t i = 0; i < arr.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = arr.at(i).get<double>();
    return v;
}

void write_json(const std::string& path, const json& j) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw IoError("write failed: " + path);
}

json read_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("malformed JSON in " + path + ": " + e.what());
    }
    return j;
}

json reweighted_to_json(const ReweightedResult& r) {
    json iters = json::array();
    for (const auto& it : r.trace)
        iters.push_back({{"iter", it.iter},
                         {"sigma2", it.sigma2},
                         {"a_change", it.a_change},
                         {"objective_start", it.objective_start},
                         {"objective_end", it.objective_end}});
    return {{"A_hat", mat_to_json(r.A_hat.entries)}, {"sigma_hat", r.sigma_hat},
            {"gamma", vec_to_json(r.gamma)},         {"iterations", r.iterations},
            {"converged", r.converged},              {"trace", std::move(iters)}};
}

json run_to_json(const RunMetrics& r) {
    return {{"replicate", r.replicate}, {"seed", r.seed},
            {"err", r.err},             {"err_offdiag", r.err_offdiag},
            {"rmse", r.rmse},           {"seconds", r.seconds},
            {"iterations", r.iterations}, {"converged", r.converged},
            {"failed", r.failed},       {"error", r.error}};
}

}  // namespace

void save_dataset(const std::string& path, const Dataset& data) {
    write_json(path, json{{"x", mat_to_json(data.x)},
                          {"y", mat_to_json(data.y)},
                          {"seed", data.seed},
                          {"T_R", data.T_R}});
}

Dataset load_dataset(const std::string& path) {
    const json j = read_json(path);
    Dataset d;
    try {
        d.x = mat_from_json(j.at("x"), "dataset x");
        d.y = mat_from_json(j.at("y"), "dataset y");
        d.seed = j.at("seed").get<std::uint64_t>();
        d.T_R = j.at("T_R").get<double>();
    } catch (const json::exception& e) {
        throw IoError("dataset " + path + ": " + e.what());
    }
    if (d.x.rows() != d.y.rows() || d.x.cols() != d.y.cols())
        throw IoError("dataset " + path + ": x and y shapes differ");
    return d;
}

void save_basis(const std::string& path, const FirBasis& basis) {
    basis.validate();
    write_json(path, json{{"taps", basis.taps},
                          {"T_R", basis.T_R},
                          {"hbar", vec_to_json(basis.hbar)},
                          {"components", mat_to_json(basis.components)},
                          {"component_variances", vec_to_json(basis.component_variances)}});
}

FirBasis load_basis(const std::string& path) {
    const json j = read_json(path);
    FirBasis b;
    try {
        b.taps = j.at("taps").get<int>();
        b.T_R = j.at("T_R").get<double>();
        b.hbar = vec_from_json(j.at("hbar"), "basis hbar");
        b.components = mat_from_json(j.at("components"), "basis components");
        b.component_variances =
            vec_from_json(j.at("component_variances"), "basis variances");
    } catch (const json::exception& e) {
        throw IoError("basis " + path + ": " + e.what());
    }
    try {
        b.validate();
    } catch (const std::exception& e) {
        throw IoError("basis " + path + ": " + e.what());
    }
    return b;
}

void save_measured_result(const std::string& path, const MeasuredResult& result) {
    json j = {{"connectivity", reweighted_to_json(result.reweighted)},
              {"alpha_hat", vec_to_json(result.alpha.alpha)},
              {"lambda2", result.alpha.lambda2},
              {"alpha_ridge_regularized", result.alpha.ridge_regularized},
              {"threshold", result.threshold},
              {"A_thresholded",
               mat_to_json(threshold_matrix(result.reweighted.A_hat.entries,
                                            result.threshold))}};
    write_json(path, j);
}

void save_em_result(const std::string& path, const EmResult& result, double wall_seconds) {
    json iters = json::array();
    for (const auto& it : result.trace)
        iters.push_back({{"iter", it.iter},
                         {"sigma", it.sigma},
                         {"lambda", it.lambda},
                         {"surrogate_before", it.surrogate_before},
                         {"surrogate_after", it.surrogate_after},
                         {"a_change", it.a_change},
                         {"a_block_accepted", it.a_block_accepted}});
    write_json(path, json{{"A_hat", mat_to_json(result.eta.A.entries)},
                          {"alpha_hat", vec_to_json(result.eta.alpha)},
                          {"sigma_hat", result.eta.sigma},
                          {"lambda_hat", result.eta.lambda},
                          {"gamma", vec_to_json(result.eta.gamma)},
                          {"iterations", result.iterations},
                          {"converged", result.converged},
                          {"jittered", result.jittered},
                          {"wall_seconds", wall_seconds},
                          {"trace", std::move(iters)}});
}

void save_report(const std::string& path, const BenchmarkReport& report) {
    json arms = json::array();
    for (const auto& arm : report.arms) {
        json runs = json::array();
        for (const auto& r : arm.runs) runs.push_back(run_to_json(r));
        arms.push_back({{"name", arm.name},
                        {"median_err", arm.median_err},
                        {"sd_err", arm.sd_err},
                        {"median_rmse", arm.median_rmse},
                        {"sd_rmse", arm.sd_rmse},
                        {"mean_seconds", arm.mean_seconds},
                        {"failures", arm.failures},
                        {"runs", std::move(runs)}});
    }
    write_json(path, json{{"table", report.table},
                          {"base_seed", report.base_seed},
                          {"threshold", report.threshold},
                          {"runs_requested", report.runs_requested},
                          {"sdcm_reference_rmse", report.sdcm_reference_rmse},
                          {"arms", std::move(arms)}});
}

void export_figure_data(const FirBasis& basis, const std::string& path) {
    basis.validate();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "tap_time_s,hbar,index,eigenvalue\n";
    char buf[160];
    for (int k = 0; k < basis.taps; ++k) {
        const double t = k * basis.T_R;
        if (k < basis.num_components()) {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%d,%.17g\n", t, basis.hbar(k), k + 1,
                          basis.component_variances(k));
        } else {
            std::snprintf(buf, sizeof(buf), "%.17g,%.17g,,\n", t, basis.hbar(k));
        }
        out << buf;
    }
    if (!out) throw IoError("write failed: " + path);
}

}  // namespace rsdcm
