#pragma once

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlnn/checkpoint.hpp"
#include "mlnn/csv.hpp"
#include "mlnn/driver.hpp"
#include "mlnn/mlsc.hpp"
#include "mlnn/sha256.hpp"

namespace mlnn::cli {

// Exit-code contract: 0 ok, 2 usage/config error, 3 runtime failure.
constexpr int exit_ok = 0;
constexpr int exit_config = 2;
constexpr int exit_runtime = 3;

inline std::string timestamp_utc() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

inline std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

struct CommonOptions {
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> jobs;
    std::string log_level = "info";
};

inline unsigned resolve_jobs(const std::optional<unsigned>& flag, const nlohmann::json& cfg) {
    if (flag) return std::max(1u, *flag);
    if (cfg.contains("jobs")) return std::max(1u, cfg.at("jobs").get<unsigned>());
    if (const char* env = std::getenv("MLNN_JOBS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) return static_cast<unsigned>(v);
    }
    return default_jobs();
}

inline SolverProblem problem_from_json(const nlohmann::json& cfg) {
    const std::string name = cfg.at("problem").get<std::string>();
    SolverProblem p;
    if (name == "advection-diffusion")
        p.kind = ProblemKind::AdvectionDiffusion;
    else if (name == "burgers")
        p.kind = ProblemKind::Burgers;
    else
        throw std::invalid_argument("unknown problem '" + name + "'");
    if (cfg.contains("domain")) {
        for (const auto& b : cfg.at("domain"))
            p.domain.push_back({b.at(0).get<double>(), b.at(1).get<double>()});
    } else {
        p.domain = {{1.0, p.kind == ProblemKind::Burgers ? 1000.0 : 100.0}};
    }
    if (cfg.contains("newton")) {
        p.newton.tol = cfg.at("newton").value("tol", p.newton.tol);
        p.newton.max_iter = cfg.at("newton").value("max_iter", p.newton.max_iter);
    }
    p.validate();
    return p;
}

inline RunConfig run_config_from_json(const nlohmann::json& cfg, const CommonOptions& opts) {
    RunConfig rc;
    rc.problem = problem_from_json(cfg);
    rc.n_coarse = cfg.value("n_coarse", std::size_t{100});
    rc.max_levels = cfg.value("max_levels", std::size_t{10});
    rc.epsilon = cfg.value("epsilon", 1e-8);
    rc.epsilon_acc = cfg.value("epsilon_acc", 1e-6);
    rc.seed = opts.seed ? *opts.seed : cfg.value("seed", std::uint64_t{0});
    rc.jobs = resolve_jobs(opts.jobs, cfg);
    rc.filters_first_layer = cfg.value("filters_first_layer", std::size_t{4});
    rc.max_rounds = cfg.value("max_rounds", std::size_t{50});
    rc.holdout = cfg.value("holdout", std::size_t{50});
    if (cfg.contains("optimizer")) {
        const auto& o = cfg.at("optimizer");
        rc.optimizer.learning_rate = o.value("learning_rate", rc.optimizer.learning_rate);
        rc.optimizer.max_epochs = o.value("max_epochs", rc.optimizer.max_epochs);
        rc.optimizer.plateau_patience = o.value("plateau_patience", rc.optimizer.plateau_patience);
    }
    rc.validate();
    return rc;
}

inline MlscConfig mlsc_config_from_json(const nlohmann::json& cfg, const CommonOptions& opts) {
    MlscConfig mc;
    mc.problem = problem_from_json(cfg);
    mc.n_coarse = cfg.value("n_coarse", std::size_t{100});
    mc.n_levels = cfg.value("max_levels", std::size_t{5});
    mc.seed = opts.seed ? *opts.seed : cfg.value("seed", std::uint64_t{0});
    mc.jobs = resolve_jobs(opts.jobs, cfg);
    mc.holdout = cfg.value("holdout", std::size_t{50});
    if (cfg.contains("mlsc")) {
        mc.epsilon = cfg.at("mlsc").value("epsilon", mc.epsilon);
        mc.max_cc_level = cfg.at("mlsc").value("max_cc_level", mc.max_cc_level);
    }
    mc.validate();
    return mc;
}

inline void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                           const std::string& config_path, const std::string& config_bytes,
                           std::uint64_t seed, unsigned jobs) {
    nlohmann::json manifest = {{"command", command},
                               {"config_path", config_path},
                               {"config_sha256", sha256_hex(config_bytes)},
                               {"seed", seed},
                               {"out_dir", out_dir.string()},
                               {"jobs", jobs}};
    write_text(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

inline void write_errors_csv(const std::filesystem::path& path,
                             const std::vector<std::vector<double>>& zs,
                             const std::vector<std::vector<double>>& errors,
                             const SolverProblem& problem) {
    CsvWriter csv(path.string());
    std::vector<std::string> header;
    for (std::size_t d = 0; d < (zs.empty() ? 1 : zs[0].size()); ++d)
        header.push_back("z_" + std::to_string(d));
    const std::size_t n_levels = errors.empty() ? 0 : errors[0].size();
    for (std::size_t l = 1; l <= n_levels; ++l)
        header.push_back("rms_error_level_" + std::to_string(l));
    header.push_back("extrapolation");
    csv.header(header);
    for (std::size_t k = 0; k < zs.size(); ++k) {
        std::vector<std::string> row;
        for (double v : zs[k]) row.push_back(format_double(v));
        for (double e : errors[k]) row.push_back(format_double(e));
        row.push_back(problem.in_domain(zs[k]) ? "0" : "1");
        csv.row_mixed(row);
    }
}

/// run-mlnn: execute the full pipeline, write report.json, errors.csv and
/// per-level network checkpoints under out_dir.
inline int cmd_run_mlnn(const std::string& config_path, const std::string& out_dir,
                        const CommonOptions& opts) {
    std::string config_bytes;
    RunConfig rc;
    nlohmann::json cfg;
    try {
        config_bytes = read_file(config_path);
        cfg = nlohmann::json::parse(config_bytes);
        rc = run_config_from_json(cfg, opts);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    }
    if (opts.log_level != "quiet") rc.log = [](const std::string& m) { std::cerr << m << "\n"; };

    std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out / "checkpoints");
    write_manifest(out, "run-mlnn", config_path, config_bytes, rc.seed, rc.jobs);

    try {
        MlnnRun run = run_mlnn(rc);

        nlohmann::json report = run_report_json(run, rc);
        report["timestamp"] = timestamp_utc();
        nlohmann::json timing = {{"wall_seconds", run.wall_seconds}};
        for (const auto& c : run.ledger.levels)
            timing["training_seconds_level_" + std::to_string(c.level)] = c.training_seconds;
        report["timing"] = timing;
        write_text(out / "report.json", report.dump(2) + "\n");

        write_errors_csv(out / "errors.csv", run.holdout_z, run.holdout_errors, rc.problem);
        for (std::size_t k = 0; k < run.surrogate.maps.size(); ++k)
            save_network(run.surrogate.maps[k],
                         (out / "checkpoints" / ("level_" + std::to_string(k + 2) + ".json"))
                             .string(),
                         rc.seed,
                         {{"level", k + 2}, {"v_min", run.levels[k].v_min}});
        return exit_ok;
    } catch (const EnrichmentFailure& e) {
        nlohmann::json report = {{"method", "mlnn"},
                                 {"status", "failed"},
                                 {"error", e.what()},
                                 {"v_history", e.v_history},
                                 {"timestamp", timestamp_utc()}};
        write_text(out / "report.json", report.dump(2) + "\n");
        std::cerr << "run failed: " << e.what() << "\n";
        return exit_runtime;
    } catch (const std::exception& e) {
        nlohmann::json report = {{"method", "mlnn"},
                                 {"status", "failed"},
                                 {"error", e.what()},
                                 {"timestamp", timestamp_utc()}};
        write_text(out / "report.json", report.dump(2) + "\n");
        std::cerr << "run failed: " << e.what() << "\n";
        return exit_runtime;
    }
}

/// run-mlsc: build the collocation baseline from the same config schema.
inline int cmd_run_mlsc(const std::string& config_path, const std::string& out_dir,
                        const CommonOptions& opts) {
    std::string config_bytes;
    MlscConfig mc;
    try {
        config_bytes = read_file(config_path);
        mc = mlsc_config_from_json(nlohmann::json::parse(config_bytes), opts);
    } catch (const std::exception& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return exit_config;
    }
    std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out);
    write_manifest(out, "run-mlsc", config_path, config_bytes, mc.seed, mc.jobs);
    try {
        MlscRun run = build_mlsc(mc);
        nlohmann::json report = mlsc_report_json(run, mc);
        report["timestamp"] = timestamp_utc();
        report["timing"] = {{"wall_seconds", run.wall_seconds}};
        write_text(out / "report.json", report.dump(2) + "\n");
        write_errors_csv(out / "errors.csv", run.holdout_z, run.holdout_errors, mc.problem);
        return exit_ok;
    } catch (const std::exception& e) {
        nlohmann::json report = {{"method", "mlsc"},
                                 {"status", "failed"},
                                 {"error", e.what()},
                                 {"timestamp", timestamp_utc()}};
        write_text(out / "report.json", report.dump(2) + "\n");
        std::cerr << "run failed: " << e.what() << "\n";
        return exit_runtime;
    }
}

/// compare: merge an MLNN and an MLSC report into cost-vs-accuracy rows, both
/// cost series normalized by the maximum MLSC cost.
inline int cmd_compare(const std::string& mlnn_report_path, const std::string& mlsc_report_path,
                       const std::string& out_dir) {
    nlohmann::json a, b;
    try {
        a = nlohmann::json::parse(read_file(mlnn_report_path));
        b = nlohmann::json::parse(read_file(mlsc_report_path));
        if (a.value("method", "") != "mlnn" || b.value("method", "") != "mlsc")
            throw std::invalid_argument("expected an mlnn report and an mlsc report");
        if (a.contains("status") || b.contains("status"))
            throw std::invalid_argument("cannot compare failed runs");
    } catch (const std::exception& e) {
        std::cerr << "compare: " << e.what() << "\n";
        return exit_config;
    }

    auto cumulative_cost = [](const nlohmann::json& report, std::size_t level) {
        double s = 0.0;
        for (const auto& c : report.at("cost"))
            if (c.at("level").get<std::size_t>() <= level)
                s += c.at("solver_flops").get<double>() + c.at("training_flops").get<double>();
        return s;
    };
    auto holdout_error = [](const nlohmann::json& report, std::size_t level) -> double {
        for (const auto& l : report.at("levels"))
            if (l.at("level").get<std::size_t>() == level) return l.value("holdout_error", 0.0);
        return -1.0;
    };

    const std::size_t levels =
        std::min(a.at("n_levels").get<std::size_t>(), b.at("n_levels").get<std::size_t>());
    double mlsc_max = 0.0;
    for (std::size_t l = 2; l <= levels; ++l) mlsc_max = std::max(mlsc_max, cumulative_cost(b, l));
    if (mlsc_max <= 0.0) {
        std::cerr << "compare: MLSC report has no cost entries\n";
        return exit_config;
    }

    std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out);
    CsvWriter csv((out / "comparison.csv").string());
    csv.header({"accuracy_level", "mlnn_error", "mlsc_error", "mlnn_cost", "mlsc_cost",
                "mlnn_cost_scaled", "mlsc_cost_scaled"});
    for (std::size_t l = 2; l <= levels; ++l) {
        const double ca = cumulative_cost(a, l);
        const double cb = cumulative_cost(b, l);
        csv.row({static_cast<double>(l), holdout_error(a, l), holdout_error(b, l), ca, cb,
                 ca / mlsc_max, cb / mlsc_max});
    }
    return exit_ok;
}

/// convergence: error-vs-N table for one problem at a fixed parameter point.
inline int cmd_convergence(const std::string& problem_name, double re,
                           const std::vector<std::size_t>& ns, const std::string& out_dir) {
    if (ns.empty()) {
        std::cerr << "convergence: empty N list\n";
        return exit_config;
    }
    SolverProblem prob;
    try {
        prob = problem_from_json({{"problem", problem_name}});
    } catch (const std::exception& e) {
        std::cerr << "convergence: " << e.what() << "\n";
        return exit_config;
    }

    std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out);
    CsvWriter csv((out / "convergence.csv").string());
    csv.header({"n", "dx", "max_error", "observed_order", "note"});

    // Reference: closed form for advection-diffusion, a nested fine solve for
    // Burgers (16x the largest requested grid).
    std::vector<double> reference;
    std::size_t n_ref = 0;
    if (prob.kind == ProblemKind::Burgers) {
        n_ref = *std::max_element(ns.begin(), ns.end()) * 16;
        reference = prob.solve({re}, n_ref).u;
    }

    double prev_err = 0.0;
    bool have_prev = false;
    for (std::size_t n : ns) {
        std::vector<std::string> row = {std::to_string(n), format_double(1.0 / double(n))};
        try {
            const auto u = prob.solve({re}, n).u;
            double err = 0.0;
            if (prob.kind == ProblemKind::AdvectionDiffusion) {
                for (std::size_t j = 0; j <= n; ++j)
                    err = std::max(err, std::abs(u[j] - exact_advection_diffusion(
                                                             double(j) / double(n), re)));
            } else {
                if (n_ref % n != 0) throw std::invalid_argument("grid not nested with reference");
                const std::size_t stride = n_ref / n;
                for (std::size_t j = 0; j <= n; ++j)
                    err = std::max(err, std::abs(u[j] - reference[j * stride]));
            }
            row.push_back(format_double(err));
            row.push_back(have_prev ? format_double(std::log2(prev_err / err)) : "");
            row.push_back("");
            prev_err = err;
            have_prev = true;
        } catch (const std::exception& e) {
            row.push_back("");
            row.push_back("");
            row.push_back(e.what());
            have_prev = false;
        }
        csv.row_mixed(row);
    }
    return exit_ok;
}

/// theorem1: similarity-defect table rho(h) over a sequence of base grids.
inline int cmd_theorem1(const std::string& problem_name, double re, std::size_t n1,
                        std::size_t levels, const std::string& out_dir) {
    if (levels == 0) {
        std::cerr << "theorem1: need at least one row\n";
        return exit_config;
    }
    SolverProblem prob;
    try {
        prob = problem_from_json({{"problem", problem_name}});
    } catch (const std::exception& e) {
        std::cerr << "theorem1: " << e.what() << "\n";
        return exit_config;
    }
    std::filesystem::path out(out_dir);
    std::filesystem::create_directories(out);
    CsvWriter csv((out / "theorem1.csv").string());
    csv.header({"n1", "h", "rho", "degenerate", "note"});
    for (std::size_t k = 0; k < levels; ++k) {
        const std::size_t n = n1 << k;
        std::vector<std::string> row = {std::to_string(n), format_double(1.0 / double(n))};
        try {
            const Theorem1Result r = theorem1_check(prob, {re}, GridHierarchy{n, 3}, 2);
            row.push_back(format_double(r.rho));
            row.push_back(r.degenerate ? "1" : "0");
            row.push_back("");
        } catch (const std::exception& e) {
            row.push_back("");
            row.push_back("");
            row.push_back(e.what());
        }
        csv.row_mixed(row);
    }
    return exit_ok;
}

}  // namespace mlnn::cli
