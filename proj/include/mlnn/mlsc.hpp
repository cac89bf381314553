#pragma once

#include <algorithm>
#include <chrono>
#include <map>
#include <mutex>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "mlnn/collocation.hpp"
#include "mlnn/cost.hpp"
#include "mlnn/dataset.hpp"
#include "mlnn/parallel.hpp"
#include "mlnn/problem.hpp"

namespace mlnn {

struct MlscConfig {
    SolverProblem problem;
    std::size_t n_coarse = 100;
    std::size_t n_levels = 5;
    double epsilon = 1e-10;        // per-level surplus threshold
    std::size_t max_cc_level = 10;
    unsigned jobs = 1;
    std::size_t holdout = 50;
    std::uint64_t seed = 0;

    void validate() const {
        problem.validate();
        if (n_levels < 1) throw std::invalid_argument("MlscConfig: n_levels must be >= 1");
        if (!(epsilon > 0.0)) throw std::invalid_argument("MlscConfig: epsilon must be positive");
    }
};

/// Per PDE level: a converged Clenshaw-Curtis interpolant of the inter-level
/// difference field (level 1 stores u^(1) itself).
struct MlscLevel {
    std::size_t level = 1;
    CollocationGrid grid;
    std::vector<std::vector<double>> nodal_fields;  // at grid.all_points() order
    std::vector<double> surplus_history;            // per refinement step
    std::vector<std::size_t> new_nodes_history;
};

struct MlscSurrogate {
    GridHierarchy hierarchy;
    SolverProblem problem;
    std::vector<MlscLevel> levels;

    /// Sum of the per-level interpolants; exact at shared collocation nodes.
    std::vector<double> evaluate_partial(const std::vector<double>& z,
                                         std::size_t up_to_level) const {
        std::vector<double> u;
        for (const auto& lvl : levels) {
            if (lvl.level > up_to_level) break;
            std::vector<double> term = lvl.grid.interpolate(lvl.nodal_fields, z);
            if (u.empty())
                u = std::move(term);
            else
                for (std::size_t j = 0; j < u.size(); ++j) u[j] += term[j];
        }
        return u;
    }
    std::vector<double> evaluate(const std::vector<double>& z) const {
        return evaluate_partial(z, levels.empty() ? 0 : levels.back().level);
    }
};

namespace detail {

// Difference field sampled at one parameter point: u^(1) for level 1, else
// the restricted inter-level difference. Charges both participating solves.
inline std::vector<double> mlsc_sample_field(const SolverProblem& problem,
                                             const GridHierarchy& h, std::size_t level,
                                             const std::vector<double>& z, CostLedger& ledger,
                                             std::mutex& ledger_mutex) {
    if (level == 1) {
        SolveResult r = problem.solve(z, h.intervals_at(1));
        {
            std::lock_guard<std::mutex> lock(ledger_mutex);
            ledger.charge_solve(1, r.u.size(), r.sweeps);
        }
        return r.u;
    }
    SolveResult hi = problem.solve(z, h.intervals_at(level));
    SolveResult lo = problem.solve(z, h.intervals_at(level - 1));
    std::vector<double> e = restrict_to_coarsest(hi.u, h, level);
    std::vector<double> e_lo = restrict_to_coarsest(lo.u, h, level - 1);
    for (std::size_t j = 0; j < e.size(); ++j) e[j] -= e_lo[j];
    {
        std::lock_guard<std::mutex> lock(ledger_mutex);
        ledger.charge_solve(level, hi.u.size(), hi.sweeps);
        ledger.charge_solve(level, lo.u.size(), lo.sweeps);
    }
    return e;
}

}  // namespace detail

struct MlscRun {
    MlscSurrogate surrogate;
    CostLedger ledger;
    std::vector<std::vector<double>> holdout_z;
    std::vector<std::vector<double>> holdout_errors;  // [z][level-1] rms vs true u^(L)|_X1
    double wall_seconds = 0.0;
};

/// Multi-level stochastic collocation baseline: on each PDE level, refine the
/// nested Clenshaw-Curtis grid until the hierarchical surplus (normalized RMS
/// of the data-vs-previous-interpolant mismatch at the new nodes) falls below
/// epsilon.
inline MlscRun build_mlsc(const MlscConfig& cfg) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    MlscRun run;
    run.surrogate.problem = cfg.problem;
    run.surrogate.hierarchy = GridHierarchy{cfg.n_coarse, cfg.n_levels};
    const GridHierarchy& h = run.surrogate.hierarchy;
    std::mutex ledger_mutex;

    for (std::size_t level = 1; level <= cfg.n_levels; ++level) {
        MlscLevel lvl;
        lvl.level = level;
        lvl.grid = CollocationGrid::make(0, cfg.problem.domain);
        lvl.nodal_fields.resize(1);
        lvl.nodal_fields[0] = detail::mlsc_sample_field(cfg.problem, h, level,
                                                        lvl.grid.all_points()[0], run.ledger,
                                                        ledger_mutex);
        lvl.new_nodes_history.push_back(1);

        // A level whose field is already below threshold stays at m = 0.
        if (rms_norm(lvl.nodal_fields[0]) > cfg.epsilon || level == 1) {
            for (std::size_t m = 1;; ++m) {
                if (m > cfg.max_cc_level)
                    throw std::runtime_error(
                        "build_mlsc: level " + std::to_string(level) +
                        " exceeded the cc_level cap with surplus " +
                        std::to_string(lvl.surplus_history.empty()
                                           ? -1.0
                                           : lvl.surplus_history.back()));
                CollocationGrid fine = CollocationGrid::make(m, cfg.problem.domain);
                const auto fine_pts = fine.all_points();
                const auto coarse_pts = lvl.grid.all_points();

                // Nested: keep existing data, solve only at new points.
                std::map<std::vector<double>, std::vector<double>> known;
                for (std::size_t k = 0; k < coarse_pts.size(); ++k)
                    known[coarse_pts[k]] = std::move(lvl.nodal_fields[k]);

                std::vector<std::size_t> fresh;
                for (std::size_t k = 0; k < fine_pts.size(); ++k)
                    if (!known.count(fine_pts[k])) fresh.push_back(k);

                std::vector<std::vector<double>> fresh_fields(fresh.size());
                parallel_for(fresh.size(), cfg.jobs, [&](std::size_t idx) {
                    fresh_fields[idx] = detail::mlsc_sample_field(
                        cfg.problem, h, level, fine_pts[fresh[idx]], run.ledger, ledger_mutex);
                });

                // Surplus: worst normalized-RMS mismatch between the new data
                // and the previous interpolant at the new nodes.
                double surplus = 0.0;
                std::vector<std::vector<double>> old_values;
                for (const auto& pt : coarse_pts) old_values.push_back(known.at(pt));
                for (std::size_t idx = 0; idx < fresh.size(); ++idx) {
                    std::vector<double> predicted =
                        lvl.grid.interpolate(old_values, fine_pts[fresh[idx]]);
                    std::vector<double> diff(predicted.size());
                    for (std::size_t j = 0; j < diff.size(); ++j)
                        diff[j] = fresh_fields[idx][j] - predicted[j];
                    surplus = std::max(surplus, rms_norm(diff));
                }
                lvl.surplus_history.push_back(surplus);
                lvl.new_nodes_history.push_back(fresh.size());

                for (std::size_t idx = 0; idx < fresh.size(); ++idx)
                    known[fine_pts[fresh[idx]]] = std::move(fresh_fields[idx]);
                lvl.grid = std::move(fine);
                lvl.nodal_fields.clear();
                for (const auto& pt : lvl.grid.all_points())
                    lvl.nodal_fields.push_back(std::move(known.at(pt)));

                if (surplus <= cfg.epsilon) break;
            }
        }
        run.ledger.at_level(level).samples = lvl.grid.total_points();
        run.surrogate.levels.push_back(std::move(lvl));
    }

    if (cfg.holdout > 0) {
        run.holdout_z =
            sample_z(cfg.problem.domain, cfg.holdout, derive_seed(cfg.seed, 0x401d, cfg.n_levels));
        run.holdout_errors.assign(run.holdout_z.size(), {});
        parallel_for(run.holdout_z.size(), cfg.jobs, [&](std::size_t k) {
            const auto& z = run.holdout_z[k];
            std::vector<double> errors;
            for (std::size_t level = 1; level <= cfg.n_levels; ++level) {
                std::vector<double> approx = run.surrogate.evaluate_partial(z, level);
                std::vector<double> truth = restrict_to_coarsest(
                    cfg.problem.solve(z, h.intervals_at(level)).u, h, level);
                std::vector<double> diff(truth.size());
                for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = approx[j] - truth[j];
                errors.push_back(rms_norm(diff));
            }
            run.holdout_errors[k] = std::move(errors);
        });
    }

    run.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return run;
}

inline nlohmann::json mlsc_report_json(const MlscRun& run, const MlscConfig& cfg) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& lvl : run.surrogate.levels) {
        double holdout_error = 0.0;
        for (const auto& errs : run.holdout_errors)
            holdout_error = std::max(holdout_error, errs[lvl.level - 1]);
        levels.push_back({{"level", lvl.level},
                          {"cc_level", lvl.grid.cc_level},
                          {"nodes", lvl.grid.total_points()},
                          {"surplus_history", lvl.surplus_history},
                          {"new_nodes_history", lvl.new_nodes_history},
                          {"holdout_error", holdout_error}});
    }
    nlohmann::json domain = nlohmann::json::array();
    for (const auto& b : cfg.problem.domain) domain.push_back({b[0], b[1]});
    return {{"method", "mlsc"},
            {"problem", problem_name(cfg.problem.kind)},
            {"domain", domain},
            {"n_coarse", cfg.n_coarse},
            {"epsilon", cfg.epsilon},
            {"seed", cfg.seed},
            {"n_levels", cfg.n_levels},
            {"levels", levels},
            {"cost", run.ledger.to_json()},
            {"holdout_count", run.holdout_z.size()}};
}

}  // namespace mlnn
