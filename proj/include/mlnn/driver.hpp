#pragma once

#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "mlnn/cost.hpp"
#include "mlnn/csv.hpp"
#include "mlnn/dataset.hpp"
#include "mlnn/hyperparams.hpp"
#include "mlnn/parallel.hpp"
#include "mlnn/surrogate.hpp"
#include "mlnn/train.hpp"

namespace mlnn {

struct RunConfig {
    SolverProblem problem;
    std::size_t n_coarse = 100;
    std::size_t max_levels = 10;
    double epsilon = 1e-8;
    double epsilon_acc = 1e-6;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::size_t filters_first_layer = 4;
    TrainConfig optimizer;  // lambda is replaced per grid cell
    std::size_t max_rounds = 50;
    std::size_t holdout = 50;
    std::function<void(const std::string&)> log;  // progress sink, may be empty

    void validate() const {
        problem.validate();
        if (n_coarse < 2) throw std::invalid_argument("RunConfig: n_coarse too small");
        if (max_levels < 2) throw std::invalid_argument("RunConfig: max_levels must be >= 2");
        if (!(epsilon > 0.0) || !(epsilon_acc > 0.0))
            throw std::invalid_argument("RunConfig: thresholds must be positive");
    }
};

struct TrainedMap {
    ErrorMapNetwork net;
    Hyperparameters hp;
    TrainResult result;
};

/// Build and train one level's map. Level 2 trains a fresh network from hp;
/// higher levels freeze the previous map and append one fc layer plus a new
/// head. A warm start continues from given parameters instead (same
/// architecture, new data).
inline TrainedMap train_level(std::size_t level, const LevelDataset& ds,
                              const Hyperparameters& hp, const ErrorMapNetwork* prev,
                              const RunConfig& cfg, std::uint64_t net_seed,
                              const ErrorMapNetwork* warm = nullptr) {
    TrainedMap out;
    out.hp = hp;
    if (warm) {
        out.net = *warm;
    } else if (level == 2) {
        out.net = make_error_map_network({1, cfg.n_coarse + 1}, cfg.problem.z_dim(), hp.n_cnn,
                                         hp.n_fc, hp.n_neurons, cfg.filters_first_layer,
                                         net_seed);
        fold_z_normalization(out.net, cfg.problem.domain);
        // Match the initial output magnitude to the correction scale; a head
        // born at O(1) output floods the first epochs with huge gradients and
        // kills the ReLU stack for targets that live at 1e-3 and below.
        double s = 0.0;
        for (const auto& sample : ds.training) s = std::max(s, rms_norm(sample.target.data));
        if (s > 1e-300 && s < 0.1) {
            for (double& w : out.net.output_layer.weights.data) w *= s;
            for (double& b : out.net.output_layer.bias) b *= s;
        }
    } else {
        if (!prev)
            throw std::invalid_argument("train_level: transfer level needs the previous map");
        out.net = *prev;
        freeze_all(out.net);
        append_fc_layer(out.net, hp.n_neurons, net_seed);
    }
    TrainConfig tc = cfg.optimizer;
    tc.lambda = hp.lambda;
    tc.seed = net_seed;
    out.result = train(out.net, ds.training, ds.validation, tc);
    return out;
}

struct GridCell {
    Hyperparameters hp;
    double v = std::numeric_limits<double>::infinity();
    std::size_t trainable_params = 0;
    std::size_t epochs = 0;
    double flops = 0.0;
    std::string error;  // non-empty if the cell diverged
};

struct GridSearchResult {
    ErrorMapNetwork best;
    Hyperparameters hp;
    double v_min = std::numeric_limits<double>::infinity();
    std::size_t best_index = 0;
    std::vector<GridCell> cells;
};

/// Strictly better-than ordering for grid cells: smaller validation error,
/// then fewer trainable parameters, then earlier (lexicographic) position.
inline bool grid_cell_better(double va, std::size_t pa, std::size_t ia, double vb,
                             std::size_t pb, std::size_t ib) {
    if (va != vb) return va < vb;
    if (pa != pb) return pa < pb;
    return ia < ib;
}

inline std::size_t pick_best(const std::vector<GridCell>& cells) {
    std::size_t best = cells.size();
    for (std::size_t i = 0; i < cells.size(); ++i) {
        if (!cells[i].error.empty()) continue;
        if (best == cells.size() ||
            grid_cell_better(cells[i].v, cells[i].trainable_params, i, cells[best].v,
                             cells[best].trainable_params, best))
            best = i;
    }
    if (best == cells.size()) {
        std::string msg = "grid_search: every cell diverged:";
        for (const auto& c : cells) msg += "\n  " + c.hp.describe() + ": " + c.error;
        throw std::runtime_error(msg);
    }
    return best;
}

inline double training_flops_estimate(const ErrorMapNetwork& net, std::size_t epochs,
                                      std::size_t n_train, std::size_t n_val) {
    // Per epoch: forward+backward over the trainable tail of every training
    // sample (~3 forwards); plus one-off full passes for prefix caching and
    // the final validation sweep.
    return 3.0 * static_cast<double>(epochs) * static_cast<double>(n_train) *
               net.trainable_forward_flops() +
           2.0 * static_cast<double>(n_train + n_val) * net.forward_flops();
}

/// Train one network per hyperparameter combination (3^4 = 81 cells for
/// level 2, 3^2 = 9 for transfer levels) and keep the smallest-validation-
/// error network. Cells run concurrently; per-cell seeds are derived, so the
/// outcome does not depend on scheduling.
inline GridSearchResult grid_search(std::size_t level, const LevelDataset& ds,
                                    const ErrorMapNetwork* prev, const RunConfig& cfg,
                                    CostLedger& ledger) {
    const auto grid = level == 2 ? level2_grid(cfg.n_coarse) : transfer_grid(cfg.n_coarse);
    GridSearchResult res;
    res.cells.resize(grid.size());

    // Running tournament under a mutex; the ordering is total, so the final
    // winner does not depend on completion order. Only the incumbent network
    // is kept alive (holding all 81 would cost gigabytes).
    std::mutex best_mutex;
    bool have_best = false;
    double best_v = std::numeric_limits<double>::infinity();
    std::size_t best_params = 0, best_idx = 0;

    parallel_for(grid.size(), cfg.jobs, [&](std::size_t i) {
        GridCell cell;
        cell.hp = grid[i];
        const std::uint64_t net_seed = derive_seed(cfg.seed, level, 0x9d1d, i);
        try {
            TrainedMap trained = train_level(level, ds, grid[i], prev, cfg, net_seed);
            cell.v = trained.result.validation_error;
            cell.trainable_params = trained.net.trainable_parameter_count();
            cell.epochs = trained.result.epochs;
            cell.flops = training_flops_estimate(trained.net, cell.epochs, ds.training.size(),
                                                 ds.validation.size());
            std::lock_guard<std::mutex> lock(best_mutex);
            if (!have_best || grid_cell_better(cell.v, cell.trainable_params, i, best_v,
                                               best_params, best_idx)) {
                res.best = std::move(trained.net);
                best_v = cell.v;
                best_params = cell.trainable_params;
                best_idx = i;
                have_best = true;
            }
        } catch (const std::exception& e) {
            cell.error = e.what();
        }
        res.cells[i] = std::move(cell);
    });

    const std::size_t best = pick_best(res.cells);  // also throws if all diverged
    res.best_index = best;
    res.hp = res.cells[best].hp;
    res.v_min = res.cells[best].v;

    double flops = 0.0;
    for (const auto& c : res.cells) flops += c.flops;
    ledger.at_level(level).training_flops += flops;
    return res;
}

struct EnrichmentFailure : std::runtime_error {
    std::vector<double> v_history;
    EnrichmentFailure(const std::string& msg, std::vector<double> history)
        : std::runtime_error(msg), v_history(std::move(history)) {}
};

struct EnrichResult {
    ErrorMapNetwork net;
    Hyperparameters hp;
    double v_min = 0.0;      // normalized: mean per-point MSE over V
    double v_raw_min = 0.0;  // plain sum of squared errors over V
    std::vector<double> v_history;
    std::vector<double> v_raw_history;
    std::vector<std::size_t> sample_history;
};

/// Validation estimates from one or two points routinely pass any threshold
/// by luck; the stopping test only applies once the split holds this many.
constexpr std::size_t min_validation_points = 5;

/// Iterative sampling loop of one level: draw the level-appropriate batch of
/// parameter points, 80/20 split, grid-search on the first round and
/// warm-start retraining afterwards, until the normalized validation error
/// drops below epsilon on a minimally populated validation set.
template <class PartialEval>
inline EnrichResult enrich_until_valid(std::size_t level, LevelDataset& ds,
                                       const GridHierarchy& hierarchy,
                                       PartialEval&& partial_eval, const ErrorMapNetwork* prev,
                                       const RunConfig& cfg, CostLedger& ledger) {
    const std::size_t dim = cfg.problem.z_dim();
    const std::size_t batch =
        level == 2 ? static_cast<std::size_t>(std::llround(std::pow(10.0, dim)))
                   : (std::size_t{1} << dim);

    EnrichResult out;
    for (std::size_t round = 0; round < cfg.max_rounds; ++round) {
        const auto zs =
            sample_z(cfg.problem.domain, batch, derive_seed(cfg.seed, level, 0x5a3e, round));
        append_level_pairs(ds, zs, cfg.problem, hierarchy, partial_eval, ledger, cfg.jobs);
        ds.split(derive_seed(cfg.seed, level, 0x5917, round));

        const auto t0 = std::chrono::steady_clock::now();
        if (round == 0) {
            GridSearchResult grid = grid_search(level, ds, prev, cfg, ledger);
            out.net = std::move(grid.best);
            out.hp = grid.hp;
            out.v_min = grid.v_min;
            validation_error(out.net, ds.validation, &out.v_raw_min);
        } else {
            TrainedMap retrained =
                train_level(level, ds, out.hp, prev, cfg,
                            derive_seed(cfg.seed, level, 0x3e7a, round), &out.net);
            ledger.at_level(level).training_flops += training_flops_estimate(
                retrained.net, retrained.result.epochs, ds.training.size(),
                ds.validation.size());
            out.net = std::move(retrained.net);
            out.v_min = retrained.result.validation_error;
            out.v_raw_min = retrained.result.validation_raw_sum;
        }
        ledger.at_level(level).training_seconds +=
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

        out.v_history.push_back(out.v_min);
        out.v_raw_history.push_back(out.v_raw_min);
        out.sample_history.push_back(ds.pairs.size());
        if (cfg.log)
            cfg.log("level " + std::to_string(level) + " round " + std::to_string(round + 1) +
                    ": samples = " + std::to_string(ds.pairs.size()) +
                    ", v = " + format_double(out.v_min) +
                    ", v_raw = " + format_double(out.v_raw_min) + " [" + out.hp.describe() +
                    "]");
        if (ds.validation.size() >= min_validation_points && out.v_min < cfg.epsilon)
            return out;
    }
    std::string msg = "enrich_until_valid: level " + std::to_string(level) + " still at v_min = " +
                      format_double(out.v_min) + " after " + std::to_string(cfg.max_rounds) +
                      " rounds (epsilon = " + format_double(cfg.epsilon) + ")";
    throw EnrichmentFailure(msg, out.v_history);
}

struct LevelReport {
    std::size_t level = 0;
    Hyperparameters hp;
    double v_min = 0.0;
    double v_raw_min = 0.0;
    std::vector<double> v_history;
    std::vector<double> v_raw_history;
    std::vector<std::size_t> sample_history;
    std::size_t samples = 0;
    std::size_t trainable_params = 0;
    double holdout_error = 0.0;  // max over holdout z of rms error vs true level-i solution
};

struct MlnnRun {
    Surrogate surrogate;
    CostLedger ledger;
    std::vector<LevelReport> levels;
    std::vector<LevelDataset> datasets;  // datasets[k] built P^(k+2)
    std::vector<std::vector<double>> holdout_z;
    std::vector<std::vector<double>> holdout_errors;  // [z][level-1] rms error
    double wall_seconds = 0.0;
};

/// The complete method: start at two levels, enrich each level until its map
/// generalizes (v_min < epsilon), and add levels while the top map still
/// predicts corrections above epsilon_acc.
inline MlnnRun run_mlnn(const RunConfig& cfg) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    MlnnRun run;
    run.surrogate.problem = cfg.problem;
    run.surrogate.epsilon = cfg.epsilon;
    run.surrogate.epsilon_acc = cfg.epsilon_acc;

    for (std::size_t level = 2; level <= cfg.max_levels; ++level) {
        GridHierarchy hierarchy{cfg.n_coarse, level};
        run.surrogate.hierarchy = hierarchy;

        LevelDataset ds;
        ds.level = level;
        const ErrorMapNetwork* prev =
            run.surrogate.maps.empty() ? nullptr : &run.surrogate.maps.back();
        auto partial_eval = [&](const std::vector<double>& z) {
            std::size_t sweeps = 0;
            std::vector<double> u = run.surrogate.evaluate_partial(z, level - 1, &sweeps);
            return std::make_pair(std::move(u), sweeps);
        };
        EnrichResult enriched =
            enrich_until_valid(level, ds, hierarchy, partial_eval, prev, cfg, run.ledger);

        LevelReport rep;
        rep.level = level;
        rep.hp = enriched.hp;
        rep.v_min = enriched.v_min;
        rep.v_raw_min = enriched.v_raw_min;
        rep.v_history = enriched.v_history;
        rep.v_raw_history = enriched.v_raw_history;
        rep.sample_history = enriched.sample_history;
        rep.samples = ds.pairs.size();
        rep.trainable_params = enriched.net.trainable_parameter_count();
        run.levels.push_back(std::move(rep));
        run.surrogate.maps.push_back(std::move(enriched.net));
        run.datasets.push_back(std::move(ds));

        if (run.surrogate.n_levels() >= cfg.max_levels) break;
        if (!should_add_level(run.surrogate.maps.back(), run.datasets.back().training,
                              cfg.epsilon_acc))
            break;
    }

    // Held-out diagnostics: per-level surrogate error against the true
    // restricted solutions. These solves are evaluation only, not charged.
    if (cfg.holdout > 0) {
        run.holdout_z = sample_z(cfg.problem.domain, cfg.holdout,
                                 derive_seed(cfg.seed, 0x401d, run.surrogate.n_levels()));
        const GridHierarchy& h = run.surrogate.hierarchy;
        run.holdout_errors.assign(run.holdout_z.size(), {});
        parallel_for(run.holdout_z.size(), cfg.jobs, [&](std::size_t k) {
            const auto& z = run.holdout_z[k];
            std::vector<double> u = cfg.problem.solve(z, h.n_coarse).u;
            std::vector<double> errors;
            for (std::size_t level = 1; level <= run.surrogate.n_levels(); ++level) {
                if (level >= 2) {
                    const std::vector<double> e =
                        apply_error_map(run.surrogate.maps[level - 2], u, z);
                    for (std::size_t j = 0; j < u.size(); ++j) u[j] += e[j];
                }
                const std::vector<double> truth =
                    restrict_to_coarsest(cfg.problem.solve(z, h.intervals_at(level)).u, h, level);
                std::vector<double> diff(u.size());
                for (std::size_t j = 0; j < u.size(); ++j) diff[j] = u[j] - truth[j];
                errors.push_back(rms_norm(diff));
            }
            run.holdout_errors[k] = std::move(errors);
        });
        for (auto& rep : run.levels) {
            double worst = 0.0;
            for (const auto& errs : run.holdout_errors)
                worst = std::max(worst, errs[rep.level - 1]);
            rep.holdout_error = worst;
        }
    }

    run.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    return run;
}

inline nlohmann::json run_report_json(const MlnnRun& run, const RunConfig& cfg) {
    nlohmann::json levels = nlohmann::json::array();
    for (const auto& rep : run.levels)
        levels.push_back({{"level", rep.level},
                          {"samples", rep.samples},
                          {"v_min", rep.v_min},
                          {"v_raw_min", rep.v_raw_min},
                          {"v_history", rep.v_history},
                          {"v_raw_history", rep.v_raw_history},
                          {"sample_history", rep.sample_history},
                          {"hyperparameters",
                           {{"lambda", rep.hp.lambda},
                            {"n_cnn", rep.hp.n_cnn},
                            {"n_fc", rep.hp.n_fc},
                            {"n_neurons", rep.hp.n_neurons}}},
                          {"trainable_params", rep.trainable_params},
                          {"holdout_error", rep.holdout_error}});
    nlohmann::json domain = nlohmann::json::array();
    for (const auto& b : cfg.problem.domain) domain.push_back({b[0], b[1]});
    return {{"method", "mlnn"},
            {"problem", problem_name(cfg.problem.kind)},
            {"domain", domain},
            {"n_coarse", cfg.n_coarse},
            {"epsilon", cfg.epsilon},
            {"epsilon_acc", cfg.epsilon_acc},
            {"seed", cfg.seed},
            {"n_levels", run.surrogate.n_levels()},
            {"levels", levels},
            {"cost", run.ledger.to_json()},
            {"holdout_count", run.holdout_z.size()}};
}

}  // namespace mlnn
