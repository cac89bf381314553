#pragma once

#include <cstddef>
#include <vector>

#include <json.hpp>

namespace mlnn {

/// Work charged while building one level of a surrogate. Solver work follows
/// the spec's model (grid points x sweeps/iterations); flop estimates give a
/// deterministic common unit so solver and training cost can be combined.
struct LevelCost {
    std::size_t level = 0;
    std::size_t solves = 0;
    double solver_dof_iters = 0.0;
    double solver_flops = 0.0;
    double training_flops = 0.0;
    double training_seconds = 0.0;  // wall time, informational only
    std::size_t samples = 0;
};

struct CostLedger {
    std::vector<LevelCost> levels;

    LevelCost& at_level(std::size_t level) {
        for (auto& c : levels)
            if (c.level == level) return c;
        levels.push_back(LevelCost{level});
        return levels.back();
    }

    void charge_solve(std::size_t level, std::size_t grid_points, std::size_t sweeps) {
        LevelCost& c = at_level(level);
        c.solves += 1;
        c.solver_dof_iters += static_cast<double>(grid_points) * static_cast<double>(sweeps);
        // A tridiagonal assembly + sweep costs roughly 20 flops per point.
        c.solver_flops +=
            20.0 * static_cast<double>(grid_points) * static_cast<double>(sweeps);
    }

    double total_solver_dof_iters() const {
        double s = 0.0;
        for (const auto& c : levels) s += c.solver_dof_iters;
        return s;
    }
    double total_flops() const {
        double s = 0.0;
        for (const auto& c : levels) s += c.solver_flops + c.training_flops;
        return s;
    }
    double flops_up_to_level(std::size_t level) const {
        double s = 0.0;
        for (const auto& c : levels)
            if (c.level <= level) s += c.solver_flops + c.training_flops;
        return s;
    }

    nlohmann::json to_json() const {
        nlohmann::json out = nlohmann::json::array();
        for (const auto& c : levels)
            out.push_back({{"level", c.level},
                           {"solves", c.solves},
                           {"solver_dof_iters", c.solver_dof_iters},
                           {"solver_flops", c.solver_flops},
                           {"training_flops", c.training_flops},
                           {"samples", c.samples}});
        return out;
    }
};

}  // namespace mlnn
