#pragma once

#include <functional>
#include <span>
#include <vector>

#include "mlnn/grid.hpp"
#include "mlnn/network.hpp"
#include "mlnn/problem.hpp"
#include "mlnn/train.hpp"

namespace mlnn {

/// A correction map e^(i) ~ P^(i)(u^(i-1)|_X1, z); oracle substitutes use the
/// same signature, so the telescoped recursion below is shared.
using CorrectionMap =
    std::function<std::vector<double>(const std::vector<double>&, const std::vector<double>&)>;

/// Forward telescoped recursion: start from the coarse solve and add each
/// level's predicted correction in turn.
inline std::vector<double> telescoped_eval(const std::vector<double>& coarse,
                                           std::span<const CorrectionMap> maps,
                                           const std::vector<double>& z) {
    std::vector<double> u = coarse;
    for (const auto& map : maps) {
        const std::vector<double> e = map(u, z);
        if (e.size() != u.size())
            throw std::invalid_argument("telescoped_eval: correction length mismatch");
        for (std::size_t j = 0; j < u.size(); ++j) u[j] += e[j];
    }
    return u;
}

inline std::vector<double> apply_error_map(const ErrorMapNetwork& net,
                                           const std::vector<double>& field,
                                           const std::vector<double>& z) {
    Tensor out = network_forward(net, Tensor({1, field.size()}, field), z);
    return std::move(out.data);
}

/// Coarse solver plus the chain of trained error maps P^(2)..P^(NL).
struct Surrogate {
    GridHierarchy hierarchy;
    SolverProblem problem;
    std::vector<ErrorMapNetwork> maps;  // maps[k] is P^(k+2)
    double epsilon = 1e-8;
    double epsilon_acc = 1e-6;

    std::size_t n_levels() const { return maps.size() + 1; }
    bool in_domain(const std::vector<double>& z) const { return problem.in_domain(z); }

    /// Evaluate up to a given level (levels() by default): one coarse solve,
    /// then one network forward per map. z outside I is still evaluated; the
    /// caller can flag extrapolation via in_domain().
    std::vector<double> evaluate_partial(const std::vector<double>& z, std::size_t up_to_level,
                                         std::size_t* coarse_sweeps = nullptr) const {
        SolveResult coarse = problem.solve(z, hierarchy.n_coarse);
        if (coarse_sweeps) *coarse_sweeps = coarse.sweeps;
        std::vector<double> u = std::move(coarse.u);
        for (std::size_t level = 2; level <= up_to_level; ++level) {
            const std::vector<double> e = apply_error_map(maps[level - 2], u, z);
            for (std::size_t j = 0; j < u.size(); ++j) u[j] += e[j];
        }
        return u;
    }

    std::vector<double> evaluate(const std::vector<double>& z,
                                 std::size_t* coarse_sweeps = nullptr) const {
        return evaluate_partial(z, n_levels(), coarse_sweeps);
    }
};

/// Level-adding criterion: another level is needed while any training input's
/// predicted correction norm still exceeds eps_acc (grid-normalized RMS).
inline bool should_add_level(const ErrorMapNetwork& top_map, const Batch& training,
                             double eps_acc) {
    for (const auto& s : training) {
        ForwardCache cache;
        network_forward_cached(top_map, s.field, s.z, cache);
        if (rms_norm(cache.out) > eps_acc) return true;
    }
    return false;
}

}  // namespace mlnn
