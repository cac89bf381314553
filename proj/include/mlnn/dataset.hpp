#pragma once

#include <array>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlnn/cost.hpp"
#include "mlnn/parallel.hpp"
#include "mlnn/problem.hpp"
#include "mlnn/rng.hpp"
#include "mlnn/train.hpp"

namespace mlnn {

/// i.i.d. uniform draws over the box I, deterministic per seed.
inline std::vector<std::vector<double>> sample_z(
    const std::vector<std::array<double, 2>>& domain, std::size_t count, std::uint64_t seed) {
    if (count == 0) throw std::invalid_argument("sample_z: count must be >= 1");
    Rng rng(seed);
    std::vector<std::vector<double>> out(count);
    for (auto& z : out) {
        z.resize(domain.size());
        for (std::size_t d = 0; d < domain.size(); ++d)
            z[d] = rng.uniform(domain[d][0], domain[d][1]);
    }
    return out;
}

/// One (input, z, target) triple on the coarse grid: the input is the
/// restricted level-(i-1) field (true solve for i=2, surrogate prediction for
/// i>2), the target the restricted true level-i solve.
struct LevelPair {
    std::vector<double> z;
    std::vector<double> input;
    std::vector<double> target;
};

struct LevelDataset {
    std::size_t level = 2;
    std::vector<LevelPair> pairs;
    Batch training;
    Batch validation;

    /// Seeded 80/20 re-split of all pairs; |V| >= 1. The network label is the
    /// inter-level error target - input, per the training cost
    /// ||P(u^(i-1)) - (u^(i) - u^(i-1))||^2.
    void split(std::uint64_t seed) {
        if (pairs.empty()) throw std::invalid_argument("LevelDataset::split: no pairs");
        std::vector<std::size_t> idx(pairs.size());
        std::iota(idx.begin(), idx.end(), 0);
        Rng rng(seed);
        for (std::size_t i = idx.size(); i-- > 1;) {
            const std::size_t j = rng.next_u64() % (i + 1);
            std::swap(idx[i], idx[j]);
        }
        const std::size_t n_val = std::max<std::size_t>(1, (pairs.size() + 4) / 5);
        training.clear();
        validation.clear();
        for (std::size_t k = 0; k < idx.size(); ++k) {
            const LevelPair& p = pairs[idx[k]];
            Sample s;
            s.field = Tensor({1, p.input.size()}, p.input);
            s.z = p.z;
            std::vector<double> error(p.target.size());
            for (std::size_t j = 0; j < error.size(); ++j) error[j] = p.target[j] - p.input[j];
            const std::size_t len = error.size();
            s.target = Tensor({1, len}, std::move(error));
            (k < n_val ? validation : training).push_back(std::move(s));
        }
    }
};

/// Solve and append pairs for the given parameter points. Inputs for i > 2
/// come from the partial surrogate (one coarse solve plus map evaluations);
/// targets are always true level-i solves restricted to the coarse grid.
/// partial_eval(z) must return {prediction of u^(i-1)(z)|_X1, coarse sweeps}.
template <class PartialEval>
inline void append_level_pairs(LevelDataset& ds, const std::vector<std::vector<double>>& zs,
                               const SolverProblem& problem, const GridHierarchy& hierarchy,
                               PartialEval&& partial_eval, CostLedger& ledger, unsigned jobs) {
    const std::size_t level = ds.level;
    const std::size_t first = ds.pairs.size();
    ds.pairs.resize(first + zs.size());

    struct Charge {
        std::size_t points = 0;
        std::size_t sweeps = 0;
        std::size_t coarse_points = 0;
        std::size_t coarse_sweeps = 0;
    };
    std::vector<Charge> charges(zs.size());

    parallel_for(zs.size(), jobs, [&](std::size_t k) {
        const auto& z = zs[k];
        try {
            SolveResult target = problem.solve(z, hierarchy.intervals_at(level));
            LevelPair& pair = ds.pairs[first + k];
            pair.z = z;
            pair.target = restrict_to_coarsest(target.u, hierarchy, level);
            charges[k].points = target.u.size();
            charges[k].sweeps = target.sweeps;
            if (level == 2) {
                SolveResult coarse = problem.solve(z, hierarchy.intervals_at(1));
                pair.input = std::move(coarse.u);
                charges[k].coarse_points = pair.input.size();
                charges[k].coarse_sweeps = coarse.sweeps;
            } else {
                auto [input, coarse_sweeps] = partial_eval(z);
                pair.input = std::move(input);
                charges[k].coarse_points = hierarchy.points_at(1);
                charges[k].coarse_sweeps = coarse_sweeps;
            }
        } catch (const std::exception& e) {
            std::string zs_str;
            for (double v : z) zs_str += (zs_str.empty() ? "" : ", ") + std::to_string(v);
            throw std::runtime_error(std::string(e.what()) + " [at z = (" + zs_str + ")]");
        }
    });

    for (const Charge& c : charges) {
        ledger.charge_solve(level, c.points, c.sweeps);
        ledger.charge_solve(level, c.coarse_points, c.coarse_sweeps);
    }
    ledger.at_level(level).samples = ds.pairs.size();
}

}  // namespace mlnn
