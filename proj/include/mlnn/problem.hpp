#pragma once

#include <array>
#include <cfloat>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "mlnn/advection_diffusion.hpp"
#include "mlnn/burgers.hpp"
#include "mlnn/grid.hpp"

namespace mlnn {

enum class ProblemKind { AdvectionDiffusion, Burgers, Synthetic2D };

inline const char* problem_name(ProblemKind k) {
    switch (k) {
        case ProblemKind::AdvectionDiffusion: return "advection-diffusion";
        case ProblemKind::Burgers: return "burgers";
        case ProblemKind::Synthetic2D: return "synthetic-2d";
    }
    return "?";
}

struct SolveResult {
    std::vector<double> u;
    std::size_t sweeps = 1;  // direct solves count 1; Newton counts iterations
};

/// One of the in-scope test problems together with its uncertain-parameter
/// box I. The quantity of interest is the restricted field itself.
struct SolverProblem {
    ProblemKind kind = ProblemKind::AdvectionDiffusion;
    std::vector<std::array<double, 2>> domain;  // per-dimension bounds of I
    NewtonOptions newton{};

    std::size_t z_dim() const { return domain.size(); }

    bool in_domain(const std::vector<double>& z) const {
        if (z.size() != domain.size()) return false;
        for (std::size_t d = 0; d < z.size(); ++d)
            if (z[d] < domain[d][0] || z[d] > domain[d][1]) return false;
        return true;
    }

    void validate() const {
        if (domain.empty()) throw std::invalid_argument("SolverProblem: empty parameter domain");
        for (const auto& b : domain)
            if (!(std::isfinite(b[0]) && std::isfinite(b[1]) && b[0] < b[1]))
                throw std::invalid_argument("SolverProblem: domain bounds must be finite, lo < hi");
    }

    /// Full-grid deterministic solve at z with n intervals.
    SolveResult solve(const std::vector<double>& z, std::size_t n) const {
        if (z.empty()) throw std::invalid_argument("SolverProblem::solve: empty z");
        switch (kind) {
            case ProblemKind::AdvectionDiffusion:
                return {solve_advection_diffusion(z[0], n), 1};
            case ProblemKind::Burgers: {
                // The max-norm residual floor grows like eps * n^2 / Re; below
                // it the tolerance is not representable in doubles.
                NewtonOptions opts = newton;
                const double floor = 8.0 * DBL_EPSILON *
                                     (static_cast<double>(n) +
                                      static_cast<double>(n) * static_cast<double>(n) / z[0]);
                opts.tol = std::max(opts.tol, floor);
                std::size_t iters = 0;
                std::vector<double> u = solve_burgers(z[0], n, opts, &iters);
                return {std::move(u), std::max<std::size_t>(iters, 1)};
            }
            case ProblemKind::Synthetic2D:
                throw std::invalid_argument(
                    "SolverProblem::solve: synthetic-2d has no 1D grid hierarchy");
        }
        throw std::invalid_argument("SolverProblem::solve: unknown kind");
    }
};

inline SolverProblem make_advection_diffusion_problem(double re_lo = 1.0, double re_hi = 100.0) {
    SolverProblem p;
    p.kind = ProblemKind::AdvectionDiffusion;
    p.domain = {{re_lo, re_hi}};
    p.validate();
    return p;
}

inline SolverProblem make_burgers_problem(double re_lo = 1.0, double re_hi = 1000.0) {
    SolverProblem p;
    p.kind = ProblemKind::Burgers;
    p.domain = {{re_lo, re_hi}};
    p.validate();
    return p;
}

/// Theorem-1 similarity diagnostic: with e^(h/2) and e^(h/4) built from the
/// first three hierarchy levels,
///   rho = ||2^d e^(h/4) - e^(h/2)||_inf / ||e^(h/2)||_inf.
/// Both errors vanish for solutions the stencils reproduce exactly; that
/// degenerate case is reported instead of a meaningless ratio.
struct Theorem1Result {
    double rho = 0.0;
    bool degenerate = false;
};

inline Theorem1Result theorem1_check(const SolverProblem& problem, const std::vector<double>& z,
                                     const GridHierarchy& hierarchy, unsigned d) {
    if (hierarchy.n_levels < 3)
        throw std::invalid_argument("theorem1_check: needs at least 3 levels");
    const std::vector<double> u1 = problem.solve(z, hierarchy.intervals_at(1)).u;
    const std::vector<double> u2 =
        restrict_to_coarsest(problem.solve(z, hierarchy.intervals_at(2)).u, hierarchy, 2);
    const std::vector<double> u3 =
        restrict_to_coarsest(problem.solve(z, hierarchy.intervals_at(3)).u, hierarchy, 3);

    std::vector<double> e_h2(u1.size()), defect(u1.size());
    const double factor = std::pow(2.0, static_cast<double>(d));
    double scale = 0.0;
    for (std::size_t j = 0; j < u1.size(); ++j) {
        e_h2[j] = u2[j] - u1[j];
        defect[j] = factor * (u3[j] - u2[j]) - e_h2[j];
        scale = std::max(scale, std::abs(u1[j]));
    }
    const double denom = max_abs(e_h2);
    Theorem1Result res;
    if (denom < 1e-14 * std::max(1.0, scale)) {
        res.degenerate = true;
        return res;
    }
    res.rho = max_abs(defect) / denom;
    return res;
}

}  // namespace mlnn
