#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlnn/tridiag.hpp"

namespace mlnn {

/// Closed form of u' - (1/Re) u'' = 0 with u(0)=0, u(1)=1:
///   u(x, Re) = (exp(x Re) - 1) / (exp(Re) - 1),
/// evaluated as expm1((x-1)Re-adjusted) ratios so large Re cannot overflow.
inline double exact_advection_diffusion(double x, double re) {
    if (re <= 0.0) throw std::invalid_argument("exact_advection_diffusion: Re must be positive");
    // (e^{xRe}-1)/(e^{Re}-1) = e^{(x-1)Re} * (1-e^{-xRe}) / (1-e^{-Re})
    return std::exp((x - 1.0) * re) * std::expm1(-x * re) / std::expm1(-re);
}

/// Central-difference solve of u' - (1/Re) u'' = 0 on [0,1] with n intervals,
/// u_0 = 0, u_n = 1. The Dirichlet values are folded into the right-hand side
/// of the interior tridiagonal system, equivalent to the full-matrix form with
/// the boundary source vector.
inline std::vector<double> solve_advection_diffusion(double re, std::size_t n) {
    if (re <= 0.0) throw std::invalid_argument("solve_advection_diffusion: Re must be positive");
    if (n < 2) throw std::invalid_argument("solve_advection_diffusion: need at least 2 intervals");
    const double dx = 1.0 / static_cast<double>(n);
    if (re * dx >= 2.0)
        throw std::invalid_argument("solve_advection_diffusion: cell Reynolds number " +
                                    std::to_string(re * dx) + " violates Re*dx < 2");

    const std::size_t m = n - 1;  // interior unknowns
    const double adv = 1.0 / (2.0 * dx);
    const double dif = 1.0 / (re * dx * dx);
    // row j: (-adv - dif) u_{j-1} + (2 dif) u_j + (adv - dif) u_{j+1} = 0
    std::vector<double> lower(m, -adv - dif), diag(m, 2.0 * dif), upper(m, adv - dif), rhs(m, 0.0);
    rhs[m - 1] = -(adv - dif);  // u_n = 1 moved to the right-hand side

    std::vector<double> interior = solve_tridiagonal(lower, diag, upper, rhs);

    std::vector<double> u(n + 1);
    u[0] = 0.0;
    for (std::size_t j = 0; j < m; ++j) u[j + 1] = interior[j];
    u[n] = 1.0;
    return u;
}

/// Max-norm row-scaled residual of the assembled system: each interior row
/// |(L1 u - L2 u / Re - S)_j| is divided by sum_k |a_jk| |u_k| + |S_j|, the
/// standard backward-error measure. Rounding the solution entries to doubles
/// alone produces an unscaled residual of order eps/(Re dx^2), so only the
/// scaled quantity is meaningful at the 1e-12 level across all Re.
inline double advection_diffusion_residual(const std::vector<double>& u, double re) {
    const std::size_t n = u.size() - 1;
    const double dx = 1.0 / static_cast<double>(n);
    const double adv = 1.0 / (2.0 * dx);
    const double dif = 1.0 / (re * dx * dx);
    double r = std::max(std::abs(u[0]) / std::max(1.0, std::abs(u[0])),
                        std::abs(u[n] - 1.0) / std::max(1.0, std::abs(u[n])));
    for (std::size_t j = 1; j < n; ++j) {
        const double row = (-adv - dif) * u[j - 1] + 2.0 * dif * u[j] + (adv - dif) * u[j + 1];
        const double scale = std::abs(-adv - dif) * std::abs(u[j - 1]) +
                             2.0 * dif * std::abs(u[j]) +
                             std::abs(adv - dif) * std::abs(u[j + 1]);
        r = std::max(r, std::abs(row) / std::max(scale, 1e-300));
    }
    return r;
}

}  // namespace mlnn
