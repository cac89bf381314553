#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlnn/tridiag.hpp"

namespace mlnn {

struct NewtonOptions {
    double tol = 1e-12;        // on ||F(u)||_inf
    std::size_t max_iter = 50;
};

struct NewtonFailure : std::runtime_error {
    double residual;
    explicit NewtonFailure(const std::string& msg, double res)
        : std::runtime_error(msg), residual(res) {}
};

namespace detail {

// F_j(u) = (u_{j+1}^2 - u_{j-1}^2)/(4 dx) - (u_{j+1} - 2 u_j + u_{j-1})/(Re dx^2)
inline void burgers_residual(const std::vector<double>& u, double re, std::vector<double>& f) {
    const std::size_t n = u.size() - 1;
    const double dx = 1.0 / static_cast<double>(n);
    const double c1 = 1.0 / (4.0 * dx);
    const double c2 = 1.0 / (re * dx * dx);
    f.assign(n + 1, 0.0);
    f[0] = u[0];
    for (std::size_t j = 1; j < n; ++j)
        f[j] = c1 * (u[j + 1] * u[j + 1] - u[j - 1] * u[j - 1]) -
               c2 * (u[j + 1] - 2.0 * u[j] + u[j - 1]);
    f[n] = u[n] - 1.0;
}

inline double inf_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

}  // namespace detail

/// Newton solve of steady Burgers (1/2)(u^2)' - (1/Re) u'' = 0 on [0,1],
/// u(0)=0, u(1)=1, central differences. The Jacobian is tridiagonal and
/// assembled analytically; the initial guess is the linear ramp. If a full
/// step increases the residual it is halved, at most 10 times.
inline std::vector<double> solve_burgers(double re, std::size_t n,
                                         const NewtonOptions& newton = {},
                                         std::size_t* iterations = nullptr) {
    if (re <= 0.0) throw std::invalid_argument("solve_burgers: Re must be positive");
    if (static_cast<double>(n) < 0.3 * re)
        throw std::invalid_argument("solve_burgers: n = " + std::to_string(n) +
                                    " too coarse for Re = " + std::to_string(re) +
                                    " (need n >= 0.3 Re)");
    const double dx = 1.0 / static_cast<double>(n);
    const double c2 = 1.0 / (re * dx * dx);

    std::vector<double> u(n + 1);
    for (std::size_t j = 0; j <= n; ++j) u[j] = static_cast<double>(j) * dx;

    std::vector<double> f, lower(n + 1), diag(n + 1), upper(n + 1), trial;
    detail::burgers_residual(u, re, f);
    double res = detail::inf_norm(f);

    for (std::size_t it = 0; it < newton.max_iter; ++it) {
        if (iterations) *iterations = it;
        if (res <= newton.tol) return u;

        // Tridiagonal Jacobian rows; boundary rows are identities.
        lower[0] = 0.0;
        diag[0] = 1.0;
        upper[0] = 0.0;
        for (std::size_t j = 1; j < n; ++j) {
            lower[j] = -u[j - 1] / (2.0 * dx) - c2;
            diag[j] = 2.0 * c2;
            upper[j] = u[j + 1] / (2.0 * dx) - c2;
        }
        lower[n] = 0.0;
        diag[n] = 1.0;
        upper[n] = 0.0;

        std::vector<double> step = solve_tridiagonal(lower, diag, upper, f);

        // Full Newton step by default; the residual may rise transiently on
        // the way to the root, so halving only rescues catastrophic steps
        // (non-finite or a 100-fold residual blow-up).
        trial = u;
        for (std::size_t j = 0; j <= n; ++j) trial[j] -= step[j];
        std::vector<double> f_trial;
        detail::burgers_residual(trial, re, f_trial);
        double res_new = detail::inf_norm(f_trial);
        if (!(res_new < 100.0 * res)) {
            double scale = 0.5;
            std::vector<double> damped(n + 1), f_damped;
            for (int damp = 0; damp < 10; ++damp, scale *= 0.5) {
                damped = u;
                for (std::size_t j = 0; j <= n; ++j) damped[j] -= scale * step[j];
                detail::burgers_residual(damped, re, f_damped);
                const double res_damped = detail::inf_norm(f_damped);
                if (res_damped < 100.0 * res) {
                    trial.swap(damped);
                    f_trial.swap(f_damped);
                    res_new = res_damped;
                    break;
                }
            }
        }
        u.swap(trial);
        f.swap(f_trial);
        res = res_new;
        if (!std::isfinite(res))
            throw NewtonFailure("solve_burgers: residual became non-finite", res);
    }
    if (iterations) *iterations = newton.max_iter;
    if (res <= newton.tol) return u;
    throw NewtonFailure("solve_burgers: no convergence after " +
                            std::to_string(newton.max_iter) +
                            " iterations, ||F||_inf = " + std::to_string(res),
                        res);
}

/// Max-norm of the Burgers residual for a given state.
inline double burgers_residual_norm(const std::vector<double>& u, double re) {
    std::vector<double> f;
    detail::burgers_residual(u, re, f);
    return detail::inf_norm(f);
}

/// Residual norms of successive Newton iterates (undamped path), for
/// inspecting the convergence order.
inline std::vector<double> burgers_newton_history(double re, std::size_t n,
                                                  const NewtonOptions& newton = {}) {
    const double dx = 1.0 / static_cast<double>(n);
    const double c2 = 1.0 / (re * dx * dx);
    std::vector<double> u(n + 1);
    for (std::size_t j = 0; j <= n; ++j) u[j] = static_cast<double>(j) * dx;
    std::vector<double> f, lower(n + 1), diag(n + 1), upper(n + 1), history;
    detail::burgers_residual(u, re, f);
    history.push_back(detail::inf_norm(f));
    for (std::size_t it = 0; it < newton.max_iter && history.back() > newton.tol; ++it) {
        lower[0] = 0.0;
        diag[0] = 1.0;
        upper[0] = 0.0;
        for (std::size_t j = 1; j < n; ++j) {
            lower[j] = -u[j - 1] / (2.0 * dx) - c2;
            diag[j] = 2.0 * c2;
            upper[j] = u[j + 1] / (2.0 * dx) - c2;
        }
        lower[n] = 0.0;
        diag[n] = 1.0;
        upper[n] = 0.0;
        std::vector<double> step = solve_tridiagonal(lower, diag, upper, f);
        for (std::size_t j = 0; j <= n; ++j) u[j] -= step[j];
        detail::burgers_residual(u, re, f);
        history.push_back(detail::inf_norm(f));
    }
    return history;
}

}  // namespace mlnn
