#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "mlnn/field_io.hpp"
#include "mlnn/problem.hpp"
#include "mlnn/synthetic2d.hpp"

using namespace mlnn;

namespace {

double max_err_vs_exact(const std::vector<double>& u, double re) {
    const std::size_t n = u.size() - 1;
    double err = 0.0;
    for (std::size_t j = 0; j <= n; ++j) {
        const double x = static_cast<double>(j) / static_cast<double>(n);
        err = std::max(err, std::abs(u[j] - exact_advection_diffusion(x, re)));
    }
    return err;
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) m = std::max(m, std::abs(a[j] - b[j]));
    return m;
}

}  // namespace

TEST_CASE("exact advection-diffusion solution") {
    CHECK(exact_advection_diffusion(0.0, 5.0) == doctest::Approx(0.0));
    CHECK(exact_advection_diffusion(1.0, 5.0) == doctest::Approx(1.0));
    CHECK(exact_advection_diffusion(0.5, 1.0) == doctest::Approx(0.377541).epsilon(1e-6));
    // Stable at large Re where exp(Re) overflows the naive form.
    CHECK(std::isfinite(exact_advection_diffusion(0.5, 1000.0)));
    CHECK(exact_advection_diffusion(1.0, 1000.0) == doctest::Approx(1.0));
    CHECK(exact_advection_diffusion(0.999, 50.0) > 0.0);
}

TEST_CASE("advection-diffusion solver boundary values and residual") {
    for (double re : {1.0, 10.0, 100.0}) {
        auto u = solve_advection_diffusion(re, 100);
        CHECK(u.front() == 0.0);
        CHECK(u.back() == 1.0);
        CHECK(advection_diffusion_residual(u, re) <= 1e-12);
    }
    auto u = solve_advection_diffusion(1.0, 100);
    CHECK(max_err_vs_exact(u, 1.0) <= 1e-4);
}

TEST_CASE("advection-diffusion rejects cell-Reynolds violations") {
    CHECK_THROWS_AS(solve_advection_diffusion(100.0, 40), std::invalid_argument);
    CHECK_THROWS_AS(solve_advection_diffusion(-1.0, 100), std::invalid_argument);
    CHECK_NOTHROW(solve_advection_diffusion(100.0, 51));
}

TEST_CASE("advection-diffusion converges with order 2") {
    for (double re : {1.0, 10.0, 100.0}) {
        for (std::size_t n : {std::size_t(100), std::size_t(200), std::size_t(400)}) {
            const double e1 = max_err_vs_exact(solve_advection_diffusion(re, n), re);
            const double e2 = max_err_vs_exact(solve_advection_diffusion(re, 2 * n), re);
            const double order = std::log2(e1 / e2);
            CHECK(order >= 1.85);
            CHECK(order <= 2.15);
        }
    }
}

TEST_CASE("burgers solver satisfies boundary conditions and tolerance") {
    std::size_t iters = 0;
    auto u = solve_burgers(1000.0, 300, {}, &iters);
    CHECK(u.front() == 0.0);
    CHECK(u.back() == 1.0);
    CHECK(burgers_residual_norm(u, 1000.0) <= 1e-12);
    CHECK(iters <= 20);
}

TEST_CASE("burgers rejects under-resolved grids") {
    CHECK_THROWS_AS(solve_burgers(1000.0, 200), std::invalid_argument);
    CHECK_THROWS_AS(solve_burgers(-5.0, 300), std::invalid_argument);
}

TEST_CASE("burgers newton convergence is quadratic near the root") {
    auto hist = burgers_newton_history(1000.0, 300);
    REQUIRE(hist.size() >= 4);
    const double r1 = hist[hist.size() - 3];
    const double r2 = hist[hist.size() - 2];
    const double r3 = hist[hist.size() - 1];
    const double slope = std::log(r3 / r2) / std::log(r2 / r1);
    CHECK(slope >= 1.8);
}

TEST_CASE("burgers self-convergence against a nested fine reference") {
    auto prob = make_burgers_problem();
    GridHierarchy h{300, 8};
    const auto uref = prob.solve({1000.0}, h.intervals_at(8)).u;
    std::vector<double> errs;
    for (std::size_t level = 1; level <= 3; ++level) {
        const std::size_t n = h.intervals_at(level);
        const auto un = prob.solve({1000.0}, n).u;
        const std::size_t stride = std::size_t{1} << (8 - level);
        double err = 0.0;
        for (std::size_t j = 0; j <= n; ++j)
            err = std::max(err, std::abs(un[j] - uref[j * stride]));
        errs.push_back(err);
    }
    for (std::size_t i = 0; i + 1 < errs.size(); ++i) {
        CHECK(errs[i] / errs[i + 1] >= 3.4);
        CHECK(errs[i] / errs[i + 1] <= 4.6);
    }
}

TEST_CASE("restriction by subsampling") {
    GridHierarchy h{2, 3};
    CHECK(restrict_to_coarsest({0.0, 1.0, 2.0}, h, 1) == std::vector<double>{0.0, 1.0, 2.0});
    CHECK(restrict_to_coarsest({0.0, 1.0, 2.0, 3.0, 4.0}, h, 2) ==
          std::vector<double>{0.0, 2.0, 4.0});
    CHECK_THROWS_AS(restrict_to_coarsest({0.0, 1.0}, h, 2), std::invalid_argument);

    // Nestedness: fine-grid samples of the exact solution restrict to the
    // coarse-grid samples exactly.
    GridHierarchy h2{50, 3};
    std::vector<double> fine(h2.points_at(3)), coarse(h2.points_at(1));
    for (std::size_t j = 0; j < fine.size(); ++j)
        fine[j] = exact_advection_diffusion(static_cast<double>(j) / (fine.size() - 1.0), 7.0);
    for (std::size_t j = 0; j < coarse.size(); ++j)
        coarse[j] = exact_advection_diffusion(static_cast<double>(j) / (coarse.size() - 1.0), 7.0);
    CHECK(restrict_to_coarsest(fine, h2, 3) == coarse);

    // Composition: level 3 -> 1 equals level 3 -> 2 -> 1 exactly.
    std::vector<double> v(h2.points_at(3));
    for (std::size_t j = 0; j < v.size(); ++j) v[j] = std::sin(0.37 * static_cast<double>(j));
    auto direct = restrict_to_coarsest(v, GridHierarchy{50, 3}, 3);
    auto via_mid = restrict_to_coarsest(restrict_to_coarsest(v, GridHierarchy{100, 2}, 2),
                                        GridHierarchy{50, 2}, 2);
    CHECK(direct == via_mid);
}

TEST_CASE("level_error definition and decay") {
    FieldSample a{{10.0}, 2, {1.0, 2.0, 3.0}, 1};
    FieldSample b{{10.0}, 1, {1.0, 2.0, 3.0}, 1};
    CHECK(level_error(a, b) == std::vector<double>{0.0, 0.0, 0.0});

    FieldSample wrong_z{{11.0}, 1, {1.0, 2.0, 3.0}, 1};
    CHECK_THROWS_AS(level_error(a, wrong_z), std::invalid_argument);
    FieldSample wrong_level{{10.0}, 3, {1.0, 2.0, 3.0}, 1};
    CHECK_THROWS_AS(level_error(wrong_level, b), std::invalid_argument);

    auto prob = make_advection_diffusion_problem();
    GridHierarchy h{100, 5};
    for (double re : {1.0, 10.0, 100.0}) {
        std::vector<std::vector<double>> ur;
        for (std::size_t level = 1; level <= 5; ++level)
            ur.push_back(restrict_to_coarsest(prob.solve({re}, h.intervals_at(level)).u, h, level));
        const double e2 = max_diff(ur[1], ur[0]);
        const double e3 = max_diff(ur[2], ur[1]);
        const double e5 = max_diff(ur[4], ur[3]);
        // Successive level errors shrink by about 2^d = 4 (order-2 scheme).
        CHECK(e2 / e3 >= 3.0);
        CHECK(e2 / e3 <= 5.0);
        CHECK(e5 < e2);
    }
}

TEST_CASE("telescoping identity is exact") {
    auto prob = make_advection_diffusion_problem();
    GridHierarchy h{100, 5};
    for (double re : {3.0, 42.0, 97.0}) {
        std::vector<std::vector<double>> ur;
        for (std::size_t level = 1; level <= 5; ++level)
            ur.push_back(restrict_to_coarsest(prob.solve({re}, h.intervals_at(level)).u, h, level));
        std::vector<double> sum = ur[0];
        for (std::size_t level = 2; level <= 5; ++level)
            for (std::size_t j = 0; j < sum.size(); ++j)
                sum[j] += ur[level - 1][j] - ur[level - 2][j];
        CHECK(max_diff(sum, ur[4]) <= 1e-12);
    }
}

TEST_CASE("inter-level error norms decay fourfold and cross the accuracy target") {
    auto prob = make_advection_diffusion_problem();
    GridHierarchy h{100, 9};
    const double eps_acc = 1e-6;
    std::vector<double> prev = prob.solve({10.0}, h.intervals_at(1)).u;
    std::size_t crossing = 0;
    double last_rms = 0.0;
    for (std::size_t level = 2; level <= 9; ++level) {
        auto cur = restrict_to_coarsest(prob.solve({10.0}, h.intervals_at(level)).u, h, level);
        std::vector<double> e(cur.size());
        for (std::size_t j = 0; j < e.size(); ++j) e[j] = cur[j] - prev[j];
        const double rms = rms_norm(e);
        if (level > 2) {
            CHECK(rms < last_rms);        // monotone decay
            CHECK(last_rms / rms > 3.0);  // roughly factor 2^d = 4
        }
        if (crossing == 0 && rms < eps_acc) crossing = level;
        last_rms = rms;
        prev = std::move(cur);
    }
    // Levels would keep being added until the ~dx^2 error drops below eps_acc.
    CHECK(crossing >= 4);
    CHECK(crossing <= 9);
}

TEST_CASE("theorem-1 similarity defect is small and shrinks under refinement") {
    auto prob = make_advection_diffusion_problem();
    const auto r100 = theorem1_check(prob, {10.0}, GridHierarchy{100, 3}, 2);
    const auto r200 = theorem1_check(prob, {10.0}, GridHierarchy{200, 3}, 2);
    CHECK(!r100.degenerate);
    CHECK(r100.rho <= 0.2);
    CHECK(r200.rho < r100.rho);

    // A nearly linear solution is reproduced exactly by the stencils; both
    // level errors collapse to round-off and the check reports it.
    auto low = make_advection_diffusion_problem(1e-8, 1.0);
    const auto degen = theorem1_check(low, {1e-7}, GridHierarchy{8, 3}, 2);
    CHECK(degen.degenerate);
}

TEST_CASE("synthetic 2d samples are deterministic and self-consistent") {
    const auto [f1, t1] = synthetic_2d_sample({0.3, 0.7}, {8, 9}, 99);
    const auto [f2, t2] = synthetic_2d_sample({0.3, 0.7}, {8, 9}, 99);
    CHECK(f1.data == f2.data);
    CHECK(t1.data == t2.data);
    CHECK(f1.shape == std::vector<std::size_t>{2, 8, 9});

    // Target is the scaled 5-point Laplacian, checked pointwise.
    const std::size_t h = 8, w = 9;
    for (std::size_t ch = 0; ch < 2; ++ch)
        for (std::size_t y = 1; y + 1 < h; ++y)
            for (std::size_t x = 1; x + 1 < w; ++x) {
                const auto F = [&](std::size_t yy, std::size_t xx) {
                    return f1.data[ch * h * w + yy * w + xx];
                };
                const double lap =
                    0.25 * (F(y - 1, x) + F(y + 1, x) + F(y, x - 1) + F(y, x + 1) - 4 * F(y, x));
                CHECK(t1.data[ch * h * w + y * w + x] == doctest::Approx(lap).epsilon(1e-14));
            }

    Tensor zero({2, 4, 4});
    Tensor lap0 = scaled_laplacian_2d(zero, 0.25);
    for (double v : lap0.data) CHECK(v == 0.0);
}

TEST_CASE("field sample archive round-trips") {
    const auto dir = std::filesystem::temp_directory_path() / "mlnn_field_io_test";
    std::filesystem::create_directories(dir);
    const std::string path = (dir / "level2.jsonl").string();

    std::vector<FieldSample> samples;
    samples.push_back({{12.5}, 2, {0.0, 0.25, 1.0}, 1});
    samples.push_back({{99.0}, 2, {0.1, -0.5, 0.7}, 1});
    save_field_samples(path, samples);
    const auto loaded = load_field_samples(path);
    REQUIRE(loaded.size() == 2);
    CHECK(loaded[0].z == samples[0].z);
    CHECK(loaded[0].level == 2);
    CHECK(loaded[0].values == samples[0].values);
    CHECK(loaded[1].values == samples[1].values);

    write_profile_csv((dir / "profile.csv").string(), {0.0, 0.5, 1.0});
    CHECK(std::filesystem::exists(dir / "profile.csv"));
    std::filesystem::remove_all(dir);
}
