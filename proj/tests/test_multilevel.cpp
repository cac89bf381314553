#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "mlnn/driver.hpp"
#include "mlnn/synthetic2d.hpp"

using namespace mlnn;

namespace {

// True inter-level error maps from direct solves; the oracle substitute for
// trained networks in the telescoping checks.
std::vector<CorrectionMap> oracle_maps(const SolverProblem& prob, const GridHierarchy& h) {
    std::vector<CorrectionMap> maps;
    for (std::size_t level = 2; level <= h.n_levels; ++level)
        maps.push_back([&prob, &h, level](const std::vector<double>&,
                                          const std::vector<double>& z) {
            auto lo = restrict_to_coarsest(prob.solve(z, h.intervals_at(level - 1)).u, h,
                                           level - 1);
            auto hi = restrict_to_coarsest(prob.solve(z, h.intervals_at(level)).u, h, level);
            for (std::size_t j = 0; j < hi.size(); ++j) hi[j] -= lo[j];
            return hi;
        });
    return maps;
}

RunConfig tiny_config() {
    RunConfig cfg;
    cfg.problem = make_advection_diffusion_problem(1.0, 10.0);
    cfg.n_coarse = 16;
    cfg.seed = 42;
    cfg.jobs = 2;
    cfg.filters_first_layer = 1;
    cfg.optimizer.max_epochs = 400;
    cfg.optimizer.plateau_patience = 80;
    return cfg;
}

}  // namespace

TEST_CASE("sample_z draws uniformly and deterministically") {
    const std::vector<std::array<double, 2>> box = {{1.0, 100.0}};
    auto a = sample_z(box, 10, 7);
    auto b = sample_z(box, 10, 7);
    CHECK(a.size() == 10);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i][0] >= 1.0);
        CHECK(a[i][0] <= 100.0);
        CHECK(a[i][0] == b[i][0]);
    }
    CHECK_THROWS_AS(sample_z(box, 0, 1), std::invalid_argument);

    // Law of large numbers on [0,1].
    auto big = sample_z({{0.0, 1.0}}, 100000, 11);
    double mean = 0.0;
    for (const auto& z : big) mean += z[0];
    mean /= static_cast<double>(big.size());
    CHECK(std::abs(mean - 0.5) <= 0.01);
}

TEST_CASE("dataset split follows the 80/20 rule") {
    LevelDataset ds;
    ds.level = 2;
    for (int k = 0; k < 10; ++k)
        ds.pairs.push_back({{double(k)}, {0.0, 1.0}, {0.5, 0.5}});
    ds.split(3);
    CHECK(ds.training.size() == 8);
    CHECK(ds.validation.size() == 2);

    // No pair in both: z values are unique identifiers here.
    for (const auto& t : ds.training)
        for (const auto& v : ds.validation) CHECK(t.z != v.z);

    LevelDataset two;
    two.level = 3;
    two.pairs.push_back({{0.0}, {1.0}, {1.0}});
    two.pairs.push_back({{1.0}, {1.0}, {1.0}});
    two.split(5);
    CHECK(two.training.size() == 1);
    CHECK(two.validation.size() == 1);
}

TEST_CASE("level-2 pairs reproduce the level error exactly") {
    auto prob = make_advection_diffusion_problem(1.0, 10.0);
    GridHierarchy h{20, 2};
    LevelDataset ds;
    ds.level = 2;
    CostLedger ledger;
    auto zs = sample_z(prob.domain, 4, 9);
    append_level_pairs(ds, zs, prob, h,
                       [](const std::vector<double>&) {
                           return std::make_pair(std::vector<double>{}, std::size_t{0});
                       },
                       ledger, 2);
    REQUIRE(ds.pairs.size() == 4);
    for (const auto& p : ds.pairs) {
        FieldSample hi{p.z, 2, p.target, 1};
        FieldSample lo{p.z, 1, p.input, 1};
        auto e = level_error(hi, lo);
        for (std::size_t j = 0; j < e.size(); ++j)
            CHECK(e[j] == p.target[j] - p.input[j]);
    }
    CHECK(ledger.at_level(2).solves == 8);  // one level-2 and one level-1 solve per z
    CHECK(ledger.at_level(2).samples == 4);
}

TEST_CASE("level-3 inputs come from the partial surrogate") {
    auto prob = make_advection_diffusion_problem(1.0, 10.0);
    GridHierarchy h{20, 3};
    LevelDataset ds;
    ds.level = 3;
    CostLedger ledger;
    auto zs = sample_z(prob.domain, 3, 13);
    // Perfect P^(2) oracle: inputs equal the true restricted u^(2).
    auto oracle = [&](const std::vector<double>& z) {
        auto u2 = restrict_to_coarsest(prob.solve(z, h.intervals_at(2)).u, h, 2);
        return std::make_pair(std::move(u2), std::size_t{1});
    };
    append_level_pairs(ds, zs, prob, h, oracle, ledger, 1);
    for (const auto& p : ds.pairs) {
        auto u2 = restrict_to_coarsest(prob.solve(p.z, h.intervals_at(2)).u, h, 2);
        double err = 0.0;
        for (std::size_t j = 0; j < u2.size(); ++j)
            err = std::max(err, std::abs(p.input[j] - u2[j]));
        CHECK(err <= 1e-12);
    }
}

TEST_CASE("telescoped evaluation with oracle maps reproduces the fine solution") {
    auto prob = make_advection_diffusion_problem();
    GridHierarchy h{100, 5};
    auto maps = oracle_maps(prob, h);
    auto zs = sample_z(prob.domain, 5, 21);
    for (const auto& z : zs) {
        auto coarse = prob.solve(z, h.intervals_at(1)).u;
        auto approx = telescoped_eval(coarse, maps, z);
        auto truth = restrict_to_coarsest(prob.solve(z, h.intervals_at(5)).u, h, 5);
        double err = 0.0;
        for (std::size_t j = 0; j < truth.size(); ++j)
            err = std::max(err, std::abs(approx[j] - truth[j]));
        CHECK(err <= 1e-12);
    }
}

TEST_CASE("surrogate with no maps equals the coarse solve") {
    Surrogate s;
    s.problem = make_advection_diffusion_problem();
    s.hierarchy = GridHierarchy{50, 1};
    std::size_t sweeps = 0;
    auto u = s.evaluate({7.0}, &sweeps);
    CHECK(u == s.problem.solve({7.0}, 50).u);
    CHECK(sweeps == 1);  // exactly one coarse solve
    CHECK(s.in_domain({7.0}));
    CHECK(!s.in_domain({700.0}));
}

TEST_CASE("telescoped evaluation calls each correction map exactly once") {
    std::vector<int> calls(3, 0);
    std::vector<CorrectionMap> maps;
    for (int i = 0; i < 3; ++i)
        maps.push_back([&calls, i](const std::vector<double>& u, const std::vector<double>&) {
            ++calls[i];
            return std::vector<double>(u.size(), 1.0);
        });
    auto out = telescoped_eval({0.0, 0.0}, maps, {});
    CHECK(out == std::vector<double>{3.0, 3.0});
    CHECK(calls == std::vector<int>{1, 1, 1});
}

TEST_CASE("should_add_level triggers on large predicted corrections") {
    auto net = make_error_map_network({1, 5}, 1, 0, 0, 0, 4, 3);
    net.visit_blocks([](std::vector<double>& v, const auto&, bool, bool) {
        std::fill(v.begin(), v.end(), 0.0);
    });
    Batch batch = {{Tensor({1, 5}, {1, 2, 3, 4, 5}), {0.5}, Tensor({1, 5})}};
    CHECK(!should_add_level(net, batch, 1e-6));

    // Output 2*eps_acc per point: rms norm is 2*eps_acc > eps_acc.
    const double eps_acc = 1e-3;
    net.output_layer.bias.assign(5, 2.0 * eps_acc);
    CHECK(should_add_level(net, batch, eps_acc));
}

TEST_CASE("grid enumerations have the spec sizes and order") {
    auto l2 = level2_grid(100);
    CHECK(l2.size() == 81);
    CHECK(l2[0].lambda == 0.0);
    CHECK(l2[0].n_cnn == 2);
    CHECK(l2[0].n_fc == 1);
    CHECK(l2[0].n_neurons == 50);
    CHECK(l2.back().lambda == 1e-3);
    CHECK(l2.back().n_neurons == 200);
    CHECK(transfer_grid(100).size() == 9);
}

TEST_CASE("pick_best selects the minimum and applies tie-breaks") {
    std::vector<GridCell> cells(3);
    cells[0].v = 0.5;
    cells[1].v = 0.0;  // injected oracle network
    cells[2].v = 0.2;
    CHECK(pick_best(cells) == 1);

    std::vector<GridCell> tie(3);
    tie[0].v = 0.1;
    tie[0].trainable_params = 500;
    tie[1].v = 0.1;
    tie[1].trainable_params = 100;
    tie[2].v = 0.1;
    tie[2].trainable_params = 100;
    CHECK(pick_best(tie) == 1);  // fewer params wins, then earlier position

    std::vector<GridCell> failed(2);
    failed[0].error = "diverged";
    failed[1].error = "diverged";
    CHECK_THROWS_AS(pick_best(failed), std::runtime_error);
}

TEST_CASE("transfer level trains a small fraction of the level-2 parameters") {
    const std::size_t n1 = 100;
    auto level2 = make_error_map_network({1, n1 + 1}, 1, 4, 3, n1, 4, 17);
    const std::size_t full = level2.parameter_count();
    freeze_all(level2);
    append_fc_layer(level2, n1, 18);
    CHECK(static_cast<double>(level2.trainable_parameter_count()) <
          0.1 * static_cast<double>(full));
}

TEST_CASE("warm start is at least as good as a fresh initialization") {
    RunConfig cfg = tiny_config();
    GridHierarchy h{cfg.n_coarse, 2};
    LevelDataset ds;
    ds.level = 2;
    CostLedger ledger;
    auto dummy = [](const std::vector<double>&) {
        return std::make_pair(std::vector<double>{}, std::size_t{0});
    };
    append_level_pairs(ds, sample_z(cfg.problem.domain, 10, 31), cfg.problem, h, dummy, ledger,
                       2);
    ds.split(32);

    Hyperparameters hp{0.0, 2, 1, cfg.n_coarse};
    TrainedMap first = train_level(2, ds, hp, nullptr, cfg, 77);

    append_level_pairs(ds, sample_z(cfg.problem.domain, 10, 33), cfg.problem, h, dummy, ledger,
                       2);
    ds.split(34);

    ErrorMapNetwork fresh = make_error_map_network({1, cfg.n_coarse + 1}, 1, hp.n_cnn, hp.n_fc,
                                                   hp.n_neurons, cfg.filters_first_layer, 77);
    CHECK(loss(first.net, ds.training, 0.0) <= loss(fresh, ds.training, 0.0));
}

TEST_CASE("warm retraining on fixed data never worsens the training loss") {
    RunConfig cfg = tiny_config();
    cfg.optimizer.max_epochs = 300;
    GridHierarchy h{cfg.n_coarse, 2};
    LevelDataset ds;
    ds.level = 2;
    CostLedger ledger;
    auto dummy = [](const std::vector<double>&) {
        return std::make_pair(std::vector<double>{}, std::size_t{0});
    };
    append_level_pairs(ds, sample_z(cfg.problem.domain, 10, 61), cfg.problem, h, dummy, ledger,
                       2);
    ds.split(62);
    Hyperparameters hp{0.0, 1, 1, cfg.n_coarse};
    TrainedMap first = train_level(2, ds, hp, nullptr, cfg, 63);
    TrainedMap second = train_level(2, ds, hp, nullptr, cfg, 64, &first.net);
    CHECK(second.result.final_train_loss <= first.result.final_train_loss * (1.0 + 1e-12));
}

TEST_CASE("zero error targets are learned to near-zero validation error") {
    RunConfig cfg = tiny_config();
    cfg.optimizer.max_epochs = 2500;
    cfg.optimizer.plateau_patience = 300;
    LevelDataset ds;
    ds.level = 2;
    Rng rng(5);
    for (int k = 0; k < 10; ++k) {
        LevelPair p;
        p.z = {rng.uniform(1.0, 10.0)};
        p.input.resize(cfg.n_coarse + 1);
        for (double& v : p.input) v = rng.uniform(0.0, 1.0);
        p.target = p.input;  // u^(i) == u^(i-1): the error to learn is zero
        ds.pairs.push_back(std::move(p));
    }
    ds.split(6);
    Hyperparameters hp{0.0, 2, 1, cfg.n_coarse / 2};
    TrainedMap trained = train_level(2, ds, hp, nullptr, cfg, 55);
    CHECK(trained.result.validation_error <= 1e-5);
    auto out = apply_error_map(trained.net, ds.pairs[0].input, ds.pairs[0].z);
    CHECK(rms_norm(out) <= 0.05);
}

TEST_CASE("transfer training leaves the inherited sub-network bit-identical") {
    RunConfig cfg = tiny_config();
    GridHierarchy h{cfg.n_coarse, 3};
    CostLedger ledger;
    auto dummy = [](const std::vector<double>&) {
        return std::make_pair(std::vector<double>{}, std::size_t{0});
    };

    LevelDataset ds2;
    ds2.level = 2;
    append_level_pairs(ds2, sample_z(cfg.problem.domain, 10, 41), cfg.problem, h, dummy, ledger,
                       2);
    ds2.split(42);
    Hyperparameters hp2{0.0, 1, 1, cfg.n_coarse / 2};
    TrainedMap p2 = train_level(2, ds2, hp2, nullptr, cfg, 43);

    LevelDataset ds3;
    ds3.level = 3;
    auto oracle = [&](const std::vector<double>& z) {
        auto u2 = restrict_to_coarsest(cfg.problem.solve(z, h.intervals_at(2)).u, h, 2);
        return std::make_pair(std::move(u2), std::size_t{1});
    };
    append_level_pairs(ds3, sample_z(cfg.problem.domain, 4, 44), cfg.problem, h, oracle, ledger,
                       2);
    ds3.split(45);
    Hyperparameters hp3{0.0, 0, 0, cfg.n_coarse / 2};
    TrainedMap p3 = train_level(3, ds3, hp3, &p2.net, cfg, 46);

    // The frozen prefix of P^(3) reproduces P^(2) exactly on any input.
    Rng rng(8);
    Tensor field({1, cfg.n_coarse + 1});
    for (double& v : field.data) v = rng.uniform(0.0, 1.0);
    std::vector<double> z = {rng.uniform(1.0, 10.0)};
    Tensor old_out = network_forward(p2.net, field, z);
    ForwardCache cache;
    network_forward_cached(p3.net, field, z, cache);
    const auto& prefix_out = cache.fc_act[p2.net.fc_layers.size() + 1];
    REQUIRE(prefix_out.size() == old_out.numel());
    CHECK(std::memcmp(prefix_out.data(), old_out.data.data(),
                      prefix_out.size() * sizeof(double)) == 0);
}

TEST_CASE("enrichment fails with history after the round cap") {
    RunConfig cfg = tiny_config();
    cfg.epsilon = 1e-300;  // unreachable
    cfg.max_rounds = 2;
    cfg.optimizer.max_epochs = 50;
    GridHierarchy h{cfg.n_coarse, 2};
    LevelDataset ds;
    ds.level = 2;
    CostLedger ledger;
    auto dummy = [](const std::vector<double>&) {
        return std::make_pair(std::vector<double>{}, std::size_t{0});
    };
    try {
        enrich_until_valid(2, ds, h, dummy, nullptr, cfg, ledger);
        FAIL("expected EnrichmentFailure");
    } catch (const EnrichmentFailure& e) {
        CHECK(e.v_history.size() == 2);
        CHECK(ds.pairs.size() == 20);  // two rounds of 10^dim samples
    }
}

TEST_CASE("enrichment batches scale as 2^dim above level 2") {
    RunConfig cfg = tiny_config();
    cfg.problem.domain = {{1.0, 10.0}, {0.0, 1.0}};  // solver reads z[0] only
    cfg.epsilon = 1e-300;
    cfg.max_rounds = 2;
    cfg.optimizer.max_epochs = 30;
    GridHierarchy h{cfg.n_coarse, 3};
    LevelDataset ds;
    ds.level = 3;
    CostLedger ledger;
    auto oracle = [&](const std::vector<double>& z) {
        auto u2 = restrict_to_coarsest(cfg.problem.solve(z, h.intervals_at(2)).u, h, 2);
        return std::make_pair(std::move(u2), std::size_t{1});
    };
    auto p2 = make_error_map_network({1, cfg.n_coarse + 1}, 2, 1, 1, 4, 1, 81);
    try {
        enrich_until_valid(3, ds, h, oracle, &p2, cfg, ledger);
        FAIL("expected EnrichmentFailure");
    } catch (const EnrichmentFailure&) {
        CHECK(ds.pairs.size() == 8);  // two rounds of 2^dim = 4 samples
    }
}

TEST_CASE("a 2d multi-channel network learns the synthetic stencil") {
    Batch T, V;
    for (int k = 0; k < 6; ++k) {
        auto [field, target] = synthetic_2d_sample({0.1 * k}, {6, 6}, 77);
        Sample s;
        s.field = std::move(field);
        s.z = {0.1 * k};
        s.target = std::move(target);
        (k < 5 ? T : V).push_back(std::move(s));
    }
    auto net = make_error_map_network({2, 6, 6}, 1, 2, 1, 24, 2, 303);
    const double initial = loss(net, T, 0.0);
    TrainConfig tc;
    tc.max_epochs = 800;
    tc.plateau_patience = 150;
    TrainResult r = train(net, T, V, tc);
    CHECK(r.final_train_loss < 0.05 * initial);
}

TEST_CASE("grid search selection does not depend on the job count") {
    RunConfig cfg = tiny_config();
    cfg.optimizer.max_epochs = 200;
    GridHierarchy h{cfg.n_coarse, 3};
    CostLedger ledger;
    auto dummy = [](const std::vector<double>&) {
        return std::make_pair(std::vector<double>{}, std::size_t{0});
    };
    LevelDataset ds2;
    ds2.level = 2;
    append_level_pairs(ds2, sample_z(cfg.problem.domain, 10, 71), cfg.problem, h, dummy, ledger,
                       2);
    ds2.split(72);
    TrainedMap p2 = train_level(2, ds2, {0.0, 1, 1, 8}, nullptr, cfg, 73);

    LevelDataset ds3;
    ds3.level = 3;
    auto oracle = [&](const std::vector<double>& z) {
        auto u2 = restrict_to_coarsest(cfg.problem.solve(z, h.intervals_at(2)).u, h, 2);
        return std::make_pair(std::move(u2), std::size_t{1});
    };
    append_level_pairs(ds3, sample_z(cfg.problem.domain, 6, 74), cfg.problem, h, oracle, ledger,
                       1);
    ds3.split(75);

    cfg.jobs = 1;
    GridSearchResult serial = grid_search(3, ds3, &p2.net, cfg, ledger);
    cfg.jobs = 2;
    GridSearchResult parallel = grid_search(3, ds3, &p2.net, cfg, ledger);
    CHECK(serial.cells.size() == 9);
    CHECK(serial.best_index == parallel.best_index);
    CHECK(serial.v_min == parallel.v_min);
    CHECK(serial.best.output_layer.weights.data == parallel.best.output_layer.weights.data);
}

TEST_CASE("the burgers configuration of the paper is accepted") {
    RunConfig cfg;
    cfg.problem = make_burgers_problem(1.0, 1000.0);
    cfg.n_coarse = 300;
    cfg.validate();
    // The coarsest grid sits exactly on the stability guard.
    auto r = cfg.problem.solve({1000.0}, 300);
    CHECK(r.u.size() == 301);
    CHECK(r.sweeps >= 5);
    CHECK_THROWS_AS(cfg.problem.solve({1000.0}, 299), std::invalid_argument);
}

TEST_CASE("trivial problem stops at two levels") {
    // Re ~ 1e-8: the coarse solve is exact to round-off, every correction is
    // near zero, so the method terminates at N_L = 2 immediately.
    RunConfig cfg;
    cfg.problem = make_advection_diffusion_problem(1e-8, 2e-8);
    cfg.n_coarse = 8;
    cfg.max_levels = 5;
    cfg.epsilon = 1e-6;
    cfg.epsilon_acc = 1e-4;
    cfg.seed = 7;
    cfg.jobs = 2;
    cfg.filters_first_layer = 1;
    cfg.optimizer.max_epochs = 600;
    cfg.optimizer.plateau_patience = 100;
    cfg.holdout = 5;

    MlnnRun run = run_mlnn(cfg);
    CHECK(run.surrogate.n_levels() == 2);
    CHECK(run.levels.size() == 1);
    CHECK(run.levels[0].v_min < cfg.epsilon);
    CHECK(run.levels[0].sample_history.front() == 10);

    // Corrections are near zero and the surrogate matches the coarse solve.
    auto out = apply_error_map(run.surrogate.maps[0], run.datasets[0].pairs[0].input,
                               run.datasets[0].pairs[0].z);
    CHECK(rms_norm(out) <= cfg.epsilon_acc);
    CHECK(run.holdout_errors.size() == 5);
}
