#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mlnn {

/// One grid-search cell. Level 2 uses all four fields; transfer levels use
/// lambda and n_neurons only (n^(i), the width of the appended layer).
struct Hyperparameters {
    double lambda = 0.0;
    std::size_t n_cnn = 4;
    std::size_t n_fc = 3;
    std::size_t n_neurons = 0;

    std::string describe() const {
        return "lambda=" + std::to_string(lambda) + " n_cnn=" + std::to_string(n_cnn) +
               " n_fc=" + std::to_string(n_fc) + " n=" + std::to_string(n_neurons);
    }
};

inline std::vector<double> lambda_grid() { return {0.0, 1e-6, 1e-3}; }
inline std::vector<std::size_t> n_cnn_grid() { return {2, 4, 6}; }
inline std::vector<std::size_t> n_fc_grid() { return {1, 3, 5}; }
inline std::vector<std::size_t> n_neurons_grid(std::size_t n1) { return {n1 / 2, n1, 2 * n1}; }

/// Tensor grid for training P^(2): 3^4 = 81 cells, lexicographic in
/// (lambda, n_cnn, n_fc, n). The order fixes the grid-search tie-break.
inline std::vector<Hyperparameters> level2_grid(std::size_t n1) {
    std::vector<Hyperparameters> grid;
    for (double lam : lambda_grid())
        for (std::size_t nc : n_cnn_grid())
            for (std::size_t nf : n_fc_grid())
                for (std::size_t nn : n_neurons_grid(n1))
                    grid.push_back({lam, nc, nf, nn});
    return grid;
}

/// Tensor grid for transfer levels: 3^2 = 9 cells over (lambda^(i), n^(i)).
inline std::vector<Hyperparameters> transfer_grid(std::size_t n1) {
    std::vector<Hyperparameters> grid;
    for (double lam : lambda_grid())
        for (std::size_t nn : n_neurons_grid(n1)) grid.push_back({lam, 0, 0, nn});
    return grid;
}

}  // namespace mlnn
