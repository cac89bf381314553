#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlnn/tensor.hpp"

namespace mlnn {

/// Nested family of 1D grids on [0,1]: level i has N^(i) = 2 N^(i-1)
/// intervals, so every coarse point coincides with a fine point.
struct GridHierarchy {
    std::size_t n_coarse = 100;  // N^(1), interval count of the coarsest grid
    std::size_t n_levels = 2;    // N_L

    std::size_t intervals_at(std::size_t level) const {
        if (level < 1 || level > n_levels)
            throw std::invalid_argument("GridHierarchy: level " + std::to_string(level) +
                                        " outside [1, " + std::to_string(n_levels) + "]");
        return n_coarse << (level - 1);
    }
    std::size_t points_at(std::size_t level) const { return intervals_at(level) + 1; }
    double dx_at(std::size_t level) const { return 1.0 / static_cast<double>(intervals_at(level)); }
};

/// Restriction by subsampling: fine-grid values at the coarse points.
inline std::vector<double> restrict_to_coarsest(const std::vector<double>& values,
                                                const GridHierarchy& h, std::size_t level) {
    if (values.size() != h.points_at(level))
        throw std::invalid_argument("restrict_to_coarsest: expected " +
                                    std::to_string(h.points_at(level)) + " values, got " +
                                    std::to_string(values.size()));
    const std::size_t stride = std::size_t{1} << (level - 1);
    std::vector<double> out(h.n_coarse + 1);
    for (std::size_t j = 0; j <= h.n_coarse; ++j) out[j] = values[j * stride];
    return out;
}

/// A solution restricted to the coarsest grid, tagged with its level and
/// parameter point.
struct FieldSample {
    std::vector<double> z;
    std::size_t level = 1;
    std::vector<double> values;  // length N^(1) + 1
    std::size_t quantity_channels = 1;
};

/// e^(i)(z) = u^(i)(z)|_X1 - u^(i-1)(z)|_X1, elementwise on the coarse grid.
inline std::vector<double> level_error(const FieldSample& u_i, const FieldSample& u_im1) {
    if (u_i.z != u_im1.z)
        throw std::invalid_argument("level_error: parameter points differ");
    if (u_i.level != u_im1.level + 1)
        throw std::invalid_argument("level_error: levels must be consecutive (i, i-1)");
    if (u_i.values.size() != u_im1.values.size())
        throw std::invalid_argument("level_error: restricted lengths differ");
    std::vector<double> e(u_i.values.size());
    for (std::size_t j = 0; j < e.size(); ++j) e[j] = u_i.values[j] - u_im1.values[j];
    return e;
}

}  // namespace mlnn
