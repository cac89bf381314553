#pragma once

#include <array>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace mlnn {

/// Clenshaw-Curtis nodes on [lo, hi]: the midpoint for m = 0, else
/// 2^m + 1 cosine-spaced points, ascending. The cosine arguments of level m
/// reappear exactly at level m+1 (scaling j and 2^m by 2 is exact in binary
/// floating point), so node sets are nested bit-for-bit.
inline std::vector<double> cc_nodes(std::size_t m, std::array<double, 2> interval) {
    const double mid = 0.5 * (interval[0] + interval[1]);
    const double half = 0.5 * (interval[1] - interval[0]);
    if (m == 0) return {mid};
    const std::size_t n = std::size_t{1} << m;  // polynomial degree; n+1 nodes
    std::vector<double> nodes(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        const double t = std::cos(static_cast<double>(j) * 3.141592653589793238462643383279503 /
                                  static_cast<double>(n));
        nodes[n - j] = mid + half * t;
    }
    nodes[0] = interval[0];
    nodes[n] = interval[1];
    nodes[n / 2] = mid;
    return nodes;
}

/// Barycentric weights of the Chebyshev-Gauss-Lobatto family, ascending node
/// order: w_j = (-1)^j delta_j with delta = 1/2 at the endpoints.
inline std::vector<double> cc_barycentric_weights(std::size_t m) {
    if (m == 0) return {1.0};
    const std::size_t n = std::size_t{1} << m;
    std::vector<double> w(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
        const double sign = j % 2 == 0 ? 1.0 : -1.0;
        w[j] = sign * ((j == 0 || j == n) ? 0.5 : 1.0);
    }
    return w;
}

/// Barycentric Lagrange evaluation of vector-valued nodal data at x.
/// Exact at the nodes (returned directly, no 0/0).
inline std::vector<double> barycentric_interpolate(const std::vector<double>& nodes,
                                                   const std::vector<double>& weights,
                                                   const std::vector<std::vector<double>>& values,
                                                   double x) {
    if (nodes.size() != values.size() || nodes.size() != weights.size())
        throw std::invalid_argument("barycentric_interpolate: node/value count mismatch");
    for (std::size_t j = 0; j < nodes.size(); ++j)
        if (x == nodes[j]) return values[j];
    const std::size_t len = values[0].size();
    std::vector<double> num(len, 0.0);
    double den = 0.0;
    for (std::size_t j = 0; j < nodes.size(); ++j) {
        const double t = weights[j] / (x - nodes[j]);
        den += t;
        const std::vector<double>& v = values[j];
        for (std::size_t k = 0; k < len; ++k) num[k] += t * v[k];
    }
    for (double& v : num) v /= den;
    return num;
}

/// Tensorized Clenshaw-Curtis grid on a box I (dim 1 or 2), with one cc_level
/// shared by all dimensions.
struct CollocationGrid {
    std::size_t cc_level = 0;
    std::vector<std::array<double, 2>> domain;
    std::vector<std::vector<double>> nodes;    // per dimension
    std::vector<std::vector<double>> weights;  // per dimension

    static CollocationGrid make(std::size_t m, const std::vector<std::array<double, 2>>& box) {
        if (box.empty() || box.size() > 2)
            throw std::invalid_argument("CollocationGrid: dim must be 1 or 2");
        CollocationGrid g;
        g.cc_level = m;
        g.domain = box;
        for (const auto& b : box) {
            g.nodes.push_back(cc_nodes(m, b));
            g.weights.push_back(cc_barycentric_weights(m));
        }
        return g;
    }

    std::size_t dim() const { return nodes.size(); }
    std::size_t points_per_dim() const { return nodes[0].size(); }
    std::size_t total_points() const {
        std::size_t n = 1;
        for (const auto& d : nodes) n *= d.size();
        return n;
    }

    /// Tensor-product node list, last dimension fastest.
    std::vector<std::vector<double>> all_points() const {
        std::vector<std::vector<double>> pts;
        pts.reserve(total_points());
        if (dim() == 1) {
            for (double x : nodes[0]) pts.push_back({x});
        } else {
            for (double x : nodes[0])
                for (double y : nodes[1]) pts.push_back({x, y});
        }
        return pts;
    }

    /// Interpolate vector-valued data stored at all_points() order.
    std::vector<double> interpolate(const std::vector<std::vector<double>>& values,
                                    const std::vector<double>& z) const {
        if (values.size() != total_points())
            throw std::invalid_argument("CollocationGrid::interpolate: value count mismatch");
        if (z.size() != dim())
            throw std::invalid_argument("CollocationGrid::interpolate: z dimension mismatch");
        if (dim() == 1) return barycentric_interpolate(nodes[0], weights[0], values, z[0]);
        // Dim 2: collapse the inner dimension first, then the outer.
        const std::size_t n1 = nodes[0].size(), n2 = nodes[1].size();
        std::vector<std::vector<double>> lines(n1);
        for (std::size_t i = 0; i < n1; ++i) {
            std::vector<std::vector<double>> row(values.begin() + i * n2,
                                                 values.begin() + (i + 1) * n2);
            lines[i] = barycentric_interpolate(nodes[1], weights[1], row, z[1]);
        }
        return barycentric_interpolate(nodes[0], weights[0], lines, z[0]);
    }
};

}  // namespace mlnn
