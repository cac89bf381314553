#pragma once

#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mlnn/rng.hpp"
#include "mlnn/tensor.hpp"

namespace mlnn {

/// Scaled 5-point discrete Laplacian of each channel, zero-extended at the
/// edges (matching conv zero padding).
inline Tensor scaled_laplacian_2d(const Tensor& field, double scale) {
    if (field.rank() != 3)
        throw std::invalid_argument("scaled_laplacian_2d: expected [channels, ny, nx]");
    const std::size_t c = field.shape[0], h = field.shape[1], w = field.shape[2];
    Tensor out(field.shape);
    for (std::size_t ch = 0; ch < c; ++ch) {
        const double* f = field.data.data() + ch * h * w;
        double* o = out.data.data() + ch * h * w;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                const double up = y > 0 ? f[(y - 1) * w + x] : 0.0;
                const double dn = y + 1 < h ? f[(y + 1) * w + x] : 0.0;
                const double lf = x > 0 ? f[y * w + x - 1] : 0.0;
                const double rt = x + 1 < w ? f[y * w + x + 1] : 0.0;
                o[y * w + x] = scale * (up + dn + lf + rt - 4.0 * f[y * w + x]);
            }
    }
    return out;
}

/// Synthetic 2-channel 2D sample exercising the rank-2 multi-channel conv
/// path: a smooth z-parameterized field and its scaled discrete Laplacian as
/// the target "error", so a network has to learn a local stencil.
inline std::pair<Tensor, Tensor> synthetic_2d_sample(const std::vector<double>& z,
                                                     std::pair<std::size_t, std::size_t> shape,
                                                     std::uint64_t seed) {
    const auto [ny, nx] = shape;
    if (ny < 2 || nx < 2 || ny > 32 || nx > 32)
        throw std::invalid_argument("synthetic_2d_sample: shape must be within [2,32]^2");
    const double z0 = z.empty() ? 0.0 : z[0];
    const double z1 = z.size() > 1 ? z[1] : 0.0;

    Rng rng(seed);
    Tensor field({2, ny, nx});
    for (std::size_t ch = 0; ch < 2; ++ch) {
        const double a = 0.5 + rng.uniform();
        const double px = rng.uniform();
        const double py = rng.uniform();
        const double kx = 1.0 + rng.uniform();
        const double ky = 1.0 + rng.uniform();
        double* f = field.data.data() + ch * ny * nx;
        for (std::size_t y = 0; y < ny; ++y)
            for (std::size_t x = 0; x < nx; ++x) {
                const double xs = static_cast<double>(x) / static_cast<double>(nx - 1);
                const double ys = static_cast<double>(y) / static_cast<double>(ny - 1);
                f[y * nx + x] = a * std::sin(3.141592653589793 * (kx * xs + px + 0.25 * z0)) *
                                std::cos(3.141592653589793 * (ky * ys + py + 0.25 * z1));
            }
    }
    Tensor target = scaled_laplacian_2d(field, 0.25);
    return {std::move(field), std::move(target)};
}

}  // namespace mlnn
