#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlnn/rng.hpp"
#include "mlnn/tensor.hpp"

namespace mlnn {

enum class Activation { ReLU, Linear };

/// Convolution layer with fixed spatial width 3 per dimension and zero
/// padding of width 1, so the output spatial shape equals the input's.
/// The operation is cross-correlation (no kernel flip), followed by bias
/// and ReLU.
struct ConvLayer {
    std::size_t rank = 1;  // spatial dimensions, 1 or 2
    std::size_t in_channels = 1;
    std::size_t out_channels = 1;
    Tensor kernel;              // [out_c, in_c, 3] or [out_c, in_c, 3, 3]
    std::vector<double> bias;   // [out_c]
    bool frozen = false;
};

struct DenseLayer {
    Tensor weights;             // [n_out, n_in]
    std::vector<double> bias;   // [n_out]
    Activation activation = Activation::ReLU;
    bool frozen = false;

    std::size_t n_out() const { return weights.shape[0]; }
    std::size_t n_in() const { return weights.shape[1]; }
};

namespace detail {

inline void dense_apply(const DenseLayer& l, const double* x, double* out) {
    const std::size_t no = l.n_out(), ni = l.n_in();
    const double* w = l.weights.data.data();
    for (std::size_t i = 0; i < no; ++i) {
        const double* row = w + i * ni;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::size_t j = 0;
        for (; j + 4 <= ni; j += 4) {
            s0 += row[j] * x[j];
            s1 += row[j + 1] * x[j + 1];
            s2 += row[j + 2] * x[j + 2];
            s3 += row[j + 3] * x[j + 3];
        }
        for (; j < ni; ++j) s0 += row[j] * x[j];
        double v = s0 + s1 + s2 + s3 + l.bias[i];
        out[i] = (l.activation == Activation::ReLU && v < 0.0) ? 0.0 : v;
    }
}

// Cross-correlation with zero padding, rank 1. in: [ci, n] -> out: [co, n].
inline void conv_apply_1d(const ConvLayer& l, const double* in, std::size_t n, double* out) {
    const std::size_t ci = l.in_channels, co = l.out_channels;
    const double* k = l.kernel.data.data();
    for (std::size_t oc = 0; oc < co; ++oc) {
        double* o = out + oc * n;
        for (std::size_t i = 0; i < n; ++i) o[i] = l.bias[oc];
        for (std::size_t ic = 0; ic < ci; ++ic) {
            const double* x = in + ic * n;
            const double k0 = k[(oc * ci + ic) * 3 + 0];
            const double k1 = k[(oc * ci + ic) * 3 + 1];
            const double k2 = k[(oc * ci + ic) * 3 + 2];
            o[0] += k1 * x[0] + (n > 1 ? k2 * x[1] : 0.0);
            for (std::size_t i = 1; i + 1 < n; ++i)
                o[i] += k0 * x[i - 1] + k1 * x[i] + k2 * x[i + 1];
            if (n > 1) o[n - 1] += k0 * x[n - 2] + k1 * x[n - 1];
        }
        for (std::size_t i = 0; i < n; ++i)
            if (o[i] < 0.0) o[i] = 0.0;
    }
}

// Cross-correlation with zero padding, rank 2. in: [ci, h, w] -> out: [co, h, w].
inline void conv_apply_2d(const ConvLayer& l, const double* in, std::size_t h, std::size_t w,
                          double* out) {
    const std::size_t ci = l.in_channels, co = l.out_channels;
    const double* ker = l.kernel.data.data();
    for (std::size_t oc = 0; oc < co; ++oc) {
        double* o = out + oc * h * w;
        for (std::size_t i = 0; i < h * w; ++i) o[i] = l.bias[oc];
        for (std::size_t ic = 0; ic < ci; ++ic) {
            const double* x = in + ic * h * w;
            const double* k = ker + (oc * ci + ic) * 9;
            for (std::size_t y = 0; y < h; ++y) {
                for (std::size_t ky = 0; ky < 3; ++ky) {
                    const std::size_t yy = y + ky;  // source row + 1
                    if (yy < 1 || yy > h) continue;
                    const double* xr = x + (yy - 1) * w;
                    const double* kr = k + ky * 3;
                    double* orow = o + y * w;
                    if (w > 0) orow[0] += kr[1] * xr[0] + (w > 1 ? kr[2] * xr[1] : 0.0);
                    for (std::size_t xcol = 1; xcol + 1 < w; ++xcol)
                        orow[xcol] +=
                            kr[0] * xr[xcol - 1] + kr[1] * xr[xcol] + kr[2] * xr[xcol + 1];
                    if (w > 1) orow[w - 1] += kr[0] * xr[w - 2] + kr[1] * xr[w - 1];
                }
            }
        }
        for (std::size_t i = 0; i < h * w; ++i)
            if (o[i] < 0.0) o[i] = 0.0;
    }
}

}  // namespace detail

/// Forward pass of one conv layer. The input must be [in_channels, spatial...].
inline Tensor conv_forward(const ConvLayer& layer, const Tensor& input) {
    if (input.rank() != layer.rank + 1)
        throw std::invalid_argument("conv_forward: input rank does not match layer rank");
    if (input.shape[0] != layer.in_channels)
        throw std::invalid_argument("conv_forward: channel count mismatch");
    std::vector<std::size_t> out_shape = input.shape;
    out_shape[0] = layer.out_channels;
    Tensor out(out_shape);
    if (layer.rank == 1)
        detail::conv_apply_1d(layer, input.data.data(), input.shape[1], out.data.data());
    else
        detail::conv_apply_2d(layer, input.data.data(), input.shape[1], input.shape[2],
                              out.data.data());
    return out;
}

/// The error-map network of one level: a conv stack on the restricted field,
/// flatten, concatenation of the uncertain parameters z, a fully-connected
/// stack, and a linear output head that maps back to the field size.
struct ErrorMapNetwork {
    std::vector<std::size_t> field_shape;  // [channels, n] or [channels, ny, nx]
    std::size_t z_dim = 0;
    std::size_t filters_first_layer = 4;

    std::vector<ConvLayer> conv_layers;
    std::vector<DenseLayer> fc_layers;  // hidden stack; may contain absorbed old heads
    DenseLayer output_layer;            // linear activation

    std::size_t rank() const { return field_shape.size() - 1; }
    std::size_t field_numel() const { return Tensor::numel_of(field_shape); }

    std::size_t flat_dim() const {
        std::size_t spatial = field_numel() / field_shape[0];
        std::size_t ch = conv_layers.empty() ? field_shape[0] : conv_layers.back().out_channels;
        return ch * spatial;
    }

    template <class F>
    void visit_blocks(F&& f) {
        for (auto& c : conv_layers) {
            f(c.kernel.data, c.kernel.shape, c.frozen, true);
            f(c.bias, std::vector<std::size_t>{c.bias.size()}, c.frozen, false);
        }
        for (auto& d : fc_layers) {
            f(d.weights.data, d.weights.shape, d.frozen, true);
            f(d.bias, std::vector<std::size_t>{d.bias.size()}, d.frozen, false);
        }
        f(output_layer.weights.data, output_layer.weights.shape, output_layer.frozen, true);
        f(output_layer.bias, std::vector<std::size_t>{output_layer.bias.size()},
          output_layer.frozen, false);
    }

    template <class F>
    void visit_blocks(F&& f) const {
        const_cast<ErrorMapNetwork*>(this)->visit_blocks(
            [&](std::vector<double>& v, const std::vector<std::size_t>& s, bool frozen,
                bool weight) { f(const_cast<const std::vector<double>&>(v), s, frozen, weight); });
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        visit_blocks([&](const std::vector<double>& v, const auto&, bool, bool) { n += v.size(); });
        return n;
    }

    std::size_t trainable_parameter_count() const {
        std::size_t n = 0;
        visit_blocks([&](const std::vector<double>& v, const auto&, bool frozen, bool) {
            if (!frozen) n += v.size();
        });
        return n;
    }

    /// Multiply-add count of one forward pass (deterministic cost model).
    double forward_flops() const {
        double f = 0.0;
        const double spatial = static_cast<double>(field_numel() / field_shape[0]);
        const double kernel = rank() == 1 ? 3.0 : 9.0;
        for (const auto& c : conv_layers)
            f += 2.0 * spatial * kernel * static_cast<double>(c.in_channels) *
                 static_cast<double>(c.out_channels);
        for (const auto& d : fc_layers)
            f += 2.0 * static_cast<double>(d.n_in()) * static_cast<double>(d.n_out());
        f += 2.0 * static_cast<double>(output_layer.n_in()) *
             static_cast<double>(output_layer.n_out());
        return f;
    }

    /// Forward flops of the part that is re-evaluated every epoch during
    /// training: the trainable tail when a frozen prefix exists, else all.
    double trainable_forward_flops() const {
        for (const auto& c : conv_layers)
            if (!c.frozen) return forward_flops();
        double f = 0.0;
        bool in_tail = false;
        for (const auto& d : fc_layers) {
            if (!d.frozen) in_tail = true;
            if (in_tail)
                f += 2.0 * static_cast<double>(d.n_in()) * static_cast<double>(d.n_out());
        }
        f += 2.0 * static_cast<double>(output_layer.n_in()) *
             static_cast<double>(output_layer.n_out());
        return f;
    }
};

namespace detail {

inline DenseLayer make_dense(std::size_t n_out, std::size_t n_in, Activation act, Rng& rng) {
    DenseLayer d;
    d.weights = Tensor({n_out, n_in});
    d.activation = act;
    // He-style scaling for ReLU, Xavier-style for linear heads.
    const double s = act == Activation::ReLU
                         ? std::sqrt(2.0 / static_cast<double>(n_in))
                         : std::sqrt(2.0 / static_cast<double>(n_in + n_out));
    for (double& w : d.weights.data) w = s * rng.normal();
    // Small random biases keep ReLU pre-activations away from the exact kink.
    d.bias.resize(n_out);
    for (double& b : d.bias) b = act == Activation::ReLU ? 0.01 * rng.normal() : 0.0;
    return d;
}

}  // namespace detail

/// Build a fresh network: n_cnn conv layers with filter counts doubling from
/// filters_first_layer, n_fc ReLU layers of width n_neurons, linear head.
inline ErrorMapNetwork make_error_map_network(const std::vector<std::size_t>& field_shape,
                                              std::size_t z_dim, std::size_t n_cnn,
                                              std::size_t n_fc, std::size_t n_neurons,
                                              std::size_t filters_first_layer,
                                              std::uint64_t seed) {
    if (field_shape.size() < 2 || field_shape.size() > 3)
        throw std::invalid_argument("make_error_map_network: field must be rank 1 or 2 + channels");
    ErrorMapNetwork net;
    net.field_shape = field_shape;
    net.z_dim = z_dim;
    net.filters_first_layer = filters_first_layer;
    const std::size_t rank = field_shape.size() - 1;
    const std::size_t kernel_numel = rank == 1 ? 3 : 9;

    Rng rng(seed);
    std::size_t ch = field_shape[0];
    for (std::size_t j = 0; j < n_cnn; ++j) {
        ConvLayer c;
        c.rank = rank;
        c.in_channels = ch;
        c.out_channels = filters_first_layer << j;
        std::vector<std::size_t> kshape = {c.out_channels, c.in_channels, 3};
        if (rank == 2) kshape.push_back(3);
        c.kernel = Tensor(kshape);
        const double s = std::sqrt(2.0 / static_cast<double>(c.in_channels * kernel_numel));
        for (double& w : c.kernel.data) w = s * rng.normal();
        c.bias.resize(c.out_channels);
        for (double& b : c.bias) b = 0.01 * rng.normal();
        net.conv_layers.push_back(std::move(c));
        ch = filters_first_layer << j;
    }

    std::size_t in_dim = net.flat_dim() + z_dim;
    for (std::size_t j = 0; j < n_fc; ++j) {
        net.fc_layers.push_back(detail::make_dense(n_neurons, in_dim, Activation::ReLU, rng));
        in_dim = n_neurons;
    }
    net.output_layer = detail::make_dense(net.field_numel(), in_dim, Activation::Linear, rng);
    return net;
}

/// Fold an affine z-normalization (z - lo) / (hi - lo) into the z columns of
/// the first dense layer, so the network consumes raw parameter values but
/// is conditioned as if z were rescaled to [0, 1]. Exact for the linear
/// pre-activation; typically applied once, right after construction.
inline void fold_z_normalization(ErrorMapNetwork& net,
                                 const std::vector<std::array<double, 2>>& domain) {
    if (net.z_dim == 0) return;
    if (domain.size() != net.z_dim)
        throw std::invalid_argument("fold_z_normalization: domain/z_dim mismatch");
    DenseLayer& first = net.fc_layers.empty() ? net.output_layer : net.fc_layers.front();
    const std::size_t flat = net.flat_dim();
    for (std::size_t i = 0; i < first.n_out(); ++i) {
        double* row = first.weights.data.data() + i * first.n_in();
        for (std::size_t d = 0; d < net.z_dim; ++d) {
            const double lo = domain[d][0], range = domain[d][1] - domain[d][0];
            double& w = row[flat + d];
            w /= range;
            first.bias[i] -= w * lo;
        }
    }
}

/// Mark every existing layer frozen; its parameters will not be trained and
/// contribute no gradient entries.
inline void freeze_all(ErrorMapNetwork& net) {
    for (auto& c : net.conv_layers) c.frozen = true;
    for (auto& d : net.fc_layers) d.frozen = true;
    net.output_layer.frozen = true;
}

/// Transfer-learning step: the current output head is kept in place (as a
/// linear intermediate layer), one new ReLU layer of width n_new is added,
/// and a fresh linear head is created. Only the two new layers are trainable
/// if freeze_all was applied first. The new head starts at zero so the
/// appended stage initially predicts a zero correction; gradients through
/// the new ReLU layer are still nonzero once training starts.
inline void append_fc_layer(ErrorMapNetwork& net, std::size_t n_new, std::uint64_t seed) {
    Rng rng(seed);
    const std::size_t prev_out = net.output_layer.n_out();
    net.fc_layers.push_back(std::move(net.output_layer));
    net.fc_layers.push_back(detail::make_dense(n_new, prev_out, Activation::ReLU, rng));
    net.output_layer = detail::make_dense(net.field_numel(), n_new, Activation::Linear, rng);
    std::fill(net.output_layer.weights.data.begin(), net.output_layer.weights.data.end(), 0.0);
    std::fill(net.output_layer.bias.begin(), net.output_layer.bias.end(), 0.0);
}

/// Activations of one forward pass, kept for the backward sweep.
struct ForwardCache {
    std::vector<Tensor> conv_act;                // [0] = input field, then per conv layer
    std::vector<std::vector<double>> fc_act;     // [0] = flatten + z, then per fc layer
    std::vector<double> out;                     // head output, flat
};

inline void network_forward_cached(const ErrorMapNetwork& net, const Tensor& field,
                                   const std::vector<double>& z, ForwardCache& cache) {
    if (field.shape != net.field_shape)
        throw std::invalid_argument("network_forward: field shape mismatch");
    if (z.size() != net.z_dim)
        throw std::invalid_argument("network_forward: z dimension mismatch");

    cache.conv_act.clear();
    cache.conv_act.reserve(net.conv_layers.size() + 1);
    cache.conv_act.push_back(field);
    for (const auto& c : net.conv_layers)
        cache.conv_act.push_back(conv_forward(c, cache.conv_act.back()));

    cache.fc_act.clear();
    cache.fc_act.reserve(net.fc_layers.size() + 1);
    std::vector<double> flat = cache.conv_act.back().data;  // row-major flatten
    flat.insert(flat.end(), z.begin(), z.end());
    cache.fc_act.push_back(std::move(flat));
    for (const auto& d : net.fc_layers) {
        std::vector<double> y(d.n_out());
        if (cache.fc_act.back().size() != d.n_in())
            throw std::invalid_argument("network_forward: fc layer input size mismatch");
        detail::dense_apply(d, cache.fc_act.back().data(), y.data());
        cache.fc_act.push_back(std::move(y));
    }
    cache.out.assign(net.output_layer.n_out(), 0.0);
    if (cache.fc_act.back().size() != net.output_layer.n_in())
        throw std::invalid_argument("network_forward: head input size mismatch");
    detail::dense_apply(net.output_layer, cache.fc_act.back().data(), cache.out.data());
}

/// Full forward pass; output reshaped to the field shape.
inline Tensor network_forward(const ErrorMapNetwork& net, const Tensor& field,
                              const std::vector<double>& z) {
    ForwardCache cache;
    network_forward_cached(net, field, z, cache);
    return Tensor(net.field_shape, std::move(cache.out));
}

/// Gradient of the cost with respect to every non-frozen parameter block,
/// in visit order (conv kernel/bias pairs, then fc, then head).
struct Gradients {
    std::vector<Tensor> blocks;
};

inline Gradients make_zero_gradients(const ErrorMapNetwork& net) {
    Gradients g;
    net.visit_blocks([&](const std::vector<double>& v, const std::vector<std::size_t>& s,
                         bool frozen, bool) {
        if (!frozen) g.blocks.push_back(Tensor(s, std::vector<double>(v.size(), 0.0)));
    });
    return g;
}

namespace detail {

// ReLU derivative mask from the post-activation value.
inline double act_mask(Activation a, double post) {
    return a == Activation::ReLU ? (post > 0.0 ? 1.0 : 0.0) : 1.0;
}

inline void dense_backward(const DenseLayer& l, const double* x, const double* gpre,
                           double* gw, double* gb, double* gx) {
    const std::size_t no = l.n_out(), ni = l.n_in();
    const double* w = l.weights.data.data();
    if (gx)
        for (std::size_t j = 0; j < ni; ++j) gx[j] = 0.0;
    for (std::size_t i = 0; i < no; ++i) {
        const double g = gpre[i];
        if (gb) gb[i] += g;
        const double* row = w + i * ni;
        double* grow = gw ? gw + i * ni : nullptr;
        if (grow && gx) {
            for (std::size_t j = 0; j < ni; ++j) {
                grow[j] += g * x[j];
                gx[j] += row[j] * g;
            }
        } else if (grow) {
            for (std::size_t j = 0; j < ni; ++j) grow[j] += g * x[j];
        } else if (gx) {
            for (std::size_t j = 0; j < ni; ++j) gx[j] += row[j] * g;
        }
    }
}

inline void conv_backward_1d(const ConvLayer& l, const double* in, std::size_t n,
                             const double* gpre, double* gk, double* gb, double* gin) {
    const std::size_t ci = l.in_channels, co = l.out_channels;
    const double* k = l.kernel.data.data();
    if (gin)
        for (std::size_t i = 0; i < ci * n; ++i) gin[i] = 0.0;
    for (std::size_t oc = 0; oc < co; ++oc) {
        const double* g = gpre + oc * n;
        if (gb) {
            double s = 0.0;
            for (std::size_t i = 0; i < n; ++i) s += g[i];
            gb[oc] += s;
        }
        for (std::size_t ic = 0; ic < ci; ++ic) {
            const double* x = in + ic * n;
            if (gk) {
                double s0 = 0.0, s1 = 0.0, s2 = 0.0;
                for (std::size_t i = 0; i < n; ++i) {
                    if (i >= 1) s0 += g[i] * x[i - 1];
                    s1 += g[i] * x[i];
                    if (i + 1 < n) s2 += g[i] * x[i + 1];
                }
                double* gkk = gk + (oc * ci + ic) * 3;
                gkk[0] += s0;
                gkk[1] += s1;
                gkk[2] += s2;
            }
            if (gin) {
                double* gi = gin + ic * n;
                const double k0 = k[(oc * ci + ic) * 3 + 0];
                const double k1 = k[(oc * ci + ic) * 3 + 1];
                const double k2 = k[(oc * ci + ic) * 3 + 2];
                for (std::size_t i = 0; i < n; ++i) {
                    // out index i touched input i-1, i, i+1 with k0, k1, k2
                    if (i >= 1) gi[i - 1] += k0 * g[i];
                    gi[i] += k1 * g[i];
                    if (i + 1 < n) gi[i + 1] += k2 * g[i];
                }
            }
        }
    }
}

inline void conv_backward_2d(const ConvLayer& l, const double* in, std::size_t h, std::size_t w,
                             const double* gpre, double* gk, double* gb, double* gin) {
    const std::size_t ci = l.in_channels, co = l.out_channels;
    const double* ker = l.kernel.data.data();
    if (gin)
        for (std::size_t i = 0; i < ci * h * w; ++i) gin[i] = 0.0;
    auto at = [w](std::size_t y, std::size_t x) { return y * w + x; };
    for (std::size_t oc = 0; oc < co; ++oc) {
        const double* g = gpre + oc * h * w;
        if (gb) {
            double s = 0.0;
            for (std::size_t i = 0; i < h * w; ++i) s += g[i];
            gb[oc] += s;
        }
        for (std::size_t ic = 0; ic < ci; ++ic) {
            const double* x = in + ic * h * w;
            const double* k = ker + (oc * ci + ic) * 9;
            double* gkk = gk ? gk + (oc * ci + ic) * 9 : nullptr;
            double* gi = gin ? gin + ic * h * w : nullptr;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t xc = 0; xc < w; ++xc) {
                    const double gv = g[at(y, xc)];
                    if (gv == 0.0) continue;
                    for (std::size_t ky = 0; ky < 3; ++ky) {
                        const std::size_t yy = y + ky;
                        if (yy < 1 || yy > h) continue;
                        for (std::size_t kx = 0; kx < 3; ++kx) {
                            const std::size_t xx = xc + kx;
                            if (xx < 1 || xx > w) continue;
                            const std::size_t src = at(yy - 1, xx - 1);
                            if (gkk) gkk[ky * 3 + kx] += gv * x[src];
                            if (gi) gi[src] += k[ky * 3 + kx] * gv;
                        }
                    }
                }
        }
    }
}

}  // namespace detail

/// Accumulate dLoss/dparams for one sample into g (aligned with the
/// non-frozen visit order), given dLoss/doutput. Backpropagation stops at
/// the deepest frozen prefix since no gradient is needed below it.
inline void network_backward_accumulate(const ErrorMapNetwork& net, const ForwardCache& cache,
                                        const std::vector<double>& grad_out, Gradients& g) {
    const std::size_t n_conv = net.conv_layers.size();
    const std::size_t n_fc = net.fc_layers.size();

    // Earliest layer index (conv counted first) that holds trainable params.
    std::ptrdiff_t first_trainable = -1;
    {
        std::ptrdiff_t idx = 0;
        for (const auto& c : net.conv_layers) {
            if (!c.frozen && first_trainable < 0) first_trainable = idx;
            ++idx;
        }
        for (const auto& d : net.fc_layers) {
            if (!d.frozen && first_trainable < 0) first_trainable = idx;
            ++idx;
        }
        if (!net.output_layer.frozen && first_trainable < 0) first_trainable = idx;
        if (first_trainable < 0) return;  // fully frozen network
    }

    // Map each non-frozen block to its slot in g.
    std::vector<double*> slots;
    slots.reserve(g.blocks.size());
    for (auto& b : g.blocks) slots.push_back(b.data.data());
    std::size_t slot = 0;
    auto next_slot = [&]() { return slots[slot++]; };

    std::vector<double*> conv_gk(n_conv, nullptr), conv_gb(n_conv, nullptr);
    std::vector<double*> fc_gw(n_fc, nullptr), fc_gb(n_fc, nullptr);
    double* head_gw = nullptr;
    double* head_gb = nullptr;
    for (std::size_t j = 0; j < n_conv; ++j)
        if (!net.conv_layers[j].frozen) {
            conv_gk[j] = next_slot();
            conv_gb[j] = next_slot();
        }
    for (std::size_t j = 0; j < n_fc; ++j)
        if (!net.fc_layers[j].frozen) {
            fc_gw[j] = next_slot();
            fc_gb[j] = next_slot();
        }
    if (!net.output_layer.frozen) {
        head_gw = next_slot();
        head_gb = next_slot();
    }

    // Head (linear): grad_out is already dLoss/dpre.
    std::vector<double> gcur;
    {
        const bool need_gx = first_trainable < static_cast<std::ptrdiff_t>(n_conv + n_fc);
        gcur.assign(need_gx ? net.output_layer.n_in() : 0, 0.0);
        detail::dense_backward(net.output_layer, cache.fc_act.back().data(), grad_out.data(),
                               head_gw, head_gb, need_gx ? gcur.data() : nullptr);
        if (!need_gx) return;
    }

    // Dense stack, backwards.
    for (std::size_t jj = n_fc; jj-- > 0;) {
        const auto& d = net.fc_layers[jj];
        const auto& post = cache.fc_act[jj + 1];
        std::vector<double> gpre(d.n_out());
        for (std::size_t i = 0; i < d.n_out(); ++i)
            gpre[i] = gcur[i] * detail::act_mask(d.activation, post[i]);
        const bool need_gx = first_trainable < static_cast<std::ptrdiff_t>(n_conv + jj);
        std::vector<double> gx(need_gx ? d.n_in() : 0);
        detail::dense_backward(d, cache.fc_act[jj].data(), gpre.data(), fc_gw[jj], fc_gb[jj],
                               need_gx ? gx.data() : nullptr);
        if (!need_gx) return;
        gcur = std::move(gx);
    }

    // Split off z: only the flat conv part continues backwards.
    gcur.resize(gcur.size() - net.z_dim);

    for (std::size_t jj = n_conv; jj-- > 0;) {
        const auto& c = net.conv_layers[jj];
        const auto& post = cache.conv_act[jj + 1];
        std::vector<double> gpre(post.numel());
        for (std::size_t i = 0; i < post.numel(); ++i)
            gpre[i] = post.data[i] > 0.0 ? gcur[i] : 0.0;
        const bool need_gx = first_trainable < static_cast<std::ptrdiff_t>(jj);
        std::vector<double> gx(need_gx ? cache.conv_act[jj].numel() : 0);
        const auto& in = cache.conv_act[jj];
        if (c.rank == 1)
            detail::conv_backward_1d(c, in.data.data(), in.shape[1], gpre.data(), conv_gk[jj],
                                     conv_gb[jj], need_gx ? gx.data() : nullptr);
        else
            detail::conv_backward_2d(c, in.data.data(), in.shape[1], in.shape[2], gpre.data(),
                                     conv_gk[jj], conv_gb[jj], need_gx ? gx.data() : nullptr);
        if (!need_gx) return;
        gcur = std::move(gx);
    }
}

}  // namespace mlnn
