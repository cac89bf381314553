#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "mlnn/network.hpp"

namespace mlnn {

/// One training/validation pair: restricted input field, parameter point z,
/// and the target correction field.
struct Sample {
    Tensor field;
    std::vector<double> z;
    Tensor target;
};

using Batch = std::vector<Sample>;

/// Sum over the batch of squared L2 output error, plus lambda * sum of
/// squared non-frozen weights (biases carry no penalty).
inline double loss(const ErrorMapNetwork& net, const Batch& batch, double lambda) {
    if (batch.empty()) throw std::invalid_argument("loss: empty batch");
    double total = 0.0;
    ForwardCache cache;
    for (const auto& s : batch) {
        network_forward_cached(net, s.field, s.z, cache);
        if (cache.out.size() != s.target.numel())
            throw std::invalid_argument("loss: target size does not match network output");
        double e = 0.0;
        for (std::size_t i = 0; i < cache.out.size(); ++i) {
            const double d = cache.out[i] - s.target.data[i];
            e += d * d;
        }
        total += e;
    }
    if (lambda != 0.0) {
        double w2 = 0.0;
        net.visit_blocks([&](const std::vector<double>& v, const auto&, bool frozen, bool weight) {
            if (!frozen && weight)
                for (double w : v) w2 += w * w;
        });
        total += lambda * w2;
    }
    return total;
}

/// Exact reverse-mode gradient of loss() w.r.t. every non-frozen block.
inline Gradients gradients(const ErrorMapNetwork& net, const Batch& batch, double lambda) {
    if (batch.empty()) throw std::invalid_argument("gradients: empty batch");
    Gradients g = make_zero_gradients(net);
    ForwardCache cache;
    std::vector<double> gout;
    for (const auto& s : batch) {
        network_forward_cached(net, s.field, s.z, cache);
        if (cache.out.size() != s.target.numel())
            throw std::invalid_argument("gradients: target size does not match network output");
        gout.resize(cache.out.size());
        for (std::size_t i = 0; i < cache.out.size(); ++i)
            gout[i] = 2.0 * (cache.out[i] - s.target.data[i]);
        network_backward_accumulate(net, cache, gout, g);
    }
    if (lambda != 0.0) {
        std::size_t slot = 0;
        net.visit_blocks([&](const std::vector<double>& v, const auto&, bool frozen, bool weight) {
            if (frozen) return;
            if (weight) {
                double* gb = g.blocks[slot].data.data();
                for (std::size_t i = 0; i < v.size(); ++i) gb[i] += 2.0 * lambda * v[i];
            }
            ++slot;
        });
    }
    return g;
}

struct TrainConfig {
    double lambda = 0.0;
    std::size_t max_epochs = 20000;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;
    std::size_t plateau_patience = 500;
};

struct TrainResult {
    double validation_error = 0.0;    // mean over V of per-point MSE
    double validation_raw_sum = 0.0;  // plain sum of squared L2 errors over V
    std::size_t epochs = 0;
    double final_train_loss = 0.0;
};

/// Normalized validation error: (1/|V|) * sum ||P(u)-target||^2 / N_field.
inline double validation_error(const ErrorMapNetwork& net, const Batch& V, double* raw_sum = nullptr) {
    if (V.empty()) throw std::invalid_argument("validation_error: empty set");
    double sum = 0.0;
    ForwardCache cache;
    std::size_t n_field = 1;
    for (const auto& s : V) {
        network_forward_cached(net, s.field, s.z, cache);
        n_field = cache.out.size();
        double e = 0.0;
        for (std::size_t i = 0; i < cache.out.size(); ++i) {
            const double d = cache.out[i] - s.target.data[i];
            e += d * d;
        }
        sum += e;
    }
    if (raw_sum) *raw_sum = sum;
    return sum / static_cast<double>(V.size()) / static_cast<double>(n_field);
}

namespace detail {

// Single pass: loss value plus gradient accumulation into g (zeroed here).
inline double loss_and_gradients(const ErrorMapNetwork& net, const Batch& batch, double lambda,
                                 Gradients& g, ForwardCache& cache) {
    for (auto& b : g.blocks) std::fill(b.data.begin(), b.data.end(), 0.0);
    double total = 0.0;
    std::vector<double> gout;
    for (const auto& s : batch) {
        network_forward_cached(net, s.field, s.z, cache);
        gout.resize(cache.out.size());
        double e = 0.0;
        for (std::size_t i = 0; i < cache.out.size(); ++i) {
            const double d = cache.out[i] - s.target.data[i];
            e += d * d;
            gout[i] = 2.0 * d;
        }
        total += e;
        network_backward_accumulate(net, cache, gout, g);
    }
    if (lambda != 0.0) {
        double w2 = 0.0;
        std::size_t slot = 0;
        net.visit_blocks([&](const std::vector<double>& v, const auto&, bool frozen, bool weight) {
            if (frozen) return;
            if (weight) {
                double* gb = g.blocks[slot].data.data();
                for (std::size_t i = 0; i < v.size(); ++i) {
                    gb[i] += 2.0 * lambda * v[i];
                    w2 += v[i] * v[i];
                }
            }
            ++slot;
        });
        total += lambda * w2;
    }
    return total;
}

// Full-batch Adam with plateau stopping. Learning rate halves after repeated
// stagnation and the best-loss parameters are restored at the end.
inline TrainResult train_core(ErrorMapNetwork& net, const Batch& T, const Batch& V,
                              const TrainConfig& cfg) {
    constexpr double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
    constexpr double improvement_tol = 1e-12;

    std::vector<std::vector<double>*> params;
    net.visit_blocks([&](std::vector<double>& v, const auto&, bool frozen, bool) {
        if (!frozen) params.push_back(&v);
    });

    TrainResult res;
    if (params.empty() || cfg.max_epochs == 0) {
        res.final_train_loss = loss(net, T, cfg.lambda);
        res.validation_error = validation_error(net, V, &res.validation_raw_sum);
        return res;
    }

    std::vector<std::vector<double>> m(params.size()), v2(params.size());
    for (std::size_t b = 0; b < params.size(); ++b) {
        m[b].assign(params[b]->size(), 0.0);
        v2[b].assign(params[b]->size(), 0.0);
    }

    std::vector<std::vector<double>> best(params.size());
    double best_loss = std::numeric_limits<double>::infinity();
    std::size_t since_improvement = 0;
    double lr = cfg.learning_rate;
    const double lr_floor = cfg.learning_rate * 1e-3;
    const std::size_t lr_patience = std::max<std::size_t>(50, cfg.plateau_patience / 5);

    Gradients g = make_zero_gradients(net);
    ForwardCache cache;
    double pow_b1 = 1.0, pow_b2 = 1.0;
    std::size_t epoch = 0;
    for (; epoch < cfg.max_epochs; ++epoch) {
        const double cur = loss_and_gradients(net, T, cfg.lambda, g, cache);
        if (!std::isfinite(cur))
            throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) +
                                     " (learning rate too large?)");
        if (cur < best_loss - improvement_tol) {
            best_loss = cur;
            for (std::size_t b = 0; b < params.size(); ++b) best[b] = *params[b];
            since_improvement = 0;
        } else {
            ++since_improvement;
            if (since_improvement >= cfg.plateau_patience) break;
            if (since_improvement % lr_patience == 0 && lr > lr_floor) lr *= 0.5;
        }

        pow_b1 *= beta1;
        pow_b2 *= beta2;
        const double corr1 = 1.0 / (1.0 - pow_b1);
        const double corr2 = 1.0 / (1.0 - pow_b2);
        for (std::size_t b = 0; b < params.size(); ++b) {
            double* p = params[b]->data();
            const double* gb = g.blocks[b].data.data();
            double* mb = m[b].data();
            double* vb = v2[b].data();
            for (std::size_t i = 0; i < params[b]->size(); ++i) {
                mb[i] = beta1 * mb[i] + (1.0 - beta1) * gb[i];
                vb[i] = beta2 * vb[i] + (1.0 - beta2) * gb[i] * gb[i];
                p[i] -= lr * (mb[i] * corr1) / (std::sqrt(vb[i] * corr2) + adam_eps);
            }
        }
    }

    // Keep the best parameters seen (the final step may have overshot).
    const double last = loss(net, T, cfg.lambda);
    if (std::isfinite(last) && last < best_loss - improvement_tol) {
        best_loss = last;
    } else if (!best.empty() && !best[0].empty()) {
        for (std::size_t b = 0; b < params.size(); ++b) *params[b] = best[b];
    }

    res.epochs = epoch;
    res.final_train_loss = best_loss;
    res.validation_error = validation_error(net, V, &res.validation_raw_sum);
    return res;
}

// Number of leading frozen fc layers usable as a fixed prefix; requires all
// conv layers frozen. Returns the count, or SIZE_MAX if no prefix applies.
inline std::size_t frozen_fc_prefix(const ErrorMapNetwork& net) {
    for (const auto& c : net.conv_layers)
        if (!c.frozen) return static_cast<std::size_t>(-1);
    std::size_t k = 0;
    while (k < net.fc_layers.size() && net.fc_layers[k].frozen) ++k;
    if (net.conv_layers.empty() && k == 0) return static_cast<std::size_t>(-1);
    return k;
}

}  // namespace detail

namespace detail {

// Dispatch to the generic loop, or the cached-prefix loop for transfer nets.
inline TrainResult train_dispatch(ErrorMapNetwork& net, const Batch& T, const Batch& V,
                                  const TrainConfig& cfg) {
    const std::size_t prefix = frozen_fc_prefix(net);
    if (prefix == static_cast<std::size_t>(-1) || net.trainable_parameter_count() == 0)
        return train_core(net, T, V, cfg);

    ErrorMapNetwork tail;
    tail.z_dim = 0;
    tail.filters_first_layer = net.filters_first_layer;
    for (std::size_t j = prefix; j < net.fc_layers.size(); ++j)
        tail.fc_layers.push_back(net.fc_layers[j]);
    tail.output_layer = net.output_layer;
    const std::size_t tail_in =
        prefix == 0 ? net.flat_dim() + net.z_dim : net.fc_layers[prefix - 1].n_out();
    tail.field_shape = {1, tail_in};

    auto map_batch = [&](const Batch& in) {
        Batch out;
        out.reserve(in.size());
        ForwardCache cache;
        for (const auto& s : in) {
            network_forward_cached(net, s.field, s.z, cache);  // fills prefix activations
            Sample t;
            t.field = Tensor({1, tail_in}, cache.fc_act[prefix]);
            t.target = s.target;
            out.push_back(std::move(t));
        }
        return out;
    };
    const Batch Tt = map_batch(T);
    const Batch Vt = map_batch(V);
    TrainResult res = train_core(tail, Tt, Vt, cfg);
    for (std::size_t j = prefix; j < net.fc_layers.size(); ++j)
        net.fc_layers[j] = tail.fc_layers[j - prefix];
    net.output_layer = tail.output_layer;
    return res;
}

}  // namespace detail

/// Train with full-batch Adam until max_epochs or a training-loss plateau,
/// then report the normalized validation error. Two internal optimizations
/// keep the public contract intact: frozen-prefix activations are cached once
/// per sample (transfer nets), and the optimization runs on targets rescaled
/// to order one, with the scale folded back into the linear head afterwards.
inline TrainResult train(ErrorMapNetwork& net, const Batch& T, const Batch& V,
                         const TrainConfig& cfg) {
    if (T.empty() || V.empty()) throw std::invalid_argument("train: empty dataset");

    double scale = 0.0;
    for (const auto& s : T) scale = std::max(scale, rms_norm(s.target.data));
    const bool rescale = net.output_layer.frozen == false && scale > 1e-300 &&
                         (scale < 0.1 || scale > 10.0);
    if (!rescale) return detail::train_dispatch(net, T, V, cfg);

    const double inv = 1.0 / scale;
    Batch Ts = T, Vs = V;
    for (auto& s : Ts)
        for (double& v : s.target.data) v *= inv;
    for (auto& s : Vs)
        for (double& v : s.target.data) v *= inv;
    for (double& w : net.output_layer.weights.data) w *= inv;
    for (double& b : net.output_layer.bias) b *= inv;

    TrainResult res = detail::train_dispatch(net, Ts, Vs, cfg);

    for (double& w : net.output_layer.weights.data) w *= scale;
    for (double& b : net.output_layer.bias) b *= scale;
    res.validation_error = validation_error(net, V, &res.validation_raw_sum);
    res.final_train_loss = loss(net, T, cfg.lambda);
    return res;
}

}  // namespace mlnn
