#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "p3seg/rng.hpp"
#include "p3seg/tensor.hpp"

namespace p3seg {

// Desk-scale encoder-decoder: one 3x3 conv + ReLU per level, 2x2 max-pool
// down / nearest-neighbor up, one skip connection per decoded level, and a
// 1x1 classification head. widths.size() is the level count.
struct NetworkSpec {
    int in_channels = 1;
    int class_count = 4;
    std::vector<int> widths = {8, 16};

    int levels() const { return static_cast<int>(widths.size()); }
    bool operator==(const NetworkSpec&) const = default;
};

struct LayerDesc {
    enum class Kind { conv3x3, conv1x1 };
    Kind kind;
    int in_ch = 0;
    int out_ch = 0;
    std::size_t w_off = 0;
    std::size_t b_off = 0;

    std::size_t weight_count() const {
        const std::size_t k = kind == Kind::conv3x3 ? 9 : 1;
        return static_cast<std::size_t>(in_ch) * out_ch * k;
    }
};

// Flat parameter vector with layout metadata. `version` is bumped by every
// mutating update so forward caches can detect staleness.
struct ModelParams {
    NetworkSpec spec;
    std::vector<LayerDesc> layers; // encoder convs, decoder convs (deep to shallow), head
    std::vector<double> values;
    std::uint64_t version = 0;

    std::size_t size() const { return values.size(); }
    std::span<double> weights(std::size_t layer) {
        return {values.data() + layers[layer].w_off, layers[layer].weight_count()};
    }
    std::span<double> bias(std::size_t layer) {
        return {values.data() + layers[layer].b_off,
                static_cast<std::size_t>(layers[layer].out_ch)};
    }
};

// Fan-in-scaled random init (weights ~ N(0,1)/sqrt(fan_in), biases zero).
ModelParams build_model(const NetworkSpec& spec, Rng& rng);

// Activations retained for the backward pass.
struct ForwardCache {
    Tensor input;
    std::vector<Tensor> enc_pre, enc_act;
    std::vector<Tensor> pooled;              // input to encoder conv i (i >= 1)
    std::vector<std::vector<int>> pool_arg;  // argmax source index per pooled cell
    std::vector<Tensor> dec_in, dec_pre, dec_act; // indexed by decoder level j
    std::uint64_t params_version = 0;
};

// Deterministic forward pass; logits are class_count x H x W. Requires H and
// W divisible by 2^(levels-1). Pass a cache to enable backward().
Tensor forward(const ModelParams& params, const Tensor& image, ForwardCache* cache = nullptr);

// Full parameter gradient for the loss whose logit-gradient is given.
// Throws contract_error when the cache does not match the params version.
std::vector<double> backward(const ModelParams& params, const ForwardCache& cache,
                             const Tensor& grad_logits);

struct AdamState {
    std::vector<double> m, v;
    long t = 0;
};

// Adam (beta1 0.9, beta2 0.999, eps 1e-8) with decoupled weight decay.
void adam_step(ModelParams& params, std::span<const double> grad, AdamState& state,
               double lr, double weight_decay);

// theta_T <- delta * theta_T + (1 - delta) * theta_S, elementwise.
void ema_update(ModelParams& teacher, const ModelParams& student, double delta);

// Binary tasks: foreground where p(fg) > 0.5 (strict). Multi-class: argmax
// with ties toward the lower class index.
LabelMap pseudo_label(const Tensor& logits, int class_count);

// Checkpoint = <prefix>.bin (layout + raw little-endian doubles) plus
// <prefix>.json sidecar carrying the spec, seed, and iteration.
void save_checkpoint(const ModelParams& params, const std::string& prefix,
                     std::uint64_t seed, long iter);
ModelParams load_checkpoint(const std::string& prefix, std::uint64_t* seed = nullptr,
                            long* iter = nullptr);

} // namespace p3seg
