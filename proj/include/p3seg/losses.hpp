#pragma once

#include "p3seg/mixer.hpp"
#include "p3seg/tensor.hpp"

namespace p3seg {

// Per-pixel disagreement weight in [0,1]; nonzero only on the band mask.
struct DifficultyMap {
    int height = 0;
    int width = 0;
    std::vector<double> mu;

    DifficultyMap() = default;
    DifficultyMap(int h, int w)
        : height(h), width(w), mu(static_cast<std::size_t>(h) * w, 0.0) {}

    double& at(int y, int x) { return mu[static_cast<std::size_t>(y) * width + x]; }
    double at(int y, int x) const { return mu[static_cast<std::size_t>(y) * width + x]; }
};

// A scalar loss plus its analytic gradient with respect to the logits the
// probabilities came from.
struct LossValue {
    double value = 0.0;
    Tensor grad; // d value / d logits
};

// Stage-1 composite carries gradients for both branches.
struct Stage1Loss {
    double value = 0.0;
    Tensor grad_sup;
    Tensor grad_unsup;
};

// Numerically stabilized per-pixel softmax over the channel axis.
// Output sums to 1 per pixel; throws numeric_error on NaN input.
Tensor softmax_probs(const Tensor& logits);

// Chain rule through the per-pixel softmax Jacobian:
// g_z = p * (g_p - <g_p, p>) at each pixel.
Tensor softmax_backward(const Tensor& probs, const Tensor& grad_probs);

// Mean over pixels of -log p(true class). The gradient assumes
// probs = softmax_probs(logits) and uses the softmax-CE composite.
LossValue cross_entropy(const Tensor& probs, const LabelMap& labels);

// 1 - (1/n) sum_l (2*sum p_l y_l + s) / (sum p_l + sum y_l + s), s = 1e-5.
LossValue dice_loss(const Tensor& probs, const LabelMap& labels);

// mu = 1 - (agreements of pred vs labels in the clipped 5x5 window) /
// (in-bounds window size), on band pixels; 0 elsewhere.
DifficultyMap difficulty_map(const LabelMap& pred, const LabelMap& labels, const Mask& band);

// Weighted variants: each pixel weighted by (1 + mu), the weight
// treated as a constant by the gradients. The weighted dice carries the
// weight in the numerator only, so its value is the literal formula and is
// not clamped at zero.
LossValue weighted_ce(const Tensor& probs, const LabelMap& labels, const DifficultyMap& mu);
LossValue weighted_dice(const Tensor& probs, const LabelMap& labels, const DifficultyMap& mu);

// Second-stage composite: (wCE + wDICE) restricted to band pixels plus
// (CE + Dice) restricted to the complement, each normalized over its own
// region; mu comes from the argmax prediction of `logits` against y_mix.
LossValue stage2_loss(const Tensor& logits, const LabelMap& y_mix, const MixPlan& plan);

// Pre-warm composite: (CE + Dice)(sup) + lambda * (CE + Dice)(unsup).
Stage1Loss stage1_loss(const Tensor& logits_sup, const LabelMap& y_sup,
                       const Tensor& logits_unsup, const LabelMap& y_pseudo, double lambda);

// Per-pixel argmax with ties broken toward the lower class index.
LabelMap argmax_labels(const Tensor& logits);

} // namespace p3seg
