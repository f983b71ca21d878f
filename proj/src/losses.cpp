#include "p3seg/losses.hpp"

#include <algorithm>
#include <cmath>

namespace p3seg {

namespace {

constexpr double kDiceSmooth = 1e-5;
constexpr double kLogFloor = 1e-12;

void check_labels(const Tensor& probs, const LabelMap& labels, const char* where) {
    if (probs.height != labels.height || probs.width != labels.width)
        throw dimension_error(std::string(where) + ": probs/labels shape mismatch");
    for (int v : labels.data)
        if (v < 0 || v >= probs.channels)
            throw dimension_error(std::string(where) + ": label index out of range");
}

// Mean over active pixels of -(weight) * log p(true class); gradient (if
// requested) accumulated directly with respect to logits via the softmax-CE
// composite: weight * (p - onehot) / |active|.
double region_ce(const Tensor& probs, const LabelMap& labels, const Mask* region,
                 const DifficultyMap* mu, Tensor* grad_logits) {
    const int n = probs.channels, H = probs.height, W = probs.width;

    long active = 0;
    if (region) {
        for (auto v : region->data) active += v;
    } else {
        active = static_cast<long>(H) * W;
    }
    if (active == 0) return 0.0;

    const double inv = 1.0 / static_cast<double>(active);
    double sum = 0.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (region && !region->at(y, x)) continue;
            const double w = mu ? 1.0 + mu->at(y, x) : 1.0;
            const int t = labels.at(y, x);
            sum += -w * std::log(std::max(probs.at(t, y, x), kLogFloor));
            if (grad_logits) {
                for (int c = 0; c < n; ++c) {
                    const double onehot = (c == t) ? 1.0 : 0.0;
                    grad_logits->at(c, y, x) += w * (probs.at(c, y, x) - onehot) * inv;
                }
            }
        }
    return sum * inv;
}

// 1 - (1/n) sum_l (2*I_l + s)/(U_l + s) over the active pixels, with
// I_l = sum w*p*y (weight in the numerator only) and U_l = sum (p + y).
// Gradient accumulated with respect to PROBS; the caller chains softmax.
double region_dice(const Tensor& probs, const LabelMap& labels, const Mask* region,
                   const DifficultyMap* mu, Tensor* grad_probs) {
    const int n = probs.channels, H = probs.height, W = probs.width;

    std::vector<double> inter(n, 0.0), uni(n, 0.0);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (region && !region->at(y, x)) continue;
            const double w = mu ? 1.0 + mu->at(y, x) : 1.0;
            const int t = labels.at(y, x);
            for (int c = 0; c < n; ++c) {
                const double p = probs.at(c, y, x);
                const double yv = (c == t) ? 1.0 : 0.0;
                inter[c] += w * p * yv;
                uni[c] += p + yv;
            }
        }

    double mean_term = 0.0;
    for (int c = 0; c < n; ++c)
        mean_term += (2.0 * inter[c] + kDiceSmooth) / (uni[c] + kDiceSmooth);
    mean_term /= n;

    if (grad_probs) {
        for (int c = 0; c < n; ++c) {
            const double den = uni[c] + kDiceSmooth;
            const double num = 2.0 * inter[c] + kDiceSmooth;
            for (int y = 0; y < H; ++y)
                for (int x = 0; x < W; ++x) {
                    if (region && !region->at(y, x)) continue;
                    const double w = mu ? 1.0 + mu->at(y, x) : 1.0;
                    const double yv = (labels.at(y, x) == c) ? 1.0 : 0.0;
                    // d/dp of -(1/n)*(2I+s)/(U+s)
                    grad_probs->at(c, y, x) +=
                        -(2.0 * w * yv * den - num) / (den * den * n);
                }
        }
    }
    return 1.0 - mean_term;
}

} // namespace

Tensor softmax_probs(const Tensor& logits) {
    const int n = logits.channels, H = logits.height, W = logits.width;
    Tensor probs(n, H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double m = logits.at(0, y, x);
            for (int c = 1; c < n; ++c) m = std::max(m, logits.at(c, y, x));
            if (std::isnan(m)) throw numeric_error("softmax_probs: NaN logits");
            double sum = 0.0;
            for (int c = 0; c < n; ++c) {
                const double e = std::exp(logits.at(c, y, x) - m);
                probs.at(c, y, x) = e;
                sum += e;
            }
            for (int c = 0; c < n; ++c) probs.at(c, y, x) /= sum;
        }
    return probs;
}

Tensor softmax_backward(const Tensor& probs, const Tensor& grad_probs) {
    require_same_shape(probs, grad_probs, "softmax_backward");
    const int n = probs.channels, H = probs.height, W = probs.width;
    Tensor out(n, H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            double dot = 0.0;
            for (int c = 0; c < n; ++c) dot += grad_probs.at(c, y, x) * probs.at(c, y, x);
            for (int c = 0; c < n; ++c)
                out.at(c, y, x) = probs.at(c, y, x) * (grad_probs.at(c, y, x) - dot);
        }
    return out;
}

LossValue cross_entropy(const Tensor& probs, const LabelMap& labels) {
    check_labels(probs, labels, "cross_entropy");
    LossValue lv;
    lv.grad = Tensor(probs.channels, probs.height, probs.width);
    lv.value = region_ce(probs, labels, nullptr, nullptr, &lv.grad);
    return lv;
}

LossValue dice_loss(const Tensor& probs, const LabelMap& labels) {
    check_labels(probs, labels, "dice_loss");
    LossValue lv;
    Tensor gp(probs.channels, probs.height, probs.width);
    lv.value = region_dice(probs, labels, nullptr, nullptr, &gp);
    lv.grad = softmax_backward(probs, gp);
    return lv;
}

DifficultyMap difficulty_map(const LabelMap& pred, const LabelMap& labels, const Mask& band) {
    if (!pred.same_shape(labels))
        throw dimension_error("difficulty_map: pred/labels shape mismatch");
    if (pred.height != band.height || pred.width != band.width)
        throw dimension_error("difficulty_map: band shape mismatch");

    const int H = pred.height, W = pred.width;
    DifficultyMap dm(H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!band.at(y, x)) continue;
            int agree = 0, total = 0;
            for (int dy = -2; dy <= 2; ++dy)
                for (int dx = -2; dx <= 2; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= H || xx < 0 || xx >= W) continue;
                    ++total;
                    if (pred.at(yy, xx) == labels.at(yy, xx)) ++agree;
                }
            dm.at(y, x) = 1.0 - static_cast<double>(agree) / total;
        }
    return dm;
}

LossValue weighted_ce(const Tensor& probs, const LabelMap& labels, const DifficultyMap& mu) {
    check_labels(probs, labels, "weighted_ce");
    LossValue lv;
    lv.grad = Tensor(probs.channels, probs.height, probs.width);
    lv.value = region_ce(probs, labels, nullptr, &mu, &lv.grad);
    return lv;
}

LossValue weighted_dice(const Tensor& probs, const LabelMap& labels, const DifficultyMap& mu) {
    check_labels(probs, labels, "weighted_dice");
    LossValue lv;
    Tensor gp(probs.channels, probs.height, probs.width);
    lv.value = region_dice(probs, labels, nullptr, &mu, &gp);
    lv.grad = softmax_backward(probs, gp);
    return lv;
}

LabelMap argmax_labels(const Tensor& logits) {
    const int n = logits.channels, H = logits.height, W = logits.width;
    LabelMap out(H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            int best = 0;
            double bv = logits.at(0, y, x);
            for (int c = 1; c < n; ++c)
                if (logits.at(c, y, x) > bv) { // strict: ties keep the lower index
                    bv = logits.at(c, y, x);
                    best = c;
                }
            out.at(y, x) = best;
        }
    return out;
}

LossValue stage2_loss(const Tensor& logits, const LabelMap& y_mix, const MixPlan& plan) {
    const Mask& band = plan.band_mask;
    if (band.height != logits.height || band.width != logits.width)
        throw dimension_error("stage2_loss: band mask missing or wrong shape");

    const Tensor probs = softmax_probs(logits);
    check_labels(probs, y_mix, "stage2_loss");

    const LabelMap pred = argmax_labels(logits);
    const DifficultyMap mu = difficulty_map(pred, y_mix, band);

    Mask complement(band.height, band.width);
    for (std::size_t i = 0; i < band.data.size(); ++i)
        complement.data[i] = band.data[i] ? 0 : 1;

    LossValue lv;
    lv.grad = Tensor(probs.channels, probs.height, probs.width);
    Tensor gp(probs.channels, probs.height, probs.width);

    lv.value += region_ce(probs, y_mix, &band, &mu, &lv.grad);         // wCE on M_l
    lv.value += region_dice(probs, y_mix, &band, &mu, &gp);            // wDICE on M_l
    lv.value += region_ce(probs, y_mix, &complement, nullptr, &lv.grad); // CE elsewhere
    lv.value += region_dice(probs, y_mix, &complement, nullptr, &gp);    // Dice elsewhere

    const Tensor gz = softmax_backward(probs, gp);
    for (std::size_t i = 0; i < lv.grad.data.size(); ++i) lv.grad.data[i] += gz.data[i];
    return lv;
}

Stage1Loss stage1_loss(const Tensor& logits_sup, const LabelMap& y_sup,
                       const Tensor& logits_unsup, const LabelMap& y_pseudo, double lambda) {
    if (lambda < 0.0) throw contract_error("stage1_loss: lambda must be nonnegative");

    const Tensor probs_s = softmax_probs(logits_sup);
    const Tensor probs_u = softmax_probs(logits_unsup);
    check_labels(probs_s, y_sup, "stage1_loss(sup)");
    check_labels(probs_u, y_pseudo, "stage1_loss(unsup)");

    Stage1Loss out;
    out.grad_sup = Tensor(probs_s.channels, probs_s.height, probs_s.width);
    out.grad_unsup = Tensor(probs_u.channels, probs_u.height, probs_u.width);

    Tensor gp_s(probs_s.channels, probs_s.height, probs_s.width);
    double v = region_ce(probs_s, y_sup, nullptr, nullptr, &out.grad_sup);
    v += region_dice(probs_s, y_sup, nullptr, nullptr, &gp_s);
    const Tensor gz_s = softmax_backward(probs_s, gp_s);
    for (std::size_t i = 0; i < out.grad_sup.data.size(); ++i)
        out.grad_sup.data[i] += gz_s.data[i];

    Tensor gu(probs_u.channels, probs_u.height, probs_u.width);
    Tensor gp_u(probs_u.channels, probs_u.height, probs_u.width);
    double vu = region_ce(probs_u, y_pseudo, nullptr, nullptr, &gu);
    vu += region_dice(probs_u, y_pseudo, nullptr, nullptr, &gp_u);
    const Tensor gz_u = softmax_backward(probs_u, gp_u);
    for (std::size_t i = 0; i < gu.data.size(); ++i)
        out.grad_unsup.data[i] = lambda * (gu.data[i] + gz_u.data[i]);

    out.value = v + lambda * vu;
    return out;
}

} // namespace p3seg
