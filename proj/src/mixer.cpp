#include "p3seg/mixer.hpp"

#include <algorithm>
#include <cmath>

namespace p3seg {

MixPlan make_region_mask(int H, int W, double alpha, Rng& rng) {
    if (H < 1 || W < 1) throw config_error("make_region_mask: image must be at least 1x1");
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw config_error("invalid ratio: alpha must be in [0,1]");

    MixPlan plan;
    plan.box_h = static_cast<int>(std::floor(alpha * H));
    plan.box_w = static_cast<int>(std::floor(alpha * W));
    plan.h0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(H - plan.box_h) + 1));
    plan.w0 = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(W - plan.box_w) + 1));

    plan.region_mask = Mask(H, W, 1);
    for (int y = plan.h0; y < plan.h0 + plan.box_h; ++y)
        for (int x = plan.w0; x < plan.w0 + plan.box_w; ++x)
            plan.region_mask.at(y, x) = 0;
    return plan;
}

Tensor mix_images(const Tensor& x_unlabeled, const Tensor& x_labeled, const MixPlan& plan) {
    require_same_shape(x_unlabeled, x_labeled, "mix_images");
    if (x_unlabeled.height != plan.region_mask.height ||
        x_unlabeled.width != plan.region_mask.width)
        throw dimension_error("mix_images: mask shape does not match images");

    Tensor out = x_unlabeled;
    for (int c = 0; c < out.channels; ++c)
        for (int y = plan.h0; y < plan.h0 + plan.box_h; ++y)
            for (int x = plan.w0; x < plan.w0 + plan.box_w; ++x)
                out.at(c, y, x) = x_labeled.at(c, y, x);
    return out;
}

LabelMap mix_labels(const LabelMap& y_pseudo, const LabelMap& y_labeled, const MixPlan& plan) {
    if (!y_pseudo.same_shape(y_labeled))
        throw dimension_error("mix_labels: label shape mismatch");
    if (y_pseudo.height != plan.region_mask.height || y_pseudo.width != plan.region_mask.width)
        throw dimension_error("mix_labels: mask shape does not match labels");

    LabelMap out = y_pseudo;
    for (int y = plan.h0; y < plan.h0 + plan.box_h; ++y)
        for (int x = plan.w0; x < plan.w0 + plan.box_w; ++x)
            out.at(y, x) = y_labeled.at(y, x);
    return out;
}

Mask make_band_mask(const MixPlan& plan, int epsilon, int H, int W) {
    if (epsilon < 1) throw config_error("make_band_mask: epsilon must be >= 1");

    Mask band(H, W, 0);
    if (plan.box_h == 0 || plan.box_w == 0) return band; // no perimeter to straddle

    const int h1 = plan.h0 + plan.box_h;
    const int w1 = plan.w0 + plan.box_w;

    const int ey0 = std::max(0, plan.h0 - epsilon);
    const int ex0 = std::max(0, plan.w0 - epsilon);
    const int ey1 = std::min(H, h1 + epsilon);
    const int ex1 = std::min(W, w1 + epsilon);

    // Shrunken rect, declared empty when inverted.
    const int sy0 = plan.h0 + epsilon;
    const int sx0 = plan.w0 + epsilon;
    const int sy1 = h1 - epsilon;
    const int sx1 = w1 - epsilon;
    const bool shrunk_empty = sy0 >= sy1 || sx0 >= sx1;

    for (int y = ey0; y < ey1; ++y)
        for (int x = ex0; x < ex1; ++x) {
            const bool in_shrunk = !shrunk_empty && y >= sy0 && y < sy1 && x >= sx0 && x < sx1;
            if (!in_shrunk) band.at(y, x) = 1;
        }
    return band;
}

MixPlan make_mix_plan(int H, int W, double alpha, int epsilon, Rng& rng) {
    MixPlan plan = make_region_mask(H, W, alpha, rng);
    plan.epsilon = epsilon;
    plan.band_mask = make_band_mask(plan, epsilon, H, W);
    return plan;
}

int default_epsilon(int H, int W) {
    const int m = std::min(H, W);
    if (m >= 256) return 13;
    const int scaled = static_cast<int>(std::lround(13.0 * m / 256.0));
    return std::max(2, scaled);
}

} // namespace p3seg
