#pragma once

#include "p3seg/rng.hpp"
#include "p3seg/tensor.hpp"

namespace p3seg {

// A single rectangular interpolation plan: where the labeled box is pasted,
// the region mask M_c (1 outside the box, 0 inside), and the boundary band
// mask M_l (the eps-wide ring straddling the box perimeter).
struct MixPlan {
    int h0 = 0, w0 = 0;      // top-left corner of the box
    int box_h = 0, box_w = 0; // floor(alpha*H) x floor(alpha*W)
    Mask region_mask;         // M_c
    Mask band_mask;           // M_l (empty until make_band_mask fills it)
    int epsilon = 0;
};

// Draw the box for a given side-length ratio alpha. The corner is sampled
// uniformly from the clamped range so the box always fits inside the image.
// Throws config_error when alpha is outside [0, 1].
MixPlan make_region_mask(int H, int W, double alpha, Rng& rng);

// X_mix = X_u outside the box, X_s inside (pure selection; bit-exact).
Tensor mix_images(const Tensor& x_unlabeled, const Tensor& x_labeled, const MixPlan& plan);
LabelMap mix_labels(const LabelMap& y_pseudo, const LabelMap& y_labeled, const MixPlan& plan);

// Band = (box expanded by eps, clipped to the image) minus (box shrunken by
// eps; empty when the box is thinner than 2*eps). A zero-area box yields an
// empty band. Does not modify the plan.
Mask make_band_mask(const MixPlan& plan, int epsilon, int H, int W);

// Convenience: region mask + band mask in one call.
MixPlan make_mix_plan(int H, int W, double alpha, int epsilon, Rng& rng);

// Default band half-width: 13 px at the 256 px scale the value was tuned
// for, scaled linearly for smaller images with a floor of 2.
int default_epsilon(int H, int W);

} // namespace p3seg
