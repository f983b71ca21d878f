#pragma once

#include <utility>

#include "p3seg/tensor.hpp"

namespace p3seg {

/// Region overlap for one class, in percent. Both-empty pairs score 100/100.
std::pair<double, double> dice_jaccard(const LabelMap& pred, const LabelMap& gt, int class_id);

// Pixels of the mask with at least one 4-neighbor outside it; the image
// border counts as outside.
std::vector<std::pair<int, int>> surface_pixels(const Mask& mask);

struct SurfaceDistance {
    double hd95 = 0.0;
    double asd = 0.0;
    bool defined = true; // false when exactly one mask is empty
};

// Bidirectional surface distances: HD95 is the max of the two directed 95th
// percentiles (nearest rank); ASD pools both directed lists and averages
// once. Backed by an exact Euclidean distance transform.
SurfaceDistance hd95_asd(const Mask& pred, const Mask& gt);

// Exact squared Euclidean distance transform: for every pixel, the squared
// distance to the nearest seed (seed = nonzero entry). Seedless grids come
// back as +inf everywhere.
std::vector<double> squared_distance_transform(const Mask& seeds);

struct MetricsRow {
    int class_id = 0;
    double dice = 0.0;
    double jaccard = 0.0;
    double hd95 = 0.0;
    double asd = 0.0;
    bool surface_defined = true;
};

// Per-foreground-class scores for one (pred, gt) pair.
std::vector<MetricsRow> score_sample(const LabelMap& pred, const LabelMap& gt, int n_classes);

} // namespace p3seg
