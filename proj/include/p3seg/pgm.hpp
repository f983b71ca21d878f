#pragma once

#include <string>

#include "p3seg/tensor.hpp"

namespace p3seg {

// Images travel as 16-bit binary PGM (P5, maxval 65535, big-endian samples
// per the netpbm convention); intensity in [0,1] maps to round(v * 65535).
void save_image_pgm(const std::string& path, const Tensor& image);
Tensor load_image_pgm(const std::string& path);

// Label maps travel as 8-bit binary PGM of raw class indices.
void save_label_pgm(const std::string& path, const LabelMap& labels);
// Throws format_error on malformed headers, truncation, or class >= n.
LabelMap load_label_pgm(const std::string& path, int n_classes);

// 8-bit PGM of a binary mask (0/255), for visual inspection output.
void save_mask_pgm(const std::string& path, const Mask& mask);

} // namespace p3seg
