#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "p3seg/errors.hpp"

namespace p3seg {

// Dense rank-3 real array, channels x height x width, double precision.
// Carries images (c=1), probability maps and logits (c=n), and gradients.
struct Tensor {
    int channels = 0;
    int height = 0;
    int width = 0;
    std::vector<double> data;

    Tensor() = default;
    Tensor(int c, int h, int w, double fill = 0.0)
        : channels(c), height(h), width(w),
          data(static_cast<std::size_t>(c) * h * w, fill) {}

    double& at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double* plane(int c) { return data.data() + static_cast<std::size_t>(c) * height * width; }
    const double* plane(int c) const {
        return data.data() + static_cast<std::size_t>(c) * height * width;
    }

    std::size_t size() const { return data.size(); }
    bool same_shape(const Tensor& o) const {
        return channels == o.channels && height == o.height && width == o.width;
    }
};

// Rank-2 integer array of class indices in [0, n).
struct LabelMap {
    int height = 0;
    int width = 0;
    std::vector<int> data;

    LabelMap() = default;
    LabelMap(int h, int w, int fill = 0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    int& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    int at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
    std::size_t size() const { return data.size(); }
    bool same_shape(const LabelMap& o) const { return height == o.height && width == o.width; }
};

// Binary rank-2 mask (0/1).
struct Mask {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> data;

    Mask() = default;
    Mask(int h, int w, std::uint8_t fill = 0)
        : height(h), width(w), data(static_cast<std::size_t>(h) * w, fill) {}

    std::uint8_t& at(int y, int x) { return data[static_cast<std::size_t>(y) * width + x]; }
    std::uint8_t at(int y, int x) const {
        return data[static_cast<std::size_t>(y) * width + x];
    }
    std::size_t size() const { return data.size(); }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto v : data) n += v;
        return n;
    }
};

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
    if (!a.same_shape(b))
        throw dimension_error(std::string(where) + ": tensor shape mismatch");
}

} // namespace p3seg
