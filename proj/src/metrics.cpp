#include "p3seg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace p3seg {

std::pair<double, double> dice_jaccard(const LabelMap& pred, const LabelMap& gt, int class_id) {
    if (!pred.same_shape(gt)) throw dimension_error("dice_jaccard: shape mismatch");

    long a = 0, b = 0, inter = 0;
    for (std::size_t i = 0; i < pred.data.size(); ++i) {
        const bool pa = pred.data[i] == class_id;
        const bool pb = gt.data[i] == class_id;
        a += pa;
        b += pb;
        inter += pa && pb;
    }
    if (a == 0 && b == 0) return {100.0, 100.0};
    const double dice = 200.0 * inter / static_cast<double>(a + b);
    const double jaccard = 100.0 * inter / static_cast<double>(a + b - inter);
    return {dice, jaccard};
}

std::vector<std::pair<int, int>> surface_pixels(const Mask& mask) {
    std::vector<std::pair<int, int>> out;
    const int H = mask.height, W = mask.width;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            if (!mask.at(y, x)) continue;
            const bool boundary =
                y == 0 || y == H - 1 || x == 0 || x == W - 1 ||
                !mask.at(y - 1, x) || !mask.at(y + 1, x) ||
                !mask.at(y, x - 1) || !mask.at(y, x + 1);
            if (boundary) out.emplace_back(y, x);
        }
    return out;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Felzenszwalb-Huttenlocher 1D lower envelope of parabolas.
void edt_1d(const std::vector<double>& f, int n, std::vector<double>& d,
            std::vector<int>& v, std::vector<double>& z) {
    int k = 0;
    v[0] = 0;
    z[0] = -kInf;
    z[1] = kInf;
    for (int q = 1; q < n; ++q) {
        if (f[q] == kInf) { // parabola at infinity never wins
            continue;
        }
        if (f[v[0]] == kInf && k == 0) { // first finite parabola
            v[0] = q;
            continue;
        }
        double s;
        while (true) {
            const int p = v[k];
            s = ((f[q] + q * q) - (f[p] + p * p)) / (2.0 * (q - p));
            if (s <= z[k] && k > 0) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        z[k] = s;
        z[k + 1] = kInf;
    }
    if (f[v[0]] == kInf) { // no finite seeds in this scanline
        for (int q = 0; q < n; ++q) d[q] = kInf;
        return;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (z[k + 1] < q) ++k;
        const double diff = q - v[k];
        d[q] = diff * diff + f[v[k]];
    }
}

} // namespace

std::vector<double> squared_distance_transform(const Mask& seeds) {
    const int H = seeds.height, W = seeds.width;
    std::vector<double> g(static_cast<std::size_t>(H) * W);
    for (std::size_t i = 0; i < g.size(); ++i) g[i] = seeds.data[i] ? 0.0 : kInf;

    const int m = std::max(H, W);
    std::vector<double> f(m), d(m), z(m + 1);
    std::vector<int> v(m);

    // columns first, then rows
    for (int x = 0; x < W; ++x) {
        for (int y = 0; y < H; ++y) f[y] = g[static_cast<std::size_t>(y) * W + x];
        edt_1d(f, H, d, v, z);
        for (int y = 0; y < H; ++y) g[static_cast<std::size_t>(y) * W + x] = d[y];
    }
    for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) f[x] = g[static_cast<std::size_t>(y) * W + x];
        edt_1d(f, W, d, v, z);
        for (int x = 0; x < W; ++x) g[static_cast<std::size_t>(y) * W + x] = d[x];
    }
    return g;
}

namespace {

// Nearest-rank percentile: ceil(q*k)-th order statistic of a sorted list.
double percentile_nearest_rank(std::vector<double>& values, double q) {
    std::sort(values.begin(), values.end());
    const std::size_t k = values.size();
    std::size_t idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(k)));
    if (idx == 0) idx = 1;
    if (idx > k) idx = k;
    return values[idx - 1];
}

std::vector<double> directed_distances(const std::vector<std::pair<int, int>>& from,
                                       const std::vector<double>& dt_to, int W) {
    std::vector<double> out;
    out.reserve(from.size());
    for (auto [y, x] : from)
        out.push_back(std::sqrt(dt_to[static_cast<std::size_t>(y) * W + x]));
    return out;
}

} // namespace

SurfaceDistance hd95_asd(const Mask& pred, const Mask& gt) {
    if (pred.height != gt.height || pred.width != gt.width)
        throw dimension_error("hd95_asd: shape mismatch");

    const auto sp = surface_pixels(pred);
    const auto sg = surface_pixels(gt);

    SurfaceDistance r;
    if (sp.empty() && sg.empty()) return r; // identical empty masks: (0, 0)
    if (sp.empty() || sg.empty()) {
        r.defined = false;
        r.hd95 = r.asd = std::numeric_limits<double>::quiet_NaN();
        return r;
    }

    Mask seed_p(pred.height, pred.width), seed_g(pred.height, pred.width);
    for (auto [y, x] : sp) seed_p.at(y, x) = 1;
    for (auto [y, x] : sg) seed_g.at(y, x) = 1;
    const auto dt_p = squared_distance_transform(seed_p);
    const auto dt_g = squared_distance_transform(seed_g);

    std::vector<double> d_pg = directed_distances(sp, dt_g, pred.width);
    std::vector<double> d_gp = directed_distances(sg, dt_p, pred.width);

    // per-direction partial sums keep the pooled mean symmetric bit-for-bit
    double sum_pg = 0.0, sum_gp = 0.0;
    for (double v : d_pg) sum_pg += v;
    for (double v : d_gp) sum_gp += v;
    r.asd = (sum_pg + sum_gp) / static_cast<double>(d_pg.size() + d_gp.size());

    const double h1 = percentile_nearest_rank(d_pg, 0.95);
    const double h2 = percentile_nearest_rank(d_gp, 0.95);
    r.hd95 = std::max(h1, h2);
    return r;
}

std::vector<MetricsRow> score_sample(const LabelMap& pred, const LabelMap& gt, int n_classes) {
    std::vector<MetricsRow> rows;
    for (int c = 1; c < n_classes; ++c) {
        MetricsRow row;
        row.class_id = c;
        auto [d, j] = dice_jaccard(pred, gt, c);
        row.dice = d;
        row.jaccard = j;

        Mask mp(pred.height, pred.width), mg(gt.height, gt.width);
        for (std::size_t i = 0; i < pred.data.size(); ++i) {
            mp.data[i] = pred.data[i] == c;
            mg.data[i] = gt.data[i] == c;
        }
        const SurfaceDistance sd = hd95_asd(mp, mg);
        row.hd95 = sd.hd95;
        row.asd = sd.asd;
        row.surface_defined = sd.defined;
        rows.push_back(row);
    }
    return rows;
}

} // namespace p3seg
