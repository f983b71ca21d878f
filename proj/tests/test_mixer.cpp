#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "p3seg/errors.hpp"
#include "p3seg/mixer.hpp"

using namespace p3seg;

namespace {

Tensor random_tensor(Rng& rng, int c, int h, int w) {
    Tensor t(c, h, w);
    for (double& v : t.data) v = rng.uniform01();
    return t;
}

} // namespace

TEST_CASE("region mask zero count equals the box area") {
    Rng rng(1);
    const MixPlan plan = make_region_mask(100, 100, 0.25, rng);
    CHECK(plan.box_h == 25);
    CHECK(plan.box_w == 25);
    long zeros = 0;
    for (auto v : plan.region_mask.data) zeros += v == 0;
    CHECK(zeros == 625);
}

TEST_CASE("alpha extremes give empty and full boxes") {
    Rng rng(2);
    const MixPlan empty = make_region_mask(64, 64, 0.0, rng);
    CHECK(empty.region_mask.count() == 64u * 64u); // all ones
    CHECK(empty.box_h == 0);

    const MixPlan full = make_region_mask(64, 64, 1.0, rng);
    CHECK(full.region_mask.count() == 0u); // all zeros
    CHECK(full.h0 == 0);
    CHECK(full.w0 == 0);

    CHECK_THROWS_AS(make_region_mask(64, 64, -0.1, rng), config_error);
    CHECK_THROWS_AS(make_region_mask(64, 64, 1.5, rng), config_error);
}

TEST_CASE("boxes always fit inside the image") {
    Rng rng(3);
    for (int k = 0; k < 200; ++k) {
        const int H = 1 + static_cast<int>(rng.uniform_int(40));
        const int W = 1 + static_cast<int>(rng.uniform_int(40));
        const double alpha = rng.uniform01();
        const MixPlan p = make_region_mask(H, W, alpha, rng);
        CHECK(p.h0 >= 0);
        CHECK(p.w0 >= 0);
        CHECK(p.h0 + p.box_h <= H);
        CHECK(p.w0 + p.box_w <= W);
        long zeros = 0;
        for (auto v : p.region_mask.data) zeros += v == 0;
        CHECK(zeros == static_cast<long>(p.box_h) * p.box_w);
    }
}

TEST_CASE("mix_images selects exactly by the box") {
    Rng rng(4);
    const MixPlan plan = make_region_mask(10, 10, 0.5, rng);

    Tensor zeros(1, 10, 10, 0.0), ones(1, 10, 10, 1.0);
    const Tensor mixed = mix_images(zeros, ones, plan);
    double total = 0.0;
    for (double v : mixed.data) total += v;
    CHECK(total == 25.0); // box is 5x5 of labeled ones

    for (int y = 0; y < 10; ++y)
        for (int x = 0; x < 10; ++x) {
            const bool inside = y >= plan.h0 && y < plan.h0 + plan.box_h && x >= plan.w0 &&
                                x < plan.w0 + plan.box_w;
            CHECK(mixed.at(0, y, x) == (inside ? 1.0 : 0.0));
        }

    // identical inputs are a fixed point
    Tensor a = random_tensor(rng, 1, 10, 10);
    const Tensor same = mix_images(a, a, plan);
    CHECK(same.data == a.data);

    // alpha = 0 keeps the unlabeled image untouched
    Rng rng2(5);
    const MixPlan none = make_region_mask(10, 10, 0.0, rng2);
    Tensor b = random_tensor(rng, 1, 10, 10);
    CHECK(mix_images(a, b, none).data == a.data);

    Tensor bad(1, 9, 10);
    CHECK_THROWS_AS(mix_images(a, bad, plan), dimension_error);
}

TEST_CASE("mix complementarity and idempotence") {
    Rng rng(6);
    for (int k = 0; k < 50; ++k) {
        const int H = 4 + static_cast<int>(rng.uniform_int(20));
        const int W = 4 + static_cast<int>(rng.uniform_int(20));
        const MixPlan plan = make_region_mask(H, W, rng.uniform01(), rng);
        const Tensor a = random_tensor(rng, 2, H, W);
        const Tensor b = random_tensor(rng, 2, H, W);

        const Tensor ab = mix_images(a, b, plan);
        const Tensor ba = mix_images(b, a, plan);
        for (std::size_t i = 0; i < ab.data.size(); ++i)
            CHECK(ab.data[i] + ba.data[i] == a.data[i] + b.data[i]); // bit-exact

        CHECK(mix_images(ab, b, plan).data == ab.data); // idempotent re-application
    }
}

TEST_CASE("mix_labels agrees with a per-pixel oracle on checkerboards") {
    Rng rng(7);
    const int H = 12, W = 12;
    LabelMap pseudo(H, W), labeled(H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            pseudo.at(y, x) = (y + x) % 2;
            labeled.at(y, x) = (y + x + 1) % 2;
        }

    const MixPlan plan = make_region_mask(H, W, 0.4, rng);
    const LabelMap mixed = mix_labels(pseudo, labeled, plan);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            const bool inside = y >= plan.h0 && y < plan.h0 + plan.box_h && x >= plan.w0 &&
                                x < plan.w0 + plan.box_w;
            CHECK(mixed.at(y, x) == (inside ? labeled.at(y, x) : pseudo.at(y, x)));
        }

    CHECK(mix_labels(pseudo, pseudo, plan).data == pseudo.data);

    Rng rng2(8);
    const MixPlan all = make_region_mask(H, W, 1.0, rng2);
    CHECK(mix_labels(pseudo, labeled, all).data == labeled.data);
}

TEST_CASE("band mask is the expanded minus shrunken rectangle") {
    MixPlan plan;
    plan.h0 = 10;
    plan.w0 = 10;
    plan.box_h = 10;
    plan.box_w = 10;
    plan.region_mask = Mask(64, 64, 1);

    const Mask band = make_band_mask(plan, 2, 64, 64);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const bool expanded = y >= 8 && y < 22 && x >= 8 && x < 22;
            const bool shrunk = y >= 12 && y < 18 && x >= 12 && x < 18;
            CHECK(band.at(y, x) == (expanded && !shrunk ? 1 : 0));
        }
}

TEST_CASE("band with a large epsilon degenerates to the full expanded rect") {
    MixPlan plan;
    plan.h0 = 20;
    plan.w0 = 20;
    plan.box_h = 6;
    plan.box_w = 6;

    const Mask band = make_band_mask(plan, 5, 64, 64); // eps > half the box side
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const bool expanded = y >= 15 && y < 31 && x >= 15 && x < 31;
            CHECK(band.at(y, x) == (expanded ? 1 : 0));
        }

    // a zero-area box has no perimeter and therefore no band
    MixPlan degenerate;
    degenerate.box_h = 0;
    degenerate.box_w = 4;
    CHECK(make_band_mask(degenerate, 3, 32, 32).count() == 0u);

    CHECK_THROWS_AS(make_band_mask(plan, 0, 64, 64), config_error);
}

TEST_CASE("band pixels stay within Chebyshev eps of the box perimeter") {
    Rng rng(9);
    for (int k = 0; k < 40; ++k) {
        const int H = 10 + static_cast<int>(rng.uniform_int(20));
        const int W = 10 + static_cast<int>(rng.uniform_int(20));
        const double alpha = rng.uniform(0.2, 0.9);
        const int eps = 1 + static_cast<int>(rng.uniform_int(4));
        const MixPlan plan = make_region_mask(H, W, alpha, rng);
        if (plan.box_h == 0 || plan.box_w == 0) continue;
        const Mask band = make_band_mask(plan, eps, H, W);

        // brute-force perimeter cells of the box
        std::vector<std::pair<int, int>> perimeter;
        for (int y = plan.h0; y < plan.h0 + plan.box_h; ++y)
            for (int x = plan.w0; x < plan.w0 + plan.box_w; ++x) {
                const bool edge = y == plan.h0 || y == plan.h0 + plan.box_h - 1 ||
                                  x == plan.w0 || x == plan.w0 + plan.box_w - 1;
                if (edge) perimeter.emplace_back(y, x);
            }

        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                if (!band.at(y, x)) continue;
                int best = 1 << 20;
                for (auto [py, px] : perimeter)
                    best = std::min(best, std::max(std::abs(py - y), std::abs(px - x)));
                CHECK(best <= eps);
            }
    }
}

TEST_CASE("a late-cycle alpha of 0.9 covers 81% of a 100x100 image") {
    Rng rng(10);
    const MixPlan p = make_region_mask(100, 100, 0.9, rng);
    long zeros = 0;
    for (auto v : p.region_mask.data) zeros += v == 0;
    CHECK(zeros == 8100); // side fraction alpha gives an alpha^2 area share
}

TEST_CASE("default epsilon follows the resolution scaling rule") {
    CHECK(default_epsilon(256, 256) == 13);
    CHECK(default_epsilon(512, 512) == 13);
    CHECK(default_epsilon(64, 64) == 3);
    CHECK(default_epsilon(128, 128) == 7);
    CHECK(default_epsilon(16, 16) == 2); // floor
}
