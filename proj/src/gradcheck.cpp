#include "p3seg/gradcheck.hpp"

#include <cmath>
#include <cstdio>
#include <functional>
#include <ostream>

#include "p3seg/losses.hpp"
#include "p3seg/mixer.hpp"
#include "p3seg/model.hpp"

namespace p3seg {

namespace {

constexpr double kStep = 1e-5;
constexpr double kTol = 1e-4;

double rel_error(const std::vector<double>& a, const std::vector<double>& b) {
    double da = 0.0, db = 0.0, dd = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        da += a[i] * a[i];
        db += b[i] * b[i];
        const double d = a[i] - b[i];
        dd += d * d;
    }
    const double denom = std::max(std::sqrt(da), std::sqrt(db));
    if (denom < 1e-12) return std::sqrt(dd);
    return std::sqrt(dd) / denom;
}

Tensor random_logits(Rng& rng, int n, int H, int W) {
    Tensor t(n, H, W);
    for (double& v : t.data) v = rng.normal();
    return t;
}

LabelMap random_labels(Rng& rng, int n, int H, int W) {
    LabelMap m(H, W);
    for (int& v : m.data) v = static_cast<int>(rng.uniform_int(n));
    return m;
}

// Keeps per-pixel argmax stable under +-kStep probes so losses that take
// their own argmax stay differentiable at the sample point.
void separate_argmax(Tensor& logits) {
    for (int y = 0; y < logits.height; ++y)
        for (int x = 0; x < logits.width; ++x) {
            int best = 0;
            double bv = logits.at(0, y, x);
            for (int c = 1; c < logits.channels; ++c)
                if (logits.at(c, y, x) > bv) {
                    bv = logits.at(c, y, x);
                    best = c;
                }
            double second = -1e300;
            for (int c = 0; c < logits.channels; ++c)
                if (c != best) second = std::max(second, logits.at(c, y, x));
            if (bv - second < 1e-3) logits.at(best, y, x) += 1e-2;
        }
}

// Central differences of `scalar` over the entries of `point`, compared to
// `analytic`.
double fd_check(std::vector<double>& point, const std::function<double()>& scalar,
                const std::vector<double>& analytic) {
    std::vector<double> fd(point.size());
    for (std::size_t i = 0; i < point.size(); ++i) {
        const double keep = point[i];
        point[i] = keep + kStep;
        const double up = scalar();
        point[i] = keep - kStep;
        const double dn = scalar();
        point[i] = keep;
        fd[i] = (up - dn) / (2.0 * kStep);
    }
    return rel_error(fd, analytic);
}

} // namespace

std::vector<GradCheckResult> run_gradcheck(int instances, std::uint64_t seed) {
    const int n = 3, H = 8, W = 8;
    std::vector<GradCheckResult> results;

    auto add = [&](const std::string& name,
                   const std::function<double(Rng&)>& one_instance) {
        GradCheckResult r;
        r.name = name;
        r.instances = instances;
        for (int k = 0; k < instances; ++k) {
            Rng rng = Rng::derive(seed, name, static_cast<std::uint64_t>(k));
            r.max_rel_err = std::max(r.max_rel_err, one_instance(rng));
        }
        r.pass = r.max_rel_err <= kTol;
        results.push_back(r);
    };

    add("cross_entropy", [&](Rng& rng) {
        Tensor logits = random_logits(rng, n, H, W);
        const LabelMap labels = random_labels(rng, n, H, W);
        const LossValue lv = cross_entropy(softmax_probs(logits), labels);
        return fd_check(logits.data,
                        [&] { return cross_entropy(softmax_probs(logits), labels).value; },
                        lv.grad.data);
    });

    add("dice", [&](Rng& rng) {
        Tensor logits = random_logits(rng, n, H, W);
        const LabelMap labels = random_labels(rng, n, H, W);
        const LossValue lv = dice_loss(softmax_probs(logits), labels);
        return fd_check(logits.data,
                        [&] { return dice_loss(softmax_probs(logits), labels).value; },
                        lv.grad.data);
    });

    add("weighted_ce", [&](Rng& rng) {
        Tensor logits = random_logits(rng, n, H, W);
        const LabelMap labels = random_labels(rng, n, H, W);
        DifficultyMap mu(H, W);
        for (double& v : mu.mu) v = rng.uniform01();
        const LossValue lv = weighted_ce(softmax_probs(logits), labels, mu);
        return fd_check(logits.data,
                        [&] { return weighted_ce(softmax_probs(logits), labels, mu).value; },
                        lv.grad.data);
    });

    add("weighted_dice", [&](Rng& rng) {
        Tensor logits = random_logits(rng, n, H, W);
        const LabelMap labels = random_labels(rng, n, H, W);
        DifficultyMap mu(H, W);
        for (double& v : mu.mu) v = rng.uniform01();
        const LossValue lv = weighted_dice(softmax_probs(logits), labels, mu);
        return fd_check(logits.data,
                        [&] { return weighted_dice(softmax_probs(logits), labels, mu).value; },
                        lv.grad.data);
    });

    add("stage1_loss", [&](Rng& rng) {
        Tensor logits_sup = random_logits(rng, n, H, W);
        Tensor logits_unsup = random_logits(rng, n, H, W);
        const LabelMap y_sup = random_labels(rng, n, H, W);
        const LabelMap y_pseudo = random_labels(rng, n, H, W);
        const double lambda = rng.uniform(0.0, 0.2);

        const Stage1Loss lv = stage1_loss(logits_sup, y_sup, logits_unsup, y_pseudo, lambda);
        std::vector<double> analytic = lv.grad_sup.data;
        analytic.insert(analytic.end(), lv.grad_unsup.data.begin(), lv.grad_unsup.data.end());

        std::vector<double> point = logits_sup.data;
        point.insert(point.end(), logits_unsup.data.begin(), logits_unsup.data.end());
        const std::size_t half = logits_sup.data.size();
        auto scalar = [&] {
            std::copy(point.begin(), point.begin() + half, logits_sup.data.begin());
            std::copy(point.begin() + half, point.end(), logits_unsup.data.begin());
            return stage1_loss(logits_sup, y_sup, logits_unsup, y_pseudo, lambda).value;
        };
        return fd_check(point, scalar, analytic);
    });

    add("stage2_loss", [&](Rng& rng) {
        Tensor logits = random_logits(rng, n, H, W);
        separate_argmax(logits);
        const LabelMap y_mix = random_labels(rng, n, H, W);
        const double alpha = rng.uniform(0.2, 0.8);
        const MixPlan plan = make_mix_plan(H, W, alpha, 2, rng);

        const LossValue lv = stage2_loss(logits, y_mix, plan);
        return fd_check(logits.data, [&] { return stage2_loss(logits, y_mix, plan).value; },
                        lv.grad.data);
    });

    add("model_backward", [&](Rng& rng) {
        NetworkSpec spec;
        spec.in_channels = 1;
        spec.class_count = n;
        spec.widths = {2, 3};
        ModelParams params = build_model(spec, rng);

        Tensor image(1, H, W);
        for (double& v : image.data) v = rng.uniform01();
        const LabelMap labels = random_labels(rng, n, H, W);

        ForwardCache cache;
        const Tensor logits = forward(params, image, &cache);
        Tensor probs = softmax_probs(logits);
        LossValue lv = cross_entropy(probs, labels);
        const LossValue dv = dice_loss(probs, labels);
        for (std::size_t i = 0; i < lv.grad.data.size(); ++i)
            lv.grad.data[i] += dv.grad.data[i];
        const std::vector<double> analytic = backward(params, cache, lv.grad);

        auto scalar = [&] {
            const Tensor z = forward(params, image);
            const Tensor p = softmax_probs(z);
            return cross_entropy(p, labels).value + dice_loss(p, labels).value;
        };
        return fd_check(params.values, scalar, analytic);
    });

    return results;
}

bool print_gradcheck_table(std::ostream& out, const std::vector<GradCheckResult>& results) {
    bool all_pass = true;
    out << "check            instances  max_rel_err   result\n";
    for (const GradCheckResult& r : results) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%-16s %9d  %11.3e   %s\n", r.name.c_str(),
                      r.instances, r.max_rel_err, r.pass ? "pass" : "FAIL");
        out << buf;
        all_pass = all_pass && r.pass;
    }
    return all_pass;
}

} // namespace p3seg
