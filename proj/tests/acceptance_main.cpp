// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failures. The heavy end-to-end criteria run last.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "oracles.hpp"
#include "p3seg/data.hpp"
#include "p3seg/losses.hpp"
#include "p3seg/metrics.hpp"
#include "p3seg/mixer.hpp"
#include "p3seg/model.hpp"
#include "p3seg/schedule.hpp"
#include "p3seg/trainer.hpp"

using namespace p3seg;
namespace fs = std::filesystem;
using clock_type = std::chrono::steady_clock;

namespace {

struct Outcome {
    int id;
    std::string name;
    bool pass;
    std::string detail;
    double seconds;
};

std::vector<Outcome> g_outcomes;

void record(int id, const std::string& name, bool pass, const std::string& detail,
            double seconds) {
    g_outcomes.push_back({id, name, pass, detail, seconds});
    std::printf("[%s] criterion %d (%s): %s  [%.1fs]\n", pass ? "PASS" : "FAIL", id,
                name.c_str(), detail.c_str(), seconds);
    std::fflush(stdout);
}

double run_timed(const std::function<void()>& fn) {
    const auto t0 = clock_type::now();
    fn();
    return std::chrono::duration<double>(clock_type::now() - t0).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// ---------------------------------------------------------------- criterion 1
void criterion_schedule() {
    bool pass = true;
    std::string detail;
    const double secs = run_timed([&] {
        const ScheduleParams p = solve_curve(8000, 0.25, 0.9);
        if (std::abs(alpha_at(p, 0) - 0.25) > 1e-9) {
            pass = false;
            detail = "alpha(0) != 0.25";
        }
        const double near_end = alpha_at(p, 7999);
        if (!(near_end >= 0.8997 && near_end <= 0.9)) {
            pass = false;
            detail = "alpha(7999) outside [0.8997, 0.9]";
        }
        Rng rng(404);
        for (int k = 0; k < 10000; ++k) {
            const long it = static_cast<long>(rng.uniform_int(100000000));
            if (alpha_at(p, it + 8000) != alpha_at(p, it)) { // bit-exact
                pass = false;
                detail = "periodicity broken at iter " + std::to_string(it);
                break;
            }
        }
    });
    if (pass && secs >= 1.0) {
        pass = false;
        detail = "runtime >= 1 s";
    }
    if (pass)
        detail = "alpha(0)=0.25, alpha(7999) in range, 1e4 periodicity probes bit-exact";
    record(1, "schedule correctness", pass, detail, secs);
}

// ---------------------------------------------------------------- criterion 2
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

// widen per-pixel argmax margins so +-1e-5 probes cannot flip the internal
// argmax (mu stays frozen across the finite-difference stencil)
void separate_argmax(Tensor& logits) {
    for (int y = 0; y < logits.height; ++y)
        for (int x = 0; x < logits.width; ++x) {
            int best = 0;
            for (int c = 1; c < logits.channels; ++c)
                if (logits.at(c, y, x) > logits.at(best, y, x)) best = c;
            logits.at(best, y, x) += 1e-2;
        }
}

void criterion_gradients() {
    const int n = 3, H = 8, W = 8, instances = 20;
    struct Check {
        std::string name;
        double worst = 0.0;
    };
    std::vector<Check> checks;
    bool pass = true;

    const double secs = run_timed([&] {
        auto run = [&](const std::string& name,
                       const std::function<double(Rng&)>& one) {
            Check c{name, 0.0};
            for (int k = 0; k < instances; ++k) {
                Rng rng = Rng::derive(2024, name, static_cast<std::uint64_t>(k));
                c.worst = std::max(c.worst, one(rng));
            }
            checks.push_back(c);
        };

        run("ce", [&](Rng& rng) {
            Tensor z = random_logits(rng, n, H, W);
            const LabelMap y = random_labels(rng, n, H, W);
            const LossValue lv = cross_entropy(softmax_probs(z), y);
            return oracle::fd_rel_error(
                z.data, [&] { return cross_entropy(softmax_probs(z), y).value; },
                lv.grad.data);
        });
        run("dice", [&](Rng& rng) {
            Tensor z = random_logits(rng, n, H, W);
            const LabelMap y = random_labels(rng, n, H, W);
            const LossValue lv = dice_loss(softmax_probs(z), y);
            return oracle::fd_rel_error(
                z.data, [&] { return dice_loss(softmax_probs(z), y).value; }, lv.grad.data);
        });
        run("wce", [&](Rng& rng) {
            Tensor z = random_logits(rng, n, H, W);
            const LabelMap y = random_labels(rng, n, H, W);
            DifficultyMap mu(H, W);
            for (double& v : mu.mu) v = rng.uniform01();
            const LossValue lv = weighted_ce(softmax_probs(z), y, mu);
            return oracle::fd_rel_error(
                z.data, [&] { return weighted_ce(softmax_probs(z), y, mu).value; },
                lv.grad.data);
        });
        run("wdice", [&](Rng& rng) {
            Tensor z = random_logits(rng, n, H, W);
            const LabelMap y = random_labels(rng, n, H, W);
            DifficultyMap mu(H, W);
            for (double& v : mu.mu) v = rng.uniform01();
            const LossValue lv = weighted_dice(softmax_probs(z), y, mu);
            return oracle::fd_rel_error(
                z.data, [&] { return weighted_dice(softmax_probs(z), y, mu).value; },
                lv.grad.data);
        });
        run("stage1", [&](Rng& rng) {
            Tensor zs = random_logits(rng, n, H, W);
            Tensor zu = random_logits(rng, n, H, W);
            const LabelMap ys = random_labels(rng, n, H, W);
            const LabelMap yu = random_labels(rng, n, H, W);
            const double lambda = rng.uniform(0.0, 0.2);

            const Stage1Loss lv = stage1_loss(zs, ys, zu, yu, lambda);
            std::vector<double> analytic = lv.grad_sup.data;
            analytic.insert(analytic.end(), lv.grad_unsup.data.begin(),
                            lv.grad_unsup.data.end());
            std::vector<double> point = zs.data;
            point.insert(point.end(), zu.data.begin(), zu.data.end());
            const std::size_t half = zs.data.size();
            return oracle::fd_rel_error(
                point,
                [&] {
                    std::copy(point.begin(), point.begin() + half, zs.data.begin());
                    std::copy(point.begin() + half, point.end(), zu.data.begin());
                    return stage1_loss(zs, ys, zu, yu, lambda).value;
                },
                analytic);
        });
        run("stage2", [&](Rng& rng) {
            Tensor z = random_logits(rng, n, H, W);
            separate_argmax(z);
            const LabelMap y = random_labels(rng, n, H, W);
            const MixPlan plan = make_mix_plan(H, W, rng.uniform(0.2, 0.8), 2, rng);
            const LossValue lv = stage2_loss(z, y, plan);
            return oracle::fd_rel_error(
                z.data, [&] { return stage2_loss(z, y, plan).value; }, lv.grad.data);
        });
    });

    std::string detail;
    for (const Check& c : checks) {
        if (c.worst > 1e-4) pass = false;
        char buf[64];
        std::snprintf(buf, sizeof buf, "%s %.2e ", c.name.c_str(), c.worst);
        detail += buf;
    }
    if (secs >= 30.0) {
        pass = false;
        detail += "(runtime >= 30 s)";
    }
    record(2, "gradient suite", pass, detail, secs);
}

// ---------------------------------------------------------------- criterion 3
void criterion_mask_algebra() {
    bool pass = true;
    std::string detail = "1000 plans: exact zero counts, bit-exact mixing, complementarity";
    const double secs = run_timed([&] {
        Rng rng(31337);
        for (int k = 0; k < 1000 && pass; ++k) {
            const int H = 4 + static_cast<int>(rng.uniform_int(60));
            const int W = 4 + static_cast<int>(rng.uniform_int(60));
            const double alpha = rng.uniform01();
            const MixPlan plan = make_region_mask(H, W, alpha, rng);

            long zeros = 0;
            for (auto v : plan.region_mask.data) zeros += v == 0;
            const long want = static_cast<long>(std::floor(alpha * H)) *
                              static_cast<long>(std::floor(alpha * W));
            if (zeros != want) {
                pass = false;
                detail = "zero count mismatch";
                break;
            }

            Tensor xu(1, H, W), xs(1, H, W);
            for (double& v : xu.data) v = rng.uniform01();
            for (double& v : xs.data) v = rng.uniform01();
            const Tensor mix = mix_images(xu, xs, plan);
            const Tensor rev = mix_images(xs, xu, plan);
            for (int y = 0; y < H && pass; ++y)
                for (int x = 0; x < W; ++x) {
                    const bool inside = y >= plan.h0 && y < plan.h0 + plan.box_h &&
                                        x >= plan.w0 && x < plan.w0 + plan.box_w;
                    const double want_px = inside ? xs.at(0, y, x) : xu.at(0, y, x);
                    if (mix.at(0, y, x) != want_px) {
                        pass = false;
                        detail = "mix selection not bit-exact";
                        break;
                    }
                    if (mix.at(0, y, x) + rev.at(0, y, x) !=
                        xu.at(0, y, x) + xs.at(0, y, x)) {
                        pass = false;
                        detail = "complementarity broken";
                        break;
                    }
                }
        }
    });
    record(3, "mask algebra", pass, detail, secs);
}

// ---------------------------------------------------------------- criterion 4
void criterion_mu_oracle() {
    bool pass = true;
    std::string detail = "100 random 16x16 instances match the scalar loop exactly";
    const double secs = run_timed([&] {
        Rng rng(2718);
        for (int k = 0; k < 100 && pass; ++k) {
            const int H = 16, W = 16;
            const LabelMap pred = random_labels(rng, 3, H, W);
            const LabelMap labels = random_labels(rng, 3, H, W);
            Mask band(H, W);
            for (auto& v : band.data) v = rng.uniform01() < 0.5 ? 1 : 0;

            const DifficultyMap dm = difficulty_map(pred, labels, band);
            for (int y = 0; y < H && pass; ++y)
                for (int x = 0; x < W; ++x) {
                    const double want =
                        band.at(y, x) ? oracle::mu_at(pred, labels, y, x) : 0.0;
                    if (dm.at(y, x) != want) {
                        pass = false;
                        detail = "mu mismatch at a pixel";
                        break;
                    }
                }
        }
    });
    record(4, "difficulty-map oracle", pass, detail, secs);
}

// ---------------------------------------------------------------- criterion 5
void criterion_metric_oracle() {
    bool pass = true;
    std::string detail;
    const double secs = run_timed([&] {
        // hand case: single pixels at (0,0) and (3,4)
        Mask a(8, 8), b(8, 8);
        a.data[0] = 1;
        b.at(3, 4) = 1;
        const SurfaceDistance hand = hd95_asd(a, b);
        if (std::abs(hand.hd95 - 5.0) > 1e-12 || std::abs(hand.asd - 5.0) > 1e-12) {
            pass = false;
            detail = "3-4-5 hand case failed";
            return;
        }

        Rng rng(1618);
        int compared = 0;
        for (int k = 0; k < 500; ++k) {
            const int H = 4 + static_cast<int>(rng.uniform_int(29));
            const int W = 4 + static_cast<int>(rng.uniform_int(29));
            Mask ma(H, W), mb(H, W);
            const double fa = rng.uniform(0.05, 0.6), fb = rng.uniform(0.05, 0.6);
            for (auto& v : ma.data) v = rng.uniform01() < fa ? 1 : 0;
            for (auto& v : mb.data) v = rng.uniform01() < fb ? 1 : 0;

            const SurfaceDistance got = hd95_asd(ma, mb);
            const oracle::SurfaceOracle want = oracle::hd95_asd_scalar(ma, mb);
            if (got.defined != want.defined) {
                pass = false;
                detail = "defined flag mismatch";
                return;
            }
            if (want.defined) {
                ++compared;
                if (std::abs(got.hd95 - want.hd95) > 1e-9 ||
                    std::abs(got.asd - want.asd) > 1e-9) {
                    pass = false;
                    detail = "surface distances drifted from the all-pairs oracle";
                    return;
                }
            }

            // dice/jaccard against direct counting
            LabelMap la(H, W), lb(H, W);
            for (std::size_t i = 0; i < ma.data.size(); ++i) {
                la.data[i] = ma.data[i];
                lb.data[i] = mb.data[i];
            }
            long ca = 0, cb = 0, ci = 0;
            for (std::size_t i = 0; i < ma.data.size(); ++i) {
                ca += ma.data[i];
                cb += mb.data[i];
                ci += ma.data[i] && mb.data[i];
            }
            const auto [dice, jac] = dice_jaccard(la, lb, 1);
            const double dwant =
                (ca + cb) == 0 ? 100.0 : 200.0 * ci / static_cast<double>(ca + cb);
            const double jwant =
                (ca + cb) == 0 ? 100.0 : 100.0 * ci / static_cast<double>(ca + cb - ci);
            if (dice != dwant || jac != jwant) {
                pass = false;
                detail = "dice/jaccard counting mismatch";
                return;
            }
        }
        detail = std::to_string(compared) + " defined pairs matched within 1e-9";
    });
    record(5, "metric oracle", pass, detail, secs);
}

// ------------------------------------------------------- criteria 6 and 7
struct SeedScores {
    double prewarm = 0.0;
    double mix_only = 0.0;
    double full = 0.0;
    double single_period = 0.0;
};

void criteria_end_to_end(const std::string& scratch) {
    const std::string corpus_dir = scratch + "/corpus";
    CorpusParams cp; // the default synthetic corpus
    cp.seed = 20240501;
    generate_corpus(cp, corpus_dir);
    const Corpus corpus = load_corpus(corpus_dir);

    const std::vector<std::uint64_t> seeds = {1, 2, 3};
    std::vector<SeedScores> scores;
    double c6_seconds = 0.0;
    double c7_seconds = 0.0;

    for (std::uint64_t seed : seeds) {
        TrainConfig cfg;
        cfg.seed = seed;
        cfg.corpus_dir = corpus_dir;

        SeedScores s;
        const double warm_secs = run_timed([&] {
            TrainState warm = init_state(cfg, corpus);
            run_stage1(cfg, corpus, warm, nullptr);
            s.prewarm = evaluate(warm.student, corpus, "").mean_dice;

            TrainState mix_state = warm;
            TrainConfig mix_cfg = cfg;
            mix_cfg.use_boundary_loss = false;
            run_stage2(mix_cfg, corpus, mix_state, nullptr);
            s.mix_only = evaluate(mix_state.student, corpus, "").mean_dice;

            TrainState full_state = warm;
            run_stage2(cfg, corpus, full_state, nullptr);
            s.full = evaluate(full_state.student, corpus, "").mean_dice;

            c7_seconds += run_timed([&] {
                TrainState single_state = warm;
                TrainConfig single_cfg = cfg;
                single_cfg.period_T = cfg.stage2_iters; // one period spans stage 2
                run_stage2(single_cfg, corpus, single_state, nullptr);
                s.single_period = evaluate(single_state.student, corpus, "").mean_dice;
            });
        });
        c6_seconds += warm_secs;
        std::printf("  [seed %llu] prewarm %.2f | +mix %.2f | +mix+boundary %.2f | single-T %.2f\n",
                    static_cast<unsigned long long>(seed), s.prewarm, s.mix_only, s.full,
                    s.single_period);
        std::fflush(stdout);
        scores.push_back(s);
    }
    c6_seconds -= c7_seconds; // the single-period runs belong to criterion 7

    SeedScores mean;
    for (const SeedScores& s : scores) {
        mean.prewarm += s.prewarm / scores.size();
        mean.mix_only += s.mix_only / scores.size();
        mean.full += s.full / scores.size();
        mean.single_period += s.single_period / scores.size();
    }

    {
        bool pass = true;
        std::string detail;
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "mean Dice: prewarm %.2f < +mix %.2f < +mix+boundary %.2f, gap %.2f",
                      mean.prewarm, mean.mix_only, mean.full, mean.full - mean.prewarm);
        detail = buf;
        if (!(mean.prewarm < mean.mix_only && mean.mix_only < mean.full)) {
            pass = false;
            detail += " (ordering violated)";
        }
        if (mean.full - mean.prewarm < 5.0) {
            pass = false;
            detail += " (gap below 5 Dice points)";
        }
        if (c6_seconds > 900.0) {
            pass = false;
            detail += " (runtime above 15 min)";
        }
        record(6, "component ablation improves Dice", pass, detail, c6_seconds);
    }
    {
        bool pass = mean.single_period <= mean.full;
        char buf[192];
        std::snprintf(buf, sizeof buf, "single-period mean %.2f <= multi-cycle mean %.2f",
                      mean.single_period, mean.full);
        record(7, "periodicity ablation", pass, buf, c7_seconds);
    }
}

// ---------------------------------------------------------------- criterion 8
void criterion_determinism(const std::string& scratch) {
    bool pass = true;
    std::string detail = "metrics.csv and checkpoints byte-identical across reruns/threads";
    const double secs = run_timed([&] {
        const std::string corpus_dir = scratch + "/det_corpus";
        CorpusParams cp;
        cp.seed = 99;
        cp.N = 16;
        cp.H = cp.W = 32;
        cp.n_classes = 3;
        cp.labeled_fraction = 0.2;
        cp.test_count = 4;
        generate_corpus(cp, corpus_dir);

        auto run_once = [&](const std::string& dir, int threads) {
            TrainConfig cfg;
            cfg.seed = 12;
            cfg.corpus_dir = corpus_dir;
            cfg.run_dir = dir;
            cfg.stage1_iters = 20;
            cfg.stage2_iters = 30;
            cfg.period_T = 10;
            cfg.batch_size = 3;
            cfg.widths = {3, 4};
            cfg.threads = threads;
            run_training(cfg);
        };
        run_once(scratch + "/det_a", 1);
        run_once(scratch + "/det_b", 1);
        run_once(scratch + "/det_c", 3);

        for (const char* file : {"metrics.csv", "ckpt_final.bin", "ckpt_stage1.bin", "log.csv"}) {
            const std::string a = slurp(fs::path(scratch) / "det_a" / file);
            const std::string b = slurp(fs::path(scratch) / "det_b" / file);
            const std::string c = slurp(fs::path(scratch) / "det_c" / file);
            if (a.empty() || a != b || a != c) {
                pass = false;
                detail = std::string("divergence in ") + file;
                return;
            }
        }
    });
    record(8, "training determinism", pass, detail, secs);
}

// ---------------------------------------------------------------- criterion 9
void criterion_ema() {
    bool pass = true;
    std::string detail;
    const double secs = run_timed([&] {
        NetworkSpec spec;
        spec.class_count = 3;
        spec.widths = {4, 6};
        Rng rng(777);
        ModelParams teacher = build_model(spec, rng);
        const ModelParams student = build_model(spec, rng);

        double gap0 = 0.0;
        for (std::size_t i = 0; i < teacher.values.size(); ++i) {
            const double d = teacher.values[i] - student.values[i];
            gap0 += d * d;
        }
        gap0 = std::sqrt(gap0);

        const int k = 25;
        const double delta = 0.99;
        for (int i = 0; i < k; ++i) ema_update(teacher, student, delta);

        double gap = 0.0;
        for (std::size_t i = 0; i < teacher.values.size(); ++i) {
            const double d = teacher.values[i] - student.values[i];
            gap += d * d;
        }
        gap = std::sqrt(gap);

        const double want = std::pow(delta, k) * gap0;
        const double err = std::abs(gap - want);
        char buf[160];
        std::snprintf(buf, sizeof buf, "|gap - delta^k * gap0| = %.3e after %d updates", err,
                      k);
        detail = buf;
        pass = err <= 1e-12;
    });
    record(9, "EMA contract", pass, detail, secs);
}

} // namespace

int main() {
    const std::string scratch =
        (fs::temp_directory_path() / "p3seg_acceptance").string();
    fs::remove_all(scratch);
    fs::create_directories(scratch);

    criterion_schedule();
    criterion_gradients();
    criterion_mask_algebra();
    criterion_mu_oracle();
    criterion_metric_oracle();
    criterion_determinism(scratch);
    criterion_ema();
    criteria_end_to_end(scratch);

    int failures = 0;
    std::printf("\n==== acceptance summary ====\n");
    for (const Outcome& o : g_outcomes) {
        std::printf("criterion %d (%s): %s\n", o.id, o.name.c_str(),
                    o.pass ? "PASS" : "FAIL");
        if (!o.pass) ++failures;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(g_outcomes.size()) - failures,
                g_outcomes.size());

    fs::remove_all(scratch);
    return failures;
}
