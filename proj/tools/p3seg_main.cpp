#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "p3seg/data.hpp"
#include "p3seg/errors.hpp"
#include "p3seg/gradcheck.hpp"
#include "p3seg/losses.hpp"
#include "p3seg/mixer.hpp"
#include "p3seg/model.hpp"
#include "p3seg/pgm.hpp"
#include "p3seg/report.hpp"
#include "p3seg/schedule.hpp"
#include "p3seg/trainer.hpp"

namespace fs = std::filesystem;
using namespace p3seg;

namespace {

int cmd_gen_corpus(const CorpusParams& params, const std::string& out_dir) {
    const CorpusManifest mf = generate_corpus(params, out_dir);
    std::printf("corpus written to %s: %d train (%d labeled), %d test, %dx%d, %d classes\n",
                out_dir.c_str(), mf.total, mf.labeled_count, mf.test_count, mf.H, mf.W,
                mf.n_classes);
    return 0;
}

int cmd_train(const std::string& config_path) {
    const TrainConfig config = TrainConfig::from_json_file(config_path);
    const EvalSummary sum = run_training(config);
    std::printf("run %s finished: mean Dice %.2f, Jaccard %.2f, HD95 %.2f, ASD %.2f\n",
                config.run_dir.c_str(), sum.mean_dice, sum.mean_jaccard, sum.mean_hd95,
                sum.mean_asd);
    return 0;
}

int cmd_eval(const std::string& ckpt_prefix, const std::string& corpus_dir,
             const std::string& out_csv) {
    const ModelParams model = load_checkpoint(ckpt_prefix);
    const Corpus corpus = load_corpus(corpus_dir);
    const EvalSummary sum = evaluate(model, corpus, out_csv);
    std::printf("mean Dice %.2f, Jaccard %.2f, HD95 %.2f, ASD %.2f over %d rows\n",
                sum.mean_dice, sum.mean_jaccard, sum.mean_hd95, sum.mean_asd, sum.rows);
    return 0;
}

int cmd_schedule_dump(long period, double lower, double upper, long iters,
                      const std::string& curve, const std::string& out_path) {
    const ScheduleParams sched = solve_curve(period, lower, upper, curve_from_string(curve));
    const RampParams ramp{iters, 0.1, 0.9, false};

    std::string csv = "iter,alpha,lambda,lr_factor\n";
    for (long it = 0; it < iters; ++it) {
        char buf[128];
        std::snprintf(buf, sizeof buf, "%ld,%.10g,%.10g,%.10g\n", it, alpha_at(sched, it),
                      lambda_at(ramp, it), lr_factor_at(ramp, it));
        csv += buf;
    }
    if (out_path.empty()) {
        std::fputs(csv.c_str(), stdout);
    } else {
        std::ofstream out(out_path, std::ios::trunc | std::ios::binary);
        if (!out) throw format_error("cannot write " + out_path);
        out << csv;
    }
    return 0;
}

int cmd_mix_preview(std::uint64_t seed, double alpha, int eps, int hw,
                    const std::string& out_dir) {
    CorpusParams cp;
    cp.seed = seed;
    cp.H = cp.W = hw;
    const Sample labeled = synthesize_sample(cp, "preview_labeled");
    const Sample unlabeled = synthesize_sample(cp, "preview_unlabeled");

    Rng rng = Rng::derive(seed, "preview");
    const int eff_eps = eps > 0 ? eps : default_epsilon(hw, hw);
    const MixPlan plan = make_mix_plan(hw, hw, alpha, eff_eps, rng);
    const Tensor mixed = mix_images(unlabeled.image, labeled.image, plan);

    fs::create_directories(out_dir);
    save_image_pgm((fs::path(out_dir) / "mixed.pgm").string(), mixed);
    save_mask_pgm((fs::path(out_dir) / "mask_mc.pgm").string(), plan.region_mask);
    save_mask_pgm((fs::path(out_dir) / "mask_ml.pgm").string(), plan.band_mask);
    std::printf("wrote mixed.pgm, mask_mc.pgm, mask_ml.pgm to %s (box %dx%d at %d,%d)\n",
                out_dir.c_str(), plan.box_h, plan.box_w, plan.h0, plan.w0);
    return 0;
}

int cmd_gradcheck() {
    const auto results = run_gradcheck();
    const bool ok = print_gradcheck_table(std::cout, results);
    return ok ? 0 : 3;
}

int cmd_ablate(const std::string& axis, const std::string& corpus_dir,
               const std::string& out_dir, const std::vector<std::uint64_t>& seeds,
               const TrainConfig& base) {
    struct Variant {
        std::string label;
        TrainConfig config;
    };
    std::vector<Variant> variants;

    if (axis == "curve") {
        for (const char* c : {"exponential", "linear", "step", "late_spike", "constant"}) {
            TrainConfig v = base;
            v.curve = c;
            variants.push_back({std::string("curve_") + c, v});
        }
    } else if (axis == "period") {
        for (long T : {base.period_T / 2, base.period_T, base.period_T * 2, base.stage2_iters}) {
            TrainConfig v = base;
            v.period_T = T;
            const std::string label = "period_" + std::to_string(T);
            const bool dup = std::any_of(variants.begin(), variants.end(),
                                         [&](const Variant& x) { return x.label == label; });
            if (!dup) variants.push_back({label, v});
        }
    } else if (axis == "bounds") {
        const std::pair<double, double> bounds[] = {
            {0.25, 0.9}, {0.15, 0.9}, {0.25, 0.75}, {0.4, 0.95}};
        for (auto [lo, hi] : bounds) {
            TrainConfig v = base;
            v.lower_bound = lo;
            v.upper_bound = hi;
            char lbl[64];
            std::snprintf(lbl, sizeof lbl, "bounds_%.2f_%.2f", lo, hi);
            variants.push_back({lbl, v});
        }
    } else {
        throw config_error("unknown ablation axis: " + axis + " (use curve|period|bounds)");
    }

    std::vector<std::string> run_dirs;
    for (const Variant& var : variants)
        for (std::uint64_t seed : seeds) {
            TrainConfig config = var.config;
            config.corpus_dir = corpus_dir;
            config.seed = seed;
            config.label = var.label;
            config.run_dir =
                (fs::path(out_dir) / (var.label + "_s" + std::to_string(seed))).string();
            std::printf("[ablate] %s seed %llu...\n", var.label.c_str(),
                        static_cast<unsigned long long>(seed));
            std::fflush(stdout);
            const EvalSummary sum = run_training(config);
            std::printf("[ablate] %s seed %llu: Dice %.2f\n", var.label.c_str(),
                        static_cast<unsigned long long>(seed), sum.mean_dice);
            run_dirs.push_back(config.run_dir);
        }

    write_report(run_dirs, (fs::path(out_dir) / "report").string());
    std::printf("ablation report written to %s/report\n", out_dir.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"p3seg: progressive/periodic perturbation segmentation lab"};
    app.require_subcommand(1);

    // gen-corpus
    auto* gen = app.add_subcommand("gen-corpus", "generate a synthetic corpus");
    CorpusParams cp;
    std::string gen_out = "corpus";
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--seed", cp.seed, "corpus seed");
    gen->add_option("--n", cp.N, "training sample count");
    gen->add_option("--hw", cp.H, "image side length")->check(CLI::Range(16, 1024));
    gen->add_option("--classes", cp.n_classes, "class count (2-4)");
    gen->add_option("--labeled-fraction", cp.labeled_fraction, "labeled fraction in (0,1)");
    gen->add_option("--test-count", cp.test_count, "test sample count");

    // train
    auto* train = app.add_subcommand("train", "run the two-stage pipeline from a config");
    std::string config_path;
    train->add_option("--config", config_path, "JSON config path")->required();

    // eval
    auto* eval = app.add_subcommand("eval", "score a checkpoint on a corpus test split");
    std::string ckpt, eval_corpus, eval_out = "metrics.csv";
    eval->add_option("--ckpt", ckpt, "checkpoint prefix (without .bin)")->required();
    eval->add_option("--corpus", eval_corpus, "corpus directory")->required();
    eval->add_option("--out", eval_out, "output CSV path");

    // schedule dump
    auto* schedule = app.add_subcommand("schedule", "schedule utilities");
    auto* dump = schedule->add_subcommand("dump", "emit iter,alpha,lambda,lr_factor CSV");
    long dump_period = 8000, dump_iters = 16000;
    double dump_lower = 0.25, dump_upper = 0.9;
    std::string dump_curve = "exponential", dump_out;
    dump->add_option("--period", dump_period, "cycle length T");
    dump->add_option("--lower", dump_lower, "lower bound");
    dump->add_option("--upper", dump_upper, "upper bound");
    dump->add_option("--iters", dump_iters, "rows to emit (also the ramp max_iter)");
    dump->add_option("--curve", dump_curve, "curve kind");
    dump->add_option("--out", dump_out, "CSV path (default stdout)");

    // mix preview
    auto* mix = app.add_subcommand("mix", "mixing utilities");
    auto* preview = mix->add_subcommand("preview", "write mixed image and masks as PGM");
    std::uint64_t mix_seed = 1;
    double mix_alpha = 0.5;
    int mix_eps = 0, mix_hw = 64;
    std::string mix_out = "preview";
    preview->add_option("--seed", mix_seed, "seed");
    preview->add_option("--alpha", mix_alpha, "interpolation ratio in [0,1]");
    preview->add_option("--eps", mix_eps, "band half-width (0 = auto)");
    preview->add_option("--hw", mix_hw, "image side length");
    preview->add_option("--out", mix_out, "output directory");

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");

    // ablate
    auto* ablate = app.add_subcommand("ablate", "run an ablation axis end to end");
    std::string ab_axis, ab_corpus, ab_out = "ablation";
    std::vector<std::uint64_t> ab_seeds = {1};
    TrainConfig ab_base;
    ablate->add_option("--axis", ab_axis, "curve|period|bounds")->required();
    ablate->add_option("--corpus", ab_corpus, "corpus directory")->required();
    ablate->add_option("--out", ab_out, "output directory");
    ablate->add_option("--seeds", ab_seeds, "seed list");
    ablate->add_option("--stage1-iters", ab_base.stage1_iters, "pre-warm iterations");
    ablate->add_option("--stage2-iters", ab_base.stage2_iters, "second-stage iterations");
    ablate->add_option("--period", ab_base.period_T, "base period T");
    ablate->add_option("--batch", ab_base.batch_size, "batch size");

    // report
    auto* report = app.add_subcommand("report", "build summary/ablation report from runs");
    std::vector<std::string> report_runs;
    std::string report_out = "report";
    report->add_option("--runs", report_runs, "run directories")->required();
    report->add_option("--out", report_out, "output directory");

    try {
        app.parse(argc, argv);

        if (gen->parsed()) {
            cp.W = cp.H;
            return cmd_gen_corpus(cp, gen_out);
        }
        if (train->parsed()) return cmd_train(config_path);
        if (eval->parsed()) return cmd_eval(ckpt, eval_corpus, eval_out);
        if (schedule->parsed() && dump->parsed())
            return cmd_schedule_dump(dump_period, dump_lower, dump_upper, dump_iters,
                                     dump_curve, dump_out);
        if (mix->parsed() && preview->parsed())
            return cmd_mix_preview(mix_seed, mix_alpha, mix_eps, mix_hw, mix_out);
        if (gc->parsed()) return cmd_gradcheck();
        if (ablate->parsed()) return cmd_ablate(ab_axis, ab_corpus, ab_out, ab_seeds, ab_base);
        if (report->parsed()) {
            write_report(report_runs, report_out);
            std::printf("report written to %s\n", report_out.c_str());
            return 0;
        }
        std::fputs("no subcommand action taken; see --help\n", stderr);
        return 2;
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    } catch (const config_error& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const format_error& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 2;
    } catch (const comparability_error& e) {
        std::fprintf(stderr, "comparability error: %s\n", e.what());
        return 2;
    } catch (const numeric_error& e) {
        std::fprintf(stderr, "numeric failure: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
