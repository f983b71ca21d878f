#include "p3seg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <thread>

#include "json.hpp"
#include "p3seg/errors.hpp"
#include "p3seg/losses.hpp"
#include "p3seg/metrics.hpp"
#include "p3seg/mixer.hpp"

namespace fs = std::filesystem;

namespace p3seg {

void TrainConfig::validate() const {
    if (corpus_dir.empty()) throw config_error("corpus_dir is required");
    if (stage1_iters < 0) throw config_error("stage1_iters must be >= 0");
    if (stage2_iters < 0) throw config_error("stage2_iters must be >= 0");
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    if (stage2_iters > 0 && period_T < 2) throw config_error("period_T must be >= 2");
    if (!(delta >= 0.0 && delta <= 1.0)) throw config_error("delta must be in [0,1]");
    if (lr <= 0.0) throw config_error("lr must be positive");
    if (weight_decay < 0.0) throw config_error("weight_decay must be >= 0");
    if (threads < 1) throw config_error("threads must be >= 1");
    if (epsilon < 0) throw config_error("epsilon must be >= 0");
    if (widths.empty()) throw config_error("widths must be nonempty");
    curve_from_string(curve); // validates the name
    if (stage2_iters > 0) solve_curve(period_T, lower_bound, upper_bound);
}

TrainConfig TrainConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw config_error("cannot open config: " + path);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw config_error("malformed JSON config: " + path);

    TrainConfig c;
    try {
        for (auto it = j.begin(); it != j.end(); ++it) {
            const std::string& k = it.key();
            if (k == "seed") c.seed = it->get<std::uint64_t>();
            else if (k == "corpus_dir") c.corpus_dir = it->get<std::string>();
            else if (k == "run_dir") c.run_dir = it->get<std::string>();
            else if (k == "label") c.label = it->get<std::string>();
            else if (k == "stage1_iters") c.stage1_iters = it->get<long>();
            else if (k == "stage2_iters") c.stage2_iters = it->get<long>();
            else if (k == "batch_size") c.batch_size = it->get<int>();
            else if (k == "period_T") c.period_T = it->get<long>();
            else if (k == "lower_bound") c.lower_bound = it->get<double>();
            else if (k == "upper_bound") c.upper_bound = it->get<double>();
            else if (k == "epsilon") c.epsilon = it->get<int>();
            else if (k == "delta") c.delta = it->get<double>();
            else if (k == "lr") c.lr = it->get<double>();
            else if (k == "weight_decay") c.weight_decay = it->get<double>();
            else if (k == "lambda_squared") c.lambda_squared = it->get<bool>();
            else if (k == "invert_paste") c.invert_paste = it->get<bool>();
            else if (k == "curve") c.curve = it->get<std::string>();
            else if (k == "use_boundary_loss") c.use_boundary_loss = it->get<bool>();
            else if (k == "carry_teacher") c.carry_teacher = it->get<bool>();
            else if (k == "threads") c.threads = it->get<int>();
            else if (k == "grad_clip") c.grad_clip = it->get<double>();
            else if (k == "widths") c.widths = it->get<std::vector<int>>();
            else throw config_error("unknown config key: " + k);
        }
    } catch (const nlohmann::json::exception& e) {
        throw config_error(std::string("bad config value: ") + e.what());
    }
    if (c.label.empty()) c.label = fs::path(c.run_dir).filename().string();
    c.validate();
    return c;
}

std::string TrainConfig::to_json() const {
    nlohmann::json j;
    j["seed"] = seed;
    j["corpus_dir"] = corpus_dir;
    j["run_dir"] = run_dir;
    j["label"] = label;
    j["stage1_iters"] = stage1_iters;
    j["stage2_iters"] = stage2_iters;
    j["batch_size"] = batch_size;
    j["period_T"] = period_T;
    j["lower_bound"] = lower_bound;
    j["upper_bound"] = upper_bound;
    j["epsilon"] = epsilon;
    j["delta"] = delta;
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["lambda_squared"] = lambda_squared;
    j["invert_paste"] = invert_paste;
    j["curve"] = curve;
    j["use_boundary_loss"] = use_boundary_loss;
    j["carry_teacher"] = carry_teacher;
    j["threads"] = threads;
    j["grad_clip"] = grad_clip;
    j["widths"] = widths;
    return j.dump(2) + "\n";
}

namespace {

void clip_gradient(std::vector<double>& grad, double max_norm) {
    double sq = 0.0;
    for (double g : grad) sq += g * g;
    const double norm = std::sqrt(sq);
    if (norm > max_norm && norm > 0.0) {
        const double scale = max_norm / norm;
        for (double& g : grad) g *= scale;
    }
}

void log_row(std::ostream* log, long iter, int stage, double alpha, double lambda,
             double lr, double loss) {
    if (!log) return;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%ld,%d,%.10g,%.10g,%.10g,%.10g\n", iter, stage, alpha,
                  lambda, lr, loss);
    *log << buf;
}

// Runs fn(slot) for every slot, fanned out over `threads` workers with a
// slot-strided partition; results land in per-slot buffers so the reduction
// order never depends on the thread count.
void for_each_slot(int slots, int threads, const std::function<void(int)>& fn) {
    const int workers = std::max(1, std::min(threads, slots));
    if (workers == 1) {
        for (int s = 0; s < slots; ++s) fn(s);
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&, w] {
            for (int s = w; s < slots; s += workers) fn(s);
        });
    for (auto& t : pool) t.join();
}

int effective_epsilon(const TrainConfig& config, const Corpus& corpus) {
    return config.epsilon > 0 ? config.epsilon
                              : default_epsilon(corpus.manifest.H, corpus.manifest.W);
}

} // namespace

std::uint64_t corpus_signature(const CorpusManifest& manifest) {
    std::string canon = std::to_string(manifest.seed) + "|" + std::to_string(manifest.H) +
                        "x" + std::to_string(manifest.W) + "|" +
                        std::to_string(manifest.n_classes) + "|" +
                        std::to_string(manifest.total) + "|" +
                        std::to_string(manifest.labeled_count) + "|";
    for (const auto& e : manifest.samples)
        if (e.split == Split::test) canon += e.id + ",";
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : canon) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

TrainState init_state(const TrainConfig& config, const Corpus& corpus) {
    NetworkSpec spec;
    spec.in_channels = 1;
    spec.class_count = corpus.manifest.n_classes;
    spec.widths = config.widths;

    Rng rng = Rng::derive(config.seed, "init");
    TrainState st;
    st.student = build_model(spec, rng);
    st.teacher = st.student;
    return st;
}

void run_stage1(const TrainConfig& config, const Corpus& corpus, TrainState& state,
                std::ostream* log_csv) {
    const int B = config.batch_size;
    const BatchIterator batches(corpus.manifest, B, config.seed);
    const RampParams ramp{config.stage1_iters, 0.1, 0.9, config.lambda_squared};

    for (long it = 0; it < config.stage1_iters; ++it) {
        const auto batch = batches.at(static_cast<std::uint64_t>(it));
        const double lambda = lambda_at(ramp, it);
        const double lr_eff = config.lr * lr_factor_at(ramp, it);

        std::vector<std::vector<double>> slot_grad(B);
        std::vector<double> slot_loss(B, 0.0);
        for_each_slot(B, config.threads, [&](int s) {
            const Tensor& x_sup = corpus.images.at(batch.labeled[s]);
            const LabelMap& y_sup = corpus.labels.at(batch.labeled[s]);
            const Tensor& x_unsup = corpus.images.at(batch.unlabeled[s]);

            const Tensor t_logits = forward(state.teacher, x_unsup);
            const LabelMap y_pseudo = pseudo_label(t_logits, state.teacher.spec.class_count);

            ForwardCache cache_sup, cache_unsup;
            const Tensor logits_sup = forward(state.student, x_sup, &cache_sup);
            const Tensor logits_unsup = forward(state.student, x_unsup, &cache_unsup);

            const Stage1Loss loss =
                stage1_loss(logits_sup, y_sup, logits_unsup, y_pseudo, lambda);
            slot_loss[s] = loss.value;

            std::vector<double> g = backward(state.student, cache_sup, loss.grad_sup);
            const std::vector<double> gu = backward(state.student, cache_unsup, loss.grad_unsup);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += gu[i];
            slot_grad[s] = std::move(g);
        });

        std::vector<double> grad(state.student.size(), 0.0);
        double loss = 0.0;
        for (int s = 0; s < B; ++s) { // fixed reduction order
            loss += slot_loss[s];
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += slot_grad[s][i];
        }
        loss /= B;
        for (double& g : grad) g /= B;

        if (!std::isfinite(loss))
            throw numeric_error("stage 1 loss is not finite at iter " + std::to_string(it));

        clip_gradient(grad, config.grad_clip);
        adam_step(state.student, grad, state.opt, lr_eff, config.weight_decay);
        ema_update(state.teacher, state.student, config.delta);

        log_row(log_csv, state.iter, 1, 0.0, lambda, lr_eff, loss);
        ++state.iter;
    }
}

void run_stage2(const TrainConfig& config, const Corpus& corpus, TrainState& state,
                std::ostream* log_csv) {
    if (config.stage2_iters == 0) return;

    const int B = config.batch_size;
    const BatchIterator batches(corpus.manifest, B, config.seed);
    const ScheduleParams sched = solve_curve(config.period_T, config.lower_bound,
                                             config.upper_bound,
                                             curve_from_string(config.curve));
    const RampParams ramp{config.stage2_iters, 0.1, 0.9, config.lambda_squared};
    const int H = corpus.manifest.H, W = corpus.manifest.W;
    const int eps = effective_epsilon(config, corpus);

    if (!config.carry_teacher) state.teacher = state.student; // fresh EMA anchor

    for (long it = 0; it < config.stage2_iters; ++it) {
        const auto batch = batches.at(static_cast<std::uint64_t>(config.stage1_iters + it));
        const double alpha = alpha_at(sched, it);
        const double lr_eff = config.lr * lr_factor_at(ramp, it);

        std::vector<std::vector<double>> slot_grad(B);
        std::vector<double> slot_loss(B, 0.0);
        for_each_slot(B, config.threads, [&](int s) {
            const Tensor& x_sup = corpus.images.at(batch.labeled[s]);
            const LabelMap& y_sup = corpus.labels.at(batch.labeled[s]);
            const Tensor& x_unsup = corpus.images.at(batch.unlabeled[s]);

            Rng plan_rng = Rng::derive(config.seed, "mixplan", static_cast<std::uint64_t>(it),
                                       static_cast<std::uint64_t>(s));
            MixPlan plan = make_mix_plan(H, W, alpha, eps, plan_rng);
            if (!config.use_boundary_loss)
                plan.band_mask = Mask(H, W, 0); // mixing-only ablation: no band term

            const Tensor t_logits = forward(state.teacher, x_unsup);
            const LabelMap y_pseudo = pseudo_label(t_logits, state.teacher.spec.class_count);

            const Tensor x_mix = config.invert_paste ? mix_images(x_sup, x_unsup, plan)
                                                     : mix_images(x_unsup, x_sup, plan);
            const LabelMap y_mix = config.invert_paste ? mix_labels(y_sup, y_pseudo, plan)
                                                       : mix_labels(y_pseudo, y_sup, plan);

            ForwardCache cache;
            const Tensor logits = forward(state.student, x_mix, &cache);
            const LossValue loss = stage2_loss(logits, y_mix, plan);
            slot_loss[s] = loss.value;
            slot_grad[s] = backward(state.student, cache, loss.grad);
        });

        std::vector<double> grad(state.student.size(), 0.0);
        double loss = 0.0;
        for (int s = 0; s < B; ++s) {
            loss += slot_loss[s];
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += slot_grad[s][i];
        }
        loss /= B;
        for (double& g : grad) g /= B;

        if (!std::isfinite(loss))
            throw numeric_error("stage 2 loss is not finite at iter " + std::to_string(it));

        clip_gradient(grad, config.grad_clip);
        adam_step(state.student, grad, state.opt, lr_eff, config.weight_decay);
        ema_update(state.teacher, state.student, config.delta);

        log_row(log_csv, state.iter, 2, alpha, 0.0, lr_eff, loss);
        ++state.iter;
    }
}

EvalSummary evaluate(const ModelParams& model, const Corpus& corpus,
                     const std::string& csv_path) {
    const int n = corpus.manifest.n_classes;
    std::string csv = "id,class,dice,jaccard,hd95,asd,surface_defined\n";

    EvalSummary sum;
    double hd_total = 0.0, asd_total = 0.0;
    for (const std::string& id : corpus.test_ids) {
        const Tensor logits = forward(model, corpus.images.at(id));
        const LabelMap pred = pseudo_label(logits, n);
        const LabelMap& gt = corpus.labels.at(id);

        for (const MetricsRow& row : score_sample(pred, gt, n)) {
            char buf[192];
            if (row.surface_defined)
                std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f,%.6f,%.6f,1\n", id.c_str(),
                              row.class_id, row.dice, row.jaccard, row.hd95, row.asd);
            else
                std::snprintf(buf, sizeof buf, "%s,%d,%.6f,%.6f,,,0\n", id.c_str(),
                              row.class_id, row.dice, row.jaccard);
            csv += buf;

            sum.mean_dice += row.dice;
            sum.mean_jaccard += row.jaccard;
            ++sum.rows;
            if (row.surface_defined) {
                hd_total += row.hd95;
                asd_total += row.asd;
                ++sum.surface_defined_rows;
            }
        }
    }
    if (sum.rows > 0) {
        sum.mean_dice /= sum.rows;
        sum.mean_jaccard /= sum.rows;
    }
    if (sum.surface_defined_rows > 0) {
        sum.mean_hd95 = hd_total / sum.surface_defined_rows;
        sum.mean_asd = asd_total / sum.surface_defined_rows;
    }

    char buf[192];
    std::snprintf(buf, sizeof buf, "summary,mean,%.6f,%.6f,%.6f,%.6f,%d\n", sum.mean_dice,
                  sum.mean_jaccard, sum.mean_hd95, sum.mean_asd, sum.surface_defined_rows);
    csv += buf;

    if (!csv_path.empty()) {
        std::ofstream out(csv_path, std::ios::trunc | std::ios::binary);
        if (!out) throw format_error("cannot write metrics CSV: " + csv_path);
        out << csv;
    }
    return sum;
}

EvalSummary run_training(const TrainConfig& config) {
    config.validate();
    const Corpus corpus = load_corpus(config.corpus_dir);

    fs::create_directories(config.run_dir);
    {
        std::ofstream cfg(fs::path(config.run_dir) / "config.json", std::ios::trunc);
        cfg << config.to_json();
    }

    std::ofstream log(fs::path(config.run_dir) / "log.csv", std::ios::trunc | std::ios::binary);
    log << "iter,stage,alpha,lambda,lr,loss\n";

    TrainState state = init_state(config, corpus);
    try {
        run_stage1(config, corpus, state, &log);
        save_checkpoint(state.student, (fs::path(config.run_dir) / "ckpt_stage1").string(),
                        config.seed, state.iter);
        run_stage2(config, corpus, state, &log);
    } catch (const numeric_error&) {
        save_checkpoint(state.student, (fs::path(config.run_dir) / "diagnostic").string(),
                        config.seed, state.iter);
        throw;
    }
    save_checkpoint(state.student, (fs::path(config.run_dir) / "ckpt_final").string(),
                    config.seed, state.iter);

    const EvalSummary sum =
        evaluate(state.student, corpus, (fs::path(config.run_dir) / "metrics.csv").string());

    nlohmann::json run;
    run["label"] = config.label.empty() ? fs::path(config.run_dir).filename().string()
                                        : config.label;
    run["corpus_signature"] = corpus_signature(corpus.manifest);
    run["mean_dice"] = sum.mean_dice;
    run["mean_jaccard"] = sum.mean_jaccard;
    run["mean_hd95"] = sum.mean_hd95;
    run["mean_asd"] = sum.mean_asd;
    run["surface_defined_rows"] = sum.surface_defined_rows;
    run["rows"] = sum.rows;
    std::ofstream rj(fs::path(config.run_dir) / "run.json", std::ios::trunc);
    rj << run.dump(2) << "\n";
    return sum;
}

} // namespace p3seg
