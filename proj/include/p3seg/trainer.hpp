#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "p3seg/data.hpp"
#include "p3seg/model.hpp"
#include "p3seg/schedule.hpp"

namespace p3seg {

struct TrainConfig {
    std::uint64_t seed = 1;
    std::string corpus_dir;
    std::string run_dir = "run";
    std::string label;            // defaults to the run_dir stem
    long stage1_iters = 500;
    long stage2_iters = 4000;     // 0 skips stage 2 (pre-warm-only runs)
    int batch_size = 2;
    long period_T = 800;
    double lower_bound = 0.25;
    double upper_bound = 0.9;
    int epsilon = 0;              // 0 = auto (default_epsilon of corpus size)
    double delta = 0.99;          // EMA decay
    double lr = 3e-4;
    double weight_decay = 1e-4;
    bool lambda_squared = false;
    bool invert_paste = false;
    std::string curve = "exponential";
    bool use_boundary_loss = true; // off = stage-2 loss without the band term
    bool carry_teacher = false;    // keep the stage-1 teacher instead of re-copying
    int threads = 1;
    double grad_clip = 10.0;
    std::vector<int> widths = {8, 16};

    void validate() const; // config_error on out-of-range fields
    static TrainConfig from_json_file(const std::string& path);
    std::string to_json() const;
};

struct TrainState {
    long iter = 0; // global step counter across both stages
    ModelParams student;
    ModelParams teacher;
    AdamState opt;
};

TrainState init_state(const TrainConfig& config, const Corpus& corpus);

// Pre-warm: supervised CE+Dice plus lambda-ramped pseudo-label branch, one
// Adam step and one EMA update per iteration. Log rows are
// iter,stage,alpha,lambda,lr,loss. Throws numeric_error on non-finite loss.
void run_stage1(const TrainConfig& config, const Corpus& corpus, TrainState& state,
                std::ostream* log_csv);

// Mixing stage: per sample pair draw a mix plan at alpha(iter), build the mixed
// image and pseudo-label mix, and minimize the boundary-focused composite.
void run_stage2(const TrainConfig& config, const Corpus& corpus, TrainState& state,
                std::ostream* log_csv);

struct EvalSummary {
    double mean_dice = 0.0;
    double mean_jaccard = 0.0;
    double mean_hd95 = 0.0;
    double mean_asd = 0.0;
    int rows = 0;                // (sample, foreground class) pairs scored
    int surface_defined_rows = 0;
};

// Scores the model on the test split; writes one CSV row per sample/class
// plus a summary row when csv_path is nonempty.
EvalSummary evaluate(const ModelParams& model, const Corpus& corpus,
                     const std::string& csv_path);

// Full pipeline: stage 1, stage 2, evaluation; writes config.json, log.csv,
// checkpoints, metrics.csv, and run.json into config.run_dir.
EvalSummary run_training(const TrainConfig& config);

// Canonical corpus fingerprint used to assert comparability across runs.
std::uint64_t corpus_signature(const CorpusManifest& manifest);

} // namespace p3seg
