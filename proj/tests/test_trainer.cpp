#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "p3seg/data.hpp"
#include "p3seg/errors.hpp"
#include "p3seg/schedule.hpp"
#include "p3seg/trainer.hpp"

using namespace p3seg;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// shared tiny corpus for trainer tests, built once
const std::string& tiny_corpus_dir() {
    static std::string dir = [] {
        const fs::path p = fs::temp_directory_path() / "p3seg_trainer_corpus";
        fs::remove_all(p);
        CorpusParams cp;
        cp.seed = 11;
        cp.N = 12;
        cp.H = cp.W = 32;
        cp.n_classes = 3;
        cp.labeled_fraction = 0.2; // 2-3 labeled
        cp.test_count = 3;
        generate_corpus(cp, p.string());
        return p.string();
    }();
    return dir;
}

TrainConfig tiny_config(const std::string& run_dir) {
    TrainConfig c;
    c.seed = 5;
    c.corpus_dir = tiny_corpus_dir();
    c.run_dir = run_dir;
    c.label = "tiny";
    c.stage1_iters = 6;
    c.stage2_iters = 10;
    c.batch_size = 2;
    c.period_T = 5;
    c.widths = {2, 3};
    return c;
}

} // namespace

TEST_CASE("config json round trip and unknown keys") {
    const fs::path p = fs::temp_directory_path() / "p3seg_cfg.json";
    {
        std::ofstream out(p);
        out << R"({"seed": 9, "corpus_dir": "/x", "stage1_iters": 3, "stage2_iters": 4,
                   "period_T": 4, "batch_size": 1, "curve": "linear", "widths": [2, 2]})";
    }
    const TrainConfig c = TrainConfig::from_json_file(p.string());
    CHECK(c.seed == 9u);
    CHECK(c.curve == "linear");
    CHECK(c.widths == std::vector<int>{2, 2});

    {
        std::ofstream out(p);
        out << R"({"corpus_dir": "/x", "not_a_field": 1})";
    }
    CHECK_THROWS_AS(TrainConfig::from_json_file(p.string()), config_error);

    {
        std::ofstream out(p);
        out << R"({"corpus_dir": "/x", "batch_size": 0})";
    }
    CHECK_THROWS_AS(TrainConfig::from_json_file(p.string()), config_error);
    fs::remove(p);
}

TEST_CASE("zero stage-1 iterations leave the student at its initialization") {
    const Corpus corpus = load_corpus(tiny_corpus_dir());
    TrainConfig c = tiny_config("unused");
    c.stage1_iters = 0;

    TrainState st = init_state(c, corpus);
    const std::vector<double> init = st.student.values;
    run_stage1(c, corpus, st, nullptr);
    CHECK(st.student.values == init);
    CHECK(st.iter == 0);
}

TEST_CASE("training runs are byte-identical across repeats and thread counts") {
    const fs::path r1 = fs::temp_directory_path() / "p3seg_run1";
    const fs::path r2 = fs::temp_directory_path() / "p3seg_run2";
    const fs::path r4 = fs::temp_directory_path() / "p3seg_run4";
    fs::remove_all(r1);
    fs::remove_all(r2);
    fs::remove_all(r4);

    TrainConfig c1 = tiny_config(r1.string());
    TrainConfig c2 = tiny_config(r2.string());
    TrainConfig c4 = tiny_config(r4.string());
    c2.run_dir = r2.string();
    c4.run_dir = r4.string();
    c4.threads = 2; // same math, different workers

    run_training(c1);
    run_training(c2);
    run_training(c4);

    CHECK(slurp(r1 / "metrics.csv") == slurp(r2 / "metrics.csv"));
    CHECK(slurp(r1 / "log.csv") == slurp(r2 / "log.csv"));
    CHECK(slurp(r1 / "ckpt_final.bin") == slurp(r2 / "ckpt_final.bin"));

    CHECK(slurp(r1 / "metrics.csv") == slurp(r4 / "metrics.csv"));
    CHECK(slurp(r1 / "log.csv") == slurp(r4 / "log.csv"));
    CHECK(slurp(r1 / "ckpt_final.bin") == slurp(r4 / "ckpt_final.bin"));

    fs::remove_all(r2);
    fs::remove_all(r4);

    // the logged stage-2 alpha column replays the schedule exactly
    std::ifstream log(r1 / "log.csv");
    std::string line;
    std::getline(log, line); // header
    const ScheduleParams sched = solve_curve(5, 0.25, 0.9);
    long stage2_row = 0;
    while (std::getline(log, line)) {
        std::stringstream ss(line);
        std::string iter_s, stage_s, alpha_s;
        std::getline(ss, iter_s, ',');
        std::getline(ss, stage_s, ',');
        std::getline(ss, alpha_s, ',');
        if (stage_s == "2") {
            CHECK(std::stod(alpha_s) ==
                  doctest::Approx(alpha_at(sched, stage2_row)).epsilon(1e-9));
            ++stage2_row;
        }
    }
    CHECK(stage2_row == 10);
    fs::remove_all(r1);
}

TEST_CASE("every logged loss is finite and stages are ordered") {
    const fs::path r = fs::temp_directory_path() / "p3seg_run_log";
    fs::remove_all(r);
    run_training(tiny_config(r.string()));

    std::ifstream log(r / "log.csv");
    std::string line;
    std::getline(log, line);
    CHECK(line == "iter,stage,alpha,lambda,lr,loss");
    long rows = 0;
    long prev_iter = -1;
    while (std::getline(log, line)) {
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        const long iter = std::stol(cell);
        CHECK(iter == prev_iter + 1); // monotone global counter
        prev_iter = iter;
        for (int i = 0; i < 4; ++i) std::getline(ss, cell, ',');
        std::getline(ss, cell, ',');
        CHECK(std::isfinite(std::stod(cell)));
        ++rows;
    }
    CHECK(rows == 16); // 6 stage-1 + 10 stage-2
    fs::remove_all(r);
}

TEST_CASE("evaluating the same checkpoint twice writes identical CSV bytes") {
    const Corpus corpus = load_corpus(tiny_corpus_dir());
    TrainConfig c = tiny_config("unused2");
    TrainState st = init_state(c, corpus);

    const fs::path m1 = fs::temp_directory_path() / "p3seg_m1.csv";
    const fs::path m2 = fs::temp_directory_path() / "p3seg_m2.csv";
    evaluate(st.student, corpus, m1.string());
    evaluate(st.student, corpus, m2.string());
    CHECK(slurp(m1) == slurp(m2));

    // perfect predictions would be Dice 100; an untrained net is far from it
    const EvalSummary sum = evaluate(st.student, corpus, "");
    CHECK(sum.rows == 6); // 3 test samples x 2 foreground classes
    CHECK(sum.mean_dice < 95.0);
    fs::remove(m1);
    fs::remove(m2);
}

TEST_CASE("exploding learning rates abort with a diagnostic checkpoint") {
    const fs::path r = fs::temp_directory_path() / "p3seg_run_nan";
    fs::remove_all(r);
    TrainConfig c = tiny_config(r.string());
    c.lr = 1e60; // drives parameters to +-inf and the loss to NaN
    c.grad_clip = 1e30;
    c.stage1_iters = 12;

    CHECK_THROWS_AS(run_training(c), numeric_error);
    CHECK(fs::exists(r / "diagnostic.bin"));
    fs::remove_all(r);
}

TEST_CASE("carry_teacher keeps the stage-1 teacher for stage 2") {
    const Corpus corpus = load_corpus(tiny_corpus_dir());
    TrainConfig c = tiny_config("unused3");

    TrainState fresh = init_state(c, corpus);
    run_stage1(c, corpus, fresh, nullptr);
    TrainState carried = fresh; // same warm state

    TrainConfig c_carry = c;
    c_carry.carry_teacher = true;

    // one stage-2 step each; with carry the teacher starts from the EMA state,
    // without it the teacher is re-anchored to the student
    TrainConfig one_step = c;
    one_step.stage2_iters = 1;
    TrainConfig one_step_carry = c_carry;
    one_step_carry.stage2_iters = 1;

    run_stage2(one_step, corpus, fresh, nullptr);
    run_stage2(one_step_carry, corpus, carried, nullptr);
    // re-anchored teacher starts at the warm student; carried one keeps EMA history
    CHECK(fresh.teacher.values != carried.teacher.values);
}

TEST_CASE("the constant-curve ablation path runs the same loop at fixed alpha") {
    const fs::path r = fs::temp_directory_path() / "p3seg_run_const";
    fs::remove_all(r);
    TrainConfig c = tiny_config(r.string());
    c.curve = "constant";
    c.lower_bound = 0.25;
    c.upper_bound = 0.75;
    run_training(c);

    std::ifstream log(r / "log.csv");
    std::string line;
    std::getline(log, line);
    long stage2_rows = 0;
    while (std::getline(log, line)) {
        std::stringstream ss(line);
        std::string iter_s, stage_s, alpha_s;
        std::getline(ss, iter_s, ',');
        std::getline(ss, stage_s, ',');
        std::getline(ss, alpha_s, ',');
        if (stage_s == "2") {
            CHECK(std::stod(alpha_s) == doctest::Approx(0.5).epsilon(1e-12));
            ++stage2_rows;
        }
    }
    CHECK(stage2_rows == c.stage2_iters);
    fs::remove_all(r);
}

TEST_CASE("corpus signatures detect split changes") {
    const Corpus corpus = load_corpus(tiny_corpus_dir());
    const std::uint64_t sig = corpus_signature(corpus.manifest);
    CHECK(sig == corpus_signature(corpus.manifest));

    CorpusManifest other = corpus.manifest;
    other.samples.push_back({"test_9999", Split::test});
    CHECK(corpus_signature(other) != sig);
}
