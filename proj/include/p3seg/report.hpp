#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace p3seg {

// Runs that are compared in one table must share the same test split.
struct comparability_error : std::runtime_error {
    explicit comparability_error(const std::string& msg) : std::runtime_error(msg) {}
};

// One alpha-over-iterations series parsed from a `schedule dump` CSV.
struct ScheduleSeries {
    std::string label;
    std::vector<double> iters;
    std::vector<double> alpha;
};

// Parses the CSV written by `schedule dump`. Throws format_error on a
// missing header or malformed rows.
ScheduleSeries parse_schedule_csv(const std::string& path);

// Line plot of one or more alpha curves as a standalone SVG. Output bytes
// depend only on the inputs.
void plot_schedule(const std::vector<ScheduleSeries>& series, const std::string& svg_path);

struct AblationRow {
    std::string label;
    double dice = 0.0;
    double jaccard = 0.0;
    double hd95 = 0.0;
    double asd = 0.0;
};

struct AblationTable {
    std::vector<AblationRow> rows; // sorted by label
};

// Collects run.json summaries from completed run directories; throws
// comparability_error when the corpus signatures disagree.
AblationTable build_ablation_table(const std::vector<std::string>& run_dirs);

void write_ablation_markdown(const AblationTable& table, const std::string& path);

// `p3seg report`: summary.md + schedule.svg + ablation.md under out_dir.
void write_report(const std::vector<std::string>& run_dirs, const std::string& out_dir);

} // namespace p3seg
