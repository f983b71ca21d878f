#include "p3seg/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "p3seg/errors.hpp"
#include "p3seg/schedule.hpp"

namespace fs = std::filesystem;

namespace p3seg {

ScheduleSeries parse_schedule_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw format_error("cannot open schedule CSV: " + path);

    std::string header;
    if (!std::getline(in, header) || header.rfind("iter,alpha", 0) != 0)
        throw format_error("schedule CSV missing iter,alpha header: " + path);

    ScheduleSeries s;
    s.label = fs::path(path).stem().string();
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        double vals[2];
        for (double& v : vals) {
            if (!std::getline(ss, cell, ',')) throw format_error("short row in " + path);
            try {
                v = std::stod(cell);
            } catch (const std::exception&) {
                throw format_error("non-numeric cell in " + path + ": " + cell);
            }
        }
        s.iters.push_back(vals[0]);
        s.alpha.push_back(vals[1]);
    }
    if (s.iters.empty()) throw format_error("schedule CSV has no rows: " + path);
    return s;
}

namespace {

const char* kSeriesColors[] = {"#c0392b", "#2980b9", "#27ae60", "#8e44ad",
                               "#d35400", "#16a085", "#2c3e50"};

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return buf;
}

} // namespace

void plot_schedule(const std::vector<ScheduleSeries>& series, const std::string& svg_path) {
    if (series.empty()) throw config_error("plot_schedule: no series given");

    const double W = 720, H = 360;
    const double ml = 56, mr = 16, mt = 20, mb = 40; // margins
    const double pw = W - ml - mr, ph = H - mt - mb;

    double xmax = 1.0;
    for (const auto& s : series)
        for (double v : s.iters) xmax = std::max(xmax, v);
    const double ymin = 0.0, ymax = 1.0;

    auto px = [&](double x) { return ml + pw * (x / xmax); };
    auto py = [&](double y) { return mt + ph * (1.0 - (y - ymin) / (ymax - ymin)); };

    std::string svg;
    svg += "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 720 360\" "
           "font-family=\"monospace\" font-size=\"12\">\n";
    svg += "<rect width=\"720\" height=\"360\" fill=\"white\"/>\n";

    // axes and gridlines at alpha = 0, 0.25, 0.5, 0.75, 1
    for (int i = 0; i <= 4; ++i) {
        const double y = i * 0.25;
        svg += "<line x1=\"" + fmt(px(0)) + "\" y1=\"" + fmt(py(y)) + "\" x2=\"" +
               fmt(px(xmax)) + "\" y2=\"" + fmt(py(y)) +
               "\" stroke=\"#dddddd\" stroke-width=\"1\"/>\n";
        svg += "<text x=\"" + fmt(ml - 34) + "\" y=\"" + fmt(py(y) + 4) + "\">" + fmt(y) +
               "</text>\n";
    }
    svg += "<line x1=\"" + fmt(px(0)) + "\" y1=\"" + fmt(py(0)) + "\" x2=\"" + fmt(px(xmax)) +
           "\" y2=\"" + fmt(py(0)) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<line x1=\"" + fmt(px(0)) + "\" y1=\"" + fmt(py(0)) + "\" x2=\"" + fmt(px(0)) +
           "\" y2=\"" + fmt(py(1)) + "\" stroke=\"black\" stroke-width=\"1\"/>\n";
    svg += "<text x=\"" + fmt(ml + pw / 2 - 30) + "\" y=\"" + fmt(H - 10) +
           "\">iteration</text>\n";
    svg += "<text x=\"" + fmt(px(xmax) - 40) + "\" y=\"" + fmt(py(0) + 16) + "\">" +
           fmt(xmax) + "</text>\n";

    for (std::size_t k = 0; k < series.size(); ++k) {
        const auto& s = series[k];
        const char* color = kSeriesColors[k % (sizeof kSeriesColors / sizeof *kSeriesColors)];
        std::string pts;
        for (std::size_t i = 0; i < s.iters.size(); ++i)
            pts += fmt(px(s.iters[i])) + "," + fmt(py(s.alpha[i])) + " ";
        svg += "<polyline fill=\"none\" stroke=\"" + std::string(color) +
               "\" stroke-width=\"1.5\" points=\"" + pts + "\"/>\n";
        svg += "<text x=\"" + fmt(ml + 8) + "\" y=\"" + fmt(mt + 14 + 16 * k) +
               "\" fill=\"" + color + "\">" + s.label + "</text>\n";
    }
    svg += "</svg>\n";

    std::ofstream out(svg_path, std::ios::trunc | std::ios::binary);
    if (!out) throw format_error("cannot write SVG: " + svg_path);
    out << svg;
}

namespace {

struct RunInfo {
    std::string label;
    std::uint64_t corpus_sig = 0;
    AblationRow row;
};

RunInfo load_run(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "run.json");
    if (!in) throw format_error("missing run.json in " + dir);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw format_error("malformed run.json in " + dir);

    RunInfo info;
    try {
        info.label = j.at("label").get<std::string>();
        info.corpus_sig = j.at("corpus_signature").get<std::uint64_t>();
        info.row.label = info.label;
        info.row.dice = j.at("mean_dice").get<double>();
        info.row.jaccard = j.at("mean_jaccard").get<double>();
        info.row.hd95 = j.at("mean_hd95").get<double>();
        info.row.asd = j.at("mean_asd").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw format_error("run.json missing fields in " + dir + ": " + e.what());
    }
    return info;
}

} // namespace

AblationTable build_ablation_table(const std::vector<std::string>& run_dirs) {
    if (run_dirs.empty()) throw config_error("build_ablation_table: no run dirs given");

    // Runs sharing a label are seed repeats of one variant; average them.
    std::vector<std::pair<AblationRow, int>> grouped;
    std::uint64_t sig = 0;
    bool first = true;
    for (const std::string& dir : run_dirs) {
        const RunInfo info = load_run(dir);
        if (first) {
            sig = info.corpus_sig;
            first = false;
        } else if (info.corpus_sig != sig) {
            throw comparability_error("runs were evaluated on different test splits: " + dir);
        }
        auto it = std::find_if(grouped.begin(), grouped.end(), [&](const auto& g) {
            return g.first.label == info.label;
        });
        if (it == grouped.end()) {
            grouped.emplace_back(info.row, 1);
        } else {
            it->first.dice += info.row.dice;
            it->first.jaccard += info.row.jaccard;
            it->first.hd95 += info.row.hd95;
            it->first.asd += info.row.asd;
            ++it->second;
        }
    }

    AblationTable table;
    for (auto& [row, count] : grouped) {
        row.dice /= count;
        row.jaccard /= count;
        row.hd95 /= count;
        row.asd /= count;
        table.rows.push_back(row);
    }
    std::sort(table.rows.begin(), table.rows.end(),
              [](const AblationRow& a, const AblationRow& b) { return a.label < b.label; });
    return table;
}

void write_ablation_markdown(const AblationTable& table, const std::string& path) {
    std::string md = "| variant | Dice | Jaccard | HD95 | ASD |\n";
    md += "|---|---|---|---|---|\n";
    for (const AblationRow& r : table.rows) {
        char buf[192];
        std::snprintf(buf, sizeof buf, "| %s | %.2f | %.2f | %.2f | %.2f |\n",
                      r.label.c_str(), r.dice, r.jaccard, r.hd95, r.asd);
        md += buf;
    }
    std::ofstream out(path, std::ios::trunc | std::ios::binary);
    if (!out) throw format_error("cannot write markdown: " + path);
    out << md;
}

void write_report(const std::vector<std::string>& run_dirs, const std::string& out_dir) {
    const AblationTable table = build_ablation_table(run_dirs);
    fs::create_directories(out_dir);
    write_ablation_markdown(table, (fs::path(out_dir) / "ablation.md").string());

    // replay each run's alpha curve over two periods from its config
    std::vector<ScheduleSeries> series;
    for (const std::string& dir : run_dirs) {
        std::ifstream in(fs::path(dir) / "config.json");
        if (!in) throw format_error("missing config.json in " + dir);
        nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
        if (j.is_discarded()) throw format_error("malformed config.json in " + dir);
        const long T = j.value("period_T", 800L);
        const double lo = j.value("lower_bound", 0.25);
        const double hi = j.value("upper_bound", 0.9);
        const std::string curve = j.value("curve", std::string("exponential"));

        ScheduleSeries s;
        s.label = j.value("label", dir);
        const ScheduleParams p = solve_curve(T, lo, hi, curve_from_string(curve));
        const long span = 2 * T;
        const long step = std::max(1L, span / 512);
        for (long it = 0; it < span; it += step) {
            s.iters.push_back(static_cast<double>(it));
            s.alpha.push_back(alpha_at(p, it));
        }
        series.push_back(std::move(s));
    }
    plot_schedule(series, (fs::path(out_dir) / "schedule.svg").string());

    std::string md = "# Run summary\n\n";
    for (const std::string& dir : run_dirs) {
        const RunInfo info = load_run(dir);
        char buf[256];
        std::snprintf(buf, sizeof buf,
                      "- **%s**: Dice %.2f, Jaccard %.2f, HD95 %.2f, ASD %.2f\n",
                      info.label.c_str(), info.row.dice, info.row.jaccard, info.row.hd95,
                      info.row.asd);
        md += buf;
    }
    md += "\nSee `ablation.md` for the table and `schedule.svg` for the alpha curves.\n";
    std::ofstream out(fs::path(out_dir) / "summary.md", std::ios::trunc | std::ios::binary);
    out << md;
}

} // namespace p3seg
