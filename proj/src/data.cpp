#include "p3seg/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "json.hpp"
#include "p3seg/errors.hpp"
#include "p3seg/pgm.hpp"

namespace fs = std::filesystem;

namespace p3seg {

std::string split_to_string(Split s) {
    switch (s) {
        case Split::labeled: return "labeled";
        case Split::unlabeled: return "unlabeled";
        case Split::test: return "test";
    }
    return "unlabeled";
}

Split split_from_string(const std::string& s) {
    if (s == "labeled") return Split::labeled;
    if (s == "unlabeled") return Split::unlabeled;
    if (s == "test") return Split::test;
    throw format_error("unknown split name: " + s);
}

namespace {

std::uint64_t fnv64(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

// One wobbly ellipse; rings carry a second (scaled) boundary with a cavity
// class inside.
struct Shape {
    double cy, cx;
    double ra, rb;
    double rot;
    double amp;
    int lobes;
    double phase;
    double inner_scale; // 0 = plain blob
    int cls;            // ring band / blob class
    int inner_cls;

    double extent() const { return std::max(ra, rb) * (1.0 + amp); }

    // 0 = outside, otherwise the class at (y, x)
    int classify(double y, double x) const {
        const double dy = y - cy, dx = x - cx;
        const double c = std::cos(rot), s = std::sin(rot);
        const double ux = (c * dx + s * dy) / ra;
        const double uy = (-s * dx + c * dy) / rb;
        const double rho = std::sqrt(ux * ux + uy * uy);
        const double theta = std::atan2(uy, ux);
        const double limit = 1.0 + amp * std::sin(lobes * theta + phase);
        if (rho > limit) return 0;
        if (inner_scale > 0.0 && rho <= inner_scale * limit) return inner_cls;
        return cls;
    }
};

Shape random_shape(Rng& rng, double rmin, double rmax, int H, int W) {
    Shape sh{};
    sh.ra = rng.uniform(rmin, rmax);
    sh.rb = rng.uniform(rmin, rmax);
    sh.rot = rng.uniform(0.0, 3.14159265358979);
    sh.amp = rng.uniform(0.05, 0.15);
    sh.lobes = 2 + static_cast<int>(rng.uniform_int(3));
    sh.phase = rng.uniform(0.0, 6.28318530717959);
    const double margin = sh.extent() + 2.0;
    sh.cy = rng.uniform(margin, H - margin);
    sh.cx = rng.uniform(margin, W - margin);
    return sh;
}

bool overlaps(const Shape& a, const Shape& b) {
    const double dy = a.cy - b.cy, dx = a.cx - b.cx;
    return std::sqrt(dy * dy + dx * dx) < a.extent() + b.extent() + 3.0;
}

// Place a shape that avoids the ones already accepted; shrinks the radius
// range when crowded so mandatory shapes always land.
bool place_shape(Rng& rng, std::vector<Shape>& placed, double rmin, double rmax, int H,
                 int W, Shape& out, bool mandatory) {
    for (int round = 0; round < 4; ++round) {
        for (int attempt = 0; attempt < 50; ++attempt) {
            Shape sh = random_shape(rng, rmin, rmax, H, W);
            bool ok = true;
            for (const Shape& p : placed)
                if (overlaps(sh, p)) {
                    ok = false;
                    break;
                }
            if (ok) {
                out = sh;
                return true;
            }
        }
        if (!mandatory) return false;
        rmin *= 0.8;
        rmax *= 0.8;
    }
    return false;
}

} // namespace

Sample synthesize_sample(const CorpusParams& cp, const std::string& id) {
    Rng rng = Rng::derive(cp.seed, "sample", fnv64(id));
    const int H = cp.H, W = cp.W;
    const double m = std::min(H, W);

    std::vector<Shape> shapes;
    if (cp.n_classes == 2) {
        const int count = 1 + static_cast<int>(rng.uniform_int(3));
        for (int i = 0; i < count; ++i) {
            Shape sh;
            if (place_shape(rng, shapes, 0.08 * m, 0.14 * m, H, W, sh, i == 0)) {
                sh.cls = 1;
                sh.inner_scale = 0.0;
                shapes.push_back(sh);
            }
        }
    } else {
        // nested ring (band = class 2, cavity = class 1), mimicking a
        // myocardium ring around a ventricle cavity
        Shape ring;
        if (!place_shape(rng, shapes, 0.14 * m, 0.21 * m, H, W, ring, true))
            throw config_error("image too small to place the primary structure");
        ring.cls = 2;
        ring.inner_cls = 1;
        ring.inner_scale = rng.uniform(0.50, 0.68);
        shapes.push_back(ring);

        if (cp.n_classes >= 4) {
            Shape blob;
            if (place_shape(rng, shapes, 0.08 * m, 0.13 * m, H, W, blob, true)) {
                blob.cls = 3;
                blob.inner_scale = 0.0;
                shapes.push_back(blob);
            }
            if (rng.uniform01() < 0.5) {
                Shape extra;
                if (place_shape(rng, shapes, 0.06 * m, 0.09 * m, H, W, extra, false)) {
                    extra.cls = 3;
                    extra.inner_scale = 0.0;
                    shapes.push_back(extra);
                }
            }
        } else if (rng.uniform01() < 0.5) {
            Shape extra;
            if (place_shape(rng, shapes, 0.07 * m, 0.11 * m, H, W, extra, false)) {
                extra.cls = 1 + static_cast<int>(rng.uniform_int(2));
                extra.inner_scale = 0.0;
                shapes.push_back(extra);
            }
        }
    }

    // intensity bands per class, well separated relative to the noise
    std::vector<double> band(cp.n_classes);
    band[0] = 0.12;
    for (int c = 1; c < cp.n_classes; ++c)
        band[c] = 0.20 + 0.20 * c + rng.uniform(-0.03, 0.03);
    const double gx = rng.uniform(-0.12, 0.12);
    const double gy = rng.uniform(-0.12, 0.12);

    Sample sample;
    sample.id = id;
    sample.image = Tensor(1, H, W);
    sample.label = LabelMap(H, W);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x) {
            int cls = 0;
            for (const Shape& sh : shapes) {
                const int c = sh.classify(y, x);
                if (c != 0) {
                    cls = c;
                    break;
                }
            }
            sample.label->at(y, x) = cls;
            double v = band[cls];
            if (cls == 0)
                v += gx * (static_cast<double>(x) / W - 0.5) +
                     gy * (static_cast<double>(y) / H - 0.5);
            v += 0.05 * rng.normal(); // texture noise
            sample.image.at(0, y, x) = std::clamp(v, 0.0, 1.0);
        }
    return sample;
}

namespace {

std::string pad4(int v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d", v);
    return buf;
}

} // namespace

CorpusManifest generate_corpus(const CorpusParams& params, const std::string& dir) {
    if (!(params.labeled_fraction > 0.0 && params.labeled_fraction < 1.0))
        throw config_error("labeled_fraction must be in (0,1)");
    if (params.n_classes < 2 || params.n_classes > 4)
        throw config_error("n_classes must be 2, 3, or 4");
    if (params.N < 2 || params.test_count < 1)
        throw config_error("corpus needs at least 2 training and 1 test samples");
    if (params.H < 16 || params.W < 16)
        throw config_error("corpus images must be at least 16x16");

    CorpusManifest mf;
    mf.seed = params.seed;
    mf.H = params.H;
    mf.W = params.W;
    mf.n_classes = params.n_classes;
    mf.total = params.N;
    mf.labeled_count =
        std::max<int>(1, static_cast<int>(std::lround(params.labeled_fraction * params.N)));
    mf.test_count = params.test_count;

    for (int i = 0; i < params.N; ++i)
        mf.samples.push_back(
            {"train_" + pad4(i), i < mf.labeled_count ? Split::labeled : Split::unlabeled});
    for (int i = 0; i < params.test_count; ++i)
        mf.samples.push_back({"test_" + pad4(i), Split::test});

    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "labels");

    for (const ManifestEntry& e : mf.samples) {
        Sample s = synthesize_sample(params, e.id);
        if (e.split == Split::unlabeled) s.label.reset(); // truly unlabeled on disk
        save_sample(dir, s);
    }

    nlohmann::json j;
    j["seed"] = mf.seed;
    j["H"] = mf.H;
    j["W"] = mf.W;
    j["n_classes"] = mf.n_classes;
    j["N"] = mf.total;
    j["N_s"] = mf.labeled_count;
    j["test_count"] = mf.test_count;
    nlohmann::json arr = nlohmann::json::array();
    for (const ManifestEntry& e : mf.samples)
        arr.push_back({{"id", e.id}, {"split", split_to_string(e.split)}});
    j["samples"] = arr;

    std::ofstream out(fs::path(dir) / "manifest.json", std::ios::trunc);
    if (!out) throw format_error("cannot write manifest in " + dir);
    out << j.dump(2) << "\n";
    return mf;
}

CorpusManifest load_manifest(const std::string& dir) {
    std::ifstream in(fs::path(dir) / "manifest.json");
    if (!in) throw format_error("missing manifest.json in " + dir);
    nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw format_error("malformed manifest.json in " + dir);

    CorpusManifest mf;
    try {
        mf.seed = j.at("seed").get<std::uint64_t>();
        mf.H = j.at("H").get<int>();
        mf.W = j.at("W").get<int>();
        mf.n_classes = j.at("n_classes").get<int>();
        mf.total = j.at("N").get<int>();
        mf.labeled_count = j.at("N_s").get<int>();
        mf.test_count = j.at("test_count").get<int>();
        for (const auto& e : j.at("samples"))
            mf.samples.push_back(
                {e.at("id").get<std::string>(), split_from_string(e.at("split"))});
    } catch (const nlohmann::json::exception& e) {
        throw format_error(std::string("manifest.json missing fields: ") + e.what());
    }

    std::vector<std::string> ids;
    for (const auto& e : mf.samples) ids.push_back(e.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        throw format_error("duplicate sample ids in manifest");
    return mf;
}

void save_sample(const std::string& dir, const Sample& sample) {
    if (sample.id.empty()) throw config_error("save_sample: sample needs an id");
    fs::create_directories(fs::path(dir) / "images");
    save_image_pgm((fs::path(dir) / "images" / (sample.id + ".pgm")).string(), sample.image);
    if (sample.label) {
        fs::create_directories(fs::path(dir) / "labels");
        save_label_pgm((fs::path(dir) / "labels" / (sample.id + ".pgm")).string(),
                       *sample.label);
    }
}

Sample load_sample(const std::string& dir, const CorpusManifest& manifest,
                   const std::string& id) {
    auto it = std::find_if(manifest.samples.begin(), manifest.samples.end(),
                           [&](const ManifestEntry& e) { return e.id == id; });
    if (it == manifest.samples.end()) throw config_error("unknown sample id: " + id);

    Sample s;
    s.id = id;
    s.image = load_image_pgm((fs::path(dir) / "images" / (id + ".pgm")).string());
    if (it->split != Split::unlabeled)
        s.label = load_label_pgm((fs::path(dir) / "labels" / (id + ".pgm")).string(),
                                 manifest.n_classes);
    return s;
}

Corpus load_corpus(const std::string& dir) {
    Corpus corpus;
    corpus.manifest = load_manifest(dir);
    for (const ManifestEntry& e : corpus.manifest.samples) {
        Sample s = load_sample(dir, corpus.manifest, e.id);
        corpus.images.emplace(e.id, std::move(s.image));
        if (s.label) corpus.labels.emplace(e.id, std::move(*s.label));
        switch (e.split) {
            case Split::labeled: corpus.labeled_ids.push_back(e.id); break;
            case Split::unlabeled: corpus.unlabeled_ids.push_back(e.id); break;
            case Split::test: corpus.test_ids.push_back(e.id); break;
        }
    }
    return corpus;
}

BatchIterator::BatchIterator(const CorpusManifest& manifest, int batch_size,
                             std::uint64_t seed)
    : batch_size_(batch_size), seed_(seed) {
    if (batch_size < 1) throw config_error("batch_size must be >= 1");
    for (const ManifestEntry& e : manifest.samples) {
        if (e.split == Split::labeled) labeled_ids_.push_back(e.id);
        if (e.split == Split::unlabeled) unlabeled_ids_.push_back(e.id);
    }
    if (labeled_ids_.empty() || unlabeled_ids_.empty())
        throw config_error("batch iterator needs nonempty labeled and unlabeled splits");
}

BatchIterator::Batch BatchIterator::at(std::uint64_t iter) const {
    Rng rng = Rng::derive(seed_, "batch", iter);
    Batch b;
    for (int i = 0; i < batch_size_; ++i)
        b.labeled.push_back(labeled_ids_[rng.uniform_int(labeled_ids_.size())]);
    for (int i = 0; i < batch_size_; ++i)
        b.unlabeled.push_back(unlabeled_ids_[rng.uniform_int(unlabeled_ids_.size())]);
    return b;
}

} // namespace p3seg
