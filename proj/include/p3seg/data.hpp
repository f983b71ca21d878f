#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "p3seg/rng.hpp"
#include "p3seg/tensor.hpp"

namespace p3seg {

enum class Split { labeled, unlabeled, test };

std::string split_to_string(Split s);
Split split_from_string(const std::string& s);

struct Sample {
    Tensor image;
    std::optional<LabelMap> label;
    std::string id;
};

struct ManifestEntry {
    std::string id;
    Split split = Split::unlabeled;
};

struct CorpusManifest {
    std::uint64_t seed = 0;
    int H = 0, W = 0;
    int n_classes = 0;
    int total = 0;         // training samples (labeled + unlabeled)
    int labeled_count = 0;
    int test_count = 0;
    std::vector<ManifestEntry> samples;
};

struct CorpusParams {
    std::uint64_t seed = 42;
    int N = 200;
    int H = 64, W = 64;
    int n_classes = 4;             // {2,3,4} supported
    double labeled_fraction = 0.05;
    int test_count = 40;
};

// Writes manifest.json, images/<id>.pgm for every sample, and
// labels/<id>.pgm for labeled and test samples. Each sample's randomness is
// derived from (seed, id), so any subset regenerates identically.
CorpusManifest generate_corpus(const CorpusParams& params, const std::string& dir);

// One deterministic sample (image + label) without touching the disk.
Sample synthesize_sample(const CorpusParams& params, const std::string& id);

CorpusManifest load_manifest(const std::string& dir);
Sample load_sample(const std::string& dir, const CorpusManifest& manifest,
                   const std::string& id);

// Writes images/<id>.pgm and, when the sample carries a label,
// labels/<id>.pgm under dir. load_sample(save_sample(x)) reproduces
// intensities within 1/65535 and labels exactly.
void save_sample(const std::string& dir, const Sample& sample);

// Whole corpus resident in memory; ~6 MB at the default size.
struct Corpus {
    CorpusManifest manifest;
    std::unordered_map<std::string, Tensor> images;
    std::unordered_map<std::string, LabelMap> labels; // labeled + test ids only
    std::vector<std::string> labeled_ids, unlabeled_ids, test_ids;
};

Corpus load_corpus(const std::string& dir);

// Counter-based sampler: the batch at step `iter` is a pure function of
// (seed, iter), with ids drawn with replacement from each split.
struct BatchIterator {
    struct Batch {
        std::vector<std::string> labeled;
        std::vector<std::string> unlabeled;
    };

    BatchIterator(const CorpusManifest& manifest, int batch_size, std::uint64_t seed);
    Batch at(std::uint64_t iter) const;

private:
    std::vector<std::string> labeled_ids_, unlabeled_ids_;
    int batch_size_;
    std::uint64_t seed_;
};

} // namespace p3seg
