#pragma once

#include "valor/schema.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace valor::datagen {

enum class Speaker { Customer, Agent };

struct Utterance {
    Speaker speaker = Speaker::Customer;
    std::string text;

    bool operator==(const Utterance&) const = default;
};

struct LabelPair {
    int aspect = 0;
    int severity = 0;

    bool operator==(const LabelPair&) const = default;
    auto operator<=>(const LabelPair&) const = default;
};

// Channel-major (C, H, W) float image.
struct Image {
    int channels = 3;
    int height = 0;
    int width = 0;
    std::vector<float> data;

    float& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    float at(int c, int y, int x) const { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
    bool operator==(const Image&) const = default;
};

struct ConversationSample {
    std::string id;
    std::vector<Utterance> utterances;
    std::optional<std::string> image_ref;
    std::vector<LabelPair> labels;

    // Utterances joined as "customer: ... agent: ..." for tokenization.
    std::string joined_text() const;
    bool operator==(const ConversationSample&) const = default;
};

struct Corpus {
    std::vector<ConversationSample> samples;
    std::map<std::string, Image> images; // keyed by image_ref

    const Image* image_for(const ConversationSample& s) const;
    std::size_t size() const { return samples.size(); }
};

struct GenSpec {
    int total = 2004;
    std::array<int, LabelSchema::kAspects> aspect_histogram = {1662, 117, 112, 77, 23, 13};
    std::array<int, LabelSchema::kSeverities> severity_histogram = {235, 486, 799, 484};
    double multi_label_rate = 0.0;
    // 4478 images over 2004 conversations, clamped to one per sample.
    double image_rate = 1.0;
    std::uint64_t seed = 42;
    int vocab_size = 1000;
    int image_side = 32;
    int min_utterances = 2;
    int max_utterances = 10;

    int pair_count() const;
    // Throws std::invalid_argument naming the inconsistency.
    void validate() const;

    // Near-uniform histograms over all classes; handy for learnability runs.
    static GenSpec balanced(int total, std::uint64_t seed);
};

Corpus generate_corpus(const GenSpec& spec);

struct SplitRatios {
    double train = 0.70;
    double val = 0.10;
    double test = 0.20;
};

struct SplitSizes {
    std::size_t train = 0, val = 0, test = 0;
};

// floor / floor / remainder.
SplitSizes split_sizes(std::size_t n, const SplitRatios& ratios);

struct CorpusSplit {
    Corpus train, val, test;
};

CorpusSplit split_corpus(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed);

// Fleiss' kappa over an items x categories count matrix where every row sums
// to raters_per_item. Throws UndefinedMetric when expected agreement is 1.
double fleiss_kappa(const Eigen::MatrixXi& ratings, int raters_per_item);

struct LabelHistogram {
    std::array<int, LabelSchema::kAspects> aspect{};
    std::array<int, LabelSchema::kSeverities> severity{};
    int pairs = 0;
    int samples = 0;
};

LabelHistogram label_histogram(const Corpus& corpus);

// One training instance per (sample, label pair).
struct Instance {
    std::size_t sample = 0;
    std::size_t pair = 0;
};

std::vector<Instance> expand_pairs(const Corpus& corpus);

// --- persistence ------------------------------------------------------------

// JSON Lines: one sample per line with fields id, utterances[], image_ref,
// labels[]. Images go to side-car files under images/.
void write_corpus(const std::filesystem::path& dir, const Corpus& corpus, const std::string& stem = "corpus");
Corpus read_corpus(const std::filesystem::path& dir, const std::string& stem = "corpus");

std::string sample_to_json_line(const ConversationSample& s);
ConversationSample sample_from_json_line(const std::string& line);

// Side-car tensor: 8-byte header of four little-endian uint16 values
// (channels, height, width, 0) followed by little-endian float32 data.
void write_tensor_file(const std::filesystem::path& path, const Image& img);
Image read_tensor_file(const std::filesystem::path& path);

} // namespace valor::datagen
