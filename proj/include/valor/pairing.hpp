#pragma once

#include "valor/datagen.hpp"
#include "valor/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace valor::pairing {

struct Weights {
    double text = 0.5;
    double aspect = 0.25;
    double severity = 0.25;
};

struct Thresholds {
    double text = 0.20;
    double aspect = 0.20;
    double severity = 0.20;
    double global = 0.25;
};

struct PairingConfig {
    Weights weights;
    Thresholds thresholds;
};

// Scales to unit sum. Throws on a negative weight or an all-zero vector.
Weights normalized(const Weights& w);

// w_text * S_text + w_aspect * S_aspect + w_severity * S_severity, weights
// normalized first.
double combined_score(double s_text, double s_aspect, double s_severity, const Weights& w);

// Jaccard index of lowercased, punctuation-stripped word sets; 0 when both
// are empty. Reported only; assignment never reads it.
double word_overlap(std::string_view caption, std::string_view text);

struct FilenameFields {
    std::string category;
    std::string subreddit;
    long long score = 0;
    std::string term;
    std::string post_id;

    bool operator==(const FilenameFields&) const = default;
};

class FilenameError : public std::invalid_argument {
public:
    FilenameError(const std::string& what, std::size_t position)
        : std::invalid_argument(what + " at position " + std::to_string(position)), position_(position)
    {
    }
    std::size_t position() const { return position_; }

private:
    std::size_t position_;
};

// category__subreddit__score{score}__{term}__{post_id}.jpg
// Fields must be non-empty, must not contain "__", and must not start or end
// with '_' (that would make the separator ambiguous).
std::string format_image_filename(const FilenameFields& f);
FilenameFields parse_image_filename(std::string_view name);

struct ImageRecord {
    std::string id;
    FilenameFields meta;
    int width = 0;
    int height = 0;
    std::vector<double> embedding; // filled by a provider when empty
};

// Scrape-phase filters kept as plain predicates.
bool passes_resolution(const ImageRecord& r, long long min_pixels = 50000);
bool passes_score(const ImageRecord& r, long long min_score);

struct Conversation {
    std::string id;
    std::string text;
    int aspect = 0;
    int severity = 0;
};

// First label pair of each sample supplies the facet prompts.
std::vector<Conversation> conversations_from(const datagen::Corpus& corpus);

std::string aspect_prompt(int aspect);     // "This complaint is about X."
std::string severity_prompt(int severity); // "The severity of this complaint is Y."

// Interface to a joint text/image embedding model. Implementations must
// return unit-norm vectors of one fixed dimension and may throw on failure.
class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual Eigen::VectorXd embed_text(const std::string& text) = 0;
    virtual Eigen::VectorXd embed_image(const ImageRecord& image) = 0;
};

// Deterministic stand-in: each aspect and severity owns a seeded random
// direction; text embeds the directions of the class names and lexicon words
// it contains, images those of their category and term; all plus seeded
// per-item noise, then normalized.
class MockProvider : public EmbeddingProvider {
public:
    explicit MockProvider(std::uint64_t seed, int dim = 32, double noise = 0.6);
    Eigen::VectorXd embed_text(const std::string& text) override;
    Eigen::VectorXd embed_image(const ImageRecord& image) override;

private:
    Eigen::VectorXd noise_for(std::string_view key) const;
    std::uint64_t seed_;
    int dim_;
    double noise_;
    std::vector<Eigen::VectorXd> aspect_dirs_, severity_dirs_;
};

// Random valid records: category an aspect name (lowercase), term a severity
// lexicon word, ids "img-%05d".
std::vector<ImageRecord> mock_images(int count, std::uint64_t seed);

struct Assignment {
    std::string conversation_id;
    std::string image_id;
    double s_text = 0, s_aspect = 0, s_severity = 0, s_combined = 0;
};

// For each conversation: candidates pass all three facet thresholds, the
// argmax of S_combined wins (ties to the smallest image id), and it is kept
// only at S_combined >= global threshold. Provider failures skip the item and
// write one line to `log` when given.
std::vector<Assignment> assign_images(const std::vector<Conversation>& conversations,
                                      const std::vector<ImageRecord>& images, EmbeddingProvider& provider,
                                      const PairingConfig& cfg, std::ostream* log = nullptr);

std::string assignments_csv(const std::vector<Assignment>& a);

} // namespace valor::pairing
