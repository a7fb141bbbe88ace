#include "valor/pairing.hpp"

#include "valor/schema.hpp"
#include "valor/vocabulary.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <set>
#include <sstream>

namespace valor::pairing {

Weights normalized(const Weights& w)
{
    if (w.text < 0 || w.aspect < 0 || w.severity < 0)
        throw std::invalid_argument("pairing weights must be non-negative");
    const double sum = w.text + w.aspect + w.severity;
    if (sum <= 0)
        throw std::invalid_argument("pairing weights must not all be zero");
    return {w.text / sum, w.aspect / sum, w.severity / sum};
}

double combined_score(double s_text, double s_aspect, double s_severity, const Weights& w)
{
    const Weights n = normalized(w);
    return n.text * s_text + n.aspect * s_aspect + n.severity * s_severity;
}

double word_overlap(std::string_view caption, std::string_view text)
{
    const auto a = encode::split_words(caption);
    const auto b = encode::split_words(text);
    const std::set<std::string> sa(a.begin(), a.end()), sb(b.begin(), b.end());
    std::size_t inter = 0;
    for (const auto& w : sa)
        inter += sb.count(w);
    const std::size_t uni = sa.size() + sb.size() - inter;
    return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

namespace {

constexpr std::string_view kSep = "__";
constexpr std::string_view kSuffix = ".jpg";
constexpr std::string_view kScorePrefix = "score";

void check_field(const std::string& v, const char* name)
{
    if (v.empty())
        throw std::invalid_argument(std::string("filename field '") + name + "' is empty");
    if (v.find(kSep) != std::string::npos)
        throw std::invalid_argument(std::string("filename field '") + name + "' contains \"__\"");
    if (v.front() == '_' || v.back() == '_')
        throw std::invalid_argument(std::string("filename field '") + name + "' starts or ends with '_'");
}

} // namespace

std::string format_image_filename(const FilenameFields& f)
{
    check_field(f.category, "category");
    check_field(f.subreddit, "subreddit");
    check_field(f.term, "term");
    check_field(f.post_id, "post_id");
    return f.category + "__" + f.subreddit + "__score" + std::to_string(f.score) + "__" + f.term + "__" + f.post_id +
           ".jpg";
}

FilenameFields parse_image_filename(std::string_view name)
{
    if (name.size() < kSuffix.size() || name.substr(name.size() - kSuffix.size()) != kSuffix)
        throw FilenameError("missing \".jpg\" suffix", name.size());
    const std::string_view stem = name.substr(0, name.size() - kSuffix.size());

    std::vector<std::pair<std::size_t, std::string_view>> parts; // (offset, text)
    std::size_t start = 0;
    while (true) {
        const std::size_t at = stem.find(kSep, start);
        if (at == std::string_view::npos) {
            parts.emplace_back(start, stem.substr(start));
            break;
        }
        parts.emplace_back(start, stem.substr(start, at - start));
        start = at + kSep.size();
    }
    if (parts.size() != 5)
        throw FilenameError("expected 5 fields separated by \"__\", found " + std::to_string(parts.size()),
                            parts.size() < 5 ? stem.size() : parts[5].first);
    for (const auto& [off, text] : parts) {
        if (text.empty())
            throw FilenameError("empty field", off);
        if (text.front() == '_' || text.back() == '_')
            throw FilenameError("ambiguous '_' next to a separator", text.front() == '_' ? off : off + text.size() - 1);
    }

    const auto [score_off, score_text] = parts[2];
    if (score_text.substr(0, kScorePrefix.size()) != kScorePrefix)
        throw FilenameError("score field must start with \"score\"", score_off);
    const std::string_view digits = score_text.substr(kScorePrefix.size());
    FilenameFields f;
    const auto* first = digits.data();
    const auto* last = digits.data() + digits.size();
    const auto [ptr, ec] = std::from_chars(first, last, f.score);
    if (digits.empty() || ec != std::errc() || ptr != last)
        throw FilenameError("score is not an integer", score_off + kScorePrefix.size() + (ptr - first));
    // Reject forms that would not round-trip, such as "+5" or "007".
    if (std::to_string(f.score) != digits)
        throw FilenameError("score is not in canonical integer form", score_off + kScorePrefix.size());

    f.category = std::string(parts[0].second);
    f.subreddit = std::string(parts[1].second);
    f.term = std::string(parts[3].second);
    f.post_id = std::string(parts[4].second);
    return f;
}

bool passes_resolution(const ImageRecord& r, long long min_pixels)
{
    return static_cast<long long>(r.width) * r.height >= min_pixels;
}

bool passes_score(const ImageRecord& r, long long min_score)
{
    return r.meta.score >= min_score;
}

std::vector<Conversation> conversations_from(const datagen::Corpus& corpus)
{
    std::vector<Conversation> out;
    for (const auto& s : corpus.samples)
        out.push_back({s.id, s.joined_text(), s.labels.front().aspect, s.labels.front().severity});
    return out;
}

std::string aspect_prompt(int aspect)
{
    return "This complaint is about " + std::string(LabelSchema::aspects.at(static_cast<std::size_t>(aspect))) + ".";
}

std::string severity_prompt(int severity)
{
    return "The severity of this complaint is " +
           std::string(LabelSchema::severities.at(static_cast<std::size_t>(severity))) + ".";
}

namespace {

std::string lower(std::string_view s)
{
    std::string out(s);
    for (auto& c : out)
        c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

Eigen::VectorXd random_direction(Rng& rng, int dim)
{
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i)
        v(i) = normal(rng, 0.0, 1.0);
    return v.normalized();
}

int aspect_of_word(const std::string& w)
{
    for (int a = 0; a < LabelSchema::kAspects; ++a) {
        if (w == lower(LabelSchema::aspects[static_cast<std::size_t>(a)]))
            return a;
        for (auto k : lexicon::aspect_words[static_cast<std::size_t>(a)])
            if (w == k)
                return a;
    }
    return -1;
}

int severity_of_word(const std::string& w)
{
    for (int s = 0; s < LabelSchema::kSeverities; ++s) {
        const std::string name = lower(LabelSchema::severities[static_cast<std::size_t>(s)]);
        if (w == name.substr(name.rfind(' ') == std::string::npos ? 0 : name.rfind(' ') + 1))
            return s;
        for (auto k : lexicon::severity_words[static_cast<std::size_t>(s)])
            if (w == k)
                return s;
    }
    return -1;
}

} // namespace

MockProvider::MockProvider(std::uint64_t seed, int dim, double noise) : seed_(seed), dim_(dim), noise_(noise)
{
    if (dim < 2)
        throw std::invalid_argument("MockProvider: dim must be >= 2");
    Rng rng = substream(seed, "mock-provider");
    for (int a = 0; a < LabelSchema::kAspects; ++a)
        aspect_dirs_.push_back(random_direction(rng, dim));
    for (int s = 0; s < LabelSchema::kSeverities; ++s)
        severity_dirs_.push_back(random_direction(rng, dim));
}

Eigen::VectorXd MockProvider::noise_for(std::string_view key) const
{
    Rng rng(splitmix64(seed_ ^ fnv1a(key)));
    return noise_ * random_direction(rng, dim_);
}

Eigen::VectorXd MockProvider::embed_text(const std::string& text)
{
    if (text.empty())
        throw std::runtime_error("mock provider: empty text");
    Eigen::VectorXd v = noise_for("text:" + text);
    for (const auto& w : encode::split_words(text)) {
        if (const int a = aspect_of_word(w); a >= 0)
            v += aspect_dirs_[static_cast<std::size_t>(a)];
        if (const int s = severity_of_word(w); s >= 0)
            v += severity_dirs_[static_cast<std::size_t>(s)];
    }
    return v.normalized();
}

Eigen::VectorXd MockProvider::embed_image(const ImageRecord& image)
{
    if (!image.embedding.empty())
        return Eigen::Map<const Eigen::VectorXd>(image.embedding.data(), static_cast<Eigen::Index>(image.embedding.size()))
            .normalized();
    if (image.id.empty())
        throw std::runtime_error("mock provider: image without id");
    Eigen::VectorXd v = noise_for("image:" + image.id);
    if (const int a = aspect_of_word(lower(image.meta.category)); a >= 0)
        v += aspect_dirs_[static_cast<std::size_t>(a)];
    if (const int s = severity_of_word(lower(image.meta.term)); s >= 0)
        v += severity_dirs_[static_cast<std::size_t>(s)];
    return v.normalized();
}

std::vector<ImageRecord> mock_images(int count, std::uint64_t seed)
{
    static constexpr std::string_view subs[] = {"techsupport", "mildlyinfuriating", "assholedesign", "android",
                                                "apple", "amazon"};
    Rng rng = substream(seed, "mock-images");
    auto pick = [&](int n) { return static_cast<int>(std::uniform_int_distribution<int>(0, n - 1)(rng)); };
    std::vector<ImageRecord> out;
    for (int i = 0; i < count; ++i) {
        ImageRecord r;
        char id[32];
        std::snprintf(id, sizeof id, "img-%05d", i);
        r.id = id;
        const int a = pick(LabelSchema::kAspects);
        const int s = pick(LabelSchema::kSeverities);
        r.meta.category = lower(LabelSchema::aspects[static_cast<std::size_t>(a)]);
        r.meta.subreddit = std::string(subs[pick(6)]);
        r.meta.score = pick(2000);
        r.meta.term = std::string(lexicon::severity_words[static_cast<std::size_t>(s)][static_cast<std::size_t>(pick(3))]);
        r.meta.post_id = "p" + std::to_string(100000 + pick(900000));
        r.width = 200 + pick(800);
        r.height = 200 + pick(800);
        out.push_back(std::move(r));
    }
    return out;
}

std::vector<Assignment> assign_images(const std::vector<Conversation>& conversations,
                                      const std::vector<ImageRecord>& images, EmbeddingProvider& provider,
                                      const PairingConfig& cfg, std::ostream* log)
{
    const Weights w = normalized(cfg.weights);
    const Thresholds& th = cfg.thresholds;

    std::vector<std::pair<const ImageRecord*, Eigen::VectorXd>> embedded;
    for (const auto& img : images) {
        try {
            embedded.emplace_back(&img, provider.embed_image(img));
        } catch (const std::exception& e) {
            if (log)
                *log << "skip image " << img.id << ": " << e.what() << '\n';
        }
    }

    std::vector<Assignment> out;
    for (const auto& conv : conversations) {
        Eigen::VectorXd et, ea, es;
        try {
            et = provider.embed_text(conv.text);
            ea = provider.embed_text(aspect_prompt(conv.aspect));
            es = provider.embed_text(severity_prompt(conv.severity));
        } catch (const std::exception& e) {
            if (log)
                *log << "skip conversation " << conv.id << ": " << e.what() << '\n';
            continue;
        }
        const Assignment* best = nullptr;
        Assignment cand, winner;
        for (const auto& [img, ei] : embedded) {
            cand.s_text = et.dot(ei);
            cand.s_aspect = ea.dot(ei);
            cand.s_severity = es.dot(ei);
            if (cand.s_text < th.text || cand.s_aspect < th.aspect || cand.s_severity < th.severity)
                continue;
            cand.s_combined = w.text * cand.s_text + w.aspect * cand.s_aspect + w.severity * cand.s_severity;
            cand.image_id = img->id;
            if (!best || cand.s_combined > winner.s_combined ||
                (cand.s_combined == winner.s_combined && cand.image_id < winner.image_id)) {
                winner = cand;
                best = &winner;
            }
        }
        if (best && winner.s_combined >= th.global) {
            winner.conversation_id = conv.id;
            out.push_back(winner);
        }
    }
    return out;
}

std::string assignments_csv(const std::vector<Assignment>& a)
{
    std::ostringstream os;
    os << "conversation_id,image_id,S_text,S_aspect,S_severity,S_combined\n";
    char buf[160];
    for (const auto& x : a) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g", x.s_text, x.s_aspect, x.s_severity, x.s_combined);
        os << x.conversation_id << ',' << x.image_id << ',' << buf << '\n';
    }
    return os.str();
}

} // namespace valor::pairing
