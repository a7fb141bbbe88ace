#include "valor/datagen.hpp"

#include "valor/rng.hpp"
#include "valor/tensor.hpp"
#include "valor/vocabulary.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>

namespace valor::datagen {

namespace fs = std::filesystem;
using nlohmann::json;

std::string ConversationSample::joined_text() const
{
    std::string out;
    for (const auto& u : utterances) {
        if (!out.empty())
            out += ' ';
        out += u.speaker == Speaker::Customer ? "customer: " : "agent: ";
        out += u.text;
    }
    return out;
}

const Image* Corpus::image_for(const ConversationSample& s) const
{
    if (!s.image_ref)
        return nullptr;
    auto it = images.find(*s.image_ref);
    return it == images.end() ? nullptr : &it->second;
}

int GenSpec::pair_count() const
{
    return std::accumulate(aspect_histogram.begin(), aspect_histogram.end(), 0);
}

void GenSpec::validate() const
{
    if (total < 0)
        throw std::invalid_argument("GenSpec: total must be non-negative");
    for (int c : aspect_histogram)
        if (c < 0)
            throw std::invalid_argument("GenSpec: negative aspect count");
    for (int c : severity_histogram)
        if (c < 0)
            throw std::invalid_argument("GenSpec: negative severity count");
    const int pa = pair_count();
    const int ps = std::accumulate(severity_histogram.begin(), severity_histogram.end(), 0);
    if (pa != ps)
        throw std::invalid_argument("GenSpec: aspect histogram sums to " + std::to_string(pa) +
                                    " but severity histogram sums to " + std::to_string(ps));
    if (pa < total)
        throw std::invalid_argument("GenSpec: " + std::to_string(pa) + " pairs cannot label " +
                                    std::to_string(total) + " samples (every sample needs one)");
    if (multi_label_rate < 0.0 || multi_label_rate > 1.0)
        throw std::invalid_argument("GenSpec: multi_label_rate outside [0,1]");
    const int multi = static_cast<int>(std::lround(multi_label_rate * total));
    const int extra = pa - total;
    if (multi == 0 && extra != 0)
        throw std::invalid_argument("GenSpec: " + std::to_string(extra) +
                                    " surplus pairs but multi_label_rate yields no multi-label samples");
    if (multi > 0 && extra < multi)
        throw std::invalid_argument("GenSpec: " + std::to_string(multi) + " multi-label samples need at least " +
                                    std::to_string(multi) + " surplus pairs, have " + std::to_string(extra));
    if (image_rate < 0.0 || image_rate > 1.0)
        throw std::invalid_argument("GenSpec: image_rate outside [0,1]");
    if (image_side < 4)
        throw std::invalid_argument("GenSpec: image_side must be at least 4");
    if (min_utterances < 1 || max_utterances < min_utterances)
        throw std::invalid_argument("GenSpec: bad utterance range");
}

GenSpec GenSpec::balanced(int total, std::uint64_t seed)
{
    GenSpec s;
    s.total = total;
    s.seed = seed;
    for (int i = 0; i < LabelSchema::kAspects; ++i)
        s.aspect_histogram[i] = total / LabelSchema::kAspects + (i < total % LabelSchema::kAspects ? 1 : 0);
    for (int i = 0; i < LabelSchema::kSeverities; ++i)
        s.severity_histogram[i] = total / LabelSchema::kSeverities + (i < total % LabelSchema::kSeverities ? 1 : 0);
    return s;
}

namespace {

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng)
{
    // Fisher-Yates with our own index draws; std::shuffle's draw pattern is
    // implementation-defined.
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
        std::swap(v[i - 1], v[j]);
    }
}

std::size_t pick(std::size_t n, Rng& rng)
{
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

std::string sample_id(std::size_t i)
{
    std::ostringstream os;
    os << "civil-" << std::setw(5) << std::setfill('0') << i;
    return os.str();
}

std::vector<std::string> customer_utterance(const std::vector<LabelPair>& labels, bool first,
                                            const encode::Vocabulary& vocab, Rng& rng)
{
    std::vector<std::string> words;
    const auto filler = [&] {
        return vocab.word(vocab.first_filler() + static_cast<int>(pick(vocab.filler_count(), rng)));
    };
    // The opening customer turn names every grievance; later turns repeat one.
    std::vector<LabelPair> mention = labels;
    if (!first)
        mention = {labels[pick(labels.size(), rng)]};
    for (const auto& p : mention) {
        words.emplace_back(lexicon::aspect_words[p.aspect][pick(3, rng)]);
        words.push_back(filler());
        words.emplace_back(lexicon::severity_words[p.severity][pick(3, rng)]);
    }
    const std::size_t extra = 1 + pick(3, rng);
    for (std::size_t i = 0; i < extra; ++i)
        words.push_back(filler());
    return words;
}

std::vector<std::string> agent_utterance(const encode::Vocabulary& vocab, Rng& rng)
{
    std::vector<std::string> words;
    const std::size_t n = 2 + pick(3, rng);
    for (std::size_t i = 0; i < n; ++i) {
        if (uniform01(rng) < 0.6)
            words.emplace_back(lexicon::agent_words[pick(lexicon::agent_words.size(), rng)]);
        else
            words.push_back(vocab.word(vocab.first_filler() + static_cast<int>(pick(vocab.filler_count(), rng))));
    }
    return words;
}

std::string join(const std::vector<std::string>& words)
{
    std::string s;
    for (const auto& w : words) {
        if (!s.empty())
            s += ' ';
        s += w;
    }
    return s;
}

// Class-coded layout on a 4x4 grid: aspect a lights cell a in channel 0,
// severity v lights cell 8 + v in channel 1, over low-amplitude noise.
Image synth_image(const std::vector<LabelPair>& labels, int side, Rng& rng)
{
    Image img;
    img.height = img.width = side;
    img.data.resize(static_cast<std::size_t>(3) * side * side);
    for (auto& v : img.data)
        v = static_cast<float>(0.2 * uniform01(rng));
    const int cell = side / 4;
    auto light = [&](int channel, int index) {
        const int cy = (index / 4) * cell, cx = (index % 4) * cell;
        for (int y = cy; y < cy + cell; ++y)
            for (int x = cx; x < cx + cell; ++x)
                img.at(channel, y, x) = static_cast<float>(0.8 + 0.2 * uniform01(rng));
    };
    for (const auto& p : labels) {
        light(0, p.aspect);
        light(1, 8 + p.severity);
    }
    return img;
}

// The tail of the pool holds only pairs `target` already has: give one of
// them to another sample in exchange for a pair `target` lacks. Histograms
// are unchanged; `p` becomes the exchanged pair.
bool trade(std::vector<std::vector<LabelPair>>& labels, const std::vector<LabelPair>& target, LabelPair& p)
{
    auto has = [](const std::vector<LabelPair>& v, const LabelPair& x) {
        return std::find(v.begin(), v.end(), x) != v.end();
    };
    for (auto& other : labels) {
        if (&other == &target || has(other, p))
            continue;
        for (auto& q : other)
            if (!has(target, q)) {
                std::swap(q, p);
                return true;
            }
    }
    return false;
}

} // namespace

Corpus generate_corpus(const GenSpec& spec)
{
    spec.validate();
    Corpus corpus;
    if (spec.total == 0)
        return corpus;

    Rng rng = substream(spec.seed, "datagen");
    const encode::Vocabulary vocab(spec.vocab_size);

    std::vector<int> aspects, severities;
    for (int c = 0; c < LabelSchema::kAspects; ++c)
        aspects.insert(aspects.end(), spec.aspect_histogram[c], c);
    for (int c = 0; c < LabelSchema::kSeverities; ++c)
        severities.insert(severities.end(), spec.severity_histogram[c], c);
    shuffle(aspects, rng);
    shuffle(severities, rng);
    std::vector<LabelPair> pool(aspects.size());
    for (std::size_t i = 0; i < pool.size(); ++i)
        pool[i] = {aspects[i], severities[i]};

    const auto total = static_cast<std::size_t>(spec.total);
    std::vector<std::vector<LabelPair>> labels(total);
    for (std::size_t i = 0; i < total; ++i)
        labels[i].push_back(pool[i]);

    const auto multi = static_cast<std::size_t>(std::lround(spec.multi_label_rate * spec.total));
    if (multi > 0) {
        std::vector<std::size_t> order(total);
        std::iota(order.begin(), order.end(), 0);
        shuffle(order, rng);
        order.resize(multi);
        std::sort(order.begin(), order.end());
        for (std::size_t cursor = total, k = 0; cursor < pool.size(); ++cursor, ++k) {
            auto& target = labels[order[k % multi]];
            auto dup = [&](const LabelPair& p) { return std::find(target.begin(), target.end(), p) != target.end(); };
            if (dup(pool[cursor])) {
                std::size_t j = cursor + 1;
                while (j < pool.size() && dup(pool[j]))
                    ++j;
                if (j < pool.size()) {
                    std::swap(pool[cursor], pool[j]);
                } else if (!trade(labels, target, pool[cursor])) {
                    throw std::invalid_argument("GenSpec: histograms cannot be realized with unique pairs per sample");
                }
            }
            target.push_back(pool[cursor]);
        }
    }

    corpus.samples.reserve(total);
    for (std::size_t i = 0; i < total; ++i) {
        ConversationSample s;
        s.id = sample_id(i);
        s.labels = labels[i];
        const int n_utt = spec.min_utterances +
                          static_cast<int>(pick(static_cast<std::size_t>(spec.max_utterances - spec.min_utterances + 1), rng));
        for (int u = 0; u < n_utt; ++u) {
            const bool customer = u % 2 == 0;
            auto words = customer ? customer_utterance(s.labels, u == 0, vocab, rng) : agent_utterance(vocab, rng);
            s.utterances.push_back({customer ? Speaker::Customer : Speaker::Agent, join(words)});
        }
        // Always draw so the stream position is independent of image_rate.
        const double coin = uniform01(rng);
        if (coin < spec.image_rate) {
            const std::string ref = "images/" + s.id + ".bin";
            corpus.images.emplace(ref, synth_image(s.labels, spec.image_side, rng));
            s.image_ref = ref;
        }
        corpus.samples.push_back(std::move(s));
    }
    return corpus;
}

SplitSizes split_sizes(std::size_t n, const SplitRatios& r)
{
    if (r.train < 0 || r.val < 0 || r.test < 0 || std::abs(r.train + r.val + r.test - 1.0) > 1e-9)
        throw std::invalid_argument("split ratios must be non-negative and sum to 1");
    SplitSizes s;
    s.train = static_cast<std::size_t>(std::floor(r.train * static_cast<double>(n) + 1e-9));
    s.val = static_cast<std::size_t>(std::floor(r.val * static_cast<double>(n) + 1e-9));
    s.train = std::min(s.train, n);
    s.val = std::min(s.val, n - s.train);
    s.test = n - s.train - s.val;
    return s;
}

CorpusSplit split_corpus(const Corpus& corpus, const SplitRatios& ratios, std::uint64_t seed)
{
    const SplitSizes sizes = split_sizes(corpus.size(), ratios);
    std::vector<std::size_t> order(corpus.size());
    std::iota(order.begin(), order.end(), 0);
    Rng rng = substream(seed, "split");
    shuffle(order, rng);

    CorpusSplit out;
    auto take = [&](Corpus& dst, std::size_t begin, std::size_t count) {
        std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                     order.begin() + static_cast<std::ptrdiff_t>(begin + count));
        std::sort(idx.begin(), idx.end());
        for (std::size_t i : idx) {
            const auto& s = corpus.samples[i];
            dst.samples.push_back(s);
            if (const Image* img = corpus.image_for(s))
                dst.images.emplace(*s.image_ref, *img);
        }
    };
    take(out.train, 0, sizes.train);
    take(out.val, sizes.train, sizes.val);
    take(out.test, sizes.train + sizes.val, sizes.test);
    return out;
}

double fleiss_kappa(const Eigen::MatrixXi& ratings, int n)
{
    if (n < 2)
        throw std::invalid_argument("fleiss_kappa: need at least 2 raters per item");
    const Eigen::Index items = ratings.rows();
    const Eigen::Index cats = ratings.cols();
    if (items == 0 || cats == 0)
        throw std::invalid_argument("fleiss_kappa: empty rating matrix");
    if ((ratings.array() < 0).any())
        throw std::invalid_argument("fleiss_kappa: negative count");
    for (Eigen::Index i = 0; i < items; ++i)
        if (ratings.row(i).sum() != n)
            throw std::invalid_argument("fleiss_kappa: row " + std::to_string(i) + " does not sum to " +
                                        std::to_string(n));

    const Eigen::MatrixXd r = ratings.cast<double>();
    const double nn = n;
    const Eigen::VectorXd agree = ((r.array().square().rowwise().sum() - nn) / (nn * (nn - 1.0))).matrix();
    const double p_bar = agree.mean();
    const Eigen::RowVectorXd pj = r.colwise().sum() / (static_cast<double>(items) * nn);
    const double pe = pj.squaredNorm();
    if (std::abs(1.0 - pe) < 1e-12)
        throw UndefinedMetric("fleiss_kappa: expected agreement is 1 (all ratings in one category)");
    return (p_bar - pe) / (1.0 - pe);
}

LabelHistogram label_histogram(const Corpus& corpus)
{
    LabelHistogram h;
    h.samples = static_cast<int>(corpus.size());
    for (const auto& s : corpus.samples)
        for (const auto& p : s.labels) {
            ++h.aspect[p.aspect];
            ++h.severity[p.severity];
            ++h.pairs;
        }
    return h;
}

std::vector<Instance> expand_pairs(const Corpus& corpus)
{
    std::vector<Instance> out;
    for (std::size_t i = 0; i < corpus.size(); ++i)
        for (std::size_t p = 0; p < corpus.samples[i].labels.size(); ++p)
            out.push_back({i, p});
    return out;
}

// --- persistence ------------------------------------------------------------

std::string sample_to_json_line(const ConversationSample& s)
{
    json j;
    j["id"] = s.id;
    j["utterances"] = json::array();
    for (const auto& u : s.utterances)
        j["utterances"].push_back({{"speaker", u.speaker == Speaker::Customer ? "customer" : "agent"}, {"text", u.text}});
    j["image_ref"] = s.image_ref ? json(*s.image_ref) : json(nullptr);
    j["labels"] = json::array();
    for (const auto& p : s.labels)
        j["labels"].push_back({{"aspect", std::string(LabelSchema::aspects[p.aspect])},
                               {"severity", std::string(LabelSchema::severities[p.severity])}});
    return j.dump();
}

ConversationSample sample_from_json_line(const std::string& line)
{
    const json j = json::parse(line);
    ConversationSample s;
    s.id = j.at("id").get<std::string>();
    for (const auto& u : j.at("utterances")) {
        const auto speaker = u.at("speaker").get<std::string>();
        if (speaker != "customer" && speaker != "agent")
            throw std::invalid_argument("unknown speaker '" + speaker + "' in sample " + s.id);
        s.utterances.push_back({speaker == "customer" ? Speaker::Customer : Speaker::Agent, u.at("text").get<std::string>()});
    }
    if (!j.at("image_ref").is_null())
        s.image_ref = j.at("image_ref").get<std::string>();
    for (const auto& p : j.at("labels")) {
        const auto a = LabelSchema::aspect_id(p.at("aspect").get<std::string>());
        const auto v = LabelSchema::severity_id(p.at("severity").get<std::string>());
        if (!a || !v)
            throw std::invalid_argument("unknown label in sample " + s.id);
        s.labels.push_back({*a, *v});
    }
    if (s.labels.empty())
        throw std::invalid_argument("sample " + s.id + " has no labels");
    return s;
}

void write_corpus(const fs::path& dir, const Corpus& corpus, const std::string& stem)
{
    fs::create_directories(dir);
    std::ofstream out(dir / (stem + ".jsonl"), std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + (dir / (stem + ".jsonl")).string());
    for (const auto& s : corpus.samples) {
        out << sample_to_json_line(s) << '\n';
        if (const Image* img = corpus.image_for(s)) {
            const fs::path p = dir / *s.image_ref;
            fs::create_directories(p.parent_path());
            write_tensor_file(p, *img);
        }
    }
}

Corpus read_corpus(const fs::path& dir, const std::string& stem)
{
    const fs::path file = dir / (stem + ".jsonl");
    std::ifstream in(file, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + file.string());
    Corpus c;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty())
            continue;
        auto s = sample_from_json_line(line);
        if (s.image_ref && !c.images.count(*s.image_ref))
            c.images.emplace(*s.image_ref, read_tensor_file(dir / *s.image_ref));
        c.samples.push_back(std::move(s));
    }
    return c;
}

namespace {

void put_u16(std::ostream& os, std::uint16_t v)
{
    const char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
    os.write(b, 2);
}

std::uint16_t get_u16(std::istream& is)
{
    unsigned char b[2];
    is.read(reinterpret_cast<char*>(b), 2);
    return static_cast<std::uint16_t>(b[0] | (b[1] << 8));
}

} // namespace

void write_tensor_file(const fs::path& path, const Image& img)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    put_u16(out, static_cast<std::uint16_t>(img.channels));
    put_u16(out, static_cast<std::uint16_t>(img.height));
    put_u16(out, static_cast<std::uint16_t>(img.width));
    put_u16(out, 0);
    for (float f : img.data) {
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        const char b[4] = {static_cast<char>(bits & 0xff), static_cast<char>((bits >> 8) & 0xff),
                           static_cast<char>((bits >> 16) & 0xff), static_cast<char>(bits >> 24)};
        out.write(b, 4);
    }
}

Image read_tensor_file(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path.string());
    Image img;
    img.channels = get_u16(in);
    img.height = get_u16(in);
    img.width = get_u16(in);
    get_u16(in);
    img.data.resize(static_cast<std::size_t>(img.channels) * img.height * img.width);
    for (auto& f : img.data) {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        const std::uint32_t bits = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
        std::memcpy(&f, &bits, 4);
    }
    if (!in)
        throw std::runtime_error("truncated tensor file " + path.string());
    return img;
}

} // namespace valor::datagen
