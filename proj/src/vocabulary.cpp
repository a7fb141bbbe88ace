#include "valor/vocabulary.hpp"

#include "valor/schema.hpp"

#include <array>
#include <cctype>
#include <stdexcept>

namespace valor::encode {

namespace {

constexpr std::array<std::string_view, 20> kSyllables = {
    "ba", "ke", "lo", "mi", "nu", "pa", "re", "si", "to", "vu",
    "da", "fe", "go", "hi", "ju", "ka", "le", "mo", "ni", "po"};

// Bijective base-20 numbering over syllables, at least three syllables long,
// so every index gives a distinct word.
std::string filler_word(int i)
{
    const int n = static_cast<int>(kSyllables.size());
    long v = static_cast<long>(i) + n * n + n; // skip the one- and two-syllable words
    std::string w;
    while (v >= 0) {
        w.insert(0, kSyllables[static_cast<std::size_t>(v % n)]);
        v = v / n - 1;
    }
    return w;
}

} // namespace

Vocabulary::Vocabulary(int size)
{
    auto push = [this](std::string w) {
        if (ids_.count(w))
            return;
        ids_[w] = static_cast<int>(words_.size());
        words_.push_back(std::move(w));
    };
    push("[pad]");
    push("[unk]");
    push("[cls]");
    for (auto s : lexicon::speakers)
        push(std::string(s));
    for (const auto& row : lexicon::aspect_words)
        for (auto w : row)
            push(std::string(w));
    for (const auto& row : lexicon::severity_words)
        for (auto w : row)
            push(std::string(w));
    for (auto w : lexicon::agent_words)
        push(std::string(w));
    first_filler_ = static_cast<int>(words_.size());
    if (size < first_filler_ + 1)
        throw std::invalid_argument("vocabulary size must exceed " + std::to_string(first_filler_));
    for (int i = 0; static_cast<int>(words_.size()) < size; ++i)
        push(filler_word(i));
}

int Vocabulary::id(std::string_view word) const
{
    auto it = ids_.find(std::string(word));
    return it == ids_.end() ? kUnk : it->second;
}

std::vector<std::string> split_words(std::string_view text)
{
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        std::size_t b = 0, e = cur.size();
        while (b < e && std::ispunct(static_cast<unsigned char>(cur[b])))
            ++b;
        while (e > b && std::ispunct(static_cast<unsigned char>(cur[e - 1])))
            --e;
        if (e > b)
            out.push_back(cur.substr(b, e - b));
        cur.clear();
    };
    for (char c : text) {
        if (std::isspace(static_cast<unsigned char>(c)))
            flush();
        else
            cur += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    flush();
    return out;
}

} // namespace valor::encode
