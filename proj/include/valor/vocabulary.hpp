#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace valor::encode {

// Fixed synthetic vocabulary: special tokens, speaker markers, the keyword
// lexicon, then pronounceable filler words up to the requested size.
class Vocabulary {
public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;

    explicit Vocabulary(int size = 1000);

    int size() const { return static_cast<int>(words_.size()); }
    int id(std::string_view word) const;
    const std::string& word(int id) const { return words_.at(static_cast<std::size_t>(id)); }

    int first_filler() const { return first_filler_; }
    int filler_count() const { return size() - first_filler_; }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, int> ids_;
    int first_filler_ = 0;
};

// Lowercases and strips leading/trailing punctuation from each
// whitespace-separated word; empty results are dropped.
std::vector<std::string> split_words(std::string_view text);

} // namespace valor::encode
