#include "valor/encode.hpp"

namespace valor::encode {

void EncoderConfig::validate() const
{
    if (d <= 0 || layers < 0 || heads <= 0 || max_tokens < 1 || vocab < 3 || patch <= 0 || image_side <= 0)
        throw std::invalid_argument("EncoderConfig: non-positive dimension");
    if (d % heads != 0)
        throw std::invalid_argument("EncoderConfig: d=" + std::to_string(d) + " not divisible by heads=" +
                                    std::to_string(heads));
    if (image_side % patch != 0)
        throw std::invalid_argument("EncoderConfig: image side " + std::to_string(image_side) +
                                    " not divisible by patch " + std::to_string(patch));
}

int TokenSequence::real_count() const
{
    int n = 0;
    for (char m : mask)
        n += m ? 1 : 0;
    return n;
}

TokenSequence tokenize(std::string_view text, const Vocabulary& vocab, int max_tokens)
{
    TokenSequence seq;
    seq.ids.assign(static_cast<std::size_t>(max_tokens), Vocabulary::kPad);
    seq.mask.assign(static_cast<std::size_t>(max_tokens), 0);
    seq.ids[0] = Vocabulary::kCls;
    seq.mask[0] = 1;
    std::size_t pos = 1;
    for (const auto& w : split_words(text)) {
        if (pos >= seq.ids.size())
            break;
        seq.ids[pos] = vocab.id(w);
        seq.mask[pos] = 1;
        ++pos;
    }
    return seq;
}

datagen::Image blank_image(int side)
{
    datagen::Image img;
    img.height = img.width = side;
    img.data.assign(static_cast<std::size_t>(3) * side * side, 0.0f);
    return img;
}

} // namespace valor::encode
