#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "volta/model.hpp"

namespace volta {

// Whitespace tokenizer with a per-character fallback for out-of-vocabulary
// words. BOS/EOS/PAD/SEP live at ids 0-3; printable ASCII characters are
// always present so the fallback is total on ASCII text. Character tokens
// come in continuing/word-final pairs so detokenize can rebuild OOV words
// exactly.
class Tokenizer {
public:
    Tokenizer(); // specials + character inventory only
    static Tokenizer build(const std::vector<std::string>& texts);
    static Tokenizer from_vocab(std::vector<std::string> vocab);

    std::vector<int> tokenize(const std::string& text) const;
    std::string detokenize(const std::vector<int>& ids) const;

    int vocab_size() const { return static_cast<int>(vocab_.size()); }
    const std::vector<std::string>& vocab() const { return vocab_; }
    // id of a known word; VocabularyError if absent
    int word_id(const std::string& word) const;
    bool has_word(const std::string& word) const;

private:
    int intern(const std::string& token);
    void add_char(char c);

    std::vector<std::string> vocab_;
    std::unordered_map<std::string, int> index_;
};

} // namespace volta
