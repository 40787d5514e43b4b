#include "volta/tokenizer.hpp"

#include <sstream>

namespace volta {

namespace {

// char tokens are stored with a one-byte marker so they can never collide
// with real words
constexpr char kContinuing = '\x02';
constexpr char kFinal = '\x03';

std::string char_token(char c, bool final_char) {
    std::string t(1, final_char ? kFinal : kContinuing);
    t.push_back(c);
    return t;
}

const char* kSpecialNames[kNumSpecialTokens] = {"<bos>", "<eos>", "<pad>", "<sep>"};

std::vector<std::string> split_words(const std::string& text) {
    std::istringstream in(text);
    std::vector<std::string> words;
    std::string w;
    while (in >> w) words.push_back(w);
    return words;
}

} // namespace

int Tokenizer::intern(const std::string& token) {
    auto it = index_.find(token);
    if (it != index_.end()) return it->second;
    const int id = static_cast<int>(vocab_.size());
    vocab_.push_back(token);
    index_.emplace(token, id);
    return id;
}

void Tokenizer::add_char(char c) {
    intern(char_token(c, false));
    intern(char_token(c, true));
}

Tokenizer::Tokenizer() {
    for (const char* name : kSpecialNames) intern(name);
    for (char c = 33; c < 127; ++c) add_char(c); // printable, non-space
}

Tokenizer Tokenizer::build(const std::vector<std::string>& texts) {
    Tokenizer tok;
    for (const std::string& text : texts) {
        for (const std::string& w : split_words(text)) {
            tok.intern(w);
            for (char c : w) tok.add_char(c);
        }
    }
    return tok;
}

Tokenizer Tokenizer::from_vocab(std::vector<std::string> vocab) {
    Tokenizer tok;
    tok.vocab_.clear();
    tok.index_.clear();
    for (std::size_t i = 0; i < vocab.size(); ++i) {
        tok.index_.emplace(vocab[i], static_cast<int>(i));
    }
    tok.vocab_ = std::move(vocab);
    for (int i = 0; i < kNumSpecialTokens; ++i) {
        if (tok.vocab_.size() <= static_cast<std::size_t>(i) || tok.vocab_[static_cast<std::size_t>(i)] != kSpecialNames[i]) {
            throw LoadError("Tokenizer: vocabulary does not reserve special tokens at ids 0-3");
        }
    }
    return tok;
}

int Tokenizer::word_id(const std::string& word) const {
    auto it = index_.find(word);
    if (it == index_.end()) throw VocabularyError("Tokenizer: unknown word '" + word + "'");
    return it->second;
}

bool Tokenizer::has_word(const std::string& word) const { return index_.count(word) > 0; }

std::vector<int> Tokenizer::tokenize(const std::string& text) const {
    std::vector<int> ids;
    for (const std::string& w : split_words(text)) {
        // literal special-token names map to their reserved ids
        bool special = false;
        for (int i = 0; i < kNumSpecialTokens; ++i) {
            if (w == kSpecialNames[i]) {
                ids.push_back(i);
                special = true;
                break;
            }
        }
        if (special) continue;
        auto it = index_.find(w);
        if (it != index_.end()) {
            ids.push_back(it->second);
            continue;
        }
        // character fallback; unknown characters are dropped
        for (std::size_t i = 0; i < w.size(); ++i) {
            auto cit = index_.find(char_token(w[i], i + 1 == w.size()));
            if (cit != index_.end()) ids.push_back(cit->second);
        }
    }
    return ids;
}

std::string Tokenizer::detokenize(const std::vector<int>& ids) const {
    std::string out;
    std::string pending; // char-fallback word under construction
    auto flush_word = [&](const std::string& w) {
        if (w.empty()) return;
        if (!out.empty()) out.push_back(' ');
        out += w;
    };
    for (int id : ids) {
        if (id < 0 || id >= vocab_size()) {
            throw VocabularyError("detokenize: id " + std::to_string(id) + " out of range");
        }
        if (id == kBosId || id == kEosId || id == kPadId) continue;
        const std::string& tok = vocab_[static_cast<std::size_t>(id)];
        if (!tok.empty() && tok[0] == kContinuing) {
            pending.push_back(tok[1]);
            continue;
        }
        if (!tok.empty() && tok[0] == kFinal) {
            pending.push_back(tok[1]);
            flush_word(pending);
            pending.clear();
            continue;
        }
        flush_word(pending);
        pending.clear();
        flush_word(tok);
    }
    flush_word(pending);
    return out;
}

} // namespace volta
