#include "avdit/textcond/tokenizer.hpp"

#include <cctype>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "avdit/numerics/tensor.hpp"

namespace avdit::text {

namespace {

const char* const kCaptionWords[] = {
    "a",    "the",  "red",    "green", "blue",  "yellow", "white",  "square", "bounces", "moves",  "still",
    "slow", "fast", "slowly", "quickly", "low", "high",   "mid",    "tone",   "click",   "clicks", "on",
    "impact", "impacts", "no",  "silent", "up",  "down",  "and",    "with",   "sound",   "rising", "falling",
};

std::string normalize(std::string_view raw) {
    std::string w;
    for (unsigned char c : raw) {
        if (std::isalnum(c) || c >= 0x80) w.push_back(static_cast<char>(std::tolower(c)));
    }
    return w;
}

}  // namespace

Tokenizer::Tokenizer() = default;

Tokenizer::Tokenizer(std::map<std::string, TokenId> vocab) : vocab_(std::move(vocab)) {
    for (const auto& [word, id] : vocab_) {
        if (id < kFirstWord) throw Error("tokenizer: id " + std::to_string(id) + " for '" + word + "' is reserved");
    }
}

Tokenizer Tokenizer::caption_default() {
    std::map<std::string, TokenId> vocab;
    TokenId next = kFirstWord;
    for (const char* w : kCaptionWords) vocab.emplace(w, next++);
    for (const char* piece : {"##s", "##ing", "##ed", "##ly"}) vocab.emplace(piece, next++);
    return Tokenizer(std::move(vocab));
}

Tokenizer Tokenizer::load(const std::filesystem::path& json_path) {
    std::ifstream is(json_path);
    if (!is) throw Error("cannot open vocabulary " + json_path.string());
    const auto j = nlohmann::json::parse(is);
    return Tokenizer(j.get<std::map<std::string, TokenId>>());
}

void Tokenizer::save(const std::filesystem::path& json_path) const {
    std::ofstream os(json_path);
    if (!os) throw Error("cannot write vocabulary " + json_path.string());
    os << nlohmann::json(vocab_).dump(2) << '\n';
}

void Tokenizer::encode_word(const std::string& word, std::vector<TokenId>& out) const {
    if (auto it = vocab_.find(word); it != vocab_.end()) {
        out.push_back(it->second);
        return;
    }
    std::size_t pos = 0;
    while (pos < word.size()) {
        std::size_t best = 0;
        TokenId best_id = kPad;
        for (std::size_t len = word.size() - pos; len >= 1; --len) {
            const std::string key = (pos == 0 ? "" : "##") + word.substr(pos, len);
            if (auto it = vocab_.find(key); it != vocab_.end()) {
                best = len;
                best_id = it->second;
                break;
            }
        }
        if (best == 0) {
            out.push_back(kFirstByte + static_cast<unsigned char>(word[pos]));
            ++pos;
        } else {
            out.push_back(best_id);
            pos += best;
        }
    }
}

std::vector<TokenId> Tokenizer::encode(std::string_view text) const {
    std::vector<TokenId> out;
    std::istringstream is{std::string(text)};
    std::string raw;
    while (is >> raw) {
        const std::string w = normalize(raw);
        if (!w.empty()) encode_word(w, out);
    }
    return out;
}

}  // namespace avdit::text
