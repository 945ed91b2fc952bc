#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace avdit::text {

using TokenId = std::int32_t;

/// Whitespace tokenizer over a JSON word map, with a subword fallback for
/// unknown words: greedy longest match against "##"-prefixed pieces, then
/// raw byte tokens. Ids 0 (pad) and 1..256 (bytes) are reserved.
class Tokenizer {
public:
    static constexpr TokenId kPad = 0;
    static constexpr TokenId kFirstByte = 1;
    static constexpr TokenId kFirstWord = 257;

    Tokenizer();
    explicit Tokenizer(std::map<std::string, TokenId> vocab);

    /// The vocabulary covering every word the synthetic captions use.
    static Tokenizer caption_default();
    static Tokenizer load(const std::filesystem::path& json_path);
    void save(const std::filesystem::path& json_path) const;

    std::vector<TokenId> encode(std::string_view text) const;
    const std::map<std::string, TokenId>& vocab() const { return vocab_; }

private:
    std::map<std::string, TokenId> vocab_;
    void encode_word(const std::string& word, std::vector<TokenId>& out) const;
};

}  // namespace avdit::text
